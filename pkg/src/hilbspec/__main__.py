import sys

from hilbspec.cli import main

sys.exit(main())
