import sys

from lsfield.cli import main

sys.exit(main())
