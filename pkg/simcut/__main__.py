import sys

from simcut.cli import main

sys.exit(main())
