import sys

from relaxim.cli import main

sys.exit(main())
