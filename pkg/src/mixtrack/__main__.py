import sys

from mixtrack.cli import main

sys.exit(main())
