import sys

from stmsim.cli import main

sys.exit(main())
