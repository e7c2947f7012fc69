import sys

from gkdist.cli import main

sys.exit(main())
