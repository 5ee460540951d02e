import sys

from fuzzyflow.cli import main

sys.exit(main())
