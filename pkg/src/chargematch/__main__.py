import sys

from chargematch.cli import main

sys.exit(main())
