import sys

from kgindex.cli import main

sys.exit(main())
