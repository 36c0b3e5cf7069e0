import sys

from fmlp.cli import main

sys.exit(main())
