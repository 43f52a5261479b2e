import sys

from metfa.cli import main

sys.exit(main())
