import sys

from nrasqn.cli import main

sys.exit(main())
