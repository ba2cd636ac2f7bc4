import sys

from clexsim.cli import main

sys.exit(main())
