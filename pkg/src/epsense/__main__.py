import sys

from epsense.cli import main

sys.exit(main())
