import sys

from quantens.cli import main

sys.exit(main())
