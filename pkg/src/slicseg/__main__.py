import sys

from slicseg.cli import main

sys.exit(main())
