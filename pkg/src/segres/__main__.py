import sys

from segres.cli import main

sys.exit(main())
