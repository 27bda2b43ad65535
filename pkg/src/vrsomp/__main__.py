import sys

from vrsomp.cli import main

sys.exit(main())
