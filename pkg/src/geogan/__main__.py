import sys

from geogan.cli import main

sys.exit(main())
