import sys

from agreesim.cli import main

sys.exit(main())
