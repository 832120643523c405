import sys

from jointdist.cli import main

sys.exit(main())
