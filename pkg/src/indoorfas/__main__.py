import sys

from indoorfas.cli import main

sys.exit(main())
