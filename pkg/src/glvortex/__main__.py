import sys

from .cli_diagnostics import main

sys.exit(main())
