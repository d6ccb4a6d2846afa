import sys

from snls_lab.main import main

sys.exit(main())
