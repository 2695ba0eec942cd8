from pluvio.cli import main

raise SystemExit(main())
