from jumpgame.cli.module import main

raise SystemExit(main())
