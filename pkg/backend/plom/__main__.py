"""Allow `python -m plom`"""

from plom.main import main

if __name__ == "__main__":
    raise SystemExit(main())
