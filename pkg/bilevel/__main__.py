"""
Run the CLI with `python -m bilevel`.
"""

from .cli import main

if __name__ == "__main__":
    main()
