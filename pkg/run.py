"""
Launcher for the Kerr lattice simulator
Usage: python run.py [--config PATH] COMMAND ...
"""

import sys

if __name__ == '__main__':
    # Check if dependencies are installed
    try:
        import numpy
        import scipy
        import click
        import decouple
    except ImportError as e:
        print(f"Missing dependency: {e}")
        print("Please install dependencies with: pip install -r requirements.txt")
        sys.exit(2)

    from cli import main
    main()
