"""Entry point for `python -m spikesolve`."""

from .cli import app

if __name__ == "__main__":
    app()
