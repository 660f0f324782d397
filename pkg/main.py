"""Main entry point for the high-contrast domain decomposition experiments."""

# Load environment variables BEFORE other imports
from dotenv import load_dotenv
load_dotenv()

import logging
import sys

from src.cli.commands import main
from src.context import SweepPointFilter
from src.settings import Settings


def configure_logging(level: str) -> None:
    """Root handler tagging every record with the sweep point it belongs to."""
    handler = logging.StreamHandler()
    handler.addFilter(SweepPointFilter())
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s [%(point)s] %(name)s: %(message)s"))
    logging.basicConfig(level=level, handlers=[handler], force=True)


def run():
    """Run the CLI."""
    settings = Settings.from_env()
    configure_logging(settings.log_level)
    sys.exit(main(settings=settings))


if __name__ == "__main__":
    run()
