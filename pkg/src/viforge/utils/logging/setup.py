import logging
import os
from rich.logging import RichHandler


def setup_logging(level=None, library_level=logging.WARNING):
    """Set up logging with Rich handler."""
    if level is None:
        level = os.getenv("LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
    )

    # Keep third-party chatter down; viforge follows the requested level
    for name in ("joblib", "numexpr"):
        logging.getLogger(name).setLevel(library_level)
    logging.getLogger("viforge").setLevel(level)

    return logging.getLogger("viforge")
