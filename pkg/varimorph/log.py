"""Logging setup for the varimorph CLI.

The log file defaults to $XDG_DATA_HOME/varimorph/varimorph.log (or
~/.local/share/varimorph/...). If that directory cannot be created the log goes
to the temp dir, and as a last resort only to stderr.
"""
from __future__ import annotations

import logging
import os
import sys
import tempfile
from typing import Optional

FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def default_log_file() -> Optional[str]:
    base = os.environ.get("XDG_DATA_HOME") or os.path.expanduser("~/.local/share")
    for logdir in (os.path.join(os.path.expanduser(base), "varimorph"), os.path.join(tempfile.gettempdir(), "varimorph")):
        try:
            os.makedirs(logdir, exist_ok=True)
        except OSError:
            continue
        if os.access(logdir, os.W_OK):
            return os.path.join(logdir, "varimorph.log")
    return None


def configure_logging(verbosity: int = 0, log_file: Optional[str] = None) -> logging.Logger:
    """Configure the 'varimorph' logger: stderr handler plus an optional file handler.

    verbosity 0 -> WARNING, 1 -> INFO, 2+ -> DEBUG on stderr; the file always gets INFO.
    Passing log_file="" disables the file handler.
    """
    root = logging.getLogger("varimorph")
    root.setLevel(logging.DEBUG)
    for h in list(root.handlers):
        root.removeHandler(h)
        h.close()

    stream = logging.StreamHandler(sys.stderr)
    levels = {0: logging.WARNING, 1: logging.INFO}
    stream.setLevel(levels.get(verbosity, logging.DEBUG))
    stream.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(stream)

    if log_file is None:
        log_file = default_log_file()
    if log_file:
        try:
            fh = logging.FileHandler(log_file, encoding="utf-8")
        except OSError as e:
            # nicht fatal: nur auf stderr loggen
            root.warning("could not open log file %s: %s", log_file, e)
        else:
            fh.setLevel(logging.INFO)
            fh.setFormatter(logging.Formatter(FORMAT))
            root.addHandler(fh)
    return root
