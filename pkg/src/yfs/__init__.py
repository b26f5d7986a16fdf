"""Radial fast diffusion, Yamabe shrinkers and expanders.

Modules
-------
model      dimension- and beta-derived constants, regimes
profiles   self-similar profiles, tails, phase plane
flow       implicit radial solver, rescalings, distances
geometry   scalar curvature of the conformal metric
cli        command-line front end
"""

import logging
import os

__version__ = "0.1.0"


def _configure_logging():
    level = os.environ.get("YFS_LOG")
    if not level:
        return
    logger = logging.getLogger("yfs")
    if logger.handlers:
        return
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(level.upper() if not level.isdigit() else int(level))


_configure_logging()
