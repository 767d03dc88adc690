import logging
import sys

logger = logging.getLogger("leechsolver")
logger.addHandler(logging.NullHandler())

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure(level="INFO"):
    """
    Send package log records to standard error.

    Calling this more than once replaces the previously installed stream
    handler.

    Parameters
    ----------
    level : str or int
        A logging level name such as 'DEBUG' or 'INFO', or a numeric level.
    """
    for handler in list(logger.handlers):
        if isinstance(handler, logging.StreamHandler) and getattr(
            handler, "_leechsolver", False
        ):
            logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._leechsolver = True
    logger.addHandler(handler)
    logger.setLevel(level)
    return logger
