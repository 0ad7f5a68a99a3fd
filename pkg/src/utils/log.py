import logging
import os
import sys
from contextlib import contextmanager

from loguru import logger

# ======================================================================================
# Part 1: Centralized Logging Configuration
# ======================================================================================

LOG_DIR = "logs"
CONSOLE_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)
FILE_FORMAT = "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {name}:{function}:{line} - {message}"


def pre_configure_logging(level: str = "INFO"):
    """
    Replaces the default Loguru handler with a temporary stderr sink that is
    used until the pipeline configuration has been read.
    """
    logger.remove()
    logger.add(sys.stderr, level=level, format=CONSOLE_FORMAT)


class InterceptHandler(logging.Handler):
    """
    Forwards standard logging records (scipy warnings, uvicorn, fastmcp) to Loguru.
    """
    def emit(self, record):
        try:
            level = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        frame, depth = logging.currentframe(), 2
        while frame and frame.f_code.co_filename == logging.__file__:
            frame = frame.f_back
            depth += 1

        logger.opt(depth=depth, exception=record.exc_info).log(level, record.getMessage())


def _resolve_level(configured_level: str):
    if configured_level == "NONE":
        return logger.level("CRITICAL").no + 1
    try:
        logger.level(configured_level)
        return configured_level
    except ValueError:
        logger.warning(f"Invalid logging level '{configured_level}' in configuration. Defaulting to INFO.")
        return "INFO"


def setup_logging(config):
    """
    Sets up the application's logging from a configuration object exposing
    dotted-key ``get`` (see ``src.config.Config``).
    """
    configured_log_level = str(config.get("logging.level", "INFO")).upper()
    file_logging_enabled = config.get("logging.file_enabled", False)
    effective_log_level = _resolve_level(configured_log_level)

    logger.remove()

    logging.basicConfig(handlers=[InterceptHandler()], level=0, force=True)
    logging.getLogger("uvicorn").handlers = [InterceptHandler()]
    logging.getLogger("uvicorn.access").handlers = [InterceptHandler()]
    logging.captureWarnings(True)

    if file_logging_enabled:
        os.makedirs(LOG_DIR, exist_ok=True)
        logger.add(
            os.path.join(LOG_DIR, "pipeline.log"),
            rotation="500 MB",
            retention="10 days",
            level=effective_log_level,
            format=FILE_FORMAT,
            enqueue=True,
        )
        logger.add(
            os.path.join(LOG_DIR, "error.log"),
            level="ERROR",
            rotation="1 week",
            retention="1 month",
            enqueue=True,
        )

    logger.add(sys.stderr, level=effective_log_level, format=CONSOLE_FORMAT)
    logger.debug(
        f"Logging configured: level={configured_log_level}, file_enabled={file_logging_enabled}."
    )


@contextmanager
def run_sink(path: str, level: str = "INFO"):
    """
    Copies every record emitted inside the block to ``path``, one file per
    training run, so the run's digests and checkpoints stay next to its model.
    """
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    sink_id = logger.add(path, level=level, format=FILE_FORMAT, mode="w")
    try:
        yield path
    finally:
        logger.remove(sink_id)

# ======================================================================================
# Part 2: Custom Logger Class for Application Use
# ======================================================================================

class CustomLogger:
    """
    Logs to the globally configured Loguru logger and, inside an MCP tool
    call, to the FastMCP request context as well.
    """

    def __init__(self):
        self._local_logger = logger
        self._get_context_func = None
        try:
            from fastmcp.server.dependencies import get_context
            self._get_context_func = get_context
        except ImportError:
            pass

    def _get_context(self):
        if not self._get_context_func:
            return None
        try:
            return self._get_context_func()
        except RuntimeError:
            return None

    async def _emit(self, level: str, message: str):
        self._local_logger.opt(depth=2).log(level.upper(), message)
        context = self._get_context()
        if context:
            await getattr(context, level)(message)

    async def debug(self, message: str):
        await self._emit("debug", message)

    async def info(self, message: str):
        await self._emit("info", message)

    async def warning(self, message: str):
        await self._emit("warning", message)

    async def error(self, message: str):
        await self._emit("error", message)

    @property
    def logger(self):
        """The underlying loguru logger, for synchronous numeric code."""
        return self._local_logger

# ======================================================================================
# Part 3: Export a Singleton Instance
# ======================================================================================

log = CustomLogger()
