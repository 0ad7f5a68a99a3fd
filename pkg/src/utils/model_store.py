import os

from src.config import Config
from src.fileio import load_model
from src.net.params import ModelParams
from src.utils.log import log


class ModelStore:
    """Loads model files for the tool server and keeps them until the file changes."""

    def __init__(self, config: Config):
        self.config = config
        self.default_path = config.pipeline.server.model_path
        self._cache: dict[str, tuple[float, ModelParams]] = {}

    def resolve(self, path: str | None) -> str:
        return os.path.abspath(path or self.default_path)

    def get(self, path: str | None = None) -> ModelParams:
        resolved = self.resolve(path)
        mtime = os.path.getmtime(resolved)
        cached = self._cache.get(resolved)
        if cached and cached[0] == mtime:
            log.logger.debug(f"Using cached model {resolved}")
            return cached[1]
        model = load_model(resolved, self.config.pipeline.architecture)
        self._cache[resolved] = (mtime, model)
        log.logger.info(f"Loaded model {resolved} ({len(model)} parameter blocks)")
        return model

    def clear(self):
        self._cache.clear()
