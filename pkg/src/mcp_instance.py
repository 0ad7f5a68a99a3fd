from fastmcp import FastMCP
from src.config import load_config
from src.utils.log import log
from src.utils.model_store import ModelStore

# This file holds the central mcp object to avoid circular dependencies.
config = load_config()
log.logger.info("Initializing FastMCP instance...")
mcp = FastMCP(config.pipeline.server.name)
mcp.models = ModelStore(config)
log.logger.info("FastMCP instance initialized.")
