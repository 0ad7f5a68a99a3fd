import os
from dotenv import load_dotenv
from src.utils.log import pre_configure_logging, log

# Runs before any import that might log
pre_configure_logging()

log.logger.info("Starting point cloud descriptor server...")

# .env may override where the server listens; numeric settings stay in config.yaml
load_dotenv()


def _warm_model_store(mcp):
    path = mcp.models.resolve(None)
    if not os.path.exists(path):
        log.logger.warning(f"Default model {path} not found; tools will need an explicit model_path")
        return
    try:
        mcp.models.get(path)
    except Exception as e:
        log.logger.warning(f"Default model {path} could not be loaded: {e}")


if __name__ == "__main__":
    try:
        from src.app import mcp
        from src.mcp_instance import config

        server = config.pipeline.server
        host = os.getenv("MCP_HOST", server.host)
        port = int(os.getenv("MCP_PORT", str(server.port)))
        _warm_model_store(mcp)

        if server.transport == "stdio":
            log.logger.info("Serving over stdio")
            mcp.run(transport="stdio")
        else:
            log.logger.info(f"Serving over {server.transport} on {host}:{port}")
            mcp.run(transport=server.transport, host=host, port=port)
    except Exception as e:
        log.logger.critical(f"Server startup failed: {e}", exc_info=True)
