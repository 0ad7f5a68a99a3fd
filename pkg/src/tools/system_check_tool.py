import os

import numpy as np
import scipy
from fastmcp import Context
from fastmcp.tools import ToolResult
from mcp.types import TextContent

from src.errors import ToolkitError
from src.mcp_instance import config, mcp
from src.utils.log import log


@mcp.tool(
    name="check_toolkit_status",
    description="Checks that the server is running, reports the numeric library versions and the configured architecture, and verifies that the configured model file loads against that architecture.",
    annotations={
        "title": "Check Toolkit Status",
        "readOnlyHint": True,  # It only checks status, doesn't modify anything
        "openWorldHint": False
    }
)
async def check_toolkit_status(context: Context) -> ToolResult:
    """
    Performs a health check on the server, its configuration and its default model.
    """
    total_steps = 4
    await context.report_progress(progress=0, total=total_steps, message="Starting toolkit health check.")
    await log.info("Starting toolkit health check.")
    status_messages = []
    structured_statuses = []

    await context.report_progress(progress=1, total=total_steps, message="Checking MCP server instance status.")
    mcp_status = {"component": "MCP Server Instance", "status": "SUCCESS", "details": "MCP server instance is initialized and running."}
    structured_statuses.append(mcp_status)
    status_messages.append(mcp_status["details"])

    await context.report_progress(progress=2, total=total_steps, message="Checking numeric stack.")
    libs = {"component": "Numeric Libraries", "status": "SUCCESS", "details": f"numpy {np.__version__}, scipy {scipy.__version__}"}
    structured_statuses.append(libs)
    status_messages.append(f"SUCCESS: {libs['details']}")

    arch = config.pipeline.architecture
    arch_status = {
        "component": "Architecture",
        "status": "INFO",
        "details": (
            f"local_dim={arch.local_dim}, flex_widths={arch.flex_widths}, aggregator={arch.aggregator}, "
            f"clusters={arch.clusters}, global_dim={arch.global_dim}, use_se={arch.use_se}"
        ),
    }
    structured_statuses.append(arch_status)
    status_messages.append(f"INFO: {arch_status['details']}")

    await context.report_progress(progress=3, total=total_steps, message="Checking configured model file.")
    model_path = mcp.models.resolve(None)
    model_status = {"component": "Model File", "status": "UNKNOWN", "details": ""}
    if not os.path.exists(model_path):
        model_status["status"] = "WARNING"
        model_status["details"] = f"Model file {model_path} does not exist; tools need an explicit model_path."
        status_messages.append(f"WARNING: {model_status['details']}")
    else:
        try:
            model = mcp.models.get(model_path)
            model_status["status"] = "SUCCESS"
            model_status["details"] = f"Model {model_path} loads ({len(model)} parameter blocks, encoder digest {model.digest('encoder')[:12]})."
            status_messages.append(f"SUCCESS: {model_status['details']}")
        except (ToolkitError, OSError) as e:
            model_status["status"] = "ERROR"
            model_status["details"] = f"Model {model_path} failed to load: {e}"
            status_messages.append(f"ERROR: {model_status['details']}")
    structured_statuses.append(model_status)

    await context.report_progress(progress=total_steps, total=total_steps, message="Toolkit health check completed.")
    await log.info("Toolkit health check completed.")

    return ToolResult(
        content=[TextContent(type="text", text="\n".join(status_messages))],
        structured_content={"checks": structured_statuses}
    )
