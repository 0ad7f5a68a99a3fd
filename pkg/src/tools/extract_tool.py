import asyncio
from typing import Annotated, Optional

import numpy as np
from fastmcp import Context
from fastmcp.exceptions import ToolError
from fastmcp.tools import ToolResult
from mcp.types import TextContent
from pydantic import Field

from src.errors import ToolkitError
from src.evaluation import describe_cloud
from src.fileio import load_cloud
from src.mcp_instance import mcp
from src.utils.log import log


@mcp.tool(
    name="extract_descriptors",
    description="Runs the network once on a point cloud file (.dhpc or .xyz) and returns its keypoints, their saliency scores and the global place descriptor. Optionally writes all per-point descriptors to an .npz file.",
    annotations={
        "title": "Extract Descriptors",
        "readOnlyHint": False,  # Optional .npz output
        "openWorldHint": False
    }
)
async def extract_descriptors(
    context: Context,
    cloud_path: Annotated[str, Field(description="Path of the point cloud file (.dhpc or .xyz), coordinates in meters with z up.")],
    model_path: Annotated[Optional[str], Field(description="Model file to use. Defaults to server.model_path from the configuration.")] = None,
    keypoints: Annotated[int, Field(description="Maximum number of keypoints to return.", ge=1, le=8192)] = 256,
    nms_radius: Annotated[float, Field(description="Keypoints closer than this radius (m) to a stronger keypoint are suppressed.", ge=0.0)] = 0.5,
    output_path: Annotated[Optional[str], Field(description="If set, descriptors, saliency, keypoints and the global descriptor are written to this .npz file.")] = None,
) -> ToolResult:
    """
    Extracts keypoints and local/global descriptors in a single forward pass.

    :param cloud_path: The point cloud to describe.
    :param model_path: The model file; the configured default if omitted.
    :param keypoints: Number of keypoints to select.
    :param nms_radius: Suppression radius between keypoints.
    :param output_path: Optional .npz destination for the full result.
    :return: Keypoint indices, positions and scores plus the global descriptor.
    """
    await log.info("Entering extract_descriptors function.")
    await log.debug(f"Extract parameters: cloud_path='{cloud_path}', model_path='{model_path}', keypoints={keypoints}, nms_radius={nms_radius}, output_path='{output_path}'")
    total_steps = 3 + (1 if output_path else 0)

    try:
        await context.report_progress(progress=0, total=total_steps, message="Loading cloud and model.")
        cloud = await asyncio.to_thread(load_cloud, cloud_path)
        model = await asyncio.to_thread(mcp.models.get, model_path)

        await context.report_progress(progress=1, total=total_steps, message=f"Describing {cloud.count} points.")
        description = await asyncio.to_thread(describe_cloud, cloud, model, keypoints, nms_radius)
        await context.report_progress(progress=2, total=total_steps, message="Forward pass complete.")

        if output_path:
            await context.report_progress(progress=3, total=total_steps, message=f"Writing {output_path}.")
            np.savez(
                output_path,
                descriptors=description.descriptors,
                saliency=description.saliency,
                keypoints=description.keypoints.indices,
                keypoint_scores=description.keypoints.scores,
                global_descriptor=description.global_descriptor,
            )
            await log.info(f"Wrote descriptors to {output_path}")
    except (ToolkitError, OSError) as e:
        await log.error(f"extract_descriptors failed for {cloud_path}: {e}")
        raise ToolError(f"Error extracting descriptors: {e}")

    if description.degenerate:
        await log.warning(f"Global descriptor of {cloud_path} is degenerate (all residuals vanished).")

    structured = {
        "points": cloud.count,
        "keypoints": description.keypoints.indices.tolist(),
        "keypoint_positions": description.keypoints.positions.tolist(),
        "keypoint_scores": description.keypoints.scores.tolist(),
        "global_descriptor": description.global_descriptor.tolist(),
        "degenerate": description.degenerate,
        "output_path": output_path,
    }
    summary = (
        f"{len(description.keypoints)} keypoints from {cloud.count} points; "
        f"local descriptors {description.descriptors.shape[1]}-dim, global descriptor {description.global_descriptor.shape[0]}-dim."
    )
    await context.report_progress(progress=total_steps, total=total_steps, message="Extraction complete.")
    await log.info("Exiting extract_descriptors function with successful response.")
    return ToolResult(content=[TextContent(type="text", text=summary)], structured_content=structured)
