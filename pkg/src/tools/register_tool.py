import asyncio
from typing import Annotated, Literal, Optional

from fastmcp import Context
from fastmcp.exceptions import ToolError
from fastmcp.tools import ToolResult
from mcp.types import TextContent
from pydantic import Field

from src.errors import ToolkitError
from src.evaluation import describe_cloud, register_descriptions
from src.fileio import load_cloud
from src.geometry import RigidTransform
from src.mcp_instance import config, mcp
from src.registration import registration_success, rte_rre
from src.utils.log import log


@mcp.tool(
    name="register_clouds",
    description="Estimates the rigid transform aligning a source point cloud onto a target cloud by matching keypoint descriptors and running RANSAC. If a ground-truth 4x4 transform is supplied, also reports the translation/rotation errors and whether the registration succeeded.",
    annotations={
        "title": "Register Point Clouds",
        "readOnlyHint": True,
        "openWorldHint": False
    }
)
async def register_clouds(
    context: Context,
    source_path: Annotated[str, Field(description="Point cloud to be aligned (.dhpc or .xyz).")],
    target_path: Annotated[str, Field(description="Reference point cloud (.dhpc or .xyz).")],
    model_path: Annotated[Optional[str], Field(description="Model file to use. Defaults to server.model_path from the configuration.")] = None,
    keypoints: Annotated[int, Field(description="Keypoints per cloud.", ge=3, le=8192)] = 256,
    match_mode: Annotated[Literal["nn", "mutual"], Field(description="Nearest-neighbor matching or mutual nearest neighbors only.")] = "mutual",
    inlier_threshold: Annotated[float, Field(description="RANSAC inlier distance (m).", gt=0.0)] = 0.5,
    max_iterations: Annotated[int, Field(description="RANSAC iteration cap.", ge=1, le=100000)] = 10000,
    seed: Annotated[int, Field(description="Seed of the RANSAC sampler.")] = 0,
    ground_truth: Annotated[Optional[list[list[float]]], Field(description="Optional 4x4 ground-truth transform (row-major) mapping source onto target.")] = None,
) -> ToolResult:
    """
    Registers two clouds: keypoints, descriptor matching, then RANSAC.

    :return: The estimated transform, inlier count, iterations and, with a
             ground truth, RTE (m), RRE (deg) and success.
    """
    await log.info("Entering register_clouds function.")
    await log.debug(f"Register parameters: source='{source_path}', target='{target_path}', keypoints={keypoints}, match_mode={match_mode}, inlier_threshold={inlier_threshold}, max_iterations={max_iterations}, seed={seed}")
    total_steps = 4
    eval_cfg = config.pipeline.eval.model_copy(
        update={"match_mode": match_mode, "inlier_threshold": inlier_threshold, "ransac_max_iter": max_iterations, "seed": seed}
    )

    try:
        truth = RigidTransform.from_matrix(ground_truth) if ground_truth is not None else None
    except (ToolkitError, ValueError, IndexError) as e:
        await log.error(f"Invalid ground-truth transform: {e}")
        raise ToolError(f"Invalid ground-truth transform: {e}")

    try:
        await context.report_progress(progress=0, total=total_steps, message="Loading clouds and model.")
        model = await asyncio.to_thread(mcp.models.get, model_path)
        source_cloud = await asyncio.to_thread(load_cloud, source_path)
        target_cloud = await asyncio.to_thread(load_cloud, target_path)

        await context.report_progress(progress=1, total=total_steps, message="Describing source cloud.")
        source = await asyncio.to_thread(describe_cloud, source_cloud, model, keypoints, eval_cfg.nms_radius, False)
        await context.report_progress(progress=2, total=total_steps, message="Describing target cloud.")
        target = await asyncio.to_thread(describe_cloud, target_cloud, model, keypoints, eval_cfg.nms_radius, False)

        await context.report_progress(progress=3, total=total_steps, message="Matching and running RANSAC.")
        result = await asyncio.to_thread(register_descriptions, source, target, eval_cfg)
    except (ToolkitError, OSError) as e:
        await log.error(f"register_clouds failed for {source_path} -> {target_path}: {e}")
        raise ToolError(f"Error registering clouds: {e}")

    structured = {
        "transform": result.transform.as_matrix().tolist(),
        "inliers": result.inliers,
        "iterations": result.iterations,
        "converged": result.converged,
    }
    summary = f"{result.inliers} inliers after {result.iterations} iterations (converged: {result.converged})."
    if truth is not None:
        rte, rre = rte_rre(result.transform, truth)
        success = registration_success(rte, rre, eval_cfg.rte_threshold, eval_cfg.rre_threshold)
        structured.update(rte=rte, rre=rre, success=success)
        summary += f" RTE {rte:.3f} m, RRE {rre:.3f} deg, success: {success}."

    await context.report_progress(progress=total_steps, total=total_steps, message="Registration complete.")
    await log.info("Exiting register_clouds function with successful response.")
    return ToolResult(content=[TextContent(type="text", text=summary)], structured_content=structured)
