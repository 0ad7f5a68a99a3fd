import asyncio
from typing import Annotated, Literal, Optional

from fastmcp import Context
from fastmcp.exceptions import ToolError
from fastmcp.tools import ToolResult
from mcp.types import TextContent
from pydantic import Field

from src.errors import ToolkitError
from src.evaluation import evaluate_local, evaluate_retrieval, one_factor_sweep
from src.fileio import load_dataset
from src.mcp_instance import config, mcp
from src.utils.log import log


def _format_rows(rows: list[dict]) -> str:
    if not rows:
        return ""
    columns = list(rows[0])
    lines = [",".join(columns)]
    lines += [",".join(f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c]) for c in columns) for row in rows]
    return "\n".join(lines)


@mcp.tool(
    name="evaluate_model",
    description="Evaluates a model on a synthetic dataset directory under noise, yaw rotation and downsampling perturbations. Tasks: keypoint repeatability, registration success (RTE < 2 m, RRE < 5 deg) or place-recognition recall@1 / recall@1%. Each factor is swept on its own around the unperturbed setting.",
    annotations={
        "title": "Evaluate Model Robustness",
        "readOnlyHint": True,
        "openWorldHint": False
    }
)
async def evaluate_model(
    context: Context,
    dataset_dir: Annotated[str, Field(description="Directory holding manifest.csv and the .dhpc scenes.")],
    task: Annotated[Literal["repeatability", "registration", "retrieval"], Field(description="Which metric to compute.")],
    model_path: Annotated[Optional[str], Field(description="Model file to use. Defaults to server.model_path from the configuration.")] = None,
    noise: Annotated[Optional[list[float]], Field(description="Gaussian noise levels σ (m) to sweep.")] = None,
    rotation: Annotated[Optional[list[float]], Field(description="Yaw rotations (deg) to sweep.")] = None,
    downsample: Annotated[Optional[list[float]], Field(description="Downsampling factors α >= 1 to sweep.")] = None,
    radius: Annotated[Optional[float], Field(description="Repeatability radius (m); 0.3 reproduces the ETH protocol.", gt=0.0)] = None,
    seed: Annotated[int, Field(description="Seed of the perturbations and of RANSAC.")] = 0,
) -> ToolResult:
    """
    Runs one robustness sweep and returns one metrics row per sweep point.
    """
    await log.info("Entering evaluate_model function.")
    await log.debug(f"Evaluate parameters: dataset_dir='{dataset_dir}', task={task}, noise={noise}, rotation={rotation}, downsample={downsample}, radius={radius}, seed={seed}")
    eval_cfg = config.pipeline.eval.model_copy(update={"seed": seed})

    try:
        perturbations = one_factor_sweep(noise or [], rotation or [], downsample or [])
    except ToolkitError as e:
        await log.error(f"Invalid sweep: {e}")
        raise ToolError(f"Invalid sweep: {e}")
    total_steps = 3

    try:
        await context.report_progress(progress=0, total=total_steps, message="Loading dataset and model.")
        scenes = await asyncio.to_thread(load_dataset, dataset_dir)
        model = await asyncio.to_thread(mcp.models.get, model_path)

        await context.report_progress(progress=1, total=total_steps, message=f"Sweeping {len(perturbations)} settings over {len(scenes)} scenes.")
        if task == "retrieval":
            rows = await asyncio.to_thread(evaluate_retrieval, scenes, model, eval_cfg, perturbations)
        else:
            rows = await asyncio.to_thread(evaluate_local, scenes, model, eval_cfg, perturbations, (task,), radius)
    except (ToolkitError, OSError) as e:
        await log.error(f"evaluate_model failed on {dataset_dir}: {e}")
        raise ToolError(f"Error evaluating model: {e}")

    await context.report_progress(progress=total_steps, total=total_steps, message="Evaluation complete.")
    await log.info("Exiting evaluate_model function with successful response.")
    return ToolResult(
        content=[TextContent(type="text", text=_format_rows(rows))],
        structured_content={"task": task, "rows": rows},
    )
