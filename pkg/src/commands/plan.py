# src/commands/plan.py
"""
plan - list the horizontal windows, vertical windows and overlap regions

Example:
    python main.py plan 400x2048 --json
"""
import logging
from typing import Optional

import typer

from src.commands.common import (
    ALPHA, BE, CLASSES, CONFIG, CTCF, H_WINDOW, IGNORE, JSON_OUT, LAMBDA, SNAP_RADIUS, SUM_MODE, V_WINDOW,
    build_config, handle_errors,
)
from src.config import parse_size
from src.storage.bundles import dump_json
from src.storage.models import ImageDims
from src.tools.window_tools import overlap_regions, plan_windows

logger = logging.getLogger(__name__)


@handle_errors
def plan_command(
    dims: str = typer.Argument(..., help="Image size HxW"),
    config: Optional[str] = CONFIG,
    h_window: Optional[str] = H_WINDOW,
    v_window: Optional[str] = V_WINDOW,
    alpha: Optional[float] = ALPHA,
    lambda_: Optional[float] = LAMBDA,
    snap_radius: Optional[int] = SNAP_RADIUS,
    classes: Optional[int] = CLASSES,
    ignore: Optional[int] = IGNORE,
    be: Optional[str] = BE,
    ctcf: Optional[str] = CTCF,
    sum_mode: bool = SUM_MODE,
    json_out: bool = JSON_OUT,
):
    """Plan sliding windows over an image"""
    cfg = build_config(config, h_window, v_window, alpha, lambda_, snap_radius, classes, ignore, be, ctcf, sum_mode)
    plan = plan_windows(ImageDims(*parse_size(dims)), cfg.h_window, cfg.v_window)
    regions = overlap_regions(plan)

    if json_out:
        typer.echo(dump_json({
            "dims": list(plan.dims),
            "horizontal": [w.model_dump(mode="json") for w in plan.horizontal],
            "vertical": [w.model_dump(mode="json") for w in plan.vertical],
            "overlaps": [r.model_dump(mode="json") for r in regions],
        }))
        return

    typer.echo(f"Image {plan.dims[0]}x{plan.dims[1]}")
    typer.echo(f"Horizontal windows ({cfg.h_window[0]}x{cfg.h_window[1]}): {len(plan.horizontal)}")
    for w in plan.horizontal:
        typer.echo(f"  W_{w.id}: origin ({w.origin_row}, {w.origin_col})")
    typer.echo(f"Vertical windows ({cfg.v_window[0]}x{cfg.v_window[1]}): {len(plan.vertical)}")
    for w in plan.vertical:
        typer.echo(f"  W_{w.id}: origin ({w.origin_row}, {w.origin_col})")
    typer.echo(f"Overlap regions: {len(regions)}")
