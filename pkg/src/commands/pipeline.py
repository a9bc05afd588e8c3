# src/commands/pipeline.py
"""
pipeline - one full DARv2 pass: windows, fusion, refinement, losses, quality

Inputs come from --scene (a synth directory) and/or explicit paths. Every
input is read and validated and the whole pass is computed before anything
is written to --out.
"""
import logging
from typing import Optional

import typer

from src.commands.common import (
    ALPHA, BE, CLASSES, CONFIG, CTCF, H_WINDOW, IGNORE, JSON_OUT, LAMBDA, SNAP_RADIUS, SUM_MODE, V_WINDOW,
    build_config, handle_errors,
)
from src.config import Settings
from src.pipeline.orchestrator import DarPipeline, summary_json, write_pass_outputs
from src.storage.bundles import read_scene

logger = logging.getLogger(__name__)


@handle_errors
def pipeline_command(
    out: str = typer.Option(..., "--out", help="Output directory"),
    scene: Optional[str] = typer.Option(None, "--scene", help="Scene directory (as written by synth)"),
    ta_logits: Optional[str] = typer.Option(None, "--ta-logits", help="TA logits, horizontal pass"),
    ta_logits_v: Optional[str] = typer.Option(None, "--ta-logits-v", help="TA logits, vertical pass"),
    masks: Optional[str] = typer.Option(None, "--masks", help="Instance masks JSON"),
    student_logits: Optional[str] = typer.Option(None, "--student-logits", help="Student logits"),
    gt: Optional[str] = typer.Option(None, "--gt", help="Ground-truth label map"),
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
    """Run the whole pseudo-label pipeline on one scene"""
    cfg = build_config(config, h_window, v_window, alpha, lambda_, snap_radius, classes, ignore, be, ctcf, sum_mode)
    inputs = read_scene(scene, ta_logits=ta_logits, masks=masks, ta_logits_v=ta_logits_v,
                        student_logits=student_logits, gt=gt)

    result = DarPipeline(cfg, threads=Settings().threads).run_sync(inputs)
    write_pass_outputs(out, result)

    if json_out:
        typer.echo(summary_json(result))
        return
    typer.echo(f"DARv2 pass ({cfg.variant_tag}) -> {out}")
    if result.quality is not None:
        q = result.quality
        typer.echo(f"mIoU pseudo {q.miou_pseudo * 100:.2f} | TA {q.miou_ta * 100:.2f} | gain {q.gain * 100:+.2f}")
