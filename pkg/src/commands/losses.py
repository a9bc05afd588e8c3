# src/commands/losses.py
"""
losses - run one DARv2 pass and report every loss term

Needs TA logits, instance masks and student logits (optionally the
vertical-pass TA logits); prints the LossReport JSON or writes it to --out.
"""
import logging
from pathlib import Path
from typing import Optional

import typer

from src.commands.common import (
    ALPHA, BE, CLASSES, CONFIG, CTCF, H_WINDOW, IGNORE, JSON_OUT, LAMBDA, SNAP_RADIUS, SUM_MODE, V_WINDOW,
    build_config, handle_errors,
)
from src.config import Settings
from src.exceptions import MissingInputError
from src.pipeline.orchestrator import DarPipeline
from src.storage.bundles import read_scene

logger = logging.getLogger(__name__)


@handle_errors
def losses_command(
    scene: Optional[str] = typer.Option(None, "--scene", help="Scene directory (as written by synth)"),
    ta_logits: Optional[str] = typer.Option(None, "--ta-logits", help="TA logits, horizontal pass"),
    ta_logits_v: Optional[str] = typer.Option(None, "--ta-logits-v", help="TA logits, vertical pass"),
    masks: Optional[str] = typer.Option(None, "--masks", help="Instance masks JSON"),
    student_logits: Optional[str] = typer.Option(None, "--student-logits", help="Student logits"),
    out: Optional[str] = typer.Option(None, "--out", help="Write the report here instead of stdout"),
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
    """Compute the consistency, boundary and cross-entropy losses"""
    cfg = build_config(config, h_window, v_window, alpha, lambda_, snap_radius, classes, ignore, be, ctcf, sum_mode)
    inputs = read_scene(scene, ta_logits=ta_logits, masks=masks, ta_logits_v=ta_logits_v,
                        student_logits=student_logits)
    if inputs.student_logits is None:
        raise MissingInputError("losses need student logits (--student-logits or student_logits.plgt in --scene)")
    inputs.gt = None

    result = DarPipeline(cfg, threads=Settings().threads).run_sync(inputs)
    report = result.losses.to_json()
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(report)
        if not json_out:
            typer.echo(f"Wrote loss report to {out}")
            return
    typer.echo(report)
