# src/commands/refine.py
"""
refine - BE / BEv2 boundary refinement of a pseudo bundle over one region

Inputs share one set of dimensions (the region); writes b_ref.plbd and
trace.json to --out.
"""
import logging
from pathlib import Path
from typing import Optional

import typer

from src.commands.common import (
    ALPHA, BE, CLASSES, CONFIG, CTCF, H_WINDOW, IGNORE, JSON_OUT, LAMBDA, SNAP_RADIUS, SUM_MODE, V_WINDOW,
    build_config, handle_errors,
)
from src.storage.bundles import dump_json, read_pseudo_bundle
from src.storage.codecs import argmax_labels, read_logits, softmax, write_boundary
from src.storage.rle import read_masks
from src.tools.boundary_tools import BoundaryConfig, Provenance, boundary_from_labels, boundary_from_masks, refine

logger = logging.getLogger(__name__)


@handle_errors
def refine_command(
    bundle_dir: str = typer.Option(..., "--bundle", help="Directory with pseudo.plbl / confidence.plbd"),
    masks: str = typer.Option(..., "--masks", help="Instance masks JSON"),
    ta_i: str = typer.Option(..., "--ta-i", help="TA logits of the horizontal window (.plgt)"),
    ta_j: str = typer.Option(..., "--ta-j", help="TA logits of the vertical window (.plgt)"),
    out: str = typer.Option(..., "--out", help="Output directory"),
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
    """Refine boundaries into the reliable boundary map B_ref"""
    cfg = build_config(config, h_window, v_window, alpha, lambda_, snap_radius, classes, ignore, be, ctcf, sum_mode)
    bundle = read_pseudo_bundle(bundle_dir)
    mask_set = read_masks(masks)
    logits_i = read_logits(ta_i)
    logits_j = read_logits(ta_j)

    b_ref, trace = refine(
        bundle,
        boundary_from_labels(argmax_labels(logits_i, cfg.ignore_label)),
        boundary_from_labels(argmax_labels(logits_j, cfg.ignore_label)),
        softmax(logits_i),
        softmax(logits_j),
        boundary_from_masks(mask_set),
        BoundaryConfig(alpha=cfg.alpha, snap_radius=cfg.snap_radius, variant=cfg.be_variant),
    )

    target = Path(out)
    target.mkdir(parents=True, exist_ok=True)
    write_boundary(target / "b_ref.plbd", b_ref)
    (target / "trace.json").write_text(dump_json({"variant": cfg.variant_tag, **trace.to_dict()}))

    counts = {kind.name.lower(): trace.count(kind) for kind in Provenance}
    if json_out:
        typer.echo(dump_json({"b_ref_pixels": b_ref.count, "counts": counts, "variant": cfg.variant_tag}))
    else:
        typer.echo(f"B_ref: {b_ref.count} pixels ({counts['ta_agreement']} ta_agreement, "
                   f"{counts['sam_snap_accepted']} sam_snap_accepted, {counts['discarded']} discarded) -> {out}")
