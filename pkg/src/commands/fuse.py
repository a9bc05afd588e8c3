# src/commands/fuse.py
"""
fuse - CTCF fusion of instance masks with TA logits over a whole image

Writes pseudo.plbl, confidence.plbd and decisions.json to --out.
"""
import logging
from typing import Optional

import typer

from src.commands.common import (
    ALPHA, BE, CLASSES, CONFIG, CTCF, H_WINDOW, IGNORE, JSON_OUT, LAMBDA, SNAP_RADIUS, SUM_MODE, V_WINDOW,
    build_config, handle_errors,
)
from src.exceptions import DimensionMismatchError
from src.storage.bundles import dump_json, write_pseudo_bundle
from src.storage.codecs import read_logits
from src.storage.rle import read_masks
from src.tools.fusion_tools import fuse

logger = logging.getLogger(__name__)


@handle_errors
def fuse_command(
    masks: str = typer.Option(..., "--masks", help="Instance masks JSON"),
    ta_logits: str = typer.Option(..., "--ta-logits", help="TA logits (.plgt)"),
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
    """Fuse instance masks with TA logits into a pseudo map and confidence map"""
    cfg = build_config(config, h_window, v_window, alpha, lambda_, snap_radius, classes, ignore, be, ctcf, sum_mode)
    mask_set = read_masks(masks)
    logits = read_logits(ta_logits)
    if cfg.num_classes is not None and cfg.num_classes != logits.num_classes:
        raise DimensionMismatchError(f"--classes {cfg.num_classes} but logits have {logits.num_classes}")

    theta = cfg.fixed_theta if cfg.ctcf_variant == "fixed" else None
    bundle = fuse(mask_set, logits, ignore_label=cfg.ignore_label, theta=theta)
    write_pseudo_bundle(out, bundle, variant=cfg.variant_tag)

    direct = sum(1 for d in bundle.decisions if d.path == "direct_lcr")
    summary = {
        "variant": cfg.variant_tag,
        "masks": len(mask_set),
        "decisions": len(bundle.decisions),
        "direct_lcr": direct,
        "entropy": len(bundle.decisions) - direct,
        "confident_pixels": int(bundle.confidence.sum()),
    }
    if json_out:
        typer.echo(dump_json(summary))
    else:
        typer.echo(f"Fused {summary['decisions']} masks ({direct} direct_lcr, {summary['entropy']} entropy) -> {out}")
