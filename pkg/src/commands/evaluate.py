# src/commands/evaluate.py
"""
eval - IoU report over one or more (ground truth, prediction) label-map pairs

Example:
    python main.py eval gt_a.plbl pred_a.plbl gt_b.plbl pred_b.plbl --json
"""
import logging
from typing import List, Optional

import typer

from src.commands.common import JSON_OUT, handle_errors
from src.evals.metrics import evaluate_pairs
from src.exceptions import ValidationError
from src.storage.codecs import read_label

logger = logging.getLogger(__name__)


@handle_errors
def eval_command(
    paths: List[str] = typer.Argument(..., help="gt.plbl pred.plbl [gt.plbl pred.plbl ...]"),
    classes: Optional[int] = typer.Option(None, "--classes", help="Number of classes (default: from the first gt)"),
    ignore: Optional[int] = typer.Option(None, "--ignore", help="Ignore label (default: from the first gt)"),
    json_out: bool = JSON_OUT,
):
    """Evaluate predictions against ground truth (per-class IoU, mIoU)"""
    if len(paths) % 2:
        raise ValidationError(f"expected gt/pred pairs, got {len(paths)} paths")
    pairs = [(read_label(paths[i]), read_label(paths[i + 1])) for i in range(0, len(paths), 2)]
    first_gt = pairs[0][0]
    num_classes = classes if classes is not None else first_gt.num_classes
    ignore_label = ignore if ignore is not None else first_gt.ignore_label
    report = evaluate_pairs(pairs, num_classes, ignore_label)

    if json_out:
        typer.echo(report.to_json())
        return
    typer.echo(f"Pairs evaluated:   {len(pairs)}")
    typer.echo(f"Evaluated pixels:  {report.evaluated_pixels}")
    typer.echo(f"mIoU:              {report.miou * 100:.2f}")
    typer.echo(f"Pixel accuracy:    {report.pixel_accuracy * 100:.2f}")
    for cls, iou in enumerate(report.per_class_iou):
        typer.echo(f"  class {cls:3d}: {'n/a' if iou is None else f'{iou * 100:.2f}'}")
