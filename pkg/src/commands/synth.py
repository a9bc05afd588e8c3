# src/commands/synth.py
"""
synth - write a seeded synthetic scene

Writes gt.plbl, ta_logits.plgt, ta_logits_v.plgt, masks.json,
student_logits.plgt and synth.json (the generating spec) to --out.
"""
import logging
from pathlib import Path

import typer
from pydantic import ValidationError as PydanticValidationError

from src.commands.common import JSON_OUT, handle_errors
from src.exceptions import ValidationError
from src.pipeline.synth import SynthSpec, generate_scene
from src.storage.bundles import dump_json, write_scene

logger = logging.getLogger(__name__)


@handle_errors
def synth_command(
    out: str = typer.Option(..., "--out", help="Output directory"),
    seed: int = typer.Option(0, "--seed", help="Random seed"),
    height: int = typer.Option(64, "--height", help="Image height"),
    width: int = typer.Option(128, "--width", help="Image width"),
    classes: int = typer.Option(6, "--classes", help="Number of classes"),
    min_shapes: int = typer.Option(4, "--min-shapes", help="Minimum number of rectangles"),
    max_shapes: int = typer.Option(10, "--max-shapes", help="Maximum number of rectangles"),
    noise: float = typer.Option(0.2, "--noise", help="TA label-flip rate"),
    temperature: float = typer.Option(1.0, "--temperature", help="TA logit temperature"),
    fidelity: float = typer.Option(1.0, "--fidelity", help="Share of instance masks left unperturbed"),
    student_noise: float = typer.Option(0.3, "--student-noise", help="Student label-flip rate"),
    json_out: bool = JSON_OUT,
):
    """Generate a synthetic scene for the pipeline"""
    try:
        spec = SynthSpec(
            seed=seed, height=height, width=width, num_classes=classes,
            min_shapes=min_shapes, max_shapes=max_shapes, noise_rate=noise,
            temperature=temperature, fidelity=fidelity, student_noise_rate=student_noise,
        )
    except PydanticValidationError as e:
        raise ValidationError(f"invalid synth spec: {e}") from e

    scene = generate_scene(spec)
    write_scene(out, scene)
    (Path(out) / "synth.json").write_text(dump_json(spec.model_dump(mode="json")))

    if json_out:
        typer.echo(dump_json({"out": str(out), "masks": len(scene.masks), **spec.model_dump(mode="json")}))
    else:
        typer.echo(f"Synthetic scene (seed {seed}, {height}x{width}, {len(scene.masks)} masks) -> {out}")
