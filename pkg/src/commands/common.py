# src/commands/common.py
"""
Shared pieces of the CLI commands: config flags, error handling, output
"""
import functools
import logging
from typing import Optional

import typer

from src.config import PipelineConfig, Settings, parse_ctcf, parse_size
from src.exceptions import PanofuseError

logger = logging.getLogger(__name__)

# Options shared by every command that builds a PipelineConfig
CONFIG = typer.Option(None, "--config", help="JSON experiment config (flags override it)")
H_WINDOW = typer.Option(None, "--h-window", help="Horizontal window size HxW (default 400x256)")
V_WINDOW = typer.Option(None, "--v-window", help="Vertical window size HxW (default 200x512)")
ALPHA = typer.Option(None, "--alpha", help="BEv2 top-2 gap threshold α (default 0.3)")
LAMBDA = typer.Option(None, "--lambda", help="Weight λ of reliable pixels in patch CE (default 0.2)")
SNAP_RADIUS = typer.Option(None, "--snap-radius", help="Vertical snap radius in pixels (default 5)")
CLASSES = typer.Option(None, "--classes", help="Number of classes (checked against the inputs)")
IGNORE = typer.Option(None, "--ignore", help="Ignore label (default 255)")
BE = typer.Option(None, "--be", help="Boundary refinement variant: v1 or v2")
CTCF = typer.Option(None, "--ctcf", help="Fusion variant: v2 or fixed:<theta>")
SUM_MODE = typer.Option(False, "--sum-mode", help="Report losses as literal sums instead of means")
JSON_OUT = typer.Option(False, "--json", help="Print machine-readable JSON to stdout")


def build_config(
    config: Optional[str] = None,
    h_window: Optional[str] = None,
    v_window: Optional[str] = None,
    alpha: Optional[float] = None,
    lambda_: Optional[float] = None,
    snap_radius: Optional[int] = None,
    classes: Optional[int] = None,
    ignore: Optional[int] = None,
    be: Optional[str] = None,
    ctcf: Optional[str] = None,
    sum_mode: bool = False,
) -> PipelineConfig:
    """JSON config (or PANOFUSE_CONFIG) first, then every flag that was given"""
    base = PipelineConfig.from_json_file(config or Settings().config)
    overrides = {
        "h_window": parse_size(h_window) if h_window else None,
        "v_window": parse_size(v_window) if v_window else None,
        "alpha": alpha,
        "lambda_": lambda_,
        "snap_radius": snap_radius,
        "num_classes": classes,
        "ignore_label": ignore,
        "be_variant": be,
        "sum_mode": True if sum_mode else None,
    }
    if ctcf:
        overrides.update(parse_ctcf(ctcf))
    return base.with_overrides(**overrides)


def handle_errors(command):
    """Turn library errors into a message on stderr and the matching exit code"""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except PanofuseError as e:
            logger.error(f"❌ {type(e).__name__}: {e}")
            typer.echo(f"error: {e}", err=True)
            raise typer.Exit(code=e.exit_code)

    return wrapper
