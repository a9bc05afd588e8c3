"""
panofuse CLI - pseudo labels for panoramic semantic segmentation
Main entry point for the command-line tool
"""
import logging
import sys

import typer

from src.commands.evaluate import eval_command
from src.commands.fuse import fuse_command
from src.commands.losses import losses_command
from src.commands.pipeline import pipeline_command
from src.commands.plan import plan_command
from src.commands.refine import refine_command
from src.commands.synth import synth_command
from src.config import settings

# Logs go to stderr so stdout carries only command output
logging.basicConfig(
    level=getattr(logging, settings.log_level.upper(), logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    stream=sys.stderr,
)

# Create CLI app
app = typer.Typer(
    name="panofuse",
    help="Window planning, SAM/TA fusion, boundary refinement, losses and evaluation for ERP pseudo labels",
    add_completion=False,
    no_args_is_help=True,
)

# Register commands
app.command("plan")(plan_command)  # Window / overlap listing
app.command("fuse")(fuse_command)  # CTCF fusion
app.command("refine")(refine_command)  # BE / BEv2 refinement
app.command("losses")(losses_command)  # Loss report
app.command("eval")(eval_command)  # IoU report
app.command("synth")(synth_command)  # Synthetic scene generator
app.command("pipeline")(pipeline_command)  # Full DARv2 pass


if __name__ == "__main__":
    app()
