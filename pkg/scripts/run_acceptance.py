"""
Synthetic acceptance sweep

Runs one DARv2 pass on 100 seeded synthetic scenes (64x128, 6 classes,
TA noise 0.2, SAM fidelity 1.0) and reports how often the pseudo map beats
the TA argmax by at least 5 mIoU points.

Usage:
    python scripts/run_acceptance.py [--seeds 100] [--report report.txt]
"""

import logging
import os
import sys
import time
from typing import Optional

import typer

# Add parent directory to path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.config import PipelineConfig
from src.evals.evaluators import PseudoLabelEvaluator
from src.pipeline.orchestrator import DarPipeline
from src.pipeline.synth import SynthSpec, generate_scene

# Window sizes keep the default proportions (H x W/8 and H/2 x W/4) on a 64x128 scene
SWEEP_CONFIG = PipelineConfig(h_window=(64, 16), v_window=(32, 32))
REQUIRED_RATE = 0.9


def run_sweep(seeds: int, threads: int = 1) -> PseudoLabelEvaluator:
    evaluator = PseudoLabelEvaluator(num_classes=6)
    pipeline = DarPipeline(SWEEP_CONFIG, threads=threads)
    for seed in range(seeds):
        scene = generate_scene(SynthSpec(seed=seed, height=64, width=128, num_classes=6,
                                         noise_rate=0.2, fidelity=1.0))
        result = pipeline.run_sync(scene)
        evaluator.evaluate_scene(f"seed-{seed}", scene.gt, result.bundle, result.ta_argmax,
                                 variant=SWEEP_CONFIG.variant_tag)
    return evaluator


def main(
    seeds: int = typer.Option(100, "--seeds", help="Number of seeded scenes"),
    threads: int = typer.Option(1, "--threads", help="Worker threads per pass"),
    report: Optional[str] = typer.Option(None, "--report", help="Also write the text report here"),
):
    """Synthetic pseudo-label acceptance sweep"""
    logging.basicConfig(level=logging.WARNING)

    print("\n🔍 SYNTHETIC ACCEPTANCE SWEEP")
    print("=" * 70)
    start = time.time()
    evaluator = run_sweep(seeds, threads)
    elapsed = time.time() - start

    print(evaluator.generate_report(report))
    rate = evaluator.get_aggregate_metrics()['improvement_rate']
    print(f"⏱️  {seeds} scenes in {elapsed:.1f}s")
    if rate >= REQUIRED_RATE:
        print(f"✅ {rate*100:.1f}% of seeds improved (required {REQUIRED_RATE*100:.0f}%)")
        return
    print(f"❌ {rate*100:.1f}% of seeds improved (required {REQUIRED_RATE*100:.0f}%)")
    raise typer.Exit(code=1)


if __name__ == "__main__":
    typer.run(main)
