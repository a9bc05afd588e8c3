"""
Pipeline Orchestrator - one DARv2 pass over a scene

This module coordinates the whole rectification and loss pipeline:
1. Window planning - horizontal windows W_i, vertical windows W_j, overlaps O_ij
2. Fusion - CTCF per horizontal window, stitched into E and M
3. Refinement - BE / BEv2 per overlap region, unioned into B_ref
4. Losses - consistency, boundary and cross-entropy terms, student / TA totals
5. Quality - pseudo map and TA argmax against ground truth (when available)

WORKFLOW:
Scene → Plan → [Windows in parallel] → Stitch → [Overlaps in parallel] → Report

Per-window and per-overlap work runs on a bounded pool of worker threads;
results are merged in plan order so outputs do not depend on the pool size.
"""

import asyncio
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np

from src.config import PipelineConfig, settings
from src.exceptions import DimensionMismatchError
from src.evals.evaluators import PseudoQualityReport, pseudo_quality_report
from src.storage.bundles import SceneInputs, dump_json, write_pseudo_bundle
from src.storage.codecs import argmax_labels, softmax, write_boundary
from src.storage.models import BoundaryMap, ImageDims, LabelMap
from src.storage.rle import decode_all, masks_from_bitmaps
from src.tools.boundary_tools import (
    BoundaryConfig,
    Provenance,
    RefinementTrace,
    boundary_from_labels,
    boundary_from_masks,
    boundary_loss_student,
    boundary_loss_ta,
    refine,
    split_confidence_boundaries,
)
from src.tools.consistency_tools import OverlapPrediction, cc_loss, disagreement_rate
from src.tools.fusion_tools import PseudoLabelBundle, fuse
from src.tools.loss_tools import (
    LossReport,
    LossTerm,
    LossWeights,
    cross_entropy_term,
    weighted_patch_ce_term,
)
from src.tools.window_tools import OverlapRegion, Window, WindowPlan, crop, embed, overlap_regions, plan_windows, stitch

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

B_REF_FILE = "b_ref.plbd"
TRACE_FILE = "trace.json"
LOSSES_FILE = "losses.json"
QUALITY_FILE = "quality.json"


@dataclass
class SceneBoundaries:
    """Whole-image boundary maps, traced once and cropped per overlap region"""
    b_sam: BoundaryMap
    b_ta_i: BoundaryMap
    b_ta_j: BoundaryMap
    b_student: Optional[BoundaryMap] = None


@dataclass
class RegionResult:
    """Refinement output and loss terms of one overlap region"""
    region: OverlapRegion
    b_ref: BoundaryMap
    trace: RefinementTrace
    bd_ta: Optional[LossTerm] = None
    bd_student: Optional[LossTerm] = None
    cc: float = 0.0
    disagreement: float = 0.0


@dataclass
class PassResult:
    """Everything one DARv2 pass produces"""
    config: PipelineConfig
    plan: WindowPlan
    regions: List[OverlapRegion]
    bundle: PseudoLabelBundle
    window_bundles: List[Tuple[Window, PseudoLabelBundle]]
    ta_argmax: LabelMap
    b_ref: BoundaryMap
    region_results: List[RegionResult] = field(default_factory=list)
    losses: Optional[LossReport] = None
    quality: Optional[PseudoQualityReport] = None

    def trace_summary(self) -> dict:
        return {
            "variant": self.config.variant_tag,
            "regions": [
                {
                    "horiz_id": r.region.horiz_id,
                    "vert_id": r.region.vert_id,
                    "rect": list(r.region.rect),
                    "counts": {kind.name.lower(): r.trace.count(kind) for kind in Provenance},
                }
                for r in self.region_results
            ],
        }


def _window_dims(window: Window) -> ImageDims:
    return ImageDims(window.height, window.width)


def _region_in_window(region: OverlapRegion, window: Window) -> Window:
    """The overlap rectangle in the window's own coordinates"""
    row0, col0, height, width = region.rect
    return Window(
        id=window.id, orientation=window.orientation,
        origin_row=row0 - window.origin_row, origin_col=col0 - window.origin_col,
        height=height, width=width,
    )


def _crop_bundle(bundle: PseudoLabelBundle, window: Window) -> PseudoLabelBundle:
    return PseudoLabelBundle(
        pseudo_map=crop(bundle.pseudo_map, window),
        confidence=crop(bundle.confidence, window),
        decisions=bundle.decisions,
    )


class DarPipeline:
    """
    Runs fusion, refinement, losses and evaluation over one scene

    Example:
        pipeline = DarPipeline(PipelineConfig(h_window=(64, 16), v_window=(32, 32)))
        result = pipeline.run_sync(generate_scene(SynthSpec(seed=3)))
        result.quality.gain   # pseudo-map mIoU minus TA mIoU
    """

    def __init__(self, config: PipelineConfig, threads: Optional[int] = None):
        self.config = config
        self.threads = threads or settings.threads
        self.boundary_config = BoundaryConfig(
            alpha=config.alpha, snap_radius=config.snap_radius, variant=config.be_variant,
        )
        self.weights = LossWeights(lambda_=config.lambda_)
        self.reduction = "sum" if config.sum_mode else "mean"
        self.theta = config.fixed_theta if config.ctcf_variant == "fixed" else None

    # ------------------------------------------------------------------
    # Worker pool
    # ------------------------------------------------------------------

    async def _gather(self, fn: Callable[[T], R], items: Sequence[T]) -> List[R]:
        """Run fn over items on worker threads, at most `threads` at a time, results in item order"""
        semaphore = asyncio.Semaphore(self.threads)

        async def run_one(item: T) -> R:
            async with semaphore:
                return await asyncio.to_thread(fn, item)

        return list(await asyncio.gather(*(run_one(item) for item in items)))

    # ------------------------------------------------------------------
    # Steps
    # ------------------------------------------------------------------

    def _check_classes(self, scene: SceneInputs) -> int:
        num_classes = scene.ta_logits.num_classes
        others = [scene.vertical_logits.num_classes]
        if scene.student_logits is not None:
            others.append(scene.student_logits.num_classes)
        if self.config.num_classes is not None:
            others.append(self.config.num_classes)
        if scene.gt is not None:
            others.append(scene.gt.num_classes)
        for other in others:
            if other != num_classes:
                raise DimensionMismatchError(f"class counts disagree: {num_classes} vs {other}")
        return num_classes

    def _fuse_window(self, scene: SceneInputs, bitmaps: np.ndarray, window: Window) -> PseudoLabelBundle:
        ids = [m.id for m in scene.masks]
        crops = bitmaps[(slice(None),) + window.slices]
        window_masks = masks_from_bitmaps(crops, _window_dims(window), ids)
        bundle = fuse(
            window_masks, crop(scene.ta_logits, window),
            ignore_label=self.config.ignore_label, theta=self.theta,
        )
        bundle.decisions = [d.model_copy(update={"window_id": window.id}) for d in bundle.decisions]
        return bundle

    def _trace_boundaries(self, scene: SceneInputs, with_losses: bool) -> SceneBoundaries:
        ignore = self.config.ignore_label
        return SceneBoundaries(
            b_sam=boundary_from_masks(scene.masks),
            b_ta_i=boundary_from_labels(argmax_labels(scene.ta_logits, ignore)),
            b_ta_j=boundary_from_labels(argmax_labels(scene.vertical_logits, ignore)),
            b_student=boundary_from_labels(argmax_labels(scene.student_logits, ignore)) if with_losses else None,
        )

    def _refine_region(
        self,
        scene: SceneInputs,
        boundaries: SceneBoundaries,
        window_bundles: List[Tuple[Window, PseudoLabelBundle]],
        region: OverlapRegion,
        with_losses: bool,
    ) -> RegionResult:
        # boundaries are traced on the whole image (E and M on their fusion window)
        # and then cropped, so the overlap edges never create boundary pixels
        window, window_bundle = window_bundles[region.horiz_id]
        area = region.as_window()
        inner = _region_in_window(region, window)
        bundle = _crop_bundle(window_bundle, inner)
        b_e_h, b_sam_l = split_confidence_boundaries(window_bundle, crop(boundaries.b_sam, window))

        logits_i = crop(scene.ta_logits, area)
        logits_j = crop(scene.vertical_logits, area)
        b_ta_i = crop(boundaries.b_ta_i, area)
        b_ta_j = crop(boundaries.b_ta_j, area)
        b_sam = crop(boundaries.b_sam, area)
        probs_i, probs_j = softmax(logits_i), softmax(logits_j)

        b_ref, trace = refine(
            bundle, b_ta_i, b_ta_j, probs_i, probs_j, b_sam, self.boundary_config,
            split=(crop(b_e_h, inner), crop(b_sam_l, inner)),
        )
        result = RegionResult(region=region, b_ref=b_ref, trace=trace)
        if not with_losses:
            return result

        bd_ta = boundary_loss_ta(b_ref, b_ta_i, b_ta_j, reduction="sum")
        b_s = crop(boundaries.b_student, area)
        bd_student = boundary_loss_student(b_ref, b_s, reduction="sum")
        prediction = OverlapPrediction(region, probs_i, probs_j)
        result.bd_ta = LossTerm(bd_ta.value, bd_ta.boundary_pixels, bd_ta.degenerate)
        result.bd_student = LossTerm(bd_student.value, bd_student.boundary_pixels, bd_student.degenerate)
        result.cc = cc_loss(prediction)
        result.disagreement = disagreement_rate(prediction)
        return result

    def _loss_report(
        self,
        scene: SceneInputs,
        ta_argmax: LabelMap,
        window_bundles: List[Tuple[Window, PseudoLabelBundle]],
        region_results: List[RegionResult],
    ) -> LossReport:
        student = scene.student_logits
        ce_whole = cross_entropy_term(student, ta_argmax)
        ce_patch_student = LossTerm.combine([
            weighted_patch_ce_term(crop(student, w), b, self.weights) for w, b in window_bundles
        ])
        ce_patch_ta = LossTerm.combine([
            weighted_patch_ce_term(crop(scene.ta_logits, w), b, self.weights) for w, b in window_bundles
        ])
        bd_student = LossTerm.combine([r.bd_student for r in region_results])
        bd_ta = LossTerm.combine([r.bd_ta for r in region_results])
        cc_values = [r.cc for r in region_results]
        cc = float(sum(cc_values)) if self.config.sum_mode else float(np.mean(cc_values)) if cc_values else 0.0

        terms = {
            "ce_whole": ce_whole, "ce_patch_student": ce_patch_student, "ce_patch_ta": ce_patch_ta,
            "bd_student": bd_student, "bd_ta": bd_ta,
        }
        degenerate = sorted(name for name, term in terms.items() if term.count == 0)
        for name in degenerate:
            logger.warning(f"⚠️  {name}: no contributing pixels, loss defined as 0")
        if not cc_values:
            degenerate.append("cc")

        return LossReport.from_parts(
            ce_whole=ce_whole.value(self.reduction),
            ce_patch_student=ce_patch_student.value(self.reduction),
            ce_patch_ta=ce_patch_ta.value(self.reduction),
            bd_student=bd_student.value(self.reduction),
            bd_ta=bd_ta.value(self.reduction),
            cc=cc,
            reduction=self.reduction,
            lambda_=self.config.lambda_,
            valid_pixel_counts={name: term.count for name, term in terms.items()},
            cc_per_region=cc_values,
            disagreement_per_region=[r.disagreement for r in region_results],
            degenerate_terms=degenerate,
            variant=self.config.variant_tag,
        )

    # ------------------------------------------------------------------
    # Main entry
    # ------------------------------------------------------------------

    async def run(self, scene: SceneInputs) -> PassResult:
        """
        One DARv2 pass

        Args:
            scene: TA logits (horizontal pass), optional vertical-pass logits,
                instance masks, optional student logits and ground truth

        Returns:
            PassResult with the stitched pseudo bundle, B_ref and, when the
            inputs allow, the loss report and quality report
        """
        start_time = datetime.now()
        config = self.config
        logger.info(f"Running DARv2 pass ({config.variant_tag}) on {scene.ta_logits.dims.shape} "
                    f"with {self.threads} worker threads")
        self._check_classes(scene)

        # ==================== STEP 1: PLAN ====================
        logger.info("Step 1: Planning windows...")
        dims = scene.ta_logits.dims
        plan = plan_windows(dims, config.h_window, config.v_window)
        regions = overlap_regions(plan)
        logger.info(f"  {len(plan.horizontal)} horizontal, {len(plan.vertical)} vertical, {len(regions)} overlaps")

        # ==================== STEP 2: FUSE ====================
        logger.info("Step 2: Fusing instance masks per horizontal window...")
        bitmaps = decode_all(scene.masks)
        bundles = await self._gather(lambda w: self._fuse_window(scene, bitmaps, w), plan.horizontal)
        window_bundles = list(zip(plan.horizontal, bundles))

        pseudo = stitch([(w, b.pseudo_map) for w, b in window_bundles], dims)
        confidence = stitch([(w, b.confidence) for w, b in window_bundles], dims)
        decisions = [d for b in bundles for d in b.decisions]
        bundle = PseudoLabelBundle(pseudo_map=pseudo, confidence=confidence, decisions=decisions)
        logger.info(f"  ✅ {len(decisions)} mask decisions, {int(bundle.confidence.sum())} confident pixels")

        # ==================== STEP 3: REFINE ====================
        logger.info("Step 3: Refining boundaries per overlap region...")
        with_losses = scene.student_logits is not None
        boundaries = self._trace_boundaries(scene, with_losses)
        region_results = await self._gather(
            lambda r: self._refine_region(scene, boundaries, window_bundles, r, with_losses), regions
        )
        b_ref_bits = np.zeros(dims.shape, dtype=np.uint8)
        for result in region_results:
            area = result.region.as_window()
            embed(np.maximum(b_ref_bits[area.slices], result.b_ref.bits), area, b_ref_bits)
        b_ref = BoundaryMap(b_ref_bits)
        logger.info(f"  ✅ B_ref has {b_ref.count} pixels")

        ta_argmax = argmax_labels(scene.ta_logits, config.ignore_label)
        result = PassResult(
            config=config, plan=plan, regions=regions, bundle=bundle,
            window_bundles=window_bundles, ta_argmax=ta_argmax, b_ref=b_ref,
            region_results=region_results,
        )

        # ==================== STEP 4: LOSSES ====================
        if with_losses:
            logger.info("Step 4: Computing losses...")
            result.losses = self._loss_report(scene, ta_argmax, window_bundles, region_results)
        else:
            logger.warning("⚠️  No student logits given, skipping losses")

        # ==================== STEP 5: QUALITY ====================
        if scene.gt is not None:
            logger.info("Step 5: Evaluating pseudo-map quality...")
            result.quality = pseudo_quality_report(scene.gt, bundle, ta_argmax, variant=config.variant_tag)
            logger.info(f"  📊 mIoU pseudo {result.quality.miou_pseudo:.4f} vs TA {result.quality.miou_ta:.4f}")

        elapsed = (datetime.now() - start_time).total_seconds()
        logger.info(f"✅ DARv2 pass complete in {elapsed:.2f}s")
        return result

    def run_sync(self, scene: SceneInputs) -> PassResult:
        return asyncio.run(self.run(scene))


def write_pass_outputs(out_dir: Union[str, Path], result: PassResult) -> List[Path]:
    """Write the artifact bundle of a finished pass; returns the written paths"""
    out = Path(out_dir)
    variant = result.config.variant_tag
    write_pseudo_bundle(out, result.bundle, variant=variant)
    write_boundary(out / B_REF_FILE, result.b_ref)
    (out / TRACE_FILE).write_text(dump_json(result.trace_summary()))
    written = [out / name for name in ("pseudo.plbl", "confidence.plbd", "decisions.json", B_REF_FILE, TRACE_FILE)]
    if result.losses is not None:
        (out / LOSSES_FILE).write_text(result.losses.to_json())
        written.append(out / LOSSES_FILE)
    if result.quality is not None:
        (out / QUALITY_FILE).write_text(result.quality.to_json())
        written.append(out / QUALITY_FILE)
    logger.info(f"Wrote {len(written)} files to {out}")
    return written


def summary_json(result: PassResult) -> str:
    """Short machine-readable summary printed by the pipeline command"""
    payload = {
        "variant": result.config.variant_tag,
        "windows": {"horizontal": len(result.plan.horizontal), "vertical": len(result.plan.vertical)},
        "overlaps": len(result.regions),
        "decisions": len(result.bundle.decisions),
        "b_ref_pixels": result.b_ref.count,
    }
    if result.losses is not None:
        payload["total_student"] = result.losses.total_student
        payload["total_ta"] = result.losses.total_ta
    if result.quality is not None:
        payload["miou_pseudo"] = result.quality.miou_pseudo
        payload["miou_ta"] = result.quality.miou_ta
        payload["gain"] = result.quality.gain
    return json.dumps(payload, sort_keys=True, indent=2)
