# src/storage/bundles.py
"""
Multi-file artifacts: pseudo-label bundles and scene input directories.

A pseudo bundle is three files in one directory:
    pseudo.plbl       pseudo semantic map E
    confidence.plbd   confidence map M (0/1)
    decisions.json    one record per labelled instance mask

A scene directory (as written by `synth`) holds:
    gt.plbl (optional), ta_logits.plgt, ta_logits_v.plgt (optional),
    masks.json, student_logits.plgt (optional)
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from src.exceptions import FormatError, MissingInputError, require_same_dims
from src.storage.codecs import read_boundary, read_label, read_logits, write_boundary, write_label, write_logits
from src.storage.models import BoundaryMap, InstanceMaskSet, LabelMap, LogitsMap
from src.storage.rle import read_masks, write_masks
from src.tools.fusion_tools import LabelDecision, PseudoLabelBundle

logger = logging.getLogger(__name__)

PSEUDO_FILE = "pseudo.plbl"
CONFIDENCE_FILE = "confidence.plbd"
DECISIONS_FILE = "decisions.json"

GT_FILE = "gt.plbl"
TA_LOGITS_FILE = "ta_logits.plgt"
TA_LOGITS_V_FILE = "ta_logits_v.plgt"
MASKS_FILE = "masks.json"
STUDENT_LOGITS_FILE = "student_logits.plgt"


def dump_json(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2)


def decisions_to_json(bundle: PseudoLabelBundle, variant: Optional[str] = None) -> str:
    payload = {"decisions": [d.model_dump(mode="json") for d in bundle.decisions]}
    if variant is not None:
        payload["variant"] = variant
    return dump_json(payload)


def write_pseudo_bundle(out_dir: Union[str, Path], bundle: PseudoLabelBundle, variant: Optional[str] = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_label(out / PSEUDO_FILE, bundle.pseudo_map)
    write_boundary(out / CONFIDENCE_FILE, BoundaryMap(bundle.confidence))
    (out / DECISIONS_FILE).write_text(decisions_to_json(bundle, variant))


def read_pseudo_bundle(in_dir: Union[str, Path]) -> PseudoLabelBundle:
    base = Path(in_dir)
    pseudo = read_label(base / PSEUDO_FILE)
    confidence = read_boundary(base / CONFIDENCE_FILE)
    require_same_dims(pseudo.labels.shape, confidence.bits.shape, what="pseudo map and confidence map")

    decisions = []
    path = base / DECISIONS_FILE
    if path.exists():
        try:
            data = json.loads(path.read_text())
            decisions = [LabelDecision(**d) for d in data.get("decisions", [])]
        except (json.JSONDecodeError, TypeError, ValueError) as e:
            raise FormatError(f"{path} is not a valid decisions file: {e}") from e
    return PseudoLabelBundle(pseudo_map=pseudo, confidence=confidence.bits, decisions=decisions)


@dataclass
class SceneInputs:
    """Everything one DARv2 pass consumes"""
    ta_logits: LogitsMap
    masks: InstanceMaskSet
    ta_logits_v: Optional[LogitsMap] = None
    student_logits: Optional[LogitsMap] = None
    gt: Optional[LabelMap] = None

    def __post_init__(self):
        shapes = [self.ta_logits.dims.shape, self.masks.dims.shape]
        for extra in (self.ta_logits_v, self.student_logits):
            if extra is not None:
                shapes.append(extra.dims.shape)
        if self.gt is not None:
            shapes.append(self.gt.dims.shape)
        require_same_dims(*shapes, what="scene inputs")

    @property
    def vertical_logits(self) -> LogitsMap:
        """Vertical-window TA logits; the horizontal pass stands in when absent"""
        return self.ta_logits_v if self.ta_logits_v is not None else self.ta_logits


def _optional(path: Optional[Path], reader):
    if path is None:
        return None
    return reader(path)


def read_scene(
    scene_dir: Optional[Union[str, Path]] = None,
    ta_logits: Optional[Union[str, Path]] = None,
    masks: Optional[Union[str, Path]] = None,
    ta_logits_v: Optional[Union[str, Path]] = None,
    student_logits: Optional[Union[str, Path]] = None,
    gt: Optional[Union[str, Path]] = None,
) -> SceneInputs:
    """
    Load scene inputs from a directory and/or explicit paths (explicit paths win)

    Required: TA logits and instance masks. Optional files are picked up from the
    directory only when present.
    """
    base = Path(scene_dir) if scene_dir is not None else None

    def resolve(explicit, name: str, required: bool) -> Optional[Path]:
        if explicit is not None:
            return Path(explicit)
        if base is not None and ((base / name).exists() or required):
            return base / name
        if required:
            raise MissingInputError(f"no {name} given")
        return None

    scene = SceneInputs(
        ta_logits=read_logits(resolve(ta_logits, TA_LOGITS_FILE, True)),
        masks=read_masks(resolve(masks, MASKS_FILE, True)),
        ta_logits_v=_optional(resolve(ta_logits_v, TA_LOGITS_V_FILE, False), read_logits),
        student_logits=_optional(resolve(student_logits, STUDENT_LOGITS_FILE, False), read_logits),
        gt=_optional(resolve(gt, GT_FILE, False), read_label),
    )
    logger.debug(f"Loaded scene {scene.ta_logits.dims.shape} with {len(scene.masks)} masks")
    return scene


def write_scene(out_dir: Union[str, Path], scene: SceneInputs) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_logits(out / TA_LOGITS_FILE, scene.ta_logits)
    write_masks(out / MASKS_FILE, scene.masks)
    if scene.ta_logits_v is not None:
        write_logits(out / TA_LOGITS_V_FILE, scene.ta_logits_v)
    if scene.student_logits is not None:
        write_logits(out / STUDENT_LOGITS_FILE, scene.student_logits)
    if scene.gt is not None:
        write_label(out / GT_FILE, scene.gt)
