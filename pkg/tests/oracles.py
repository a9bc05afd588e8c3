"""
Brute-force reference implementations used as test oracles.

Everything here is written with plain loops over pixels and lists so it
shares no code path with the package.
"""
import math
from fractions import Fraction
from itertools import combinations

LEVELS = ("Large", "Medium", "Small")
TIE = 1e-12


# ---------------------------------------------------------------------------
# Boundaries
# ---------------------------------------------------------------------------

def neighbor_boundary(labels, ignore_label=255):
    height, width = len(labels), len(labels[0])
    out = [[0] * width for _ in range(height)]
    for r in range(height):
        for c in range(width):
            here = labels[r][c]
            if here == ignore_label:
                continue
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < height and 0 <= cc < width:
                    there = labels[rr][cc]
                    if there != ignore_label and there != here:
                        out[r][c] = 1
    return out


def contour(bitmap):
    height, width = len(bitmap), len(bitmap[0])
    out = [[0] * width for _ in range(height)]
    for r in range(height):
        for c in range(width):
            if not bitmap[r][c]:
                continue
            for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                rr, cc = r + dr, c + dc
                if not (0 <= rr < height and 0 <= cc < width) or not bitmap[rr][cc]:
                    out[r][c] = 1
    return out


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def set_iou(gt, pred, num_classes, ignore_label=255):
    """Per-class |gt ∩ pred| / |gt ∪ pred| over non-ignore gt pixels, plus the mean"""
    height, width = len(gt), len(gt[0])
    ious = []
    for cls in range(num_classes):
        g = {(r, c) for r in range(height) for c in range(width) if gt[r][c] == cls}
        p = {(r, c) for r in range(height) for c in range(width)
             if pred[r][c] == cls and gt[r][c] != ignore_label}
        union = g | p
        ious.append(len(g & p) / len(union) if union else None)
    defined = [v for v in ious if v is not None]
    return ious, (sum(defined) / len(defined) if defined else None)


def softmax_row(logits):
    m = max(logits)
    exps = [math.exp(float(v) - m) for v in logits]
    total = sum(exps)
    return [e / total for e in exps]


def naive_ce(logits, target, ignore_label=255, weights=None):
    """Mean of w(p) * -ln softmax(logits[p])[target[p]] over non-ignore pixels"""
    total, count = 0.0, 0
    for r in range(len(target)):
        for c in range(len(target[0])):
            t = target[r][c]
            if t == ignore_label:
                continue
            row = [float(v) for v in logits[r][c]]
            m = max(row)
            lse = m + math.log(sum(math.exp(v - m) for v in row))
            w = 1.0 if weights is None else weights[r][c]
            total += w * (lse - row[t])
            count += 1
    return total / count if count else 0.0


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------

def _sse(groups):
    sse = Fraction(0)
    for group in groups:
        mean = Fraction(sum(group), len(group))
        sse += sum((Fraction(v) - mean) ** 2 for v in group)
    return sse


def exhaustive_levels(areas):
    """
    Level per mask id from the best contiguous split of the sorted distinct
    areas (every mask with a given area is placed with its value)
    """
    distinct = sorted({a for _, a in areas})
    if not distinct:
        return {}
    k = min(3, len(distinct))
    best, best_sse = None, None
    for cuts in combinations(range(1, len(distinct)), k - 1):
        bounds = (0,) + cuts + (len(distinct),)
        value_groups = [distinct[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])]
        groups = [[a for _, a in areas if a in vg] for vg in value_groups]
        sse = _sse(groups)
        if best_sse is None or sse < best_sse:
            best, best_sse = value_groups, sse
    level_of_value = {}
    for rank, group in enumerate(reversed(best)):
        for v in group:
            level_of_value[v] = LEVELS[rank]
    return {mask_id: level_of_value[a] for mask_id, a in areas}


# ---------------------------------------------------------------------------
# Fusion
# ---------------------------------------------------------------------------

def brute_fuse(bitmaps, logits, theta=None):
    """
    Straight transliteration of the fusion procedure

    Args:
        bitmaps: list of (id, 2-D list of bools)
        logits: H x W x C nested lists
        theta: fixed threshold or None for per-level thresholds

    Returns:
        (labels, confidence, {mask_id: (label, path)})
    """
    height, width, num_classes = len(logits), len(logits[0]), len(logits[0][0])
    argmax = [[0] * width for _ in range(height)]
    entropy = [[0.0] * width for _ in range(height)]
    for r in range(height):
        for c in range(width):
            row = [float(v) for v in logits[r][c]]
            best = 0
            for k in range(1, num_classes):
                if row[k] > row[best]:
                    best = k
            argmax[r][c] = best
            q = softmax_row(row)
            entropy[r][c] = -sum(p * math.log(p) for p in q if p > 0)

    info = {}
    for mask_id, bitmap in bitmaps:
        pixels = [(r, c) for r in range(height) for c in range(width) if bitmap[r][c]]
        counts = {}
        for r, c in pixels:
            counts[argmax[r][c]] = counts.get(argmax[r][c], 0) + 1
        hist = sorted(counts.items(), key=lambda lc: (-lc[1], lc[0]))
        info[mask_id] = (pixels, hist, Fraction(hist[0][1], len(pixels)))

    if theta is not None:
        thresholds = {mask_id: Fraction(theta) for mask_id in info}
    else:
        levels = exhaustive_levels([(mask_id, len(v[0])) for mask_id, v in info.items()])
        thresholds = {}
        for level in LEVELS:
            members = [m for m, lvl in levels.items() if lvl == level]
            if members:
                mean = sum((info[m][2] for m in members), Fraction(0)) / len(members)
                for m in members:
                    thresholds[m] = mean

    decided = {}
    for mask_id, (pixels, hist, lcr) in info.items():
        if lcr >= thresholds[mask_id]:
            decided[mask_id] = (hist[0][0], "direct_lcr")
            continue
        scored = []
        for label, count in hist[:3]:
            values = [entropy[r][c] for r, c in pixels if argmax[r][c] == label]
            scored.append((sum(values) / len(values), count, label))
        lowest = min(s[0] for s in scored)
        tied = [s for s in scored if s[0] - lowest <= TIE]
        tied.sort(key=lambda s: (-s[1], s[2]))
        decided[mask_id] = (tied[0][2], "entropy")

    labels = [row[:] for row in argmax]
    confidence = [[0] * width for _ in range(height)]
    order = sorted(info, key=lambda m: (-len(info[m][0]), m))
    for mask_id in order:
        label, path = decided[mask_id]
        for r, c in info[mask_id][0]:
            labels[r][c] = label
            confidence[r][c] = 1 if path == "direct_lcr" else 0
    return labels, confidence, decided


# ---------------------------------------------------------------------------
# Refinement
# ---------------------------------------------------------------------------

def _gap(row):
    ordered = sorted(row)
    return ordered[-1] - ordered[-2]


def brute_bev2(b_e_h, b_sam_l, b_ta_i, b_ta_j, probs_i, probs_j, b_sam, alpha, radius):
    """Pixel set kept by the two-stage refinement, one candidate at a time"""
    height, width = len(b_sam), len(b_sam[0])
    kept, candidates = set(), []
    for r in range(height):
        for c in range(width):
            if b_e_h[r][c]:
                if b_ta_i[r][c] or b_ta_j[r][c]:
                    kept.add((r, c))
                else:
                    candidates.append((r, c))
            if b_sam_l[r][c] and (r, c) not in candidates:
                candidates.append((r, c))
    for r, c in candidates:
        target = None
        for distance in range(radius + 1):
            for rr in (r - distance, r + distance):
                if 0 <= rr < height and b_sam[rr][c]:
                    target = rr
                    break
            if target is not None:
                break
        if target is None:
            continue
        if min(_gap(probs_i[target][c]), _gap(probs_j[target][c])) < alpha:
            kept.add((target, c))
    return kept
