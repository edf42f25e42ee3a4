"""Detector-side math: BEV anchors, size-only IoU matching, losses.

Small objects on a coarse BEV grid make location-sensitive IoU useless for
labeling, so IoU here compares box dimensions only (both boxes rotated to
axis-aligned and co-centered); position and angle differences become
regression targets instead.  A center-distance gate keeps far-away ground
truths from matching same-sized anchors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import InvalidDistribution
from .views import BevSpec

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]; ties at the boundary resolve to +pi."""
    w = math.remainder(theta, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    return w


@dataclass(frozen=True)
class BevBox:
    """Ground-plane box: center (meters), footprint (meters), heading."""

    cx: float
    cy: float
    length: float
    width: float
    yaw: float = 0.0

    def __post_init__(self):
        if self.length <= 0 or self.width <= 0:
            raise ValueError("length and width must be positive")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))


@dataclass(frozen=True)
class AnchorMatch:
    anchor_index: int
    label: str  # "positive" | "negative" | "ignore"
    gt_index: Optional[int] = None
    target: Optional[tuple[float, float, float, float, float]] = None


@dataclass(frozen=True)
class LossConfig:
    gamma: float = 2.0
    class_weights: Optional[Sequence[float]] = None
    ema_decay: float = 0.998
    warmup_fraction: float = 0.10
    update_cadence: int = 500

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.class_weights is not None and any(a <= 0 for a in self.class_weights):
            raise ValueError("class weights must be positive")
        if not 0.0 < self.ema_decay < 1.0:
            raise ValueError("ema_decay must be in (0, 1)")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ValueError("warmup_fraction must be in [0, 1]")
        if self.update_cadence < 1:
            raise ValueError("update_cadence must be >= 1")


@dataclass(frozen=True)
class AlphaState:
    """EMA of positive recall plus the training iteration it was taken at."""

    ema: float = 0.0
    iteration: int = 0


# ---------------------------------------------------------------------------
# IoU and matching

def axis_aligned_iou(a: BevBox, b: BevBox) -> float:
    """Size-only IoU: both boxes de-rotated and co-centered, so only the
    footprint dimensions matter."""
    inter = min(a.length, b.length) * min(a.width, b.width)
    union = a.length * a.width + b.length * b.width - inter
    return inter / union


def regression_targets(
    anchor: BevBox, gt: BevBox
) -> tuple[float, float, float, float, float]:
    """Offsets (dx, dy, dl, dw, dtheta) that carry an anchor onto a gt box."""
    return (
        (gt.cx - anchor.cx) / anchor.length,
        (gt.cy - anchor.cy) / anchor.width,
        math.log(gt.length / anchor.length),
        math.log(gt.width / anchor.width),
        wrap_angle(gt.yaw - anchor.yaw),
    )


def decode_box(anchor: BevBox, target: Sequence[float]) -> BevBox:
    """Inverse of :func:`regression_targets`."""
    dx, dy, dl, dw, dtheta = target
    return BevBox(
        cx=anchor.cx + dx * anchor.length,
        cy=anchor.cy + dy * anchor.width,
        length=anchor.length * math.exp(dl),
        width=anchor.width * math.exp(dw),
        yaw=wrap_angle(anchor.yaw + dtheta),
    )


def match_anchors(
    anchors: Sequence[BevBox],
    gts: Sequence[BevBox],
    pos_thresh: float = 0.5,
    neg_thresh: float = 0.35,
    center_radius: Optional[float] = None,
) -> list[AnchorMatch]:
    """Label anchors against ground truths with size-only IoU.

    A gt is a candidate for an anchor only when their centers are within
    ``center_radius`` (default: half the anchor's diagonal).  The best
    candidate decides: IoU >= pos_thresh -> positive with regression targets;
    all candidates < neg_thresh (or none) -> negative; otherwise ignore.
    """
    if pos_thresh < neg_thresh:
        raise ValueError("pos_thresh must be >= neg_thresh")
    matches = []
    for i, anchor in enumerate(anchors):
        radius = (
            center_radius
            if center_radius is not None
            else 0.5 * math.hypot(anchor.length, anchor.width)
        )
        best_iou = -1.0
        best_gt = None
        for j, gt in enumerate(gts):
            if math.hypot(gt.cx - anchor.cx, gt.cy - anchor.cy) > radius:
                continue
            iou = axis_aligned_iou(anchor, gt)
            if iou > best_iou:
                best_iou = iou
                best_gt = j
        if best_gt is None or best_iou < neg_thresh:
            matches.append(AnchorMatch(anchor_index=i, label="negative"))
        elif best_iou >= pos_thresh:
            matches.append(
                AnchorMatch(
                    anchor_index=i,
                    label="positive",
                    gt_index=best_gt,
                    target=regression_targets(anchor, gts[best_gt]),
                )
            )
        else:
            matches.append(AnchorMatch(anchor_index=i, label="ignore"))
    return matches


# ---------------------------------------------------------------------------
# losses

def focal_loss(p: Sequence[float], y: int, cfg: LossConfig = LossConfig()) -> float:
    """Class-weighted cross-entropy modulated by (1 - p_y)^gamma."""
    total = 0.0
    for q in p:
        if q < 0.0 or q > 1.0:
            raise InvalidDistribution(f"probability {q} outside [0, 1]")
        total += q
    if abs(total - 1.0) > 1e-6:
        raise InvalidDistribution(f"probabilities sum to {total}, expected 1")
    if not 0 <= y < len(p):
        raise InvalidDistribution(f"label {y} outside distribution of size {len(p)}")
    alpha = 1.0 if cfg.class_weights is None else float(cfg.class_weights[y])
    p_y = max(float(p[y]), 1e-12)
    return alpha * (1.0 - p_y) ** cfg.gamma * (-math.log(p_y))


def adaptive_negative_loss(ce_neg: float, fl_neg: float, alpha: float) -> float:
    """Convex blend of plain cross-entropy and focal loss on negatives."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    return (1.0 - alpha) * ce_neg + alpha * fl_neg


def update_alpha(
    state: AlphaState,
    recall_batch: float,
    cfg: LossConfig = LossConfig(),
) -> AlphaState:
    """One EMA update of the recall tracker.

    Each call is one update event, ``cfg.update_cadence`` training iterations
    apart.  Use :func:`effective_alpha` for the weight actually applied: it is
    0 during the warmup fraction of training, the EMA afterwards.
    """
    if not 0.0 <= recall_batch <= 1.0:
        raise ValueError("recall_batch must be in [0, 1]")
    ema = cfg.ema_decay * state.ema + (1.0 - cfg.ema_decay) * recall_batch
    return AlphaState(ema=ema, iteration=state.iteration + cfg.update_cadence)


def effective_alpha(
    state: AlphaState, total_iters: int, cfg: LossConfig = LossConfig()
) -> float:
    if state.iteration < cfg.warmup_fraction * total_iters:
        return 0.0
    return state.ema


def smooth_l1(x: float) -> float:
    ax = abs(x)
    if ax < 1.0:
        return 0.5 * x * x
    return ax - 0.5


# ---------------------------------------------------------------------------
# anchors

def generate_anchors(
    spec: BevSpec,
    sizes: Sequence[tuple[float, float]] = ((1.0, 0.6),),
    yaws: Sequence[float] = (0.0, math.pi / 2),
) -> list[BevBox]:
    """One anchor per (cell, size, yaw), centered at BEV cell centers.

    The default size is the typical pedestrian footprint.
    """
    if not sizes or not yaws:
        raise ValueError("sizes and yaws must be nonempty")
    cell = spec.resolution * spec.stride
    x0, y0 = spec.x_range[0], spec.y_range[0]
    anchors = []
    for row in range(spec.map_length):
        cx = x0 + (row + 0.5) * cell
        for col in range(spec.map_width):
            cy = y0 + (col + 0.5) * cell
            for length, width in sizes:
                for yaw in yaws:
                    anchors.append(
                        BevBox(cx=cx, cy=cy, length=length, width=width, yaw=yaw)
                    )
    return anchors


def footprint_in_cells(spec: BevSpec, length: float, width: float) -> tuple[float, float]:
    """Box footprint expressed in BEV cells at the spec's stride."""
    cell = spec.resolution * spec.stride
    return length / cell, width / cell
