"""Score cuboid proposals against image cues.

Three costs, combined as  E = dist + w1 * angle + w2 * shape:
  dist   chamfer distance of sampled visible-edge points to image edges,
         normalized by the 2D box diagonal
  angle  misalignment between detected long line segments and the
         directions toward their associated vanishing points
  shape  penalty on extreme footprint skew (length/width ratio)
Lower is better.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Cuboid
from .proposal import VISIBLE_EDGES, BBox2D, CuboidProposal

CHAMFER_AXIAL = 1.0
CHAMFER_DIAGONAL = 4.0 / 3.0


@dataclass
class DistanceMap:
    """Chamfer distances (pixels) to the nearest edge pixel."""

    values: np.ndarray

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    def sample(self, points):
        """Nearest-pixel lookup; out-of-bounds points clamp to the border."""
        pts = np.asarray(points, dtype=float)
        col = np.clip(np.rint(pts[..., 0]).astype(int), 0, self.width - 1)
        row = np.clip(np.rint(pts[..., 1]).astype(int), 0, self.height - 1)
        return self.values[row, col]


@dataclass
class LineSegment2D:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float).reshape(2)
        self.b = np.asarray(self.b, dtype=float).reshape(2)
        if np.linalg.norm(self.b - self.a) <= 0:
            raise ValueError("zero-length segment")

    @property
    def midpoint(self):
        return 0.5 * (self.a + self.b)

    @property
    def length(self):
        return float(np.linalg.norm(self.b - self.a))


@dataclass
class ScoreWeights:
    w1: float = 0.8
    w2: float = 1.5
    sigma: float = 1.0

    def __post_init__(self):
        if min(self.w1, self.w2, self.sigma) < 0:
            raise ValueError("weights must be non-negative")


def _min_plus_scan(cand, step):
    """out[j] = min_k<=j cand[k] + step * (j - k), vectorized."""
    j = np.arange(cand.shape[0])
    return np.minimum.accumulate(cand - step * j) + step * j


def distance_transform(edge_mask) -> DistanceMap:
    """Exact two-pass chamfer transform with weights (1, 4/3).

    The chamfer distance between pixels with displacement (dx, dy) is
    b * min(|dx|, |dy|) + a * (max - min) with a = 1, b = 4/3 (the 3-4
    chamfer scaled to unit axial step).
    """
    mask = np.asarray(edge_mask).astype(bool)
    if not mask.any():
        raise ValueError("edge mask has no edge pixels")
    a, b = CHAMFER_AXIAL, CHAMFER_DIAGONAL
    h, w = mask.shape
    d = np.where(mask, 0.0, np.inf)

    for i in range(h):
        cand = d[i].copy()
        if i > 0:
            up = d[i - 1]
            cand = np.minimum(cand, up + a)
            cand[1:] = np.minimum(cand[1:], up[:-1] + b)
            cand[:-1] = np.minimum(cand[:-1], up[1:] + b)
        d[i] = _min_plus_scan(cand, a)

    for i in range(h - 1, -1, -1):
        cand = d[i].copy()
        if i < h - 1:
            dn = d[i + 1]
            cand = np.minimum(cand, dn + a)
            cand[1:] = np.minimum(cand[1:], dn[:-1] + b)
            cand[:-1] = np.minimum(cand[:-1], dn[1:] + b)
        d[i] = _min_plus_scan(cand[::-1], a)[::-1]

    return DistanceMap(d)


EDGE_SAMPLES = 10


def visible_edge_points(proposal: CuboidProposal, n=EDGE_SAMPLES):
    """n evenly spaced points on every solid edge of the proposal."""
    t = np.linspace(0.0, 1.0, n)[:, None]
    chunks = []
    for i, j in VISIBLE_EDGES[proposal.config.faces]:
        a, b = proposal.corners_2d[i], proposal.corners_2d[j]
        chunks.append(a + t * (b - a))
    return np.concatenate(chunks, axis=0)


def distance_error(proposal: CuboidProposal, dmap: DistanceMap, bbox: BBox2D) -> float:
    """Sum of chamfer values at the sampled visible-edge points over the
    box diagonal."""
    pts = visible_edge_points(proposal)
    return float(np.sum(dmap.sample(pts)) / bbox.diagonal)


def _undirected_angle(vec):
    """Angle of an undirected 2D direction, in [0, pi)."""
    return math.atan2(vec[1], vec[0]) % math.pi


def _angle_gap(a, b):
    """Difference of two undirected angles, wrapped to [0, pi/2]."""
    d = abs(a - b) % math.pi
    return min(d, math.pi - d)


def _vp_direction(vp, point):
    """Direction from an image point toward a homogeneous VP."""
    if abs(vp[2]) > 1e-9:
        return np.array([vp[0] / vp[2] - point[0], vp[1] / vp[2] - point[1]])
    return np.array([vp[0], vp[1]])


def angle_error(segments, vps, assoc_threshold=math.radians(10.0)) -> float:
    """Alignment cost between long segments and the vanishing points.

    Each segment is associated with the VP whose direction (from the
    segment midpoint) is closest in undirected angle, accepted below
    `assoc_threshold`. Per VP, the two outermost associated segments by
    midpoint-to-VP bearing each contribute their misalignment angle.
    """
    if len(segments) == 0:
        return 0.0
    per_vp = {i: [] for i in range(len(vps))}
    for seg in segments:
        seg_ang = _undirected_angle(seg.b - seg.a)
        best, best_gap = None, assoc_threshold
        for i, vp in enumerate(vps):
            gap = _angle_gap(seg_ang, _undirected_angle(_vp_direction(vp, seg.midpoint)))
            if gap < best_gap:
                best, best_gap = i, gap
        if best is not None:
            bearing = _undirected_angle(_vp_direction(vps[best], seg.midpoint))
            per_vp[best].append((bearing, seg.length, best_gap))

    total = 0.0
    for i, entries in per_vp.items():
        if not entries:
            continue
        bearings = np.array([e[0] for e in entries])
        # Center bearings to avoid the wrap at 0/pi before ranking.
        mid = np.median(bearings)
        centered = (bearings - mid + math.pi / 2) % math.pi - math.pi / 2
        lo = min(range(len(entries)), key=lambda k: (centered[k], -entries[k][1]))
        hi = max(range(len(entries)), key=lambda k: (centered[k], entries[k][1]))
        total += entries[lo][2] + entries[hi][2]
    return float(total)


def shape_error(cuboid: Cuboid, sigma: float) -> float:
    """Penalty on footprint skew beyond the threshold sigma."""
    s = max(cuboid.dims[0] / cuboid.dims[1], cuboid.dims[1] / cuboid.dims[0])
    return max(s - sigma, 0.0)


def score_proposal(proposal: CuboidProposal, dmap: DistanceMap, segments,
                   weights: ScoreWeights, bbox: BBox2D) -> float:
    """Total cost; also stored on the proposal. Ranking is ascending."""
    e = (distance_error(proposal, dmap, bbox)
         + weights.w1 * angle_error(segments, proposal.vps)
         + weights.w2 * shape_error(proposal.cuboid, weights.sigma))
    proposal.score = float(e)
    return proposal.score


def rank_proposals(proposals, dmap, segments, weights, bbox):
    """Score every proposal and return them sorted best (lowest) first."""
    for p in proposals:
        score_proposal(p, dmap, segments, weights, bbox)
    return sorted(proposals, key=lambda p: p.score)
