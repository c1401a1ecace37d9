"""Cuboid proposal generation from a single 2D bounding box.

Pipeline: sample candidate object orientations, compute the three vanishing
points for each, construct the eight projected box corners by intersecting
image lines through the VPs with the 2D box edges, then lift the corners to
a 3D cuboid - either by back-projecting the ground-contact corners onto the
ground plane (ground objects) or by solving the linear corner-projection
system up to scale (arbitrary pose).

Corner indexing (0-based, fixed throughout the package):
    0..3  top face, 4..7 bottom face
    corner 1 is adjacent to corner 0 along object axis 0,
    corner 3 is adjacent to corner 0 along object axis 1,
    the bottom partner of top corner (0, 1, 2, 3) is (7, 6, 4, 5).
Which physical corner carries index 0 depends on the visibility
configuration; the per-configuration sign tables below record it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .geometry import (
    CORNER_SIGNS,
    BehindCameraError,
    CameraIntrinsics,
    Cuboid,
    DegenerateGeometryError,
    GroundPlane,
    SE3Pose,
    backproject_to_plane,
    camera_pose,
    rot_z,
    skew,
    vanishing_points,
)


class InvalidProposal(Exception):
    """Geometrically inconsistent sample; not a fault, just prune it."""


@dataclass
class BBox2D:
    x_min: float
    y_min: float
    x_max: float
    y_max: float
    class_label: str = "object"
    confidence: float = 1.0

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("degenerate 2D box")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be a probability")

    @property
    def width(self):
        return self.x_max - self.x_min

    @property
    def height(self):
        return self.y_max - self.y_min

    @property
    def diagonal(self):
        return math.hypot(self.width, self.height)

    @property
    def center(self):
        return np.array([(self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0])

    def contains(self, pt, margin=0.0):
        return (self.x_min - margin <= pt[0] <= self.x_max + margin
                and self.y_min - margin <= pt[1] <= self.y_max + margin)

    def iou(self, other: "BBox2D") -> float:
        w = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        h = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        if w <= 0 or h <= 0:
            return 0.0
        inter = w * h
        return inter / (self.width * self.height + other.width * other.height - inter)

    def shifted(self, du, dv) -> "BBox2D":
        return BBox2D(self.x_min + du, self.y_min + dv, self.x_max + du, self.y_max + dv,
                      self.class_label, self.confidence)


class FaceVisibility(Enum):
    THREE_FACES = 3
    TWO_FACES = 2
    ONE_FACE = 1


@dataclass(frozen=True)
class VisibilityConfig:
    faces: FaceVisibility
    mirrored: bool = False


ALL_CONFIGS = tuple(VisibilityConfig(f, m)
                    for f in FaceVisibility for m in (False, True))

# Sign patterns of the physical corner carried by each index, per
# configuration. Rows follow the corner indexing above; columns are the
# object axes. THREE_FACES: index 0 is the top corner touching the box top
# edge when the top face is visible from above; TWO/ONE_FACES: index 0 is
# the near top corner. The mirrored variant of each configuration is the
# left-right reflected contact pattern (construction lines through the
# other horizontal vanishing point); the two variants together cover both
# yaw signs. Tables are fixed up to the 180-degree yaw gauge of the box.
_SIGNS = {
    (FaceVisibility.THREE_FACES, False): np.array([
        [+1, -1, +1], [-1, -1, +1], [-1, +1, +1], [+1, +1, +1],
        [-1, +1, -1], [+1, +1, -1], [-1, -1, -1], [+1, -1, -1]], dtype=float),
    (FaceVisibility.THREE_FACES, True): np.array([
        [+1, +1, +1], [+1, -1, +1], [-1, -1, +1], [-1, +1, +1],
        [-1, -1, -1], [-1, +1, -1], [+1, -1, -1], [+1, +1, -1]], dtype=float),
    (FaceVisibility.TWO_FACES, False): np.array([
        [-1, -1, +1], [+1, -1, +1], [+1, +1, +1], [-1, +1, +1],
        [+1, +1, -1], [-1, +1, -1], [+1, -1, -1], [-1, -1, -1]], dtype=float),
    (FaceVisibility.TWO_FACES, True): np.array([
        [-1, +1, +1], [-1, -1, +1], [+1, -1, +1], [+1, +1, +1],
        [+1, -1, -1], [+1, +1, -1], [-1, -1, -1], [-1, +1, -1]], dtype=float),
    (FaceVisibility.ONE_FACE, False): np.array([
        [+1, +1, +1], [-1, +1, +1], [-1, -1, +1], [+1, -1, +1],
        [-1, -1, -1], [+1, -1, -1], [-1, +1, -1], [+1, +1, -1]], dtype=float),
    (FaceVisibility.ONE_FACE, True): np.array([
        [-1, +1, +1], [+1, +1, +1], [+1, -1, +1], [-1, -1, +1],
        [+1, -1, -1], [-1, -1, -1], [+1, +1, -1], [-1, +1, -1]], dtype=float),
}


def corner_signs_for(config: VisibilityConfig) -> np.ndarray:
    return _SIGNS[(config.faces, config.mirrored)]


# Solid (visible) box edges per configuration, as corner index pairs.
VISIBLE_EDGES = {
    FaceVisibility.THREE_FACES: ((0, 1), (1, 2), (2, 3), (3, 0),
                                 (1, 6), (2, 4), (3, 5), (4, 5), (4, 6)),
    FaceVisibility.TWO_FACES: ((0, 1), (0, 3), (0, 7), (1, 6), (3, 5),
                               (7, 6), (7, 5)),
    FaceVisibility.ONE_FACE: ((0, 1), (1, 6), (6, 7), (7, 0)),
}


@dataclass
class SamplingSpec:
    n_yaw: int = 15
    yaw_range: float = math.radians(90.0)
    n_top: int = 10
    n_roll: int = 1
    n_pitch: int = 1
    roll_pitch_range: float = math.radians(20.0)
    camera_height: float = 1.7

    def __post_init__(self):
        if min(self.n_yaw, self.n_top, self.n_roll, self.n_pitch) < 1:
            raise ValueError("sample counts must be >= 1")
        if self.yaw_range <= 0 or self.roll_pitch_range <= 0:
            raise ValueError("sample ranges must be positive")


@dataclass
class OrientationPrior:
    """Camera roll/pitch relative to the ground, and whether they are trusted."""
    roll: float = 0.0
    pitch: float = 0.0
    known: bool = True


@dataclass
class OrientationSample:
    rotation: np.ndarray  # object-to-camera
    yaw: float
    roll: float
    pitch: float


@dataclass
class CuboidProposal:
    cuboid: Cuboid                 # camera frame
    corners_2d: np.ndarray         # (8, 2) pixels, proposal corner order
    sample: OrientationSample
    top_index: int
    config: VisibilityConfig
    corner_signs: np.ndarray
    vps: np.ndarray                # (3, 3) homogeneous, from the lifted rotation
    score: float | None = None

    def corners_3d(self):
        return self.cuboid.corners_3d(signs=self.corner_signs)


def sample_orientations(spec: SamplingSpec, prior: OrientationPrior,
                        yaw_center: float = 0.0) -> list[OrientationSample]:
    """Object-to-camera rotations to evaluate for one detection.

    With a trusted camera prior only the object yaw is swept: n_yaw samples
    centered on yaw_center with spacing yaw_range / n_yaw. Otherwise the
    sweep is the product grid over yaw and camera roll/pitch offsets
    spanning +-roll_pitch_range around the prior.
    """
    step = spec.yaw_range / spec.n_yaw
    yaws = yaw_center + (np.arange(spec.n_yaw) - (spec.n_yaw - 1) / 2.0) * step

    def offsets(n):
        if n == 1:
            return np.zeros(1)
        return np.linspace(-spec.roll_pitch_range, spec.roll_pitch_range, n)

    rolls = prior.roll + (offsets(spec.n_roll) if not prior.known else np.zeros(1))
    pitches = prior.pitch + (offsets(spec.n_pitch) if not prior.known else np.zeros(1))

    out = []
    for roll in rolls:
        for pitch in pitches:
            R_wc = camera_pose(np.zeros(3), yaw=0.0, pitch=pitch, roll=roll).rotation
            for yaw in yaws:
                R_co = R_wc.T @ rot_z(yaw)
                out.append(OrientationSample(R_co, float(yaw), float(roll), float(pitch)))
    return out


def top_edge_points(bbox: BBox2D, n: int) -> np.ndarray:
    """n strictly interior samples on the box top edge (endpoints excluded)."""
    u = bbox.x_min + bbox.width * (np.arange(1, n + 1) / (n + 1.0))
    return np.stack([u, np.full(n, bbox.y_min)], axis=1)


def _cross3(a, b):
    return (a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0])


def _unit3(p):
    s = math.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
    if s < 1e-12:
        return None
    return (p[0] / s, p[1] / s, p[2] / s)


def _meet(l1, l2):
    if l1 is None or l2 is None:
        return None
    return _unit3(_cross3(l1, l2))


def _join(a, b):
    if a is None or b is None:
        return None
    return _unit3(_cross3(a, b))


def _chain(vps, bbox: BBox2D, p1, config: VisibilityConfig):
    """Homogeneous corner chain; returns a list of 8 homogeneous points
    (entries None where the configuration leaves a corner unconstructed)."""
    vp1 = _unit3(tuple(vps[0]))
    vp2 = _unit3(tuple(vps[1]))
    vp3 = _unit3(tuple(vps[2]))
    if config.mirrored and config.faces is not FaceVisibility.ONE_FACE:
        vp_a, vp_b = vp2, vp1
    else:
        vp_a, vp_b = vp1, vp2

    left = (1.0, 0.0, -bbox.x_min)
    right = (1.0, 0.0, -bbox.x_max)
    bottom = (0.0, 1.0, -bbox.y_max)
    p1h = (float(p1[0]), float(p1[1]), 1.0)

    c = [None] * 8
    c[0] = _unit3(p1h)
    if config.faces is FaceVisibility.THREE_FACES:
        c[1] = _meet(_join(vp_a, c[0]), right)
        c[3] = _meet(_join(vp_b, c[0]), left)
        c[2] = _meet(_join(vp_a, c[3]), _join(vp_b, c[1]))
        c[4] = _meet(_join(vp3, c[2]), bottom)
        c[5] = _meet(_join(vp_a, c[4]), _join(vp3, c[3]))
        c[6] = _meet(_join(vp_b, c[4]), _join(vp3, c[1]))
        c[7] = _meet(_join(vp_a, c[6]), _join(vp_b, c[5]))
    elif config.faces is FaceVisibility.TWO_FACES:
        c[1] = _meet(_join(vp_a, c[0]), right)
        c[3] = _meet(_join(vp_b, c[0]), left)
        c[2] = _meet(_join(vp_a, c[3]), _join(vp_b, c[1]))
        c[7] = _meet(_join(vp3, c[0]), bottom)
        c[6] = _meet(_join(vp_a, c[7]), _join(vp3, c[1]))
        c[5] = _meet(_join(vp_b, c[7]), _join(vp3, c[3]))
        c[4] = _meet(_join(vp_a, c[5]), _join(vp_b, c[6]))
    else:  # ONE_FACE: only the near face is constructible from the box
        side = left if config.mirrored else right
        c[1] = _meet(_join(vp_a, c[0]), side)
        c[7] = _meet(_join(vp3, c[0]), bottom)
        c[6] = _meet(_join(vp_a, c[7]), _join(vp3, c[1]))
    return c


def corners_2d_from_vps(vps, bbox: BBox2D, p1, config: VisibilityConfig,
                        margin: float = 0.1):
    """Construct the eight 2D corners, or return None for an invalid sample.

    Invalid means: an ill-conditioned line intersection (homogeneous w below
    1e-9 after normalization), or a corner outside the box inflated by
    `margin` times its diagonal. For ONE_FACE configurations the four back
    corners are not constructible from the box; their rows are NaN and are
    filled in after the 3D lift.
    """
    chain = _chain(vps, bbox, p1, config)
    need = [i for i in range(8)
            if not (config.faces is FaceVisibility.ONE_FACE and i in (2, 3, 4, 5))]
    margin_px = margin * bbox.diagonal
    out = np.full((8, 2), np.nan)
    for i in need:
        ph = chain[i]
        if ph is None or abs(ph[2]) <= 1e-9:
            return None
        u, v = ph[0] / ph[2], ph[1] / ph[2]
        if not bbox.contains((u, v), margin_px):
            return None
        out[i] = (u, v)
    return out


def _axis_pairs(signs, col):
    """Bottom-corner index pairs (minus, plus) differing only in `col`."""
    bottom = [i for i in range(8) if signs[i, 2] < 0]
    pairs = []
    for i in bottom:
        for j in bottom:
            if signs[i, col] < 0 < signs[j, col] and \
                    np.all(np.delete(signs[i], col) == np.delete(signs[j], col)):
                pairs.append((i, j))
    return pairs


def _ray_vertical_height(K, pixel, foot, up):
    """Height above `foot` of the closest point on the camera ray through
    `pixel` to the vertical line foot + h * up."""
    r = K.ray(pixel)
    A = np.stack([r, -up], axis=1)
    sol, *_ = np.linalg.lstsq(A, foot, rcond=None)
    return sol[1]


def cuboid_from_ground_corners(K: CameraIntrinsics, corners_2d, plane: GroundPlane,
                               corner_signs=CORNER_SIGNS,
                               camera_pose: SE3Pose | None = None) -> Cuboid:
    """Lift eight 2D corners of a ground object to a 3D cuboid.

    The four bottom corners are back-projected onto the (camera-frame)
    ground plane, yaw and footprint dimensions come from the bottom edge
    directions, and the height comes from intersecting each top corner's
    ray with the vertical line through its bottom partner (closest point on
    the ray), averaged over the four top corners. The plane offset carries
    the absolute scale.

    Returns the cuboid in the camera frame, or in the world frame when
    `camera_pose` (camera-to-world) is provided.
    """
    corners_2d = np.asarray(corners_2d, dtype=float)
    signs = np.asarray(corner_signs, dtype=float)
    bottom = [i for i in range(8) if signs[i, 2] < 0]
    top = [i for i in range(8) if signs[i, 2] > 0]

    Q = {}
    for i in bottom:
        try:
            Q[i] = backproject_to_plane(K, corners_2d[i], plane)
        except (BehindCameraError, DegenerateGeometryError) as e:
            raise InvalidProposal(f"bottom corner {i}: {e}") from e

    up = plane.up()
    v0, d0 = _mean_axis(Q, _axis_pairs(signs, 0))
    v1, d1 = _mean_axis(Q, _axis_pairs(signs, 1))
    if d0 < 1e-9 or d1 < 1e-9:
        raise InvalidProposal("degenerate footprint")
    x_axis = v0 - (v0 @ up) * up
    nx = np.linalg.norm(x_axis)
    if nx < 1e-12:
        raise InvalidProposal("footprint axis parallel to plane normal")
    x_axis /= nx
    y_axis = np.cross(up, x_axis)
    if y_axis @ v1 <= 0:
        raise InvalidProposal("crossed (left-handed) footprint")

    heights = []
    for t in top:
        b = next(i for i in bottom
                 if np.all(signs[i, :2] == signs[t, :2]) and signs[i, 2] == -signs[t, 2])
        heights.append(_ray_vertical_height(K, corners_2d[t], Q[b], up))
    h = float(np.mean(heights))
    if h <= 1e-9:
        raise InvalidProposal("non-positive height")

    center = np.mean([Q[i] for i in bottom], axis=0) + 0.5 * h * up
    R = np.stack([x_axis, y_axis, up], axis=1)
    cuboid = Cuboid(SE3Pose(R, center), np.array([d0, d1, h]))
    if camera_pose is not None:
        cuboid = cuboid.transformed(camera_pose)
    return cuboid


def _mean_axis(Q, pairs):
    vecs = [Q[j] - Q[i] for i, j in pairs]
    direction = np.mean(vecs, axis=0)
    length = float(np.mean([np.linalg.norm(v) for v in vecs]))
    return direction, length


def _lift_one_face(K, corners_2d, plane: GroundPlane, signs, depth_ratio=1.0) -> Cuboid:
    """Lift a ONE_FACE construction: only the near face is observed, so the
    footprint depth is set to depth_ratio times the observed width."""
    Q = {}
    for i in (6, 7):
        try:
            Q[i] = backproject_to_plane(K, corners_2d[i], plane)
        except (BehindCameraError, DegenerateGeometryError) as e:
            raise InvalidProposal(f"bottom corner {i}: {e}") from e
    minus, plus = (7, 6) if signs[6, 0] > 0 else (6, 7)
    v0 = Q[plus] - Q[minus]
    d0 = float(np.linalg.norm(v0))
    if d0 < 1e-9:
        raise InvalidProposal("degenerate face width")
    up = plane.up()
    x_axis = v0 - (v0 @ up) * up
    nx = np.linalg.norm(x_axis)
    if nx < 1e-12:
        raise InvalidProposal("face edge parallel to plane normal")
    x_axis /= nx
    y_axis = np.cross(up, x_axis)
    mid = 0.5 * (Q[6] + Q[7])
    horizontal = mid - (mid @ up) * up
    # The observed face must be the near one: its outward normal points back
    # toward the camera at the origin.
    face_side = signs[6, 1]
    if (face_side * y_axis) @ horizontal >= 0:
        raise InvalidProposal("face orientation inconsistent with viewpoint")

    h1 = _ray_vertical_height(K, corners_2d[0], Q[7], up)
    h2 = _ray_vertical_height(K, corners_2d[1], Q[6], up)
    h = float(np.mean([h1, h2]))
    if h <= 1e-9:
        raise InvalidProposal("non-positive height")

    d1 = depth_ratio * d0
    center = mid - face_side * 0.5 * d1 * y_axis + 0.5 * h * up
    R = np.stack([x_axis, y_axis, up], axis=1)
    return Cuboid(SE3Pose(R, center), np.array([d0, d1, h]))


def cuboid_from_pnp(K: CameraIntrinsics, R, corners_2d,
                    corner_signs=CORNER_SIGNS[[0, 1, 3, 6]],
                    scale_fix: str = "unit",
                    plane: GroundPlane | None = None) -> Cuboid:
    """Solve dimensions and translation from four adjacent corners, up to scale.

    Each observed corner pixel p with sign pattern D contributes the
    homogeneous constraint p x K (R (D * d) / 2 + t) = 0, linear in (d, t).
    The null vector of the stacked system gives the cuboid up to one
    positive scalar, fixed either to unit parameter norm ("unit") or by
    dropping the bottom face onto the supplied ground plane ("ground").
    """
    corners_2d = np.asarray(corners_2d, dtype=float)
    signs = np.asarray(corner_signs, dtype=float)
    Km = K.matrix()
    rows = []
    for p, D in zip(corners_2d, signs):
        S = skew(np.array([p[0], p[1], 1.0]))
        rows.append(np.hstack([S @ Km @ (np.asarray(R) * (D / 2.0)), S @ Km]))
    A = np.vstack(rows)
    _, svals, Vt = np.linalg.svd(A)
    if svals[4] < 1e-9 * svals[0]:
        raise InvalidProposal("rank-deficient corner system")
    v = Vt[-1]
    if np.sum(v[:3]) < 0:
        v = -v
    d, t = v[:3].copy(), v[3:].copy()
    if np.any(d <= 1e-9):
        raise InvalidProposal("inconsistent or vanishing dimensions")
    if scale_fix == "unit":
        pass  # null vector already unit norm
    elif scale_fix == "ground":
        if plane is None:
            raise ValueError("ground scale fix requires a plane")
        bottom_center = t + np.asarray(R) @ np.array([0.0, 0.0, -d[2] / 2.0])
        denom = plane.normal @ bottom_center
        if abs(denom) < 1e-12:
            raise InvalidProposal("bottom face parallel to ground")
        s = -plane.offset / denom
        if s <= 0:
            raise InvalidProposal("ground-scale places object behind camera")
        d, t = d * s, t * s
    else:
        raise ValueError(f"unknown scale_fix {scale_fix!r}")
    return Cuboid(SE3Pose(np.asarray(R, dtype=float), t), d)


def generate_proposals(bbox: BBox2D, K: CameraIntrinsics, plane: GroundPlane,
                       spec: SamplingSpec, prior: OrientationPrior | None = None,
                       margin: float = 0.1, one_face_depth_ratio: float = 1.0,
                       configs=ALL_CONFIGS) -> list[CuboidProposal]:
    """All valid cuboid proposals for one detection.

    Deterministic in its inputs: the yaw sweep is centered on the azimuth of
    the box center ray, every visibility configuration and mirror is
    attempted for every orientation sample and top-edge point, and samples
    that fail the construction, the lift, or the reprojection validity check
    are silently dropped (an empty result is legal).
    """
    prior = prior or OrientationPrior()
    R_wc = camera_pose(np.zeros(3), yaw=0.0, pitch=prior.pitch, roll=prior.roll).rotation
    ray_w = R_wc @ K.ray(bbox.center)
    yaw_center = math.atan2(ray_w[1], ray_w[0])

    samples = sample_orientations(spec, prior, yaw_center=yaw_center)
    tops = top_edge_points(bbox, spec.n_top)
    margin_px = margin * bbox.diagonal

    proposals = []
    for sample in samples:
        vps = vanishing_points(K, sample.rotation)
        for config in configs:
            signs = corner_signs_for(config)
            for k, p1 in enumerate(tops):
                corners = corners_2d_from_vps(vps, bbox, p1, config, margin=margin)
                if corners is None:
                    continue
                try:
                    if config.faces is FaceVisibility.ONE_FACE:
                        cuboid = _lift_one_face(K, corners, plane, signs,
                                                depth_ratio=one_face_depth_ratio)
                    else:
                        cuboid = cuboid_from_ground_corners(K, corners, plane,
                                                            corner_signs=signs)
                except InvalidProposal:
                    continue

                pts = cuboid.corners_3d(signs=signs)
                if np.any(pts[:, 2] <= 1e-6):
                    continue
                reproj = K.project_camera(pts)
                if not all(bbox.contains(p, margin_px) for p in reproj):
                    continue
                proposals.append(CuboidProposal(
                    cuboid=cuboid, corners_2d=reproj, sample=sample,
                    top_index=k, config=config, corner_signs=signs,
                    vps=vanishing_points(K, cuboid.pose.rotation)))
    return proposals
