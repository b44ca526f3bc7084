"""Cameras, rays, rotations, and oriented 3D boxes.

Pinhole projection, log-scale depth sampling along pixel rays, Fourier
positional encoding, 6D rotation decoding, oriented boxes with exact
polytope-clipping IoU, and class-aware 3D non-maximum suppression.
Everything operates on numpy float64 and every function is pure.

Conventions used throughout the package:

* Camera frame: x right, y down, z forward (depth is the camera-frame
  z coordinate).  Poses are camera-to-world ("world_from_camera").
* Box size is the full extent (w, h, l) along the box's local
  (x, y, z) axes, which are the columns of its rotation matrix.
* Corner ordering and the Fourier layout are documented on
  `box_corners` and `fourier_encode`; serialized forms must not
  change without a format version bump.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, DegenerateRotationError

_POSE_ORTHO_TOL = 1e-9
_BOX_ORTHO_TOL = 1e-6


def _checked_rotation(rotation: np.ndarray, tol: float, what: str) -> np.ndarray:
    r = np.asarray(rotation, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"{what}: rotation must have shape (3, 3), got {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError(f"{what}: rotation has non-finite entries")
    ortho_err = float(np.abs(r.T @ r - np.eye(3)).max())
    det_err = abs(float(np.linalg.det(r)) - 1.0)
    if ortho_err > tol or det_err > tol:
        raise ValueError(
            f"{what}: rotation is not proper orthonormal "
            f"(orthogonality error {ortho_err:.3e}, det error {det_err:.3e})"
        )
    return r


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform mapping points as `rotation @ x + translation`."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = _checked_rotation(self.rotation, _POSE_ORTHO_TOL, "Pose")
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise ValueError("Pose: translation has non-finite entries")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """Transform equal to applying `other` first, then `self`."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        p = np.asarray(points, dtype=np.float64)
        if p.shape[-1] != 3:
            raise ValueError(f"points must have a trailing axis of size 3, got {p.shape}")
        return p @ self.rotation.T + self.translation


def yaw_matrix(angle: float) -> np.ndarray:
    """Rotation by `angle` radians about the +y (up) axis."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_angle_deg(rotation: np.ndarray) -> float:
    """Geodesic magnitude of a rotation matrix, in degrees."""
    r = np.asarray(rotation, dtype=np.float64)
    c = (float(np.trace(r)) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


@dataclass(frozen=True, eq=False)
class CameraView:
    """Pinhole camera: intrinsics in pixels plus a camera-to-world pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_from_camera: Pose

    def __post_init__(self) -> None:
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise ValueError("CameraView: focal lengths must be positive")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("CameraView: image dimensions must be positive")


#: Depth at or below this value counts as behind the camera.
BEHIND_CAMERA_DEPTH = 1e-9


def project(points: np.ndarray, cam: CameraView) -> tuple[np.ndarray, np.ndarray]:
    """Project world points into the image.

    Returns (uv, depth) with shapes (..., 2) and (...,).  Depth is the
    camera-frame z coordinate.  Points with depth <= BEHIND_CAMERA_DEPTH
    get NaN pixel coordinates; callers must treat them as out of view.
    """
    cam_from_world = cam.world_from_camera.inverse()
    p_cam = cam_from_world.apply(points)
    z = p_cam[..., 2]
    in_front = z > BEHIND_CAMERA_DEPTH
    safe_z = np.where(in_front, z, 1.0)
    u = cam.cx + cam.fx * p_cam[..., 0] / safe_z
    v = cam.cy + cam.fy * p_cam[..., 1] / safe_z
    uv = np.stack([u, v], axis=-1)
    uv[~in_front] = np.nan
    return uv, z


@dataclass(frozen=True)
class RayEncodingConfig:
    """Depth sampling plan for per-pixel rays."""

    points_per_ray: int = 8
    d_min: float = 0.25
    d_max: float = 6.0

    def __post_init__(self) -> None:
        if self.points_per_ray < 1:
            raise ValueError("RayEncodingConfig: points_per_ray must be >= 1")
        if not (0.0 < self.d_min <= self.d_max):
            raise ValueError("RayEncodingConfig: need 0 < d_min <= d_max")


def log_depth_samples(cfg: RayEncodingConfig) -> np.ndarray:
    """Geometrically spaced depths from d_min to d_max inclusive."""
    return np.geomspace(cfg.d_min, cfg.d_max, cfg.points_per_ray)


def ray_points(
    cam: CameraView, grid_w: int, grid_h: int, cfg: RayEncodingConfig
) -> np.ndarray:
    """World points sampled along the rays of a feature grid.

    Grid cell (row i, col j) maps to the image pixel at its center,
    ((j + 0.5) * width / grid_w, (i + 0.5) * height / grid_h); the cell's
    camera ray is sampled at the log-spaced depths and unprojected.
    Returns shape [grid_h, grid_w, points_per_ray, 3].
    """
    if grid_w < 1 or grid_h < 1:
        raise ValueError("ray_points: grid dimensions must be positive")
    depths = log_depth_samples(cfg)
    u = (np.arange(grid_w) + 0.5) * (cam.width / grid_w)
    v = (np.arange(grid_h) + 0.5) * (cam.height / grid_h)
    directions = np.empty((grid_h, grid_w, 3))
    directions[..., 0] = ((u - cam.cx) / cam.fx)[None, :]
    directions[..., 1] = ((v - cam.cy) / cam.fy)[:, None]
    directions[..., 2] = 1.0
    p_cam = directions[:, :, None, :] * depths[None, None, :, None]
    return cam.world_from_camera.apply(p_cam)


@dataclass(frozen=True)
class FourierConfig:
    """Octave plan for sinusoidal positional encoding."""

    num_frequencies: int = 8
    include_input: bool = True

    def __post_init__(self) -> None:
        if self.num_frequencies < 0:
            raise ValueError("FourierConfig: num_frequencies must be >= 0")

    @property
    def encoded_size(self) -> int:
        return 3 * (2 * self.num_frequencies + int(self.include_input))


def fourier_encode(x: np.ndarray, cfg: FourierConfig) -> np.ndarray:
    """Sinusoidal encoding of 3D points, vectorized over leading axes.

    Layout along the last axis: the raw coordinates first when
    include_input is set, then for each octave k = 0..num_frequencies-1
    the blocks sin(2^k * x) and cos(2^k * x), each of width 3.  Total
    width is 3 * (2 * num_frequencies + include_input).
    """
    p = np.asarray(x, dtype=np.float64)
    if p.shape[-1] != 3:
        raise ValueError(f"fourier_encode: trailing axis must be 3, got {p.shape}")
    parts = [p] if cfg.include_input else []
    for k in range(cfg.num_frequencies):
        scaled = p * float(2**k)
        parts.append(np.sin(scaled))
        parts.append(np.cos(scaled))
    if not parts:
        return np.zeros(p.shape[:-1] + (0,))
    return np.concatenate(parts, axis=-1)


def rot6d_to_matrix(p: np.ndarray) -> np.ndarray:
    """Decode a 6-vector into a proper rotation matrix.

    The two 3-vector halves are Gram-Schmidt orthonormalized into the
    first two columns; the third column is their cross product.  Raises
    DegenerateRotationError when the first half is numerically zero or
    the halves are numerically parallel.
    """
    v = np.asarray(p, dtype=np.float64).reshape(6)
    a1, a2 = v[:3], v[3:]
    n1 = float(np.linalg.norm(a1))
    if n1 <= 1e-9:
        raise DegenerateRotationError("first direction vector is numerically zero")
    c1 = a1 / n1
    b2 = a2 - (c1 @ a2) * c1
    n2 = float(np.linalg.norm(b2))
    if n2 <= 1e-9 * max(1.0, float(np.linalg.norm(a2))):
        raise DegenerateRotationError("direction vectors are numerically parallel")
    c2 = b2 / n2
    return np.stack([c1, c2, np.cross(c1, c2)], axis=1)


def matrix_to_rot6d(rotation: np.ndarray) -> np.ndarray:
    """First two columns of a rotation matrix, flattened to 6 values."""
    r = np.asarray(rotation, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"matrix_to_rot6d: expected shape (3, 3), got {r.shape}")
    return np.concatenate([r[:, 0], r[:, 1]])


@dataclass(frozen=True, eq=False)
class OrientedBox3D:
    """Oriented 3D bounding box.

    `size` holds the full extents (w, h, l) along the box's local
    (x, y, z) axes, which are the columns of `rotation`.
    """

    center: np.ndarray
    size: np.ndarray
    rotation: np.ndarray
    class_id: int
    score: float | None = None

    def __post_init__(self) -> None:
        c = np.asarray(self.center, dtype=np.float64).reshape(3)
        s = np.asarray(self.size, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(c)):
            raise ValueError("OrientedBox3D: center has non-finite entries")
        if not (np.all(np.isfinite(s)) and np.all(s > 0.0)):
            raise ValueError("OrientedBox3D: size components must be positive")
        r = _checked_rotation(self.rotation, _BOX_ORTHO_TOL, "OrientedBox3D")
        if self.score is not None and not (0.0 <= float(self.score) <= 1.0):
            raise ValueError("OrientedBox3D: score must lie in [0, 1]")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "size", s)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "class_id", int(self.class_id))
        object.__setattr__(
            self, "score", None if self.score is None else float(self.score)
        )


# Corner k takes its local offset signs from the bits of k:
# bit 2 -> x, bit 1 -> y, bit 0 -> z; a set bit means +half-extent.
_CORNER_SIGNS = np.array(
    [
        [1.0 if k >> 2 & 1 else -1.0, 1.0 if k >> 1 & 1 else -1.0, 1.0 if k & 1 else -1.0]
        for k in range(8)
    ]
)


def box_corners(box: OrientedBox3D) -> np.ndarray:
    """The 8 corners in world space, shape [8, 3].

    Corner k sits at center + R @ (sx*w/2, sy*h/2, sz*l/2) where the
    signs (sx, sy, sz) come from bits (k>>2, k>>1, k) & 1 of the corner
    index, +1 where the bit is set.  Corner 0 is the all-minus corner,
    corner 7 the all-plus corner.
    """
    local = _CORNER_SIGNS * (box.size / 2.0)
    return box.center + local @ box.rotation.T


def box_volume(box: OrientedBox3D) -> float:
    return float(np.prod(box.size))


def transform_box(pose: Pose, box: OrientedBox3D) -> OrientedBox3D:
    """Rigidly move a box; size, class, and score are unchanged."""
    return OrientedBox3D(
        center=pose.apply(box.center),
        size=box.size,
        rotation=pose.rotation @ box.rotation,
        class_id=box.class_id,
        score=box.score,
    )


# Face corner indices with outward winding (counter-clockwise seen from
# outside), in order +x, -x, +y, -y, +z, -z of the local axes.
_FACE_CORNERS = (
    (4, 6, 7, 5),
    (0, 1, 3, 2),
    (2, 3, 7, 6),
    (0, 4, 5, 1),
    (1, 5, 7, 3),
    (0, 2, 6, 4),
)


def _box_face_polygons(box: OrientedBox3D) -> list[np.ndarray]:
    corners = box_corners(box)
    return [corners[list(face)] for face in _FACE_CORNERS]


def _box_planes(box: OrientedBox3D) -> tuple[np.ndarray, np.ndarray]:
    """Outward face half-spaces: x is inside iff normals @ x <= offsets."""
    axes = box.rotation.T
    normals = np.concatenate([axes, -axes], axis=0)
    half = np.concatenate([box.size / 2.0, box.size / 2.0])
    offsets = normals @ box.center + half
    return normals, offsets


def _clip_polygon(
    poly: np.ndarray, normal: np.ndarray, offset: float, eps: float
) -> tuple[list[np.ndarray], bool]:
    """Sutherland-Hodgman clip of one polygon against one half-space.

    Returns (kept vertices in ring order, whether any edge crossed the
    plane).  Vertices within eps of the plane count as inside.
    """
    dist = poly @ normal - offset
    inside = dist <= eps
    out: list[np.ndarray] = []
    crossed = False
    m = len(poly)
    for i in range(m):
        j = (i + 1) % m
        if inside[i]:
            out.append(poly[i])
        if inside[i] != inside[j]:
            t = dist[i] / (dist[i] - dist[j])
            out.append(poly[i] + t * (poly[j] - poly[i]))
            crossed = True
    return out, crossed


def _dedupe_points(points: list[np.ndarray], tol: float) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for p in points:
        if all(float(np.abs(p - q).max()) > tol for q in out):
            out.append(p)
    return out


def _cap_polygon(points: list[np.ndarray], normal: np.ndarray) -> np.ndarray:
    """Order coplanar points counter-clockwise around `normal`.

    The cross-section of a convex polytope is convex, so an angular
    sort about the centroid reconstructs the polygon.
    """
    helper = np.zeros(3)
    helper[int(np.argmin(np.abs(normal)))] = 1.0
    e1 = np.cross(normal, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    pts = np.asarray(points)
    rel = pts - pts.mean(axis=0)
    angles = np.arctan2(rel @ e2, rel @ e1)
    # (e1, e2, normal) is right-handed, so ascending angle winds the
    # polygon counter-clockwise seen from +normal: outward by the
    # right-hand rule.
    return pts[np.argsort(angles)]


def _clip_convex_polytope(
    faces: list[np.ndarray], normals: np.ndarray, offsets: np.ndarray
) -> list[np.ndarray]:
    """Clip a face-list polytope against a set of half-spaces.

    Each cutting plane that actually severs geometry contributes a cap
    face so the result stays a closed surface.  Degenerate (sliver)
    faces are harmless: their divergence flux is zero.
    """
    for normal, offset in zip(normals, offsets):
        eps = 1e-9 * (1.0 + abs(float(offset)))
        new_faces: list[np.ndarray] = []
        on_plane: list[np.ndarray] = []
        crossed_any = False
        for poly in faces:
            kept, crossed = _clip_polygon(poly, normal, float(offset), eps)
            crossed_any = crossed_any or crossed
            if len(kept) >= 3:
                arr = np.asarray(kept)
                new_faces.append(arr)
                near = np.abs(arr @ normal - offset) <= 1e-7 * (1.0 + abs(float(offset)))
                on_plane.extend(arr[near])
        if crossed_any:
            cap = _dedupe_points(on_plane, 1e-7)
            if len(cap) >= 3:
                new_faces.append(_cap_polygon(cap, normal))
        faces = new_faces
        if not faces:
            return []
    return faces


def _polytope_volume(faces: list[np.ndarray]) -> float:
    """Signed volume of a closed, outward-wound face list (divergence)."""
    if not faces:
        return 0.0
    ref = np.concatenate(faces).mean(axis=0)
    volume = 0.0
    for poly in faces:
        rel = poly - ref
        for i in range(1, len(rel) - 1):
            volume += float(np.dot(rel[0], np.cross(rel[i], rel[i + 1])))
    return volume / 6.0


def box_iou3d(a: OrientedBox3D, b: OrientedBox3D) -> float:
    """Exact intersection-over-union of two oriented boxes.

    The intersection volume comes from clipping box b's faces against
    box a's six half-spaces and integrating the resulting closed
    polytope with the divergence theorem.
    """
    vol_a = box_volume(a)
    vol_b = box_volume(b)
    # Bounding-sphere reject: boxes further apart than the sum of their
    # half-diagonals cannot intersect.
    reach = (float(np.linalg.norm(a.size)) + float(np.linalg.norm(b.size))) / 2.0
    if float(np.linalg.norm(a.center - b.center)) >= reach:
        return 0.0
    normals, offsets = _box_planes(a)
    faces = _clip_convex_polytope(_box_face_polygons(b), normals, offsets)
    if not faces:
        return 0.0
    inter = min(max(_polytope_volume(faces), 0.0), vol_a, vol_b)
    return inter / (vol_a + vol_b - inter)


def iou_matrix(
    boxes_a: list[OrientedBox3D], boxes_b: list[OrientedBox3D]
) -> np.ndarray:
    """Pairwise box_iou3d, shape [len(boxes_a), len(boxes_b)]."""
    out = np.zeros((len(boxes_a), len(boxes_b)))
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            out[i, j] = box_iou3d(a, b)
    return out


def nms3d(
    boxes: list[OrientedBox3D], iou_threshold: float = 0.25
) -> list[OrientedBox3D]:
    """Greedy class-aware non-maximum suppression.

    Boxes are visited by descending score (ties broken toward the lower
    input index); a box is kept iff its IoU with every already-kept box
    of the same class is strictly below the threshold.  Returns the
    kept boxes in visit order, so the result is independent of the
    input order except through the documented tie-break.
    """
    for box in boxes:
        if box.score is None:
            raise ValueError("nms3d: every box needs a score")
    order = sorted(range(len(boxes)), key=lambda i: (-boxes[i].score, i))
    kept: list[OrientedBox3D] = []
    for i in order:
        candidate = boxes[i]
        if all(
            box_iou3d(candidate, k) < iou_threshold
            for k in kept
            if k.class_id == candidate.class_id
        ):
            kept.append(candidate)
    return kept


def box_to_json(box: OrientedBox3D) -> dict:
    """JSON-friendly dict: center[3], size[3], rotation[9 row-major],
    class_id, score (null when absent)."""
    return {
        "center": [float(v) for v in box.center],
        "size": [float(v) for v in box.size],
        "rotation": [float(v) for v in box.rotation.reshape(9)],
        "class_id": int(box.class_id),
        "score": None if box.score is None else float(box.score),
    }


_BOX_JSON_KEYS = {"center", "size", "rotation", "class_id", "score"}


def box_from_json(obj: dict) -> OrientedBox3D:
    """Inverse of box_to_json; malformed input raises DataFormatError."""
    if not isinstance(obj, dict):
        raise DataFormatError(f"box record must be an object, got {type(obj).__name__}")
    if set(obj) != _BOX_JSON_KEYS:
        raise DataFormatError(
            f"box record keys {sorted(obj)} != {sorted(_BOX_JSON_KEYS)}"
        )
    try:
        return OrientedBox3D(
            center=np.asarray(obj["center"], dtype=np.float64),
            size=np.asarray(obj["size"], dtype=np.float64),
            rotation=np.asarray(obj["rotation"], dtype=np.float64).reshape(3, 3),
            class_id=int(obj["class_id"]),
            score=None if obj["score"] is None else float(obj["score"]),
        )
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"malformed box record: {exc}") from exc
