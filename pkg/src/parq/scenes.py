"""Synthetic scenes: cuboid placement, orbit cameras, rendering, snippets.

A scene is a handful of class-colored cuboids standing on the floor plane
y = 0, viewed by a smooth camera orbit. Frames are rendered by per-pixel
ray casting against the cuboids (equivalent to z-buffer rasterization for
convex boxes) with Lambert-style shading, giving an RGB image and a metric
depth buffer.

Snippets are cut from the trajectory by a keyframe rule (move far enough or
turn far enough since the last kept frame, then group N keyframes), and each
snippet keeps only the ground-truth boxes that are actually visible in it:
enough of the projected box inside some view, and enough un-projected depth
points inside the 3-D box. Everything in a snippet is expressed in the
middle view's camera frame.
"""

import dataclasses
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataFormatError, GenerationError
from .geometry import (
    CameraView,
    OrientedBox3D,
    Pose,
    box_corners,
    box_from_json,
    box_iou3d,
    box_to_json,
    rotation_angle_deg,
    transform_box,
    yaw_matrix,
)
from .seeding import derive_rng

DATASET_FORMAT_VERSION = 1

# Keyframe thresholds: a frame is kept when it moved or turned at least this
# much relative to the previously kept frame.
MIN_KEYFRAME_TRANSLATION = 0.1
MIN_KEYFRAME_ROTATION_DEG = 15.0

# The interior-point visibility cutoff is 100 at a 320x240 reference
# resolution and scales with image area.
_REFERENCE_POINT_COUNT = 100.0
_REFERENCE_PIXELS = 320.0 * 240.0

_BACKGROUND_GRAY = 0.72
_LIGHT_DIRECTION = np.array([0.4, 1.0, 0.25]) / np.linalg.norm([0.4, 1.0, 0.25])
_AMBIENT = 0.45
_NEAR_PLANE = 0.01


@dataclasses.dataclass(frozen=True)
class ObjectClass:
    """One cuboid category: display color, size prior, and size spread."""

    name: str
    color: tuple
    size_mean: tuple
    size_jitter: float

    def __post_init__(self):
        if len(self.color) != 3 or len(self.size_mean) != 3:
            raise ValueError("ObjectClass color and size_mean must be 3-vectors")
        if min(self.size_mean) <= 0.0:
            raise ValueError(f"size_mean must be positive, got {self.size_mean}")
        if not 0.0 <= self.size_jitter < 1.0:
            raise ValueError(f"size_jitter must be in [0, 1), got {self.size_jitter}")


CLASS_CATALOG = (
    ObjectClass(name="crate", color=(0.85, 0.30, 0.25), size_mean=(0.55, 0.45, 0.55), size_jitter=0.25),
    ObjectClass(name="pillar", color=(0.25, 0.45, 0.85), size_mean=(0.35, 1.10, 0.35), size_jitter=0.20),
    ObjectClass(name="table", color=(0.30, 0.75, 0.35), size_mean=(0.90, 0.40, 0.60), size_jitter=0.20),
    ObjectClass(name="bin", color=(0.80, 0.70, 0.25), size_mean=(0.40, 0.70, 0.40), size_jitter=0.25),
)


def mean_sizes(catalog=CLASS_CATALOG):
    """Per-class size priors in catalog order, for ModelConfig.mean_sizes."""
    return tuple(cls.size_mean for cls in catalog)


@dataclasses.dataclass(frozen=True)
class SceneParams:
    """Scene synthesis settings; classes are drawn uniformly from the catalog."""

    catalog: tuple = CLASS_CATALOG
    min_objects: int = 3
    max_objects: int = 10
    placement_radius: float = 1.4
    max_pair_iou: float = 0.05
    max_placement_attempts: int = 200
    orbit_radius: tuple = (2.6, 3.4)
    orbit_height: tuple = (1.5, 2.2)
    target_height: float = 0.3
    frames: int = 72
    image_width: int = 64
    image_height: int = 48
    focal: float = 60.0

    def __post_init__(self):
        if not self.catalog:
            raise ValueError("catalog must not be empty")
        if not 1 <= self.min_objects <= self.max_objects:
            raise ValueError("need 1 <= min_objects <= max_objects")
        if self.placement_radius <= 0.0 or self.focal <= 0.0:
            raise ValueError("placement_radius and focal must be positive")
        if not 0.0 <= self.max_pair_iou <= 1.0:
            raise ValueError("max_pair_iou must be in [0, 1]")
        if self.max_placement_attempts < 1 or self.frames < 1:
            raise ValueError("max_placement_attempts and frames must be >= 1")
        for name in ("orbit_radius", "orbit_height"):
            lo, hi = getattr(self, name)
            if not 0.0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < low <= high")
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError("image dimensions must be positive")


@dataclasses.dataclass(frozen=True, eq=False)
class SyntheticScene:
    """Placed objects (world frame), per-object colors, and the camera orbit."""

    seed: int
    params: SceneParams
    objects: tuple
    colors: tuple
    trajectory: tuple


def look_at_pose(eye, target, up=(0.0, 1.0, 0.0)):
    """world_from_camera pose with +z toward target and +y pointing down.

    The camera frame is x right, y down, z forward, so the right axis is
    forward x up and the down axis completes the right-handed triple.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise ValueError("look_at_pose: eye and target coincide")
    forward = forward / norm
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    right_norm = np.linalg.norm(right)
    if right_norm < 1e-9:
        raise ValueError("look_at_pose: view direction parallel to up")
    right = right / right_norm
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward], axis=1)
    return Pose(rotation=rotation, translation=eye)


def _orbit_trajectory(params, rng):
    radius = rng.uniform(*params.orbit_radius)
    height = rng.uniform(*params.orbit_height)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    target = np.array([0.0, params.target_height, 0.0])
    cams = []
    for k in range(params.frames):
        angle = phase + 2.0 * np.pi * k / params.frames
        eye = np.array([radius * np.cos(angle), height, radius * np.sin(angle)])
        cams.append(
            CameraView(
                fx=params.focal,
                fy=params.focal,
                cx=params.image_width / 2.0,
                cy=params.image_height / 2.0,
                width=params.image_width,
                height=params.image_height,
                world_from_camera=look_at_pose(eye, target),
            )
        )
    return tuple(cams)


def generate_scene(params, seed):
    """Random non-overlapping cuboids on the floor plus an orbiting camera.

    Deterministic per seed. Objects are rejected until every pair overlaps
    less than max_pair_iou; running out of attempts raises GenerationError.
    """
    rng = derive_rng(seed, "scene-objects")
    count = int(rng.integers(params.min_objects, params.max_objects + 1))
    # Classes are fixed before placement and kept across placement retries;
    # redrawing the class per attempt would under-represent large classes,
    # which fail the overlap test more often.
    class_ids = [int(c) for c in rng.integers(len(params.catalog), size=count)]
    objects = []
    colors = []
    attempts = 0
    for class_id in class_ids:
        cls = params.catalog[class_id]
        while True:
            if attempts >= params.max_placement_attempts:
                raise GenerationError(
                    f"scene seed {seed}: placed {len(objects)}/{count} objects "
                    f"in {attempts} attempts (max_pair_iou={params.max_pair_iou})"
                )
            attempts += 1
            jitter = rng.uniform(1.0 - cls.size_jitter, 1.0 + cls.size_jitter, size=3)
            size = np.asarray(cls.size_mean) * jitter
            center_xz = rng.uniform(-params.placement_radius, params.placement_radius, size=2)
            candidate = OrientedBox3D(
                center=np.array([center_xz[0], size[1] / 2.0, center_xz[1]]),
                size=size,
                rotation=yaw_matrix(rng.uniform(0.0, 2.0 * np.pi)),
                class_id=class_id,
            )
            if all(box_iou3d(candidate, other) < params.max_pair_iou for other in objects):
                break
        objects.append(candidate)
        color = np.asarray(cls.color) * (1.0 + rng.uniform(-0.08, 0.08, size=3))
        colors.append(tuple(np.clip(color, 0.0, 1.0)))
    trajectory = _orbit_trajectory(params, derive_rng(seed, "scene-trajectory"))
    return SyntheticScene(
        seed=seed,
        params=params,
        objects=tuple(objects),
        colors=tuple(colors),
        trajectory=trajectory,
    )


# ------------------------------------------------------------------ rendering


def _pixel_ray_directions(cam):
    """Unnormalized camera-frame ray directions through pixel centers, z = 1.

    With z = 1 the slab parameter t equals camera z-depth directly.
    """
    us = (np.arange(cam.width) + 0.5 - cam.cx) / cam.fx
    vs = (np.arange(cam.height) + 0.5 - cam.cy) / cam.fy
    dirs = np.empty((cam.height, cam.width, 3))
    dirs[..., 0] = us[None, :]
    dirs[..., 1] = vs[:, None]
    dirs[..., 2] = 1.0
    return dirs.reshape(-1, 3)


def _ray_box_hits(origin, dirs, box):
    """Slab test of many rays against one oriented box.

    Returns (t [P], normals [P, 3]); t = inf where the ray misses. Rays
    starting inside or behind the entry face are treated as misses.
    """
    local_origin = box.rotation.T @ (origin - box.center)
    local_dirs = dirs @ box.rotation
    half = box.size / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t_lo = (-half - local_origin) / local_dirs
        t_hi = (half - local_origin) / local_dirs
    parallel = np.abs(local_dirs) < 1e-12
    enter = np.where(parallel, -np.inf, np.minimum(t_lo, t_hi))
    leave = np.where(parallel, np.inf, np.maximum(t_lo, t_hi))
    parallel_miss = (parallel & (np.abs(local_origin) > half)).any(axis=1)
    axis = np.argmax(enter, axis=1)
    t_near = enter[np.arange(len(enter)), axis]
    t_far = leave.min(axis=1)
    hit = (t_near <= t_far) & (t_near > _NEAR_PLANE) & ~parallel_miss
    t = np.where(hit, t_near, np.inf)
    # Entry face normal: the hit axis, pointing against the ray.
    signs = -np.sign(local_dirs[np.arange(len(enter)), axis])
    normals = signs[:, None] * box.rotation.T[axis]
    return t, normals


def render(scene, cam):
    """Ray-cast one view: (uint8 RGB [H, W, 3], float depth [H, W]).

    Depth is camera z in meters, +inf on background. Shading is ambient plus
    Lambert against a fixed world light, flat per-object color.
    """
    origin = cam.world_from_camera.translation
    dirs = _pixel_ray_directions(cam) @ cam.world_from_camera.rotation.T
    pixels = len(dirs)
    depth = np.full(pixels, np.inf)
    color = np.full((pixels, 3), _BACKGROUND_GRAY)
    for box, base in zip(scene.objects, scene.colors):
        t, normals = _ray_box_hits(origin, dirs, box)
        closer = t < depth
        if not closer.any():
            continue
        lambert = np.maximum(normals[closer] @ _LIGHT_DIRECTION, 0.0)
        shade = _AMBIENT + (1.0 - _AMBIENT) * lambert
        color[closer] = np.asarray(base) * shade[:, None]
        depth[closer] = t[closer]
    image = np.clip(np.round(color * 255.0), 0, 255).astype(np.uint8)
    return (
        image.reshape(cam.height, cam.width, 3),
        depth.reshape(cam.height, cam.width),
    )


def unproject_depth(cam, depth):
    """World points for every finite pixel of a depth buffer, [P, 3].

    Inverts the renderer's ray parameterization exactly: a pixel's point is
    depth * (ray direction with z = 1) in camera coordinates.
    """
    flat = np.asarray(depth, dtype=np.float64).reshape(-1)
    keep = np.isfinite(flat)
    dirs = _pixel_ray_directions(cam)[keep]
    return cam.world_from_camera.apply(dirs * flat[keep, None])


# ------------------------------------------------------------------ snippets


def select_snippet_frames(trajectory, views):
    """Greedy keyframing: group indices of frames that moved or turned enough.

    Frame 0 is always kept; each later frame is kept iff its translation to
    the last KEPT frame exceeds 0.1 m or its relative rotation exceeds 15
    degrees. Every `views` consecutive keyframes form one snippet; leftover
    keyframes at the end are dropped.
    """
    if len(trajectory) == 0:
        raise ValueError("trajectory must not be empty")
    if views < 1:
        raise ValueError(f"views must be >= 1, got {views}")
    selected = [0]
    last = trajectory[0].world_from_camera
    for index in range(1, len(trajectory)):
        pose = trajectory[index].world_from_camera
        moved = np.linalg.norm(pose.translation - last.translation) > MIN_KEYFRAME_TRANSLATION
        turned = rotation_angle_deg(last.rotation.T @ pose.rotation) > MIN_KEYFRAME_ROTATION_DEG
        if moved or turned:
            selected.append(index)
            last = pose
    complete = len(selected) // views * views
    return [tuple(selected[start : start + views]) for start in range(0, complete, views)]


@dataclasses.dataclass(frozen=True)
class FilterConfig:
    """Ground-truth visibility cutoffs for snippet extraction.

    border_threshold: minimum fraction of the projected-corner hull that must
    lie inside some view's image rectangle. min_interior_points: minimum
    number of un-projected depth points (pooled over the snippet's views)
    inside the 3-D box; None scales the reference count of 100 at 320x240
    down by image area.
    """

    border_threshold: float = 0.5
    min_interior_points: int = None

    def __post_init__(self):
        if not 0.0 <= self.border_threshold <= 1.0:
            raise ValueError("border_threshold must be in [0, 1]")
        if self.min_interior_points is not None and self.min_interior_points < 0:
            raise ValueError("min_interior_points must be >= 0")

    def resolved_min_points(self, width, height):
        if self.min_interior_points is not None:
            return self.min_interior_points
        return max(1, round(_REFERENCE_POINT_COUNT * (width * height) / _REFERENCE_PIXELS))


_BOX_EDGES = tuple(
    (corner, corner | bit)
    for corner in range(8)
    for bit in (1, 2, 4)
    if corner & bit == 0
)


def projected_border_fraction(box, cam):
    """Fraction of the projected corner hull inside the image rectangle.

    Corners are clipped against the camera near plane edge-by-edge before
    projecting, so partially-behind boxes still get a hull. Returns 0 when
    nothing of the box is in front of the camera or the hull is degenerate.
    """
    camera_from_world = cam.world_from_camera.inverse()
    corners = camera_from_world.apply(box_corners(box))
    points = [corner for corner in corners if corner[2] > _NEAR_PLANE]
    for a, b in _BOX_EDGES:
        za, zb = corners[a][2], corners[b][2]
        if (za > _NEAR_PLANE) != (zb > _NEAR_PLANE):
            frac = (_NEAR_PLANE - za) / (zb - za)
            points.append(corners[a] + frac * (corners[b] - corners[a]))
    if not points:
        return 0.0
    points = np.asarray(points)
    us = cam.fx * points[:, 0] / points[:, 2] + cam.cx
    vs = cam.fy * points[:, 1] / points[:, 2] + cam.cy
    hull_w = us.max() - us.min()
    hull_h = vs.max() - vs.min()
    if hull_w <= 0.0 or hull_h <= 0.0:
        return 0.0
    inter_w = min(us.max(), cam.width) - max(us.min(), 0.0)
    inter_h = min(vs.max(), cam.height) - max(vs.min(), 0.0)
    if inter_w <= 0.0 or inter_h <= 0.0:
        return 0.0
    return (inter_w * inter_h) / (hull_w * hull_h)


def _points_inside_box(points, box, tol=1e-9):
    local = np.abs((points - box.center) @ box.rotation)
    return (local <= box.size / 2.0 + tol).all(axis=1)


def filter_visible_gt(objects, cams, depths, cfg):
    """World-frame boxes that are visible in the given snippet views.

    Keeps a box iff (a) the best view's projected-hull fraction inside the
    image is >= border_threshold and (b) at least the configured number of
    un-projected depth points (pooled over views) fall inside the box.
    """
    if len(cams) != len(depths) or not cams:
        raise ValueError("need one depth buffer per camera")
    min_points = cfg.resolved_min_points(cams[0].width, cams[0].height)
    clouds = [unproject_depth(cam, depth) for cam, depth in zip(cams, depths)]
    kept = []
    for box in objects:
        best = max(projected_border_fraction(box, cam) for cam in cams)
        if best < cfg.border_threshold:
            continue
        interior = sum(int(_points_inside_box(cloud, box).sum()) for cloud in clouds)
        if interior < min_points:
            continue
        kept.append(box)
    return kept


@dataclasses.dataclass(frozen=True, eq=False)
class Snippet:
    """N rendered views with cameras and visible GT, all in the snippet frame.

    The snippet frame is the middle view's camera frame; world_from_snippet
    is that view's world pose. images are uint8; depths (same order) are
    kept when the snippet was built with them.
    """

    scene_id: int
    snippet_id: int
    world_from_snippet: Pose
    cameras: tuple
    images: tuple
    boxes: tuple
    depths: tuple = None

    def __post_init__(self):
        if len(self.cameras) != len(self.images) or not self.cameras:
            raise ValueError("need one image per camera")
        if self.depths is not None and len(self.depths) != len(self.cameras):
            raise ValueError("need one depth buffer per camera when depths are kept")


def snippet_inputs(snippet):
    """(float images in [0, 1], cameras) ready for the detector."""
    images = [np.asarray(img, dtype=np.float64) / 255.0 for img in snippet.images]
    return images, list(snippet.cameras)


def extract_snippets(scene, views, cfg=None, scene_id=0, keep_depths=False):
    """Render, keyframe, filter, and reframe one scene into snippets."""
    cfg = cfg if cfg is not None else FilterConfig()
    groups = select_snippet_frames(scene.trajectory, views)
    snippets = []
    for snippet_id, group in enumerate(groups):
        cams = [scene.trajectory[i] for i in group]
        rendered = [render(scene, cam) for cam in cams]
        images = tuple(image for image, _ in rendered)
        depths = tuple(depth for _, depth in rendered)
        visible = filter_visible_gt(scene.objects, cams, depths, cfg)
        world_from_snippet = cams[(views - 1) // 2].world_from_camera
        snippet_from_world = world_from_snippet.inverse()
        local_cams = tuple(
            dataclasses.replace(
                cam, world_from_camera=snippet_from_world.compose(cam.world_from_camera)
            )
            for cam in cams
        )
        local_boxes = tuple(transform_box(snippet_from_world, box) for box in visible)
        snippets.append(
            Snippet(
                scene_id=scene_id,
                snippet_id=snippet_id,
                world_from_snippet=world_from_snippet,
                cameras=local_cams,
                images=images,
                boxes=local_boxes,
                depths=depths if keep_depths else None,
            )
        )
    return snippets


# ------------------------------------------------------------------ datasets


@dataclasses.dataclass(frozen=True, eq=False)
class SceneRecord:
    """One scene's world-frame GT and its extracted snippets."""

    scene_id: int
    objects: tuple
    snippets: tuple


@dataclasses.dataclass(frozen=True, eq=False)
class Dataset:
    scenes: tuple

    def all_snippets(self):
        return [snippet for scene in self.scenes for snippet in scene.snippets]


def build_dataset(params, seeds, views, cfg=None, keep_depths=False):
    """Generate and extract one scene per seed into a Dataset."""
    records = []
    for scene_id, seed in enumerate(seeds):
        scene = generate_scene(params, seed)
        snippets = extract_snippets(
            scene, views, cfg=cfg, scene_id=scene_id, keep_depths=keep_depths
        )
        records.append(
            SceneRecord(scene_id=scene_id, objects=scene.objects, snippets=tuple(snippets))
        )
    return Dataset(scenes=tuple(records))


def _pose_to_json(pose):
    return {
        "rotation": [float(v) for v in pose.rotation.reshape(-1)],
        "translation": [float(v) for v in pose.translation],
    }


def _pose_from_json(obj):
    try:
        rotation = np.asarray(obj["rotation"], dtype=np.float64).reshape(3, 3)
        translation = np.asarray(obj["translation"], dtype=np.float64)
        return Pose(rotation=rotation, translation=translation)
    except (KeyError, TypeError, ValueError) as err:
        raise DataFormatError(f"bad pose record: {err}") from err


def _camera_to_json(cam):
    return {
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "width": cam.width,
        "height": cam.height,
        "pose": _pose_to_json(cam.world_from_camera),
    }


def _camera_from_json(obj):
    try:
        return CameraView(
            fx=float(obj["fx"]),
            fy=float(obj["fy"]),
            cx=float(obj["cx"]),
            cy=float(obj["cy"]),
            width=int(obj["width"]),
            height=int(obj["height"]),
            world_from_camera=_pose_from_json(obj["pose"]),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise DataFormatError(f"bad camera record: {err}") from err


def save_dataset(path, dataset, save_depths=False):
    """Write manifest.json plus one PNG per view (and optional .npy depths)."""
    root = Path(path)
    (root / "images").mkdir(parents=True, exist_ok=True)
    if save_depths:
        (root / "depths").mkdir(parents=True, exist_ok=True)
    scenes = []
    for record in dataset.scenes:
        snippets = []
        for snippet in record.snippets:
            stem = f"sc{record.scene_id:04d}_sn{snippet.snippet_id:03d}"
            image_paths = []
            for view_index, image in enumerate(snippet.images):
                rel = f"images/{stem}_v{view_index}.png"
                Image.fromarray(np.asarray(image)).save(root / rel)
                image_paths.append(rel)
            entry = {
                "snippet_id": snippet.snippet_id,
                "world_from_snippet": _pose_to_json(snippet.world_from_snippet),
                "cameras": [_camera_to_json(cam) for cam in snippet.cameras],
                "images": image_paths,
                "boxes": [box_to_json(box) for box in snippet.boxes],
            }
            if save_depths and snippet.depths is not None:
                depth_paths = []
                for view_index, depth in enumerate(snippet.depths):
                    rel = f"depths/{stem}_v{view_index}.npy"
                    np.save(root / rel, np.asarray(depth))
                    depth_paths.append(rel)
                entry["depths"] = depth_paths
            snippets.append(entry)
        scenes.append(
            {
                "scene_id": record.scene_id,
                "objects": [box_to_json(box) for box in record.objects],
                "snippets": snippets,
            }
        )
    manifest = {"format_version": DATASET_FORMAT_VERSION, "scenes": scenes}
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1))


def load_dataset(path):
    """Lossless inverse of save_dataset; malformed input -> DataFormatError."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise DataFormatError(f"no manifest.json under {root}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as err:
        raise DataFormatError(f"{manifest_path}: invalid JSON at line {err.lineno}") from err
    if not isinstance(manifest, dict):
        raise DataFormatError(f"{manifest_path}: manifest must be a JSON object")
    version = manifest.get("format_version")
    if version != DATASET_FORMAT_VERSION:
        raise DataFormatError(
            f"{manifest_path}: format_version {version!r} unsupported "
            f"(expected {DATASET_FORMAT_VERSION})"
        )
    try:
        scene_entries = manifest["scenes"]
        records = []
        for scene_entry in scene_entries:
            snippets = []
            for entry in scene_entry["snippets"]:
                images = tuple(
                    np.asarray(Image.open(root / rel)) for rel in entry["images"]
                )
                depths = None
                if "depths" in entry:
                    depths = tuple(np.load(root / rel) for rel in entry["depths"])
                snippets.append(
                    Snippet(
                        scene_id=int(scene_entry["scene_id"]),
                        snippet_id=int(entry["snippet_id"]),
                        world_from_snippet=_pose_from_json(entry["world_from_snippet"]),
                        cameras=tuple(_camera_from_json(cam) for cam in entry["cameras"]),
                        images=images,
                        boxes=tuple(box_from_json(obj) for obj in entry["boxes"]),
                        depths=depths,
                    )
                )
            records.append(
                SceneRecord(
                    scene_id=int(scene_entry["scene_id"]),
                    objects=tuple(box_from_json(obj) for obj in scene_entry["objects"]),
                    snippets=tuple(snippets),
                )
            )
    except (KeyError, TypeError, ValueError) as err:
        if isinstance(err, DataFormatError):
            raise
        raise DataFormatError(f"{manifest_path}: malformed manifest: {err}") from err
    except FileNotFoundError as err:
        raise DataFormatError(f"{manifest_path}: missing referenced file: {err}") from err
    return Dataset(scenes=tuple(records))


__all__ = [
    "CLASS_CATALOG",
    "ObjectClass",
    "SceneParams",
    "SyntheticScene",
    "FilterConfig",
    "Snippet",
    "SceneRecord",
    "Dataset",
    "mean_sizes",
    "look_at_pose",
    "generate_scene",
    "render",
    "unproject_depth",
    "select_snippet_frames",
    "projected_border_fraction",
    "filter_visible_gt",
    "snippet_inputs",
    "extract_snippets",
    "build_dataset",
    "save_dataset",
    "load_dataset",
]
