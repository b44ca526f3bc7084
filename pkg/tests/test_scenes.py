"""Scene synthesis, rendering, snippet extraction, and dataset persistence."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from parq.errors import DataFormatError, GenerationError
from parq.geometry import (
    CameraView,
    OrientedBox3D,
    Pose,
    box_iou3d,
    project,
    yaw_matrix,
)
from parq.scenes import (
    CLASS_CATALOG,
    Dataset,
    FilterConfig,
    ObjectClass,
    SceneParams,
    SceneRecord,
    Snippet,
    SyntheticScene,
    build_dataset,
    extract_snippets,
    filter_visible_gt,
    generate_scene,
    load_dataset,
    look_at_pose,
    mean_sizes,
    projected_border_fraction,
    render,
    save_dataset,
    select_snippet_frames,
    snippet_inputs,
    unproject_depth,
)

SMALL = SceneParams(frames=24)


def forward_camera(translation=(0.0, 0.0, -3.0), width=64, height=48, focal=60.0):
    """Camera at `translation` looking along world +z, y down."""
    pose = Pose(np.diag([-1.0, -1.0, 1.0]), np.asarray(translation, dtype=np.float64))
    return CameraView(
        fx=focal, fy=focal, cx=width / 2.0, cy=height / 2.0,
        width=width, height=height, world_from_camera=pose,
    )


def box_at(center, size=(1.0, 1.0, 1.0), yaw=0.0, class_id=0):
    return OrientedBox3D(
        center=np.asarray(center, dtype=np.float64),
        size=np.asarray(size, dtype=np.float64),
        rotation=yaw_matrix(yaw),
        class_id=class_id,
    )


def manual_scene(objects, colors, cameras):
    return SyntheticScene(
        seed=0, params=SMALL, objects=tuple(objects), colors=tuple(colors),
        trajectory=tuple(cameras),
    )


# ------------------------------------------------------------ configuration


def test_catalog_has_distinct_names_and_valid_entries():
    names = [cls.name for cls in CLASS_CATALOG]
    assert len(set(names)) == len(names) == 4
    for cls in CLASS_CATALOG:
        assert min(cls.size_mean) > 0.0
        assert all(0.0 <= c <= 1.0 for c in cls.color)


def test_mean_sizes_follow_catalog_order():
    sizes = mean_sizes()
    assert len(sizes) == len(CLASS_CATALOG)
    for got, cls in zip(sizes, CLASS_CATALOG):
        assert got == cls.size_mean


def test_object_class_validation():
    with pytest.raises(ValueError):
        ObjectClass(name="flat", color=(1, 0, 0), size_mean=(1.0, 0.0, 1.0), size_jitter=0.1)
    with pytest.raises(ValueError):
        ObjectClass(name="wild", color=(1, 0, 0), size_mean=(1.0, 1.0, 1.0), size_jitter=1.0)


def test_scene_params_validation():
    with pytest.raises(ValueError):
        SceneParams(min_objects=5, max_objects=3)
    with pytest.raises(ValueError):
        SceneParams(orbit_radius=(3.0, 2.0))
    with pytest.raises(ValueError):
        SceneParams(frames=0)
    with pytest.raises(ValueError):
        SceneParams(placement_radius=0.0)


# --------------------------------------------------------------- generation


def test_generated_objects_stand_on_floor_inside_room():
    scene = generate_scene(SMALL, seed=3)
    assert SMALL.min_objects <= len(scene.objects) <= SMALL.max_objects
    assert len(scene.colors) == len(scene.objects)
    for box in scene.objects:
        assert box.center[1] == pytest.approx(box.size[1] / 2.0, abs=1e-12)
        assert abs(box.center[0]) <= SMALL.placement_radius
        assert abs(box.center[2]) <= SMALL.placement_radius
        # Upright: rotation is a pure yaw.
        assert box.rotation[1, 1] == pytest.approx(1.0, abs=1e-12)
        assert 0 <= box.class_id < len(CLASS_CATALOG)


def test_generated_objects_barely_overlap():
    for seed in range(5):
        scene = generate_scene(SMALL, seed=seed)
        boxes = scene.objects
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                assert box_iou3d(boxes[i], boxes[j]) < SMALL.max_pair_iou


def test_generation_deterministic_per_seed():
    a = generate_scene(SMALL, seed=11)
    b = generate_scene(SMALL, seed=11)
    c = generate_scene(SMALL, seed=12)
    for x, y in zip(a.objects, b.objects):
        np.testing.assert_array_equal(x.center, y.center)
        np.testing.assert_array_equal(x.rotation, y.rotation)
    for x, y in zip(a.trajectory, b.trajectory):
        np.testing.assert_array_equal(
            x.world_from_camera.translation, y.world_from_camera.translation
        )
    assert (
        len(c.objects) != len(a.objects)
        or np.abs(c.objects[0].center - a.objects[0].center).max() > 1e-9
    )


def test_generation_runs_out_of_attempts():
    cramped = SceneParams(
        min_objects=10, max_objects=10, placement_radius=0.2,
        max_placement_attempts=30, frames=2,
    )
    with pytest.raises(GenerationError):
        generate_scene(cramped, seed=0)


def test_class_histogram_is_roughly_uniform():
    counts = np.zeros(len(CLASS_CATALOG))
    for seed in range(400):
        for box in generate_scene(SMALL, seed=seed).objects:
            counts[box.class_id] += 1
    total = counts.sum()
    p = 1.0 / len(CLASS_CATALOG)
    sigma = math.sqrt(total * p * (1.0 - p))
    assert np.abs(counts - total * p).max() < 3.0 * sigma


def test_trajectory_orbits_the_scene():
    scene = generate_scene(SMALL, seed=5)
    assert len(scene.trajectory) == SMALL.frames
    radii = [
        math.hypot(c.world_from_camera.translation[0], c.world_from_camera.translation[2])
        for c in scene.trajectory
    ]
    assert min(radii) >= SMALL.orbit_radius[0] - 1e-9
    assert max(radii) <= SMALL.orbit_radius[1] + 1e-9
    heights = {c.world_from_camera.translation[1] for c in scene.trajectory}
    assert len(heights) == 1


# ------------------------------------------------------------------ look-at


def test_look_at_points_camera_at_target():
    eye = (2.0, 1.5, -1.0)
    target = (0.0, 0.3, 0.0)
    pose = look_at_pose(eye, target)
    forward = np.asarray(target) - np.asarray(eye)
    forward /= np.linalg.norm(forward)
    np.testing.assert_allclose(pose.rotation[:, 2], forward, atol=1e-12)
    # The target lands on the optical axis: zero x/y in camera coordinates.
    local = pose.inverse().apply(np.asarray(target))
    assert abs(local[0]) < 1e-12 and abs(local[1]) < 1e-12 and local[2] > 0.0


def test_look_at_is_right_handed_with_y_down():
    pose = look_at_pose((3.0, 2.0, 0.5), (0.0, 0.0, 0.0))
    r = pose.rotation
    np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-12)
    assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)
    # Camera y points downward in the world for a roughly level camera.
    assert r[1, 1] < 0.0


def test_look_at_degenerate_directions_raise():
    with pytest.raises(ValueError):
        look_at_pose((1.0, 1.0, 1.0), (1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        look_at_pose((0.0, 5.0, 0.0), (0.0, 0.0, 0.0))


# ---------------------------------------------------------------- rendering


def test_render_empty_scene_is_background():
    cam = forward_camera()
    image, depth = render(manual_scene([], [], [cam]), cam)
    assert image.shape == (48, 64, 3) and image.dtype == np.uint8
    assert len(np.unique(image.reshape(-1, 3), axis=0)) == 1
    assert np.isinf(depth).all()


def test_render_depth_of_head_on_face_is_exact():
    # Rays have unit z in camera coordinates, so depth to the z = -0.5 face
    # of a unit box seen from z = -3 is exactly 2.5 wherever that face is hit.
    cam = forward_camera((0.0, 0.0, -3.0))
    scene = manual_scene([box_at((0.0, 0.0, 0.0))], [(1.0, 0.0, 0.0)], [cam])
    image, depth = render(scene, cam)
    hit = np.isfinite(depth)
    assert hit.any()
    assert np.all(depth[hit] == 2.5)
    # The camera-facing face is in the light's shadow: pure ambient shading.
    expected = np.round(255 * np.array([1.0, 0.0, 0.0]) * 0.45).astype(np.uint8)
    np.testing.assert_array_equal(image[24, 32], expected)


def test_render_depth_bounded_by_center_distance_plus_half_diagonal():
    scene = generate_scene(SMALL, seed=9)
    cam = scene.trajectory[0]
    _, depth = render(scene, cam)
    eye = cam.world_from_camera.translation
    bound = max(
        float(np.linalg.norm(box.center - eye)) + float(np.linalg.norm(box.size)) / 2.0
        for box in scene.objects
    )
    finite = depth[np.isfinite(depth)]
    assert finite.size > 0
    assert finite.max() <= bound + 1e-9


def test_render_occlusion_keeps_nearest_box():
    cam = forward_camera((0.0, 0.0, -3.0))
    near = box_at((0.0, 0.0, 0.0), size=(0.6, 0.6, 0.6))
    far = box_at((0.0, 0.0, 2.0), size=(2.0, 2.0, 0.5), class_id=1)
    scene = manual_scene([far, near], [(0.0, 0.0, 1.0), (1.0, 0.0, 0.0)], [cam])
    image, depth = render(scene, cam)
    # Center pixel: red near box in front of the blue wall.
    assert image[24, 32, 0] > 0 and image[24, 32, 2] == 0
    assert depth[24, 32] == pytest.approx(2.7, abs=1e-12)
    # Column 22 passes left of the near box (needs |dir_x| <= 0.3/2.7) but
    # still inside the wall's footprint (|dir_x| <= 1.0/4.75).
    assert image[24, 22, 2] > 0 and image[24, 22, 0] == 0
    assert depth[24, 22] == pytest.approx(4.75, abs=1e-12)


def test_render_is_deterministic():
    scene = generate_scene(SMALL, seed=2)
    a_img, a_depth = render(scene, scene.trajectory[3])
    b_img, b_depth = render(scene, scene.trajectory[3])
    np.testing.assert_array_equal(a_img, b_img)
    np.testing.assert_array_equal(a_depth, b_depth)


def test_unproject_inverts_projection_exactly():
    scene = generate_scene(SMALL, seed=4)
    cam = scene.trajectory[7]
    _, depth = render(scene, cam)
    points = unproject_depth(cam, depth)
    assert points.shape == (int(np.isfinite(depth).sum()), 3)
    uv, z = project(points, cam)
    rows, cols = np.nonzero(np.isfinite(depth))
    np.testing.assert_allclose(uv[:, 0], cols + 0.5, atol=1e-9)
    np.testing.assert_allclose(uv[:, 1], rows + 0.5, atol=1e-9)
    np.testing.assert_allclose(z, depth[rows, cols], atol=1e-9)


def test_unprojected_points_lie_on_box_surfaces():
    cam = forward_camera((0.0, 0.0, -3.0))
    box = box_at((0.2, -0.1, 0.0), yaw=0.4)
    scene = manual_scene([box], [(1.0, 1.0, 1.0)], [cam])
    _, depth = render(scene, cam)
    points = unproject_depth(cam, depth)
    local = np.abs((points - box.center) @ box.rotation)
    assert (local <= box.size / 2.0 + 1e-9).all()
    on_face = np.isclose(local, box.size / 2.0, atol=1e-9).any(axis=1)
    assert on_face.all()


# -------------------------------------------------------- keyframe selection


def _fixture_trajectory():
    """Motions chosen around the 0.1 m / 15 degree keyframe thresholds."""
    steps = [
        ((0.00, 0.0, 0.0), 0.0),   # 0: always selected
        ((0.05, 0.0, 0.0), 0.0),   # skipped: 0.05 m
        ((0.10, 0.0, 0.0), 0.0),   # skipped: exactly 0.1 m is not enough
        ((0.12, 0.0, 0.0), 0.0),   # 3: selected, 0.12 m
        ((0.12, 0.0, 0.0), 10.0),  # skipped: 10 degrees
        ((0.12, 0.0, 0.0), 16.0),  # 5: selected, 16 degrees
        ((0.13, 0.0, 0.0), 16.0),  # skipped: 0.01 m since last kept
        ((0.24, 0.0, 0.0), 16.0),  # 7: selected, 0.12 m
        ((0.24, 0.0, 0.0), 16.0),  # skipped: no motion
    ]
    cams = []
    for translation, yaw_deg in steps:
        pose = Pose(yaw_matrix(math.radians(yaw_deg)), np.asarray(translation))
        cams.append(
            CameraView(fx=10, fy=10, cx=4, cy=4, width=8, height=8, world_from_camera=pose)
        )
    return cams


def test_keyframe_selection_thresholds():
    cams = _fixture_trajectory()
    assert select_snippet_frames(cams, 1) == [(0,), (3,), (5,), (7,)]


def test_keyframe_grouping_drops_leftovers():
    cams = _fixture_trajectory()
    assert select_snippet_frames(cams, 3) == [(0, 3, 5)]
    assert select_snippet_frames(cams, 2) == [(0, 3), (5, 7)]
    assert select_snippet_frames(cams, 4) == [(0, 3, 5, 7)]
    assert select_snippet_frames(cams, 5) == []


def test_keyframe_selection_compares_to_last_kept_frame():
    # Two 0.06 m steps: neither clears the bar alone, their sum does.
    cams = []
    for x in (0.0, 0.06, 0.12):
        pose = Pose(np.eye(3), np.array([x, 0.0, 0.0]))
        cams.append(
            CameraView(fx=10, fy=10, cx=4, cy=4, width=8, height=8, world_from_camera=pose)
        )
    assert select_snippet_frames(cams, 1) == [(0,), (2,)]


def test_keyframe_selection_validates_arguments():
    cams = _fixture_trajectory()
    with pytest.raises(ValueError):
        select_snippet_frames([], 3)
    with pytest.raises(ValueError):
        select_snippet_frames(cams, 0)


# --------------------------------------------------------- visibility filter


def test_border_fraction_full_view_is_one():
    cam = forward_camera((0.0, 0.0, -3.0))
    assert projected_border_fraction(box_at((0.0, 0.0, 0.0), size=(0.5, 0.5, 0.5)), cam) == (
        pytest.approx(1.0, abs=1e-12)
    )


def test_border_fraction_constructed_forty_percent():
    # Unit-depth box ahead of the camera whose hull is [8, 28] x [1, 11] in a
    # 16 x 12 image: the visible strip is [8, 16], so the fraction is 0.4.
    cam = forward_camera((0.0, 0.0, 0.0), width=16, height=12, focal=80.0)
    box = box_at((0.5, 0.0, 4.5), size=(1.0, 0.5, 1.0))
    assert projected_border_fraction(box, cam) == pytest.approx(0.4, abs=1e-12)


def test_border_fraction_behind_camera_is_zero():
    cam = forward_camera((0.0, 0.0, 0.0))
    assert projected_border_fraction(box_at((0.0, 0.0, -5.0)), cam) == 0.0


def test_border_fraction_clips_partially_behind_boxes():
    # Box straddling the camera plane: near-plane clipping must still give a
    # hull instead of projecting corners with negative depth.
    cam = forward_camera((0.0, 0.0, 0.0))
    frac = projected_border_fraction(box_at((0.0, 0.0, 0.2), size=(0.2, 0.2, 1.0)), cam)
    assert 0.0 <= frac <= 1.0


def test_filter_config_scales_reference_point_count():
    cfg = FilterConfig()
    assert cfg.resolved_min_points(320, 240) == 100
    assert cfg.resolved_min_points(64, 48) == 4
    assert cfg.resolved_min_points(8, 8) == 1
    assert FilterConfig(min_interior_points=7).resolved_min_points(64, 48) == 7
    with pytest.raises(ValueError):
        FilterConfig(border_threshold=1.5)
    with pytest.raises(ValueError):
        FilterConfig(min_interior_points=-1)


def _snippet_views(objects, colors, cameras):
    scene = manual_scene(objects, colors, cameras)
    rendered = [render(scene, cam) for cam in cameras]
    return [depth for _, depth in rendered]


def test_filter_keeps_visible_removes_out_of_frame():
    cam = forward_camera((0.0, 0.0, -3.0))
    visible = box_at((0.0, 0.0, 0.0), size=(0.8, 0.8, 0.8))
    behind = box_at((0.0, 0.0, -6.0), size=(0.8, 0.8, 0.8), class_id=1)
    objects = [visible, behind]
    depths = _snippet_views(objects, [(1, 0, 0), (0, 1, 0)], [cam])
    kept = filter_visible_gt(objects, [cam], depths, FilterConfig())
    assert kept == [visible]


def test_filter_removes_border_fraction_below_half():
    cam = forward_camera((0.0, 0.0, 0.0), width=16, height=12, focal=80.0)
    mostly_outside = box_at((0.5, 0.0, 4.5), size=(1.0, 0.5, 1.0))
    depths = _snippet_views([mostly_outside], [(1, 0, 0)], [cam])
    cfg = FilterConfig(min_interior_points=0)
    assert filter_visible_gt([mostly_outside], [cam], depths, cfg) == []


def test_filter_border_fraction_uses_best_view():
    # Out of frame in the first view, centered in the second: kept.
    away = forward_camera((10.0, 0.0, -3.0))
    toward = forward_camera((0.0, 0.0, -3.0))
    box = box_at((0.0, 0.0, 0.0), size=(0.8, 0.8, 0.8))
    depths = _snippet_views([box], [(1, 0, 0)], [away, toward])
    kept = filter_visible_gt([box], [away, toward], depths, FilterConfig())
    assert kept == [box]


def test_filter_removes_fully_occluded_box():
    cam = forward_camera((0.0, 0.0, -3.0))
    wall = box_at((0.0, 0.0, 0.0), size=(2.5, 2.0, 0.5))
    hidden = box_at((0.0, 0.0, 2.0), size=(0.5, 0.5, 0.5), class_id=1)
    objects = [wall, hidden]
    depths = _snippet_views(objects, [(1, 0, 0), (0, 1, 0)], [cam])
    kept = filter_visible_gt(objects, [cam], depths, FilterConfig())
    assert kept == [wall]
    # The hull of the hidden box is comfortably inside the image; only the
    # interior-point rule removes it.
    assert projected_border_fraction(hidden, cam) > 0.9
    relaxed = FilterConfig(min_interior_points=0)
    assert filter_visible_gt(objects, [cam], depths, relaxed) == objects


def test_filter_point_count_pools_over_views():
    # Opposing cameras each see a few front-face pixels; only the pooled
    # count clears a cutoff above either single view's contribution.
    cam_a = forward_camera((0.0, 0.0, -3.0), width=16, height=12, focal=8.0)
    pose_b = look_at_pose((0.0, 0.0, 3.0), (0.0, 0.0, 0.0))
    cam_b = CameraView(fx=8.0, fy=8.0, cx=8.0, cy=6.0, width=16, height=12,
                       world_from_camera=pose_b)
    box = box_at((0.0, 0.0, 0.0), size=(0.7, 0.35, 0.7))
    depths = _snippet_views([box], [(1, 0, 0)], [cam_a, cam_b])
    counts = [int(np.isfinite(d).sum()) for d in depths]
    assert min(counts) > 0
    total = sum(counts)
    assert total > max(counts)
    pooled = FilterConfig(min_interior_points=total)
    assert filter_visible_gt([box], [cam_a, cam_b], depths, pooled) == [box]
    strict = FilterConfig(min_interior_points=total + 1)
    assert filter_visible_gt([box], [cam_a, cam_b], depths, strict) == []


def test_filter_validates_inputs():
    cam = forward_camera()
    with pytest.raises(ValueError):
        filter_visible_gt([], [cam], [], FilterConfig())


# --------------------------------------------------------- snippet extraction


def test_extract_reframes_to_middle_camera():
    scene = generate_scene(SMALL, seed=6)
    snippets = extract_snippets(scene, 3, scene_id=6)
    assert len(snippets) == len(select_snippet_frames(scene.trajectory, 3))
    for snippet in snippets:
        assert len(snippet.cameras) == len(snippet.images) == 3
        middle = snippet.cameras[1].world_from_camera
        np.testing.assert_allclose(middle.rotation, np.eye(3), atol=1e-12)
        np.testing.assert_allclose(middle.translation, np.zeros(3), atol=1e-12)


def test_extract_camera_poses_compose_back_to_world():
    scene = generate_scene(SMALL, seed=6)
    groups = select_snippet_frames(scene.trajectory, 3)
    snippets = extract_snippets(scene, 3, scene_id=6)
    for group, snippet in zip(groups, snippets):
        for frame_index, cam in zip(group, snippet.cameras):
            world = snippet.world_from_snippet.compose(cam.world_from_camera)
            expected = scene.trajectory[frame_index].world_from_camera
            np.testing.assert_allclose(world.rotation, expected.rotation, atol=1e-9)
            np.testing.assert_allclose(world.translation, expected.translation, atol=1e-9)


def test_extract_boxes_round_trip_to_world_objects():
    scene = generate_scene(SMALL, seed=8)
    snippets = extract_snippets(scene, 3, scene_id=8)
    originals = {tuple(np.round(box.center, 9)): box for box in scene.objects}
    assert any(snippet.boxes for snippet in snippets)
    for snippet in snippets:
        for box in snippet.boxes:
            world_center = snippet.world_from_snippet.apply(box.center)
            key = tuple(np.round(world_center, 9))
            assert key in originals
            source = originals[key]
            assert box.class_id == source.class_id
            np.testing.assert_allclose(box.size, source.size, atol=1e-9)
            back = snippet.world_from_snippet.rotation @ box.rotation
            np.testing.assert_allclose(back, source.rotation, atol=1e-9)


def test_extract_keep_depths_flag():
    scene = generate_scene(SMALL, seed=6)
    with_depths = extract_snippets(scene, 3, scene_id=0, keep_depths=True)
    without = extract_snippets(scene, 3, scene_id=0)
    assert all(s.depths is not None and len(s.depths) == 3 for s in with_depths)
    assert all(s.depths is None for s in without)


def test_snippet_inputs_scales_to_unit_range():
    scene = generate_scene(SMALL, seed=6)
    snippet = extract_snippets(scene, 3, scene_id=0)[0]
    images, cams = snippet_inputs(snippet)
    assert len(images) == len(cams) == 3
    for image, raw in zip(images, snippet.images):
        assert image.dtype == np.float64
        assert image.min() >= 0.0 and image.max() <= 1.0
        np.testing.assert_allclose(image * 255.0, raw, atol=1e-9)


def test_snippet_validation():
    cam = forward_camera()
    pose = Pose.identity()
    image = np.zeros((48, 64, 3), dtype=np.uint8)
    with pytest.raises(ValueError):
        Snippet(
            scene_id=0, snippet_id=0, world_from_snippet=pose,
            cameras=(cam, cam), images=(image,), boxes=(),
        )
    with pytest.raises(ValueError):
        Snippet(
            scene_id=0, snippet_id=0, world_from_snippet=pose,
            cameras=(cam,), images=(image,), boxes=(), depths=(),
        )


# ------------------------------------------------------------------ datasets


def test_dataset_round_trip_is_lossless(tmp_path):
    dataset = build_dataset(SMALL, seeds=[21, 22], views=3, keep_depths=True)
    save_dataset(tmp_path, dataset, save_depths=True)
    loaded = load_dataset(tmp_path)
    assert len(loaded.scenes) == 2
    for original, back in zip(dataset.scenes, loaded.scenes):
        assert back.scene_id == original.scene_id
        for a, b in zip(original.objects, back.objects):
            np.testing.assert_array_equal(a.center, b.center)
            np.testing.assert_array_equal(a.rotation, b.rotation)
        for sa, sb in zip(original.snippets, back.snippets):
            assert sb.snippet_id == sa.snippet_id
            np.testing.assert_array_equal(
                sa.world_from_snippet.rotation, sb.world_from_snippet.rotation
            )
            np.testing.assert_array_equal(
                sa.world_from_snippet.translation, sb.world_from_snippet.translation
            )
            for ia, ib in zip(sa.images, sb.images):
                np.testing.assert_array_equal(ia, ib)
            for da, db in zip(sa.depths, sb.depths):
                np.testing.assert_array_equal(da, db)
            for ca, cb in zip(sa.cameras, sb.cameras):
                assert (ca.fx, ca.fy, ca.cx, ca.cy) == (cb.fx, cb.fy, cb.cx, cb.cy)
                np.testing.assert_array_equal(
                    ca.world_from_camera.rotation, cb.world_from_camera.rotation
                )
            for ba, bb in zip(sa.boxes, sb.boxes):
                np.testing.assert_array_equal(ba.center, bb.center)
                np.testing.assert_array_equal(ba.size, bb.size)
                np.testing.assert_array_equal(ba.rotation, bb.rotation)
                assert ba.class_id == bb.class_id


def test_dataset_save_without_depths_loads_none(tmp_path):
    dataset = build_dataset(SMALL, seeds=[31], views=3)
    save_dataset(tmp_path, dataset)
    loaded = load_dataset(tmp_path)
    assert all(s.depths is None for s in loaded.all_snippets())
    assert not (tmp_path / "depths").exists()


def test_dataset_images_referenced_exactly_once(tmp_path):
    dataset = build_dataset(SMALL, seeds=[21, 22], views=3)
    save_dataset(tmp_path, dataset)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    referenced = [
        rel
        for scene in manifest["scenes"]
        for snippet in scene["snippets"]
        for rel in snippet["images"]
    ]
    assert len(referenced) == len(set(referenced))
    on_disk = {f"images/{p.name}" for p in (tmp_path / "images").glob("*.png")}
    assert set(referenced) == on_disk


def test_load_missing_manifest_fails(tmp_path):
    with pytest.raises(DataFormatError, match="manifest.json"):
        load_dataset(tmp_path)


def test_load_truncated_manifest_fails(tmp_path):
    dataset = build_dataset(SMALL, seeds=[21], views=3)
    save_dataset(tmp_path, dataset)
    text = (tmp_path / "manifest.json").read_text()
    (tmp_path / "manifest.json").write_text(text[: len(text) // 2])
    with pytest.raises(DataFormatError, match="manifest.json"):
        load_dataset(tmp_path)


def test_load_rejects_unknown_format_version(tmp_path):
    dataset = build_dataset(SMALL, seeds=[21], views=3)
    save_dataset(tmp_path, dataset)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    manifest["format_version"] = 999
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(DataFormatError, match="format_version"):
        load_dataset(tmp_path)


def test_load_rejects_non_object_manifest(tmp_path):
    (tmp_path / "manifest.json").write_text("[1, 2, 3]")
    with pytest.raises(DataFormatError, match="object"):
        load_dataset(tmp_path)


def test_load_missing_image_file_fails(tmp_path):
    dataset = build_dataset(SMALL, seeds=[21], views=3)
    save_dataset(tmp_path, dataset)
    victim = next((tmp_path / "images").glob("*.png"))
    victim.unlink()
    with pytest.raises(DataFormatError):
        load_dataset(tmp_path)


def test_build_dataset_snippet_bookkeeping():
    dataset = build_dataset(SMALL, seeds=[41, 42, 43], views=3)
    assert [scene.scene_id for scene in dataset.scenes] == [0, 1, 2]
    snippets = dataset.all_snippets()
    assert len(snippets) == sum(len(s.snippets) for s in dataset.scenes)
    for scene in dataset.scenes:
        assert [s.snippet_id for s in scene.snippets] == list(range(len(scene.snippets)))
        assert all(s.scene_id == scene.scene_id for s in scene.snippets)
