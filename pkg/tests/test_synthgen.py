import math

import numpy as np
import pytest

import oracles
from ora.planefit import Plane
from ora.synthgen import (
    BACKGROUND,
    FIRST_OBJECT,
    ROAD,
    BoxShape,
    CompositeShape,
    CylinderShape,
    GroundTruth,
    LidarSpec,
    ObjectSpec,
    RoadSpec,
    SceneSpec,
    first_hits,
    generate,
    points_in_polygon,
    random_scene_spec,
    render_camera_image,
    scenario_suite,
    shape_from_dict,
)
from ora.synthgen.suite import STRAIGHT_ROAD

SMALL_LIDAR = LidarSpec(channels=16, azimuth_resolution_deg=1.0, dropout_rate=0.0)


def random_rays(n, seed):
    rng = np.random.default_rng(seed)
    origins = rng.uniform(-3, 3, (n, 3)) + [0, 0, 2]
    dirs = rng.normal(size=(n, 3))
    return origins, dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


@pytest.mark.parametrize("seed", range(3))
def test_box_intersection_matches_face_oracle(seed):
    rng = np.random.default_rng(seed)
    shape = BoxShape(tuple(rng.uniform(-2, 2, 3)), tuple(rng.uniform(0.5, 3, 3)), rng.uniform(-3, 3))
    origins, dirs = random_rays(500, seed)
    got = shape.intersect(origins, dirs)
    expect = [oracles.ray_box_faces(o, d, shape.center, shape.dims, shape.yaw) for o, d in zip(origins, dirs)]
    assert np.allclose(got, expect, rtol=1e-9, atol=1e-9)
    assert np.isfinite(got).any() and np.isinf(got).any()


def test_axis_parallel_rays_miss_outside_slabs():
    shape = BoxShape((5.0, 3.0, 1.0), (2.0, 2.0, 2.0))
    origins = np.array([[0.0, 0.0, 1.0], [0.0, 3.0, 1.0]])
    dirs = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    t = shape.intersect(origins, dirs)
    assert np.isinf(t[0]) and t[1] == pytest.approx(4.0)


def test_cylinder_hits_lie_on_surface():
    cyl = CylinderShape((1.0, -1.0, 1.0), 0.5, 2.0)
    origins, dirs = random_rays(2000, 5)
    t = cyl.intersect(origins, dirs)
    hit = np.isfinite(t)
    assert hit.sum() > 50
    p = origins[hit] + dirs[hit] * t[hit, None]
    radial = np.hypot(p[:, 0] - 1.0, p[:, 1] + 1.0)
    on_side = np.isclose(radial, 0.5, atol=1e-9) & (np.abs(p[:, 2] - 1.0) <= 1.0 + 1e-9)
    on_cap = np.isclose(np.abs(p[:, 2] - 1.0), 1.0, atol=1e-9) & (radial <= 0.5 + 1e-9)
    assert np.all(on_side | on_cap)
    # Just before the hit the ray is still outside (or the origin is inside).
    q = origins[hit] + dirs[hit] * (t[hit, None] - 1e-6)
    outside = (np.hypot(q[:, 0] - 1.0, q[:, 1] + 1.0) > 0.5) | (np.abs(q[:, 2] - 1.0) > 1.0)
    o = origins[hit]
    origin_inside = (np.hypot(o[:, 0] - 1.0, o[:, 1] + 1.0) <= 0.5) & (np.abs(o[:, 2] - 1.0) <= 1.0)
    assert np.all(outside | origin_inside)


def test_first_hits_against_oracle():
    plane = RoadSpec(STRAIGHT_ROAD, pitch_deg=2.0).plane()
    shapes = [BoxShape((6.0, 0.0, 1.0), (1.0, 1.0, 2.0)), BoxShape((6.0, 2.0, 0.5), (1.0, 1.0, 1.0), 0.4)]
    origins, dirs = random_rays(400, 9)
    t, code = first_hits(origins, dirs, plane, shapes)
    for i, (o, d) in enumerate(zip(origins, dirs)):
        cands = [oracles.ray_ground(o, d, plane.normal, plane.offset)]
        cands += [oracles.ray_box_faces(o, d, s.center, s.dims, s.yaw) for s in shapes]
        best = int(np.argmin(cands))
        if math.isinf(cands[best]):
            assert code[i] == -1
        else:
            assert t[i] == pytest.approx(cands[best], abs=1e-9)
            assert code[i] == (0 if best == 0 else FIRST_OBJECT + best - 1)


def test_points_in_polygon_concave():
    poly = np.array([(0, 0), (4, 0), (4, 4), (2, 1), (0, 4)], float)
    got = points_in_polygon([(1, 0.5), (2, 3), (3.5, 3), (5, 1)], poly)
    assert got.tolist() == [True, False, True, False]


def simple_spec(**kw):
    base = dict(name="s", road=RoadSpec(STRAIGHT_ROAD),
                anomalies=(ObjectSpec(BoxShape((8.0, 1.0, 0.5), (1.0, 1.0, 1.0)), on_road=True),),
                lidar=SMALL_LIDAR, rng_seed=1)
    base.update(kw)
    return SceneSpec(**base)


def test_generation_is_deterministic_and_seeded():
    spec = simple_spec(lidar=LidarSpec(channels=16, azimuth_resolution_deg=1.0, range_noise_m=0.02))
    a, b = generate(spec), generate(spec)
    assert np.array_equal(a[0].xyz, b[0].xyz) and np.array_equal(a[1].bitmap, b[1].bitmap)
    assert np.array_equal(a[3].labels, b[3].labels)
    c = generate(simple_spec(lidar=spec.lidar, rng_seed=2))
    assert not np.array_equal(a[0].xyz, c[0].xyz)


def test_labels_match_geometry():
    cloud, _, _, truth = generate(simple_spec())
    assert truth.labels.shape == (len(cloud),)
    plane = truth.road_plane
    ground = truth.labels < FIRST_OBJECT
    assert np.all(np.abs(plane.signed_distance(cloud.xyz[ground])) < 1e-5)
    in_poly = points_in_polygon(cloud.xyz[:, :2], truth.road_polygon)
    assert np.array_equal(truth.labels[ground] == ROAD, in_poly[ground])
    assert np.any(truth.labels == BACKGROUND)
    obj = truth.objects[0]
    pts = cloud.xyz[truth.labels == obj.id]
    assert obj.lidar_points == len(pts) > 0
    assert obj.shape.box().contains_points(pts).all()


def test_road_mask_agrees_with_road_points():
    cloud, mask, cam, truth = generate(simple_spec(lidar=LidarSpec(dropout_rate=0.0)))
    road = truth.labels == ROAD
    uvd, valid = cam.project_many(cloud.xyz)
    px = np.floor(uvd[:, :2] + 0.5)
    inside = valid & (px[:, 0] >= 0) & (px[:, 0] < cam.width) & (px[:, 1] >= 0) & (px[:, 1] < cam.height)
    sel = inside & road
    hits = mask.bitmap[px[sel, 1].astype(int), px[sel, 0].astype(int)]
    # Pixel quantization at the polygon and object edges aside, road points land on road pixels.
    assert hits.mean() > 0.97
    bg = inside & (truth.labels == BACKGROUND)
    assert mask.bitmap[px[bg, 1].astype(int), px[bg, 0].astype(int)].mean() < 0.05


def test_validation_errors():
    below = ObjectSpec(BoxShape((8.0, 0.0, 0.2), (1.0, 1.0, 1.0)), on_road=True)
    with pytest.raises(ValueError, match="invalid pose"):
        generate(simple_spec(anomalies=(below,)))
    with pytest.raises(ValueError, match="tilt"):
        simple_spec(road=RoadSpec(STRAIGHT_ROAD, pitch_deg=6.0)).validate()
    with pytest.raises(ValueError, match="class_label"):
        simple_spec(known_objects=(ObjectSpec(BoxShape((8, 0, 1), (1, 1, 2))),)).validate()
    off = ObjectSpec(BoxShape((8.0, 9.0, 0.5), (1.0, 1.0, 1.0)), on_road=True)
    with pytest.raises(ValueError, match="outside the road polygon"):
        simple_spec(anomalies=(off,)).validate()
    with pytest.raises(ValueError, match="unknown lidar fields"):
        LidarSpec.from_dict({"beams": 3})


def test_tilted_road_plane():
    plane = RoadSpec(STRAIGHT_ROAD, pitch_deg=3.0, height=0.1).plane()
    assert plane.signed_distance([[10.0, 0.0, 0.1 + 10 * math.tan(math.radians(3))]])[0] == pytest.approx(0.0)
    assert plane.normal[2] > 0


def test_spec_and_truth_round_trip():
    spec = scenario_suite()[5]
    assert SceneSpec.from_dict(spec.to_dict()) == spec
    shape = spec.anomalies[0].shape
    assert isinstance(shape, CompositeShape) and shape_from_dict(shape.to_dict()) == shape
    _, _, _, truth = generate(simple_spec())
    back = GroundTruth.from_dict(truth.to_dict())
    assert np.array_equal(back.labels, truth.labels) and back.objects == truth.objects


def test_suite_tags_and_visibility():
    suite = scenario_suite()
    assert [s.tag for s in suite] == list("abcdefgh")
    assert [s.rng_seed for s in scenario_suite(10)] == list(range(10, 18))
    for spec in suite:
        _, _, _, truth = generate(spec)
        for obj in truth.objects:
            assert obj.lidar_points >= 30, (spec.name, obj.id)
        if spec.tag == "c":
            assert not truth.anomalies()[0].on_road
        if spec.tag == "d":
            # Above a nadir camera: behind the image plane, so no pixels.
            assert truth.anomalies()[0].pixel_area == 0
        elif spec.tag != "g":
            assert all(o.pixel_area > 0 for o in truth.objects)


def test_random_scene_specs():
    a, b = random_scene_spec(3), random_scene_spec(3)
    assert a == b and a != random_scene_spec(4)
    for seed in range(10):
        spec = random_scene_spec(seed)
        spec.validate()
        assert len(spec.anomalies) == 1
        # Footprints of all objects stay 2 m apart.
        boxes = [o.shape.bounds() for _, o in spec.objects()]
        for i in range(len(boxes)):
            for j in range(i):
                (l1, h1), (l2, h2) = boxes[i], boxes[j]
                assert np.any(l1[:2] > h2[:2] + 2.0 - 1e-9) or np.any(l2[:2] > h1[:2] + 2.0 - 1e-9)


def test_camera_image_colors():
    spec = simple_spec()
    _, mask, cam, truth = generate(spec)
    img = render_camera_image(cam, truth)
    assert img.shape == (cam.height, cam.width, 3) and img.dtype == np.uint8
    assert np.all(img[mask.bitmap] == (90, 90, 90))
    assert np.all(img[0, 0] == (150, 185, 215))  # sky at the top-left corner


def test_plane_offset_sign_convention():
    plane = Plane.from_normal((0, 0, 1), -0.5)
    assert plane.signed_distance([[0, 0, 0.5]])[0] == pytest.approx(0.0)
