import math

import numpy as np
import pytest

from dlopc import sdf
from dlopc.rod import RodParams, straight_state, arc_state
from dlopc.se3 import Pose


def make_scene(extra=None, shift=(0.0, 0.0, 0.0)):
    """Tent-style scene: 1.0 x 1.0 x 1.5 box resting on the ground."""
    sx, sy, sz = shift
    data = {
        "workspace": {"min": [-5 + sx, -5 + sy, -5 + sz], "max": [5 + sx, 5 + sy, 5 + sz]},
        "obstacles": [
            {"name": "box", "shape": "box", "half_extents": [0.5, 0.5, 0.75],
             "position": [0 + sx, 1 + sy, 0.75 + sz]},
            {"name": "ground", "shape": "halfspace", "normal": [0, 0, 1], "offset": 0.0 + sz},
        ] + (extra or []),
    }
    return sdf.scene_from_dict(data)


def tent_rod(z=2.0, y=2.0):
    params = RodParams(length=3.3528, segments=40, radius=0.0035, density=1792.89,
                       youngs_modulus=30e9, shear_modulus=10e9)
    state = straight_state(params, [-3.3528 / 2, y, z], [1, 0, 0])
    return params, state


class TestSdfEval:
    def test_sphere_exterior(self):
        scene = sdf.scene_from_dict({"obstacles": [
            {"name": "s", "shape": "sphere", "radius": 0.5, "position": [0, 0, 0]}]})
        d, g, name = sdf.sdf_eval(scene, [1, 0, 0])
        assert abs(d - 0.5) < 1e-12
        assert np.allclose(g, [1, 0, 0], atol=1e-9)
        assert name == "s"

    def test_box_on_ground_top_face(self):
        scene = make_scene()
        d, g, name = sdf.sdf_eval(scene, [0, 1, 2.0])
        assert abs(d - 0.5) < 1e-9
        assert name == "box"
        assert np.allclose(g, [0, 0, 1], atol=1e-5)

    def test_sphere_interior(self):
        scene = sdf.scene_from_dict({"obstacles": [
            {"name": "s", "shape": "sphere", "radius": 0.5, "position": [0, 0, 0]}]})
        d, _, _ = sdf.sdf_eval(scene, [0.2, 0, 0])
        assert abs(d - (-0.3)) < 1e-12

    def test_empty_scene(self):
        d, g, name = sdf.sdf_eval(sdf.Scene([]), [0, 0, 0])
        assert math.isinf(d) and name == "" and np.allclose(g, 0)

    def test_gradient_unit_norm_random_points(self):
        scene = make_scene(extra=[
            {"name": "cyl", "shape": "cylinder", "radius": 0.2, "half_length": 0.5,
             "position": [2, 0, 0.5], "orientation": [0.9238795, 0.3826834, 0, 0]},
            {"name": "cap", "shape": "capsule", "radius": 0.15, "half_length": 0.4,
             "position": [-2, 1, 1.0]},
        ])
        rng = np.random.default_rng(2)
        checked = 0
        for _ in range(300):
            p = rng.uniform([-4, -4, 0.05], [4, 4, 3.0])
            d, g, _ = sdf.sdf_eval(scene, p)
            if abs(d) < 1e-3:
                continue
            assert abs(np.linalg.norm(g) - 1.0) < 1e-6
            checked += 1
        assert checked > 200


class TestMinDistances:
    def test_rod_above_box(self):
        scene = make_scene()
        params, state = tent_rod(z=2.0, y=1.0)  # directly above the box top
        reports = sdf.min_distances(scene, state, params.radius, proximity=1.0)
        by_name = {r.obstacle: r for r in reports}
        assert "box" in by_name
        assert abs(by_name["box"].distance - (0.5 - params.radius)) < 1e-6

    def test_two_active_bodies_near_ground(self):
        # rod behind the box near the ground: box and ground both report
        scene = make_scene()
        params, state = tent_rod(z=0.3, y=1.8)
        reports = sdf.min_distances(scene, state, params.radius, proximity=0.5)
        names = {r.obstacle for r in reports}
        assert {"box", "ground"} <= names

    def test_zero_proximity_filters_everything(self):
        scene = make_scene()
        params, state = tent_rod(z=2.0, y=1.0)
        assert sdf.min_distances(scene, state, params.radius, proximity=0.0) == []

    def test_at_most_one_report_per_obstacle(self):
        scene = make_scene()
        params, state = tent_rod(z=0.3, y=1.8)
        reports = sdf.min_distances(scene, state, params.radius, proximity=10.0)
        names = [r.obstacle for r in reports]
        assert len(names) == len(set(names)) == len(scene.obstacles)

    def test_witness_points_consistent(self):
        scene = make_scene()
        params, state = tent_rod(z=1.9, y=1.2)
        for r in sdf.min_distances(scene, state, params.radius, proximity=5.0):
            if r.distance >= 0:
                gap = np.linalg.norm(r.point_on_rod - r.point_on_obstacle)
                assert abs(gap - abs(r.distance)) < 1e-6

    def test_brute_force_consistency(self):
        # dense sampling of each segment never beats the reported minimum
        scene = make_scene(extra=[
            {"name": "cap", "shape": "capsule", "radius": 0.15, "half_length": 0.4,
             "position": [0.4, 1.9, 0.8], "orientation": [0.707107, 0.707107, 0, 0]}])
        params = RodParams(length=3.3528, segments=40, radius=0.0035, density=1792.89,
                           youngs_modulus=30e9, shear_modulus=10e9)
        state = arc_state(params, [-1.2, 2.2, 0.6], [1.2, 1.6, 0.9], bulge="up")
        reports = sdf.min_distances(scene, state, params.radius, proximity=100.0)
        a, b = state.segment_endpoints()
        for rep in reports:
            m = [o.name for o in scene.obstacles].index(rep.obstacle)
            best = math.inf
            for i in range(params.segments):
                for t in np.linspace(0, 1, 64):
                    p = a[i] + (b[i] - a[i]) * t
                    from dlopc import _kernels as K
                    d = K._obstacle_sdf(scene.kinds[m], scene.oq[m], scene.ot[m],
                                        scene.par[m], p[0], p[1], p[2])
                    best = min(best, d - params.radius)
            assert best >= rep.distance - 1e-4

    def test_translation_invariance(self):
        shift = (1.7, -2.3, 0.9)
        scene0 = make_scene()
        scene1 = make_scene(shift=shift)
        params, state0 = tent_rod(z=1.9, y=1.4)
        state1 = state0.copy()
        state1.positions = state0.positions + np.asarray(shift)
        r0 = sdf.min_distances(scene0, state0, params.radius, proximity=10.0)
        r1 = sdf.min_distances(scene1, state1, params.radius, proximity=10.0)
        d0 = {r.obstacle: r.distance for r in r0}
        d1 = {r.obstacle: r.distance for r in r1}
        assert set(d0) == set(d1)
        for k in d0:
            assert abs(d0[k] - d1[k]) < 1e-9


class TestDetectContacts:
    def test_clear_rod_no_contacts(self):
        scene = make_scene()
        params, state = tent_rod(z=2.5, y=2.5)
        assert sdf.detect_contacts(scene, state, params.radius, margin=0.01) == []

    def test_ground_penetration(self):
        scene = make_scene()
        params = RodParams(length=1.0, segments=10, radius=0.005, density=1000,
                           youngs_modulus=1e8, shear_modulus=1e8)
        state = straight_state(params, [-0.5, -2.0, 0.004], [1, 0, 0])  # 1 mm into ground
        contacts = sdf.detect_contacts(scene, state, params.radius, margin=0.0)
        assert contacts
        for c in contacts:
            assert np.allclose(c.normal, [0, 0, 1], atol=1e-9)
            assert c.depth >= 0.001 - 1e-9

    def test_boundary_clearance_gives_zero_depth(self):
        scene = make_scene()
        params = RodParams(length=1.0, segments=10, radius=0.005, density=1000,
                           youngs_modulus=1e8, shear_modulus=1e8)
        margin = 0.02
        state = straight_state(params, [-0.5, -2.0, 0.005 + margin], [1, 0, 0])
        contacts = sdf.detect_contacts(scene, state, params.radius, margin=margin)
        assert contacts
        for c in contacts:
            assert abs(c.depth) < 1e-6


class TestSceneParsing:
    def test_unknown_shape_rejected(self):
        with pytest.raises(ValueError, match="unknown shape kind"):
            sdf.scene_from_dict({"obstacles": [{"name": "m", "shape": "mesh"}]})

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown obstacle keys"):
            sdf.scene_from_dict({"obstacles": [
                {"name": "b", "shape": "sphere", "radius": 1.0, "color": "red"}]})

    def test_duplicate_names_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            sdf.scene_from_dict({"obstacles": [
                {"name": "b", "shape": "sphere", "radius": 1.0},
                {"name": "b", "shape": "sphere", "radius": 2.0}]})

    def test_nonpositive_dimension_rejected(self):
        with pytest.raises(ValueError):
            sdf.scene_from_dict({"obstacles": [
                {"name": "b", "shape": "box", "half_extents": [1, 0, 1]}]})
