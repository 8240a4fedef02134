import numpy as np
import pytest

from otflow.errors import NonNormalizedMeasure, ParseError, TriangleViolation, ZeroMass
from otflow.fields import DensityField, ScalarField, load_field, preset_field, save_field
from otflow.mmspace import gen_box_grid, gen_circle_grid, load_space, make_space, save_space
from otflow.rng import SplitMix64

from oracles import random_euclidean_space


def test_make_space_two_points():
    s = make_space([[0, 1], [1, 0]], [0.5, 0.5])
    assert s.n == 2
    assert s.dist[0, 1] == 1.0
    assert not s.has_geodesic_hints


def test_make_space_rejects_unnormalized_measure():
    with pytest.raises(NonNormalizedMeasure):
        make_space([[0, 1], [1, 0]], [0.5, 0.4])


def test_make_space_rejects_triangle_violation():
    with pytest.raises(TriangleViolation) as info:
        make_space([[0, 1, 3], [1, 0, 1], [3, 1, 0]], [1 / 3, 1 / 3, 1 / 3])
    assert info.value.triple == (0, 2, 1)


def test_make_space_rejects_zero_mass():
    with pytest.raises(ZeroMass):
        make_space([[0, 1, 1], [1, 0, 1], [1, 1, 0]], [0.5, 0.5, 0.0])


def test_make_space_rejects_asymmetry():
    from otflow.errors import AsymmetricDistance

    with pytest.raises(AsymmetricDistance):
        make_space([[0, 1], [2, 0]], [0.5, 0.5])


def test_circle_grid_distances():
    s = gen_circle_grid(4)
    assert s.dist[0, 1] == 0.25
    assert s.dist[0, 2] == 0.5
    assert s.mesh == 0.25


def test_circle_grid_antipodal_hint_through_lower_index():
    s = gen_circle_grid(4)
    hint = s.geodesic_hint(0, 2)
    assert 1 in hint or 3 in hint
    assert hint == (0, 1, 2)  # tie resolved through the lower interior index


def test_circle_grid_uniform_measure():
    s = gen_circle_grid(3)
    assert np.allclose(s.measure, 1 / 3)
    assert abs(s.measure.sum() - 1.0) <= 1e-12


def test_circle_distances_match_bruteforce_arcs():
    for n in (5, 8, 16):
        s = gen_circle_grid(n)
        for i in range(n):
            for j in range(n):
                arc = min(abs(i - j), n - abs(i - j)) / n
                assert s.dist[i, j] == arc


def test_box_grid_linf_and_euclidean():
    b = gen_box_grid(2, "linf")
    assert b.dist[0, 3] == 1.0  # (0,0) -> (1,1)
    e = gen_box_grid(2, "euclidean")
    assert e.dist[0, 3] == pytest.approx(np.sqrt(2), abs=0)
    b3 = gen_box_grid(3, "linf")
    # point (0,0) has index 0; point (x=0.5, y=1) is row 2, col 1 -> index 7
    assert b3.dist[0, 7] == 1.0


def test_box_distances_match_norms():
    # recompute from the grid coordinates themselves (the definition is the
    # chosen norm of the coordinate difference)
    for norm in ("euclidean", "linf"):
        b = gen_box_grid(4, norm)
        h = b.mesh
        for i in range(b.n):
            ri, ci = divmod(i, 4)
            for j in range(b.n):
                rj, cj = divmod(j, 4)
                dx = abs(ci * h - cj * h)
                dy = abs(ri * h - rj * h)
                want = max(dx, dy) if norm == "linf" else np.hypot(dx, dy)
                assert b.dist[i, j] == want


def test_triangle_inequality_exact_on_generators():
    for s in (gen_circle_grid(17), gen_box_grid(4, "euclidean"), gen_box_grid(4, "linf")):
        d = s.dist
        tol = 1e-12 * max(1.0, d.max())
        for j in range(s.n):
            assert np.all(d <= d[:, j, None] + d[None, j, :] + tol)


def test_circle_hint_midpoints_near_half_distance():
    # the hint point closest to the middle is within h/2 of d/2 (exact for
    # even arcs, h/2 for odd arcs)
    s = gen_circle_grid(16)
    h = s.mesh
    for (i, j) in s.hint_pairs():
        path = s.geodesic_hint(i, j)
        mid = path[len(path) // 2]
        assert abs(s.dist[i, mid] - s.dist[i, j] / 2) <= h / 2 + 1e-15


def test_geodesic_hint_detour_band():
    for s in (gen_circle_grid(12), gen_box_grid(4, "euclidean"), gen_box_grid(4, "linf")):
        h = s.mesh
        for (i, j) in s.hint_pairs():
            path = s.geodesic_hint(i, j)
            bound = s.dist[i, j] * (1 + h) + 1e-12
            for p, q in zip(path[:-1], path[1:]):
                assert s.dist[i, p] + s.dist[p, q] + s.dist[q, j] <= bound


def test_linf_staircase_hints_are_exact_geodesics():
    b = gen_box_grid(5, "linf")
    for (i, j) in b.hint_pairs():
        path = b.geodesic_hint(i, j)
        length = sum(b.dist[p, q] for p, q in zip(path[:-1], path[1:]))
        assert length == pytest.approx(b.dist[i, j], abs=1e-12)


def test_save_load_roundtrip_bit_exact(tmp_path):
    s = gen_circle_grid(8)
    path = tmp_path / "c8.space"
    save_space(s, path)
    s2 = load_space(path)
    assert s == s2
    assert np.array_equal(s.dist, s2.dist)
    assert np.array_equal(s.measure, s2.measure)
    assert s2.geodesic_hint(0, 3) == s.geodesic_hint(0, 3)


def test_save_load_random_space_bit_exact(tmp_path):
    rng = SplitMix64(5)
    s = random_euclidean_space(rng, 11)
    path = tmp_path / "r.space"
    save_space(s, path)
    s2 = load_space(path)
    assert np.array_equal(s.dist, s2.dist)
    assert np.array_equal(s.measure, s2.measure)


def test_load_rejects_short_dist_block(tmp_path):
    path = tmp_path / "bad.space"
    path.write_text("n 3\ndist\n0 1 1\n1 0 1\nmeasure\n0.4\n0.3\n0.3\n")
    with pytest.raises(ParseError):
        load_space(path)


def test_load_rejects_missing_measure(tmp_path):
    path = tmp_path / "bad2.space"
    path.write_text("n 2\ndist\n0 1\n1 0\n")
    with pytest.raises(ParseError):
        load_space(path)


# -- fields -----------------------------------------------------------------


def test_preset_constant_density():
    s = gen_circle_grid(6)
    f = preset_field("constant", {}, s, density=True)
    assert np.allclose(f.values, 1.0)
    assert f.integral() == pytest.approx(1.0, abs=0)


def test_preset_cosine_mode_values():
    s = gen_circle_grid(4)
    f = preset_field("cosine_mode", {"k": 1}, s)
    assert np.allclose(f.values, [2, 1, 0, 1], atol=1e-15)


def test_preset_dirac_like():
    import math

    from otflow.transport import entropy

    s = gen_circle_grid(4)
    f = preset_field("dirac_like", {"at": 0}, s, density=True)
    assert np.allclose(f.values, [4, 0, 0, 0])
    assert entropy(f) == pytest.approx(math.log(4), abs=1e-12)
    assert entropy(f) == pytest.approx(1.386294, abs=1e-6)


def test_density_invariant_enforced():
    s = gen_circle_grid(4)
    with pytest.raises(ParseError):
        DensityField(s, [1.0, 1.0, 1.0, 0.5])
    with pytest.raises(ParseError):
        DensityField(s, [-0.5, 1.5, 1.5, 1.5])


def test_field_roundtrip(tmp_path):
    s = gen_circle_grid(5)
    f = preset_field("bump", {"center": 0.4, "width": 0.2}, s, density=True)
    path = tmp_path / "f.csv"
    save_field(f, path)
    g = load_field(path, s, density=True)
    assert np.array_equal(f.values, g.values)


def test_field_dimension_mismatch():
    from otflow.errors import DimensionMismatch

    s = gen_circle_grid(5)
    with pytest.raises(DimensionMismatch):
        ScalarField(s, np.zeros(4))
