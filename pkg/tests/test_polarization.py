import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mplab import (
    EnergyFunctional,
    GridFunction,
    HalfSpace,
    HalfSpaceError,
    Nonlinearity,
    build_domain,
    h1_inner,
    polarize,
    polarize_domain,
    random_polarization_pass,
    schwarz_rearrange,
    symmetry_defect,
)
from mplab.polarization import brock_solynin_family, grid_halfspaces, l2_norm, reflection


def _naive_polarize(u, H):
    """Reference polarization by explicit coordinate lookup."""
    dom = u.domain
    lookup = {tuple(p): k for k, p in enumerate(dom.index)}
    out = np.empty(dom.m)
    for k, p in enumerate(dom.index):
        q = tuple(H.reflect(p[None, :])[0])
        mirror = u.values[lookup[q]] if q in lookup else 0.0
        if H.contains(p[None, :])[0]:
            out[k] = max(u.values[k], mirror)
        else:
            out[k] = min(u.values[k], mirror)
    return out


def test_parse_and_spec_roundtrip():
    h = 0.125
    assert HalfSpace.parse("x<=0.25", h) == HalfSpace("x", 4, False)
    assert HalfSpace.parse("y>=0", h) == HalfSpace("y", 0, True)
    assert HalfSpace.parse("d+<=0", h) == HalfSpace("d+", 0, False)
    assert HalfSpace.parse("d-  >= -0.375", h) == HalfSpace("d-", -3, True)
    for H in (HalfSpace("x", 3), HalfSpace("d+", -2, True)):
        assert HalfSpace.parse(H.spec(h), h) == H
    with pytest.raises(HalfSpaceError):
        HalfSpace.parse("x<=0.1", h)
    with pytest.raises(HalfSpaceError):
        HalfSpace.parse("z<=0", h)


def test_reflections_are_involutions_fixing_boundary():
    dom = build_domain("square", 9, 2.0)
    for H in grid_halfspaces(dom):
        img = H.reflect(dom.index)
        np.testing.assert_array_equal(H.reflect(img), dom.index)
        on = H.on_boundary(dom.index)
        np.testing.assert_array_equal(img[on], dom.index[on])
        R = reflection(dom, H)
        if R.symmetric:
            assert np.array_equal(R.perm[R.perm], np.arange(dom.m))


def test_symmetric_family_on_square():
    dom = build_domain("square", 9, 2.0)
    sym = grid_halfspaces(dom, symmetric_only=True)
    assert {(H.direction, H.level) for H in sym} == {("x", 0), ("y", 0), ("d+", 0), ("d-", 0)}
    assert len(sym) == 8


def test_1d_definition_example():
    dom = build_domain("interval", 5, 2.0)
    u = GridFunction(dom, [0.0, 0.0, 1.0])
    uH = polarize(u, HalfSpace("x", 0))
    np.testing.assert_array_equal(uH.values, [1.0, 0.0, 0.0])


def test_ordered_function_is_fixed(rng):
    dom = build_domain("square", 11, 2.0)
    H = HalfSpace("x", 0)
    u = GridFunction(dom, rng.random(dom.m))
    v = polarize(u, H)
    np.testing.assert_array_equal(polarize(v, H).values, v.values)


def test_matches_naive_reference(rng):
    for shape in ("interval", "square", "disk"):
        dom = build_domain(shape, 13, 2.0)
        for H in grid_halfspaces(dom, symmetric_only=True):
            u = GridFunction(dom, rng.standard_normal(dom.m))
            np.testing.assert_array_equal(polarize(u, H).values, _naive_polarize(u, H))


def test_zero_extension_for_off_center_halfspaces(rng):
    dom = build_domain("square", 11, 2.0)
    H = HalfSpace("x", 3)  # origin in the interior of H
    u = GridFunction(dom, rng.random(dom.m))
    np.testing.assert_array_equal(polarize(u, H).values, _naive_polarize(u, H))
    with pytest.raises(HalfSpaceError):
        polarize(u * -1.0, H)
    with pytest.raises(HalfSpaceError):
        polarize(u, HalfSpace("x", 3, upper=True))


def test_random_square_multiset_and_dirichlet(rng):
    dom = build_domain("square", 17, 2.0)
    for H in grid_halfspaces(dom, symmetric_only=True):
        u = GridFunction(dom, rng.standard_normal(dom.m))
        uH = polarize(u, H)
        np.testing.assert_array_equal(np.sort(uH.values), np.sort(u.values))
        assert h1_inner(uH, uH) <= h1_inner(u, u) * (1 + 1e-12)


def test_order_preservation_and_nonexpansive(rng):
    dom = build_domain("disk", 17, 2.0)
    for H in grid_halfspaces(dom, symmetric_only=True):
        u = GridFunction(dom, rng.standard_normal(dom.m))
        v = GridFunction(dom, u.values + rng.random(dom.m))
        uH, vH = polarize(u, H), polarize(v, H)
        assert np.all(uH.values <= vH.values)
        w = GridFunction(dom, rng.standard_normal(dom.m))
        assert l2_norm(uH - polarize(w, H)) <= l2_norm(u - w) * (1 + 1e-12)


def test_energy_monotone_under_polarization(rng):
    dom = build_domain("square", 13, 2.0)
    phi = EnergyFunctional(dom, Nonlinearity.power(4))
    family = grid_halfspaces(dom, symmetric_only=True)
    for k in range(1000):
        u = GridFunction(dom, rng.standard_normal(dom.m))
        H = family[k % len(family)]
        E = phi.energy(u)
        assert phi.energy(polarize(u, H)) <= E + 1e-12 * abs(E)


def test_incompatible_halfspace_rejected():
    dom = build_domain("interval", 9, 2.0)
    with pytest.raises(HalfSpaceError):
        polarize(GridFunction.zeros(dom), HalfSpace("y", 0))


# polarized domains --------------------------------------------------------------


def _ball(n, center, r2):
    c = (n - 1) // 2
    i, j = np.meshgrid(np.arange(n) - c, np.arange(n) - c, indexing="ij")
    return (i - center[0]) ** 2 + (j - center[1]) ** 2 <= r2


def test_symmetric_mask_unchanged():
    dom = build_domain("disk", 21, 2.0)
    for H in (HalfSpace("x", 0), HalfSpace("d-", 0, True), HalfSpace("y", 0)):
        np.testing.assert_array_equal(polarize_domain(dom.mask, H), dom.mask)


@pytest.mark.parametrize("H", [HalfSpace("x", 4), HalfSpace("y", 2), HalfSpace("d+", 3), HalfSpace("d-", -2, True)])
def test_ball_with_center_inside_halfspace_is_fixed(H):
    for center in [(0, 0), (-2, 1), (1, -3)]:
        p = np.array([center])
        if not H.contains(p)[0]:
            continue
        mask = _ball(33, center, 30)
        np.testing.assert_array_equal(polarize_domain(mask, H), mask)


def test_ball_with_center_outside_halfspace_moves():
    mask = _ball(33, (5, 0), 20)
    out = polarize_domain(mask, HalfSpace("x", 0))
    np.testing.assert_array_equal(out, _ball(33, (-5, 0), 20))


def test_halfspace_containing_mask_is_identity():
    mask = _ball(33, (-6, 0), 9)
    np.testing.assert_array_equal(polarize_domain(mask, HalfSpace("x", 0)), mask)


# rearrangement ------------------------------------------------------------------


def test_schwarz_examples(rng):
    dom = build_domain("square", 15, 2.0)
    u = GridFunction(dom, rng.random(dom.m))
    star = schwarz_rearrange(u)
    np.testing.assert_array_equal(schwarz_rearrange(star).values, star.values)
    const = GridFunction(dom, np.full(dom.m, 0.7))
    np.testing.assert_array_equal(schwarz_rearrange(const).values, const.values)
    np.testing.assert_array_equal(np.sort(star.values), np.sort(u.values))
    d2 = np.sum(dom.index**2, axis=1)
    order = np.lexsort((np.arange(dom.m), d2))
    assert np.all(np.diff(star.values[order]) <= 0)
    with pytest.raises(HalfSpaceError):
        schwarz_rearrange(u * -1.0)


def test_schwarz_fixed_by_origin_family(rng):
    for shape in ("square", "disk"):
        dom = build_domain(shape, 13, 2.0)
        star = schwarz_rearrange(GridFunction(dom, rng.random(dom.m)))
        for H in brock_solynin_family(dom):
            np.testing.assert_array_equal(polarize(star, H).values, star.values)


def test_schwarz_tie_break_orientation(rng):
    # central half-spaces on the other side swap tied nodes and move u*
    dom = build_domain("square", 9, 2.0)
    star = schwarz_rearrange(GridFunction(dom, rng.random(dom.m)))
    moved = polarize(star, HalfSpace("x", 0, upper=True))
    assert not np.array_equal(moved.values, star.values)
    np.testing.assert_array_equal(np.sort(moved.values), np.sort(star.values))


def test_random_pass_fixed_point_and_monotone(rng):
    dom = build_domain("square", 15, 2.0)
    u = GridFunction(dom, rng.random(dom.m))
    star = schwarz_rearrange(u)
    run = random_polarization_pass(star, 5, 100)
    np.testing.assert_array_equal(run.u.values, star.values)
    run = random_polarization_pass(u, 5, 200)
    assert np.all(np.diff(run.distances) <= 0)
    again = random_polarization_pass(u, 5, 200)
    np.testing.assert_array_equal(again.u.values, run.u.values)


def test_random_pass_converges_in_1d(rng):
    # on a line the lattice reflections order every pair of nodes
    dom = build_domain("interval", 65, 2.0)
    for seed in range(5):
        u = GridFunction(dom, rng.random(dom.m))
        run = random_polarization_pass(u, seed, 3000)
        assert run.ratio <= 0.01


def test_random_pass_rejects_negative(rng):
    dom = build_domain("interval", 9, 2.0)
    with pytest.raises(HalfSpaceError):
        random_polarization_pass(GridFunction(dom, -rng.random(dom.m)), 0, 3)


def test_symmetry_defect_cases(rng):
    dom = build_domain("square", 21, 2.0)
    radial = GridFunction.from_callable(dom, lambda x, y: np.exp(-(x**2 + y**2)))
    for axis in ("x", "y", "d+", "d-"):
        assert symmetry_defect(radial, axis) == 0.0
    u = GridFunction(dom, rng.random(dom.m))
    H = HalfSpace("x", 0)
    change = np.sqrt(h1_inner(polarize(u, H) - u, polarize(u, H) - u)) / np.sqrt(h1_inner(u, u))
    assert change > 0
    assert symmetry_defect(u, "x") >= change


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=7, max_size=7), st.sampled_from([0, 1, 2, 3]), st.booleans())
def test_polarization_invariants_1d(vals, level, upper):
    dom = build_domain("interval", 9, 2.0)
    u = GridFunction(dom, np.abs(vals))
    H = HalfSpace("x", level if not upper else -level, upper)
    uH = polarize(u, H)
    np.testing.assert_array_equal(polarize(uH, H).values, uH.values)
    assert h1_inner(uH, uH) <= h1_inner(u, u) * (1 + 1e-12) + 1e-300
