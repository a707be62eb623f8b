import math

import numpy as np
import pytest

from gaussqc.errors import InputError, InsufficientGrid
from gaussqc.gaussian import admissible, check_physical, from_purities
from gaussqc.quantifiers import negativity_bounds, negativity_exact
from gaussqc.statespace import (
    AtlasCell,
    RatioGrid,
    atlas_to_csv,
    delta_interval,
    parse_grid,
    sweep_atlas,
    sweep_cell,
    threshold_curves,
)


@pytest.fixture(scope="module")
def small_atlas():
    grid = RatioGrid.linear(1.0, 3.0, 9, mu_samples=8, delta_samples=5)
    return grid, sweep_atlas(grid, seed=1)


def test_grid_validation():
    with pytest.raises(InputError):
        RatioGrid((2.0, 1.0), (1.0,))
    with pytest.raises(InputError):
        RatioGrid((1.0, 1.0), (1.0,))
    with pytest.raises(InputError):
        RatioGrid((0.0, 1.0), (1.0,))
    with pytest.raises(InputError):
        parse_grid("4:1:3")
    with pytest.raises(InputError):
        parse_grid("1:2")
    g = parse_grid("1:2:3,1:4:4")
    assert g.r1_values == (1.0, 1.5, 2.0) and len(g.r2_values) == 4


def test_delta_interval_endpoints_are_admissible_edges():
    mu = np.array([0.05, 0.2, 0.5])
    mu1, mu2 = mu / 2.0, mu / 2.2
    lo, hi = delta_interval(mu, mu1, mu2)
    for args in zip(mu, mu1, mu2, lo, hi):
        m, m1, m2, a, b = args
        assert admissible(m, m1, m2, a) and admissible(m, m1, m2, b)
        step = 1e-7 * max(1.0, b)
        assert not admissible(m, m1, m2, a - step)
        assert not admissible(m, m1, m2, b + step)
        assert b <= 1 + 1 / m ** 2 + 1e-9
        for d in np.linspace(a, b, 7):
            assert check_physical(from_purities(m, m1, m2, d)).physical


def test_infeasible_triple_has_no_interval():
    lo, hi = delta_interval([0.9], [0.45], [0.9 / 2.2])
    assert np.isnan(lo[0]) and np.isnan(hi[0])


def test_pure_state_interval_is_a_point():
    lo, hi = delta_interval([1.0], [1 / 3], [1 / 3])
    assert lo[0] == pytest.approx(2.0, abs=1e-8) and hi[0] == pytest.approx(2.0)


def test_bounds_are_seralian_extremes():
    mu, mu1, mu2 = 0.4, 0.4 / 2.0, 0.4 / 2.2
    lo, hi = delta_interval(mu, mu1, mu2)
    e_min, e_max = negativity_bounds(mu, mu1, mu2)
    assert negativity_exact(from_purities(mu, mu1, mu2, lo[0])) == pytest.approx(e_max, abs=1e-6)
    assert negativity_exact(from_purities(mu, mu1, mu2, hi[0])) == pytest.approx(e_min, abs=1e-6)


def test_cell_with_tmsv():
    cell = sweep_cell(3.0, 3.0, RatioGrid((3.0,), (3.0,), mu_samples=4, delta_samples=3),
                      np.random.default_rng(0))
    # mu = 1 is sampled, so the pure two-mode squeezed vacuum contributes
    c = from_purities(1.0, 1 / 3, 1 / 3, 2.0)
    assert negativity_exact(c) == pytest.approx(2 * math.log(1 + math.sqrt(2)), abs=1e-9)
    assert cell.n_entangled > 0 and cell.delta_max < 0.01


def test_low_ratio_cell_is_empty():
    # marginals at least twice as pure as the global state leave no room for entanglement
    cell = sweep_cell(0.5, 0.5, RatioGrid((0.5,), (0.5,)), np.random.default_rng(0))
    assert cell.empty and cell.E_av is None and cell.delta_max is None
    assert cell.n_physical > 0


def test_equal_purity_cell_has_entangled_states():
    # mu = mu1 = mu2 admits entangled states once mu is large enough
    cell = sweep_cell(1.0, 1.0, RatioGrid((1.0,), (1.0,)), np.random.default_rng(0))
    assert not cell.empty


def test_atlas_invariants(small_atlas):
    grid, atlas = small_atlas
    assert len(atlas) == 81
    assert [(c.r1, c.r2) for c in atlas[:2]] == [(1.0, 1.0), (1.0, 1.25)]
    for c in atlas:
        assert c.n_failed == 0
        assert c.bracket_violations == 0
        assert c.interior_violations == 0
        assert c.empty == (c.E_av is None)
        if not c.empty:
            assert c.endpoint_gap < 1e-6


def test_atlas_is_symmetric(small_atlas):
    _, atlas = small_atlas
    cells = {(c.r1, c.r2): c for c in atlas}
    for (r1, r2), c in cells.items():
        other = cells[r2, r1]
        assert c.empty == other.empty
        if not c.empty:
            assert c.E_av == pytest.approx(other.E_av, rel=0.05)
            assert c.delta_max == pytest.approx(other.delta_max, rel=0.05)


def test_atlas_is_deterministic_and_worker_independent():
    grid = RatioGrid((1.5, 2.0), (1.5, 2.0), mu_samples=4, delta_samples=3)
    a = sweep_atlas(grid, seed=3)
    b = sweep_atlas(grid, seed=3, workers=2)
    assert atlas_to_csv(a) == atlas_to_csv(b)


def test_threshold_curves(small_atlas):
    _, atlas = small_atlas
    table = threshold_curves(atlas)
    d10, d01 = table.diagonal(0.10), table.diagonal(0.01)
    assert d10 is not None and d10 < 1.5
    assert d01 is not None and d01 < 2.5
    rows = {p.fixed: p.crossing for p in table.at(0.10, "r1")}
    cols = {p.fixed: p.crossing for p in table.at(0.10, "r2")}
    for fixed, x in rows.items():
        if fixed in cols:
            assert x == pytest.approx(cols[fixed], abs=0.25)


def test_threshold_curves_insufficient_grid():
    grid = RatioGrid((3.0, 3.5, 4.0), (3.0, 3.5, 4.0), mu_samples=4, delta_samples=3)
    with pytest.raises(InsufficientGrid):
        threshold_curves(sweep_atlas(grid))
    with pytest.raises(InsufficientGrid):
        threshold_curves([])


def test_atlas_csv_format():
    atlas = [AtlasCell(1.0, 2.0, None, None, 5, 0), AtlasCell(2.0, 2.0, 0.5, 0.01, 4, 4)]
    text = atlas_to_csv(atlas, comments=["hello"])
    lines = text.splitlines()
    assert lines[0] == "# hello"
    assert lines[1] == "r1,r2,E_av,delta_max,n_physical,n_entangled"
    assert lines[2] == "1.0,2.0,,,5,0"
    assert lines[3] == "2.0,2.0,0.5,0.01,4,4"
