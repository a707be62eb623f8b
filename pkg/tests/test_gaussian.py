import json
import math
from functools import lru_cache

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from gaussqc.errors import InputError, NonPhysicalMoments, SamplingExhausted, Unphysical
from gaussqc.gaussian import (
    CovMatrix,
    GaussianParams,
    InvariantSet,
    TwinBeamSpec,
    admissible,
    check_physical,
    covariance_of,
    extract_invariants,
    forward_moments,
    from_purities,
    params_from_covariance,
    params_of_twin_beam,
    random_physical_state,
)
from gaussqc.moments import IntensityMoments

EXAMPLE = GaussianParams(0.3, 0.4, 0.2j, 0.1, 0.25, 0.1 + 0.05j)


# -- independent moment oracle ------------------------------------------------
#
# Normally ordered moments of a Gaussian field follow the same pairing rules as
# a (formal) complex Gaussian vector with the same second moments. The oracle
# writes alpha_j = x_j + i y_j, builds the real second-moment matrix and reads
# moments off the series of exp(t.S.t / 2), independent of the library's
# pairing enumeration.

_t = sp.symbols("t0:4")


@lru_cache(maxsize=None)
def _mgf_coefficients(order):
    S = sp.Matrix(4, 4, lambda i, j: sp.Symbol(f"s{min(i, j)}{max(i, j)}"))
    q = sum(S[i, j] * _t[i] * _t[j] for i in range(4) for j in range(4)) / 2
    series = sum(q ** n / sp.factorial(n) for n in range(order + 1))
    return sp.Poly(sp.expand(series), *_t), S


def _real_second_moments(g):
    B1, B2, C1, C2, D, Db = g.B1, g.B2, complex(g.C1), complex(g.C2), complex(g.D12), complex(g.Dbar12)
    m = np.zeros((4, 4))   # order x1, y1, x2, y2
    m[0, 0] = (B1 + C1.real) / 2
    m[1, 1] = (B1 - C1.real) / 2
    m[0, 1] = C1.imag / 2
    m[2, 2] = (B2 + C2.real) / 2
    m[3, 3] = (B2 - C2.real) / 2
    m[2, 3] = C2.imag / 2
    # <a1 a2> = D, <a1* a2> = -Dbar
    m[0, 2] = (D.real - Db.real) / 2
    m[1, 3] = (-Db.real - D.real) / 2
    m[0, 3] = (D.imag - Db.imag) / 2
    m[1, 2] = (D.imag + Db.imag) / 2
    return m + np.triu(m, 1).T


def oracle_moment(g, k, l):
    poly, S = _mgf_coefficients(k + l)
    m = _real_second_moments(g)
    subs = {S[i, j]: sp.Float(m[i, j], 30) for i in range(4) for j in range(i, 4)}
    x1, y1, x2, y2 = sp.symbols("x1 y1 x2 y2")
    target = sp.Poly(sp.expand((x1 ** 2 + y1 ** 2) ** k * (x2 ** 2 + y2 ** 2) ** l),
                     x1, y1, x2, y2)
    total = sp.Float(0, 30)
    for exps, coeff in target.terms():
        c = poly.coeff_monomial(sp.Mul(*[v ** e for v, e in zip(_t, exps)]))
        moment = c * sp.Mul(*[sp.factorial(e) for e in exps])
        total += coeff * moment.subs(subs)
    return float(total)


@pytest.mark.parametrize("g", [
    EXAMPLE,
    GaussianParams(1.0, 1.0, D12=math.sqrt(2.0)),
    GaussianParams(0.7, 0.2, 0.3 - 0.1j, 0.05j, 0.2 + 0.1j, -0.15 + 0.02j),
])
def test_forward_moments_match_independent_oracle(g):
    w = forward_moments(g)
    for k, l in w.keys():
        assert w[k, l] == pytest.approx(oracle_moment(g, k, l), rel=1e-10, abs=1e-12)


def test_forward_moments_low_order():
    g = EXAMPLE
    w = forward_moments(g)
    assert w[1, 0] == pytest.approx(0.3)
    assert w[2, 0] == pytest.approx(2 * 0.3 ** 2 + abs(g.C1) ** 2)
    assert w[1, 1] == pytest.approx(0.3 * 0.4 + abs(g.D12) ** 2 + abs(g.Dbar12) ** 2)


def test_thermal_moments_are_factorial():
    w = forward_moments(GaussianParams(0.8, 0.0))
    for k in range(5):
        assert w[k, 0] == pytest.approx(math.factorial(k) * 0.8 ** k)


def test_vacuum_moments():
    w = forward_moments(GaussianParams())
    assert w[0, 0] == 1
    assert np.all(w.values[np.indices(w.values.shape).sum(axis=0) > 0] == 0)


# -- covariance matrix ------------------------------------------------------------

def test_covariance_of_vacuum_and_tmsv():
    np.testing.assert_allclose(covariance_of(GaussianParams()).sigma, np.eye(4))
    c = covariance_of(params_of_twin_beam(TwinBeamSpec(1.0)))
    assert c.det == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(np.diag(c.sigma), 3.0)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_params_covariance_round_trip(seed):
    g = random_physical_state(seed)
    back = params_from_covariance(covariance_of(g))
    for name in ("B1", "B2", "C1", "C2", "D12", "Dbar12"):
        assert complex(getattr(back, name)) == pytest.approx(complex(getattr(g, name)), abs=1e-12)


def test_det_matches_lu_determinant(random_states):
    for g in random_states[:200]:
        c = covariance_of(g)
        assert c.det == pytest.approx(float(np.linalg.det(c.sigma)), rel=1e-10)


def test_covmatrix_validation():
    with pytest.raises(InputError):
        CovMatrix(np.eye(3))
    bad = np.eye(4)
    bad[0, 1] = 0.3
    with pytest.raises(InputError):
        CovMatrix(bad)


def test_json_round_trips():
    back = GaussianParams.from_json(json.loads(json.dumps(EXAMPLE.to_json())))
    assert back == EXAMPLE
    c = covariance_of(EXAMPLE)
    np.testing.assert_array_equal(CovMatrix.from_json(c.to_json()).sigma, c.sigma)


# -- physicality ---------------------------------------------------------------

def test_check_physical_examples():
    d = check_physical(covariance_of(params_of_twin_beam(TwinBeamSpec(1.0))))
    assert d.physical
    assert d.nu_minus == pytest.approx(1.0, abs=1e-12)
    assert d.nu_tilde_minus == pytest.approx(3 - 2 * math.sqrt(2), abs=1e-12)
    half = check_physical(CovMatrix(np.eye(4) / 2))
    assert not half.physical and half.nu_minus == pytest.approx(0.5)
    assert check_physical(CovMatrix(np.eye(4))).physical


def test_symplectic_eigenvalues_match_brute_force(random_states):
    omega = np.kron(np.eye(2), np.array([[0, 1], [-1, 0]]))
    for g in random_states[:100]:
        c = covariance_of(g)
        d = check_physical(c)
        ev = np.sort(np.abs(np.linalg.eigvals(1j * omega @ c.sigma)))
        assert d.nu_minus == pytest.approx(ev[0], rel=1e-9)
        assert d.nu_plus == pytest.approx(ev[-1], rel=1e-9)


def test_indefinite_matrix_is_not_physical():
    # two negative eigenvalues, positive determinant
    sigma = np.diag([-2.0, -2.0, 3.0, 3.0])
    assert not check_physical(CovMatrix(sigma)).physical


def test_random_states_are_physical_and_seeded(random_states):
    assert all(check_physical(covariance_of(g)).physical for g in random_states[:50])
    assert random_physical_state(7) == random_physical_state(7)
    assert random_physical_state(scale=0) == GaussianParams()
    with pytest.raises(SamplingExhausted):
        random_physical_state(1, max_attempts=0)


def test_check_flag_rejects_unphysical_params():
    with pytest.raises(Unphysical):
        GaussianParams(0.1, 0.1, D12=1.0, check=True)


# -- standard form ---------------------------------------------------------------

def test_from_purities_tmsv():
    c = from_purities(1.0, 1 / 3, 1 / 3, 2.0)
    assert c.det == pytest.approx(1.0, abs=1e-12)
    assert check_physical(c).nu_tilde_minus == pytest.approx(3 - 2 * math.sqrt(2), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_from_purities_reproduces_invariants(seed):
    c0 = covariance_of(random_physical_state(seed))
    mu, mu1, mu2 = c0.purities()
    c = from_purities(mu, mu1, mu2, c0.seralian)
    assert c.det == pytest.approx(c0.det, rel=1e-9)
    assert c.seralian == pytest.approx(c0.seralian, rel=1e-9)
    assert admissible(mu, mu1, mu2, c0.seralian)
    d0, d = check_physical(c0), check_physical(c)
    assert d.nu_tilde_minus == pytest.approx(d0.nu_tilde_minus, rel=1e-7)


def test_from_purities_rejects_outside_interval():
    with pytest.raises(Unphysical):
        from_purities(0.5, 0.6, 0.6, 100.0)
    with pytest.raises(Unphysical):
        from_purities(1.2, 0.5, 0.5, 3.0)
    assert not admissible(0.5, 0.6, 0.6, 100.0)


# -- invariants ------------------------------------------------------------------

@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_extract_invariants_round_trip(seed):
    g = random_physical_state(seed)
    got = extract_invariants(forward_moments(g)).as_array()
    want = InvariantSet.of_params(g).as_array()
    np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-10)


def test_example_invariants():
    inv = extract_invariants(forward_moments(EXAMPLE))
    assert inv.absC1_sq == pytest.approx(0.04)
    assert inv.t1 == pytest.approx((0.2j * (0.1 + 0.05j) * 0.25).real)


def test_noisy_twin_beam_higher_invariants_vanish():
    g = params_of_twin_beam(TwinBeamSpec(0.4, 0.1, 0.2))
    inv = extract_invariants(forward_moments(g))
    assert inv.absD_sq == pytest.approx(0.4 * 1.4)
    assert inv.t1 == pytest.approx(0, abs=1e-12)
    assert inv.t2 == pytest.approx(0, abs=1e-12)
    assert inv.q == pytest.approx(0, abs=1e-12)


def test_extract_invariants_flags_negative_moduli():
    vals = np.zeros((5, 5))
    vals[0, 0], vals[1, 0], vals[2, 0], vals[0, 1], vals[0, 2] = 1, 1.0, 1.0, 0.5, 0.5
    w = IntensityMoments(vals)
    with pytest.raises(NonPhysicalMoments) as exc:
        extract_invariants(w)
    assert exc.value.invariants.absC1_sq == pytest.approx(-1.0)
    inv = extract_invariants(w, strict=False)
    assert "absC1_sq" in inv.flagged
