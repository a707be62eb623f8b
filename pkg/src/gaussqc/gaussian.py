"""Two-beam Gaussian states: parameters, covariance matrices, exact moments.

Conventions
-----------
The elementary normally ordered contractions are

    <a_j^dag a_j> = B_j,   <a_j a_j> = C_j,   <a_1 a_2> = D12,
    <a_1^dag a_2> = -Dbar12,

which is the assignment that reproduces the covariance matrix below (vacuum
covariance equals the identity) and the third-order moment relations with
``Re{C1 Dbar12 D12*}`` and ``Re{C2* Dbar12 D12}``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import InitVar, dataclass
from functools import lru_cache

import numpy as np

from .errors import (
    InputError,
    NonPhysicalMoments,
    NegativeDiscriminant,
    SamplingExhausted,
    Unphysical,
)
from .moments import MAX_ORDER, IntensityMoments

__all__ = [
    "GaussianParams",
    "CovMatrix",
    "SymplecticData",
    "TwinBeamSpec",
    "covariance_of",
    "params_from_covariance",
    "forward_moments",
    "check_physical",
    "from_purities",
    "admissible",
    "conditioning_tol",
    "params_of_twin_beam",
    "random_physical_state",
    "InvariantSet",
    "extract_invariants",
    "PHYSICAL_TOL",
]

PHYSICAL_TOL = 1e-9


@dataclass(frozen=True)
class GaussianParams:
    """Coefficients of the normal characteristic function of a zero-mean
    two-beam Gaussian field.

    Pass ``check=True`` to reject parameter sets whose covariance matrix is
    not a physical state.
    """

    B1: float = 0.0
    B2: float = 0.0
    C1: complex = 0j
    C2: complex = 0j
    D12: complex = 0j
    Dbar12: complex = 0j
    check: InitVar[bool] = False

    def __post_init__(self, check):
        for name in ("B1", "B2"):
            value = float(getattr(self, name))
            if value < 0:
                raise InputError(f"{name} must be nonnegative, got {value!r}")
            object.__setattr__(self, name, value)
        for name in ("C1", "C2", "D12", "Dbar12"):
            object.__setattr__(self, name, complex(getattr(self, name)))
        if check:
            data = check_physical(covariance_of(self))
            if not data.physical:
                raise Unphysical(f"parameters are not a physical state (nu- = {data.nu_minus:g})")

    def to_json(self) -> dict:
        c = lambda z: [z.real, z.imag]  # noqa: E731
        return {"B1": self.B1, "B2": self.B2, "C1": c(self.C1), "C2": c(self.C2),
                "D12": c(self.D12), "Dbar12": c(self.Dbar12)}

    @classmethod
    def from_json(cls, obj, check=False):
        try:
            z = lambda key: complex(*obj.get(key, (0.0, 0.0)))  # noqa: E731
            return cls(float(obj.get("B1", 0.0)), float(obj.get("B2", 0.0)),
                       z("C1"), z("C2"), z("D12"), z("Dbar12"), check=check)
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad GaussianParams JSON: {exc}") from None


def _det2(m) -> float:
    return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """4x4 covariance matrix ordered ``(x1, p1, x2, p2)``."""

    sigma: np.ndarray

    def __post_init__(self):
        s = np.array(self.sigma, dtype=float)
        if s.shape != (4, 4):
            raise InputError(f"covariance matrix must be 4x4, got {s.shape}")
        if not np.all(np.isfinite(s)):
            raise InputError("covariance matrix has non-finite entries")
        scale = max(1.0, float(np.abs(s).max()))
        if np.abs(s - s.T).max() > 1e-12 * scale:
            raise InputError("covariance matrix is not symmetric")
        s = 0.5 * (s + s.T)
        s.setflags(write=False)
        object.__setattr__(self, "sigma", s)

    @property
    def sigma1(self):
        return self.sigma[:2, :2]

    @property
    def sigma2(self):
        return self.sigma[2:, 2:]

    @property
    def gamma(self):
        return self.sigma[:2, 2:]

    @property
    def det(self) -> float:
        # Schur complement on the first block; an LU determinant loses most
        # of its digits for weakly mixed, strongly correlated states
        det1 = _det2(self.sigma1)
        if not det1 > 0:
            return float(np.linalg.det(self.sigma))
        s1, g = self.sigma1, self.gamma
        adj = np.array([[s1[1, 1], -s1[0, 1]], [-s1[1, 0], s1[0, 0]]])
        return float(det1 * _det2(self.sigma2 - g.T @ adj @ g / det1))

    @property
    def seralian(self) -> float:
        return _det2(self.sigma1) + _det2(self.sigma2) + 2 * _det2(self.gamma)

    def purities(self):
        """``(mu, mu1, mu2)`` straight from the determinants."""
        return (1 / math.sqrt(self.det), 1 / math.sqrt(_det2(self.sigma1)),
                1 / math.sqrt(_det2(self.sigma2)))

    def to_json(self):
        return self.sigma.tolist()

    @classmethod
    def from_json(cls, obj):
        return cls(np.asarray(obj, dtype=float))


@dataclass(frozen=True)
class SymplecticData:
    nu_minus: float
    nu_plus: float
    nu_tilde_minus: float
    nu_tilde_plus: float
    seralian: float
    det: float
    positive_definite: bool
    physical: bool


@dataclass(frozen=True)
class TwinBeamSpec:
    """Single-mode noisy twin beam repeated over ``M`` identical modes."""

    Bp: float
    Bn1: float = 0.0
    Bn2: float = 0.0
    M: int = 1

    def __post_init__(self):
        for name in ("Bp", "Bn1", "Bn2"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be nonnegative")
        if int(self.M) != self.M or self.M < 1:
            raise InputError("M must be a positive integer")


# ---------------------------------------------------------------------------
# Covariance matrix
# ---------------------------------------------------------------------------

def covariance_of(g: GaussianParams) -> CovMatrix:
    def local(B, C):
        return [[1 + 2 * B + 2 * C.real, 2 * C.imag],
                [2 * C.imag, 1 + 2 * B - 2 * C.real]]

    dm = g.D12 - g.Dbar12
    dp = g.D12 + g.Dbar12
    gamma = np.array([[2 * dm.real, 2 * dm.imag],
                      [2 * dp.imag, -2 * dp.real]])
    sigma = np.block([[np.array(local(g.B1, g.C1)), gamma],
                      [gamma.T, np.array(local(g.B2, g.C2))]])
    return CovMatrix(sigma)


def params_from_covariance(c: CovMatrix) -> GaussianParams:
    """Invert :func:`covariance_of` (no physicality check)."""
    s = c.sigma

    def local(block):
        B = (block[0, 0] + block[1, 1] - 2) / 4
        C = complex((block[0, 0] - block[1, 1]) / 4, block[0, 1] / 2)
        return B, C

    B1, C1 = local(s[:2, :2])
    B2, C2 = local(s[2:, 2:])
    g = s[:2, 2:]
    dm = complex(g[0, 0], g[0, 1]) / 2
    dp = complex(-g[1, 1], g[1, 0]) / 2
    if min(B1, B2) < -1e-12:
        raise InputError("covariance implies negative mean photon number")
    return GaussianParams(max(B1, 0.0), max(B2, 0.0), C1, C2, (dp + dm) / 2, (dp - dm) / 2)


# ---------------------------------------------------------------------------
# Exact intensity moments by pairing enumeration
# ---------------------------------------------------------------------------

# contraction symbols, in the order of _symbol_values()
_B1, _B2, _C1, _C1c, _C2, _C2c, _D, _Dc, _DB12, _DB21 = range(10)


def _contraction(x, y):
    """Symbol index of the contraction of operators ``x`` and ``y``.

    Operators are ``(is_creation, mode)``.
    """
    (cx, i), (cy, j) = x, y
    if cx == cy:
        if i == j:
            sym = _C1 if i == 1 else _C2
        else:
            sym = _D
        return sym + 1 if cx else sym   # creation pairs take the conjugate
    if not cx:
        (i, j) = (j, i)                 # now a_i^dag a_j
    if i == j:
        return _B1 if i == 1 else _B2
    return _DB12 if i == 1 else _DB21


def _pairings(items):
    if not items:
        yield ()
        return
    first = items[0]
    for idx in range(1, len(items)):
        rest = items[1:idx] + items[idx + 1:]
        for tail in _pairings(rest):
            yield ((first, items[idx]),) + tail


@lru_cache(maxsize=None)
def _wick_polynomial(k: int, l: int):
    """Monomials of <a1^dag^k a2^dag^l a1^k a2^l>.

    Returns ``(counts, exponents)``: the multiplicity of every distinct
    monomial and its exponent vector over the ten contraction symbols.
    """
    ops = ((True, 1),) * k + ((True, 2),) * l + ((False, 1),) * k + ((False, 2),) * l
    terms = Counter()
    for pairing in _pairings(ops):
        exps = [0] * 10
        for x, y in pairing:
            exps[_contraction(x, y)] += 1
        terms[tuple(exps)] += 1
    exps = np.array(list(terms.keys()), dtype=int).reshape(-1, 10)
    counts = np.array(list(terms.values()), dtype=float)
    return counts, exps


def _symbol_values(g):
    db = -g.Dbar12
    return np.array([g.B1, g.B2, g.C1, g.C1.conjugate(), g.C2, g.C2.conjugate(),
                     g.D12, g.D12.conjugate(), db, db.conjugate()], dtype=complex)


def forward_moments(g: GaussianParams, max_order: int = MAX_ORDER) -> IntensityMoments:
    """Normally ordered moments ``<W1^k W2^l>`` of the Gaussian state ``g``.

    Every moment is the sum over all pairings of the ``2(k + l)`` field
    operators of the product of elementary contractions.
    """
    vals = _symbol_values(g)
    w = np.zeros((max_order + 1, max_order + 1))
    for k in range(max_order + 1):
        for l in range(max_order + 1 - k):
            counts, exps = _wick_polynomial(k, l)
            terms = counts * np.prod(vals[None, :] ** exps, axis=1)
            total = terms.sum()
            scale = np.abs(terms).sum()
            assert abs(total.imag) <= 1e-12 * max(1.0, scale), (k, l, total)
            w[k, l] = total.real
    return IntensityMoments(w, max_order)


# ---------------------------------------------------------------------------
# Physicality
# ---------------------------------------------------------------------------

def _nu_pair(big, det, tol):
    disc = big * big - 4 * det
    if disc < -tol * max(1.0, big * big):
        raise NegativeDiscriminant(
            f"discriminant {disc!r} < 0: not a valid Gaussian covariance matrix")
    root = math.sqrt(max(disc, 0.0))
    lo2 = (big - root) / 2
    hi2 = (big + root) / 2
    return math.sqrt(max(lo2, 0.0)), math.sqrt(max(hi2, 0.0))


_OMEGA = np.array([[0, 1, 0, 0], [-1, 0, 0, 0], [0, 0, 0, 1], [0, 0, -1, 0]], dtype=float)
_PT = np.array([1.0, 1.0, 1.0, -1.0])


def _symplectic_spectrum(sigma):
    """Symplectic eigenvalues of a positive-definite ``sigma``.

    They are the positive eigenvalues of the Hermitian matrix
    ``sigma^1/2 (i Omega) sigma^1/2``, which stay accurate when the two
    values coincide.
    """
    vals, vecs = np.linalg.eigh(sigma)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    spec = np.linalg.eigvalsh(1j * root @ _OMEGA @ root)
    return float(spec[2]), float(spec[3])


def check_physical(c: CovMatrix, tol: float = PHYSICAL_TOL) -> SymplecticData:
    """Symplectic eigenvalues of ``c`` and of its partial transpose.

    ``physical`` requires a positive-definite matrix with both symplectic
    eigenvalues at least 1 (to within ``tol``). Positive
    definiteness matters: a matrix with two negative eigenvalues can still
    have a positive determinant and real symplectic "eigenvalues".
    """
    det1 = _det2(c.sigma1)
    det2 = _det2(c.sigma2)
    detg = _det2(c.gamma)
    det = c.det
    seralian = det1 + det2 + 2 * detg
    nu_m, nu_p = _nu_pair(seralian, det, tol)
    nut_m, nut_p = _nu_pair(det1 + det2 - 2 * detg, det, tol)
    pd = bool(np.linalg.eigvalsh(c.sigma).min() > 0)
    if pd:
        nu_m, nu_p = _symplectic_spectrum(c.sigma)
        nut_m, nut_p = _symplectic_spectrum(_PT * c.sigma * _PT[:, None])
    # nu- >= 1 rewritten as (nu-^2 - 1)(nu+^2 - 1) >= 0 with nu+ >= 1; the
    # square root in nu- loses half the digits near nu- = nu+ (pure states)
    margin = det - seralian + 1
    physical = pd and nu_p >= 1 - tol and margin >= -tol * max(1.0, abs(det))
    return SymplecticData(nu_m, nu_p, nut_m, nut_p, seralian, det, pd, physical)


# ---------------------------------------------------------------------------
# Standard form from purities and seralian
# ---------------------------------------------------------------------------

ROUND_TRIP_RTOL = 1e-9
_EPS = np.finfo(float).eps


def conditioning_tol(mu, mu1, mu2, base=ROUND_TRIP_RTOL):
    """Tolerance for quantities rebuilt from a standard form: ``base``, or
    the round-off floor ``4 eps kappa`` with ``kappa = (mu / (mu1 mu2))^2``
    when that is larger (weakly mixed states with small purities)."""
    return np.maximum(base, 4 * _EPS * (mu / (mu1 * mu2)) ** 2)


def _standard_form(mu, mu1, mu2, delta, tol=1e-12):
    """Vectorized core of :func:`from_purities`.

    Returns ``(a, b, c_plus, c_minus, ok)``; ``ok`` marks inputs admitting a
    real standard form with ``c_plus >= c_minus``.
    """
    mu, mu1, mu2, delta = np.broadcast_arrays(*(np.asarray(x, dtype=float)
                                                for x in (mu, mu1, mu2, delta)))
    a = 1 / mu1
    b = 1 / mu2
    # (c+ + c-)^2 and (c+ - c-)^2 in factored form, free of cancellation
    inv = 1 / mu
    p = (delta - (a - b) ** 2) / 2
    q = ((a + b) ** 2 - delta) / 2
    ok = (p - inv >= -tol * inv) & (q - inv >= -tol * inv)
    s = np.sqrt(np.maximum((p - inv) * (p + inv) / (a * b), 0.0))
    d = np.sqrt(np.maximum((q - inv) * (q + inv) / (a * b), 0.0))
    return a, b, (s + d) / 2, (s - d) / 2, ok


def _round_trip_ok(got_mu, got_delta, mu, delta, rtol):
    # clipping a slightly negative square-root argument in the standard form
    # can shift the purity far more than the seralian near the interval edges
    return ((np.abs(got_mu - mu) <= rtol * np.abs(mu))
            & (np.abs(got_delta - delta) <= rtol * np.abs(delta)))


def admissible(mu, mu1, mu2, delta, tol=PHYSICAL_TOL):
    """Vectorized test that :func:`from_purities` succeeds.

    Checks that the standard form exists, is positive definite and has its
    smaller symplectic eigenvalue at least 1.
    """
    a, b, cp, cm, ok = _standard_form(mu, mu1, mu2, delta)
    tol = conditioning_tol(mu, mu1, mu2, tol)
    ab = a * b
    ok = ok & (ab - cp * cp > 0) & (ab - cm * cm > 0)
    det = (ab - cp * cp) * (ab - cm * cm)
    seralian = a * a + b * b + 2 * cp * cm
    disc = seralian ** 2 - 4 * det
    ok = ok & (disc >= -tol * np.maximum(1.0, seralian ** 2))
    nu_plus2 = (seralian + np.sqrt(np.maximum(disc, 0.0))) / 2
    ok = ok & (nu_plus2 >= (1 - tol) ** 2) & (det - seralian + 1 >= -tol * np.maximum(1.0, det))
    with np.errstate(divide="ignore", invalid="ignore"):
        ok = ok & _round_trip_ok(1 / np.sqrt(det), seralian, mu, delta, tol)
    return ok & (mu > 0) & (mu <= 1) & (mu1 > 0) & (mu1 <= 1) & (mu2 > 0) & (mu2 <= 1)


def from_purities(mu: float, mu1: float, mu2: float, delta: float) -> CovMatrix:
    """Standard-form covariance matrix with the given purities and seralian.

    ``sigma1 = I / mu1``, ``sigma2 = I / mu2``, ``gamma = diag(c+, c-)`` with
    ``c+ >= c-``.
    """
    for name, value in (("mu", mu), ("mu1", mu1), ("mu2", mu2)):
        if not 0 < value <= 1:
            raise Unphysical(f"{name} must lie in (0, 1], got {value!r}")
    a, b, cp, cm, ok = _standard_form(mu, mu1, mu2, delta)
    a, b, cp, cm = float(a), float(b), float(cp), float(cm)
    if not ok:
        raise Unphysical(f"no real standard form for mu={mu}, mu1={mu1}, mu2={mu2}, "
                         f"delta={delta}")
    sigma = np.array([[a, 0, cp, 0],
                      [0, a, 0, cm],
                      [cp, 0, b, 0],
                      [0, cm, 0, b]], dtype=float)
    cov = CovMatrix(sigma)
    tol = float(conditioning_tol(mu, mu1, mu2))
    data = check_physical(cov, tol)
    if not data.physical:
        raise Unphysical(f"standard form is not physical (nu- = {data.nu_minus:g}, "
                         f"positive definite = {data.positive_definite})")
    got_mu = 1 / math.sqrt((a * b - cp * cp) * (a * b - cm * cm))
    if not _round_trip_ok(got_mu, a * a + b * b + 2 * cp * cm, mu, delta, tol):
        raise Unphysical(f"round trip failed: mu {got_mu!r} for {mu!r} at delta={delta!r}")
    return cov


# ---------------------------------------------------------------------------
# State constructors
# ---------------------------------------------------------------------------

def params_of_twin_beam(t: TwinBeamSpec) -> GaussianParams:
    """Per-mode parameters of a noisy twin beam: pairs plus independent
    thermal noise in each arm."""
    return GaussianParams(t.Bp + t.Bn1, t.Bp + t.Bn2,
                          D12=math.sqrt(t.Bp * (t.Bp + 1)))


def random_physical_state(seed=None, scale: float = 1.0,
                          max_attempts: int = 10000) -> GaussianParams:
    """Rejection-sample a physical state.

    Mean photon numbers are drawn from ``U(0, 2 scale)``; the moduli of
    ``C1, C2, D12, Dbar12`` from ``U(0, scale)`` with uniform phases. ``seed``
    may be an int or a ``numpy.random.Generator``.
    """
    if scale < 0:
        raise InputError("scale must be nonnegative")
    if scale == 0:
        return GaussianParams()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    for _ in range(int(max_attempts)):
        B = rng.uniform(0, 2 * scale, 2)
        r = rng.uniform(0, scale, 4)
        phase = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
        z = r * phase
        g = GaussianParams(B[0], B[1], z[0], z[1], z[2], z[3])
        try:
            if check_physical(covariance_of(g)).physical:
                return g
        except NegativeDiscriminant:
            continue
    raise SamplingExhausted(f"no physical state after {max_attempts} attempts")


# ---------------------------------------------------------------------------
# Parameter invariants recoverable from intensity moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InvariantSet:
    """Phase-insensitive parameter combinations fixed by the moments.

    ``t1 = Re{C1 Dbar12 D12*}``, ``t2 = Re{C2* Dbar12 D12}`` and
    ``q = 2|D12|^2 |Dbar12|^2 + Re{C1 C2* Dbar12^2} + Re{C1 C2 D12*^2}``.
    ``flagged`` lists the squared moduli that came out negative.
    """

    B1: float
    B2: float
    absC1_sq: float
    absC2_sq: float
    absD_sq: float
    t1: float
    t2: float
    q: float
    flagged: tuple = ()

    @classmethod
    def of_params(cls, g: GaussianParams) -> "InvariantSet":
        """Direct evaluation from the parameters (no moments involved)."""
        return cls(
            g.B1, g.B2, abs(g.C1) ** 2, abs(g.C2) ** 2,
            abs(g.D12) ** 2 + abs(g.Dbar12) ** 2,
            (g.C1 * g.Dbar12 * g.D12.conjugate()).real,
            (g.C2.conjugate() * g.Dbar12 * g.D12).real,
            2 * abs(g.D12) ** 2 * abs(g.Dbar12) ** 2
            + (g.C1 * g.C2.conjugate() * g.Dbar12 ** 2).real
            + (g.C1 * g.C2 * g.D12.conjugate() ** 2).real,
        )

    def as_array(self):
        return np.array([self.B1, self.B2, self.absC1_sq, self.absC2_sq, self.absD_sq,
                         self.t1, self.t2, self.q])


def extract_invariants(w: IntensityMoments, tol: float = 1e-12,
                       strict: bool = True) -> InvariantSet:
    """Recover the invariant parameter combinations from moments up to order 4.

    The fourth-order relation carries ``-8<W1><W2><W1W2> + 8<W1>^2<W2>^2``;
    with unit coefficients on those two terms the identity does not hold for
    a generic Gaussian state.

    Raises :class:`NonPhysicalMoments` (with the computed set attached) when
    ``|C_j|^2 < -tol`` and ``strict`` is set; otherwise the set is returned
    with ``flagged`` filled in.
    """
    w1, w2 = w[1, 0], w[0, 1]
    c1 = w[2, 0] - 2 * w1 ** 2
    c2 = w[0, 2] - 2 * w2 ** 2
    cov = w[1, 1] - w1 * w2
    t1 = (-4 * w1 * cov + w[2, 1] - w[2, 0] * w2) / -4
    t2 = (-4 * w2 * cov + w[1, 2] - w1 * w[0, 2]) / -4
    rhs = (w[2, 2] - 4 * w[1, 1] ** 2 - 8 * w1 * w2 * w[1, 1] + 8 * w1 ** 2 * w2 ** 2
           - 2 * (w1 ** 2 * c2 + w2 ** 2 * c1)
           - c2 * c1
           + 16 * w2 * t1 + 16 * w1 * t2)
    flagged = tuple(name for name, value in (("absC1_sq", c1), ("absC2_sq", c2))
                    if value < -tol)
    inv = InvariantSet(w1, w2, c1, c2, cov, t1, t2, rhs / 4, flagged)
    if flagged and strict:
        raise NonPhysicalMoments(f"negative squared modulus estimate(s): {', '.join(flagged)}",
                                 inv)
    return inv
