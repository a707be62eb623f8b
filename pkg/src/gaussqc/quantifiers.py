"""Correlation quantifiers from intensity moments, plus covariance-based oracles.

All quantities use natural logarithms.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DomainError,
    InvertedBracket,
    ModelError,
    NegativeCSquared,
    NonPositiveDeterminant,
    ZeroMean,
)
from .gaussian import (
    CovMatrix,
    GaussianParams,
    check_physical,
    covariance_of,
)
from .moments import (
    IntensityMoments,
    SingleBeamMoments,
    merge_beams,
    reduce_per_mode,
)

__all__ = [
    "Purities",
    "SqueezingResult",
    "QCReport",
    "det_global_from_moments",
    "det_marginal_from_moments",
    "purities",
    "renyi2",
    "kl_divergence",
    "steering",
    "negativity_bounds",
    "negativity_exact",
    "relative_error",
    "squeezing_variance",
    "g2",
    "renyi2_entanglement_bracket",
    "classify",
    "twin_beam_reference",
    "full_report",
    "REPORT_FIELDS",
]

PURITY_CLAMP = 1e-9


# ---------------------------------------------------------------------------
# Determinants and purities
# ---------------------------------------------------------------------------

def det_global_from_moments(w: IntensityMoments) -> float:
    """``det sigma`` as a polynomial in the intensity moments up to
    ``<W1^2 W2^2>``. May be nonpositive for tables that are not Gaussian."""
    w1, w2 = w[1, 0], w[0, 1]
    return (1 + 4 * (w1 + w2) + 12 * (w1 + w2) ** 2
            - 4 * w[2, 0] * (1 + 6 * w2 + 24 * w2 ** 2)
            - 4 * w[0, 2] * (1 + 6 * w1 + 24 * w1 ** 2)
            + 8 * w[2, 1] * (1 + 6 * w2)
            + 8 * w[1, 2] * (1 + 6 * w1)
            - 8 * w[1, 1] * (1 + 6 * w1 + 6 * w2 + 48 * w1 * w2)
            + 96 * w1 * w2 * (w1 + w2 + 5 * w1 * w2)
            + 24 * w[2, 0] * w[0, 2]
            - 8 * w[2, 2]
            + 48 * w[1, 1] ** 2)


def det_marginal_from_moments(w: IntensityMoments, j: int) -> float:
    """``det sigma_j = 1 + 4<W_j> + 12<W_j>^2 - 4<W_j^2>``."""
    b = w.beam(j)
    return 1 + 4 * b[1] + 12 * b[1] ** 2 - 4 * b[2]


@dataclass(frozen=True)
class Purities:
    mu: float
    mu1: float
    mu2: float
    det: float
    det1: float
    det2: float
    clamped: tuple = ()


def purities(w: IntensityMoments) -> Purities:
    """Global and marginal purities ``1 / sqrt(det)``.

    Values in ``(1, 1 + 1e-9]`` are clamped to 1 and listed in ``clamped``;
    anything larger is returned as computed.
    """
    dets = {"global": det_global_from_moments(w),
            "beam1": det_marginal_from_moments(w, 1),
            "beam2": det_marginal_from_moments(w, 2)}
    for which, value in dets.items():
        if not value > 0:
            raise NonPositiveDeterminant(which, value)
    mus = {}
    clamped = []
    for name, which in (("mu", "global"), ("mu1", "beam1"), ("mu2", "beam2")):
        mu = 1 / math.sqrt(dets[which])
        if 1 < mu <= 1 + PURITY_CLAMP:
            mu = 1.0
            clamped.append(name)
        mus[name] = mu
    return Purities(mus["mu"], mus["mu1"], mus["mu2"], dets["global"], dets["beam1"],
                    dets["beam2"], tuple(clamped))


# ---------------------------------------------------------------------------
# Purity-based quantifiers
# ---------------------------------------------------------------------------

def renyi2(mu: float) -> float:
    return -math.log(mu)


def kl_divergence(mu: float, mu1: float, mu2: float) -> float:
    """Distance to the product of the marginals, ``ln(mu / (mu1 mu2))``."""
    return math.log(mu / (mu1 * mu2))


def steering(mu: float, mu_j: float) -> float:
    """One-way Gaussian steering ``max(0, ln(mu / mu_j))`` from the beam
    whose purity is ``mu_j``."""
    return max(0.0, math.log(mu / mu_j))


def _sqrt_arg(value, scale, tol, what):
    if value < -tol * max(1.0, scale):
        raise DomainError(f"negative square-root argument {value!r} in {what}")
    return max(value, 0.0)


def negativity_bounds(mu: float, mu1: float, mu2: float, tol: float = 1e-12):
    """Lower and upper bounds on the logarithmic negativity at fixed purities.

    Returns ``(E_min, E_max)``, each clamped at 0. Where the lower-bound
    expression leaves its real domain (separable-side states) the lower
    bound is 0, which is always valid.
    """
    for value in (mu, mu1, mu2):
        if not 0 < value <= 1 + PURITY_CLAMP:
            raise DomainError(f"purities must lie in (0, 1], got {(mu, mu1, mu2)!r}")
    # both bounds use the rationalized forms x - sqrt(x^2 - y) = y / (x + sqrt(x^2 - y))
    # to avoid cancellation at small purities
    s = mu1 + mu2
    root = math.sqrt(_sqrt_arg(s * s - 4 * mu1 ** 2 * mu2 ** 2 / mu, s * s, tol, "E_max"))
    e_max = max(0.0, math.log(mu * (s + root) / (2 * mu1 * mu2)))

    x = 1 / mu1 ** 2 + 1 / mu2 ** 2 - 1 / (2 * mu ** 2) - 0.5
    disc = x * x - 1 / mu ** 2
    e_min = 0.0
    if x > 0 and disc >= -tol * max(1.0, x * x):
        e_min = max(0.0, 0.5 * math.log(mu ** 2 * (x + math.sqrt(max(disc, 0.0)))))
    return e_min, e_max


def negativity_exact(c: CovMatrix) -> float:
    """``max(0, -ln nu~-)`` from the partial-transpose symplectic spectrum."""
    return max(0.0, -math.log(check_physical(c).nu_tilde_minus))


def relative_error(e_min: float, e_max: float) -> Optional[float]:
    """``(E_max - E_min) / (E_max + E_min)``; ``None`` when both vanish."""
    total = e_max + e_min
    if total == 0:
        return None
    return (e_max - e_min) / total


def renyi2_entanglement_bracket(H: float, G_1to2: float, tol: float = 1e-12):
    """``(G_1to2, H / 2)``, the bracket on the Gaussian Renyi-2 entanglement."""
    lower, upper = G_1to2, H / 2
    if lower > upper + tol:
        raise InvertedBracket(f"lower bound {lower!r} exceeds upper bound {upper!r}")
    return lower, upper


def classify(e_min: float, e_max: float) -> str:
    if e_min > 0:
        return "entangled"
    if e_max == 0:
        return "separable"
    return "indeterminate"


# ---------------------------------------------------------------------------
# Single (merged) beam
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SqueezingResult:
    lam: float
    B: float
    absC: float

    @property
    def squeezed(self) -> bool:
        return self.lam < 1


def squeezing_variance(b: SingleBeamMoments, tol: float = 1e-12) -> SqueezingResult:
    """Principal squeezing variance ``1 + 2(B - |C|)`` of a single-mode
    Gaussian beam, with ``|C|^2 = <W^2> - 2<W>^2``."""
    B = b[1]
    c_sq = b[2] - 2 * B ** 2
    if c_sq < -tol:
        raise NegativeCSquared(c_sq)
    absC = math.sqrt(max(c_sq, 0.0))
    return SqueezingResult(1 + 2 * (B - absC), B, absC)


def g2(b: SingleBeamMoments) -> float:
    if not b[1] > 0:
        raise ZeroMean(f"mean intensity {b[1]!r} is not positive")
    return b[2] / b[1] ** 2


# ---------------------------------------------------------------------------
# Noisy twin-beam reference
# ---------------------------------------------------------------------------

def twin_beam_reference(w: IntensityMoments) -> Optional[dict]:
    """Quantifiers of the noisy twin beam sharing the first- and second-order
    moments ``<W1>``, ``<W2>`` and ``<W1 W2> - <W1><W2>`` of ``w``.

    Returns ``None`` when no physical noisy twin beam matches.
    """
    cov = w[1, 1] - w[1, 0] * w[0, 1]
    if cov <= 0 or w[1, 0] < 0 or w[0, 1] < 0:
        return None
    g = GaussianParams(w[1, 0], w[0, 1], D12=math.sqrt(cov))
    c = covariance_of(g)
    if not check_physical(c).physical:
        return None
    mu, mu1, mu2 = c.purities()
    return {
        "mu": mu, "mu1": mu1, "mu2": mu2,
        "H": kl_divergence(mu, mu1, mu2),
        "G_1to2": steering(mu, mu1),
        "G_2to1": steering(mu, mu2),
        "E_N": negativity_exact(c),
    }


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

REPORT_FIELDS = ("mu", "mu1", "mu2", "S_R", "S_R1", "S_R2", "H", "G_1to2", "G_2to1",
                 "E_min", "E_max", "delta_EN", "E2_lower", "E2_upper",
                 "lambda_merged", "g2_merged")


@dataclass
class QCReport:
    mu: float
    mu1: float
    mu2: float
    S_R: float
    S_R1: float
    S_R2: float
    H: float
    G_1to2: float
    G_2to1: float
    E_min: float
    E_max: float
    delta_EN: Optional[float]
    E2_lower: float
    E2_upper: float
    lambda_merged: Optional[float]
    g2_merged: Optional[float]
    entanglement_verdict: str
    two_way_steering: bool
    per_mode: bool
    M: float
    S: Optional[float] = None
    clamped: tuple = ()
    warnings: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    reference: Optional[dict] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["clamped"] = list(self.clamped)
        if not self.errors:
            d.pop("errors")
        return d

    def csv_row(self) -> dict:
        """Flat mapping for one CSV row; errors get an ``_se`` suffix."""
        row = {name: getattr(self, name) for name in REPORT_FIELDS}
        row.update(entanglement_verdict=self.entanglement_verdict, per_mode=self.per_mode,
                   M=self.M, S=self.S)
        for name in REPORT_FIELDS:
            row[f"{name}_se"] = self.errors.get(name)
        return row


def _quantify(w_mode: IntensityMoments):
    """Every scalar quantifier of one per-mode moment table."""
    p = purities(w_mode)
    out = {"mu": p.mu, "mu1": p.mu1, "mu2": p.mu2,
           "S_R": renyi2(p.mu), "S_R1": renyi2(p.mu1), "S_R2": renyi2(p.mu2),
           "H": kl_divergence(p.mu, p.mu1, p.mu2),
           "G_1to2": steering(p.mu, p.mu1), "G_2to1": steering(p.mu, p.mu2)}
    out["E_min"], out["E_max"] = negativity_bounds(p.mu, p.mu1, p.mu2)
    out["delta_EN"] = relative_error(out["E_min"], out["E_max"])
    out["E2_lower"], out["E2_upper"] = out["G_1to2"], out["H"] / 2
    notes = []
    merged = merge_beams(w_mode)
    try:
        out["g2_merged"] = g2(merged)
    except ZeroMean as exc:
        out["g2_merged"] = None
        notes.append(f"g2_merged: {exc}")
    try:
        out["lambda_merged"] = squeezing_variance(merged).lam
    except NegativeCSquared as exc:
        out["lambda_merged"] = None
        notes.append(f"lambda_merged: {exc}")
    return out, p, notes


def full_report(w: IntensityMoments, M: float = 1.0, reduce: bool = True,
                replicates=None, entropy: Optional[float] = None) -> QCReport:
    """Evaluate every quantifier, per mode when ``reduce`` and ``M > 1``.

    ``replicates`` is an optional array of bootstrap moment tables (same
    layout as ``w.values``); each is pushed through the same pipeline and the
    spread of the results fills ``errors``. Replicates for which the model
    fails are skipped and counted in ``errors["n_failed"]``.
    """
    per_mode = bool(reduce and M > 1)
    w_mode = reduce_per_mode(w, M) if per_mode else w
    values, p, notes = _quantify(w_mode)
    try:
        renyi2_entanglement_bracket(values["H"], values["G_1to2"])
    except InvertedBracket as exc:
        notes.append(f"E2 bracket: {exc}")

    errors = {}
    if replicates is not None:
        samples = {name: [] for name in REPORT_FIELDS}
        failed = 0
        for table in np.asarray(replicates):
            try:
                rep = IntensityMoments(table, w.max_order)
                rep = reduce_per_mode(rep, M) if per_mode else rep
                rep_values, _, _ = _quantify(rep)
            except (ModelError, ValueError):
                failed += 1
                continue
            for name in REPORT_FIELDS:
                if rep_values[name] is not None:
                    samples[name].append(rep_values[name])
        for name, xs in samples.items():
            if len(xs) > 1:
                errors[name] = float(np.std(xs, ddof=1))
        errors["n_replicates"] = int(len(replicates))
        errors["n_failed"] = failed

    return QCReport(
        entanglement_verdict=classify(values["E_min"], values["E_max"]),
        two_way_steering=values["G_1to2"] > 0 and values["G_2to1"] > 0,
        per_mode=per_mode, M=float(M),
        S=None if entropy is None else (entropy / M if per_mode else entropy),
        clamped=p.clamped, warnings=notes, errors=errors,
        reference=twin_beam_reference(w_mode),
        **{name: values[name] for name in REPORT_FIELDS},
    )
