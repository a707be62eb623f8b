"""Photocount data, photon-number distributions and moment algebra.

Moment tables are stored as square ``(max_order + 1, max_order + 1)`` float
arrays indexed ``[k, l]``; entries with ``k + l > max_order`` are kept at zero
and never read.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import (
    BadEfficiency,
    BadModeCount,
    DegenerateVariance,
    EmptyData,
    InputError,
    InvalidN,
    NoConvergence,
    NoConvergenceWarning,
    ParseError,
)

MAX_ORDER = 4

__all__ = [
    "JointHistogram",
    "JointDistribution",
    "EMFit",
    "PhotonNumberMoments",
    "IntensityMoments",
    "SingleBeamMoments",
    "load_histogram",
    "load_shots",
    "write_histogram_csv",
    "write_shots_csv",
    "histogram_from_shots",
    "group_windows",
    "response_matrix",
    "em_deconvolve",
    "raw_moments",
    "to_intensity_moments",
    "factorial_moments",
    "intensity_moments_from_histogram",
    "bootstrap_replicates",
    "cumulants",
    "from_cumulants",
    "compose_iid",
    "reduce_per_mode",
    "estimate_modes",
    "merge_beams",
    "shannon_entropy",
    "moments_to_json",
    "moments_from_json",
]


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------

def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class JointHistogram:
    """Photocount histogram ``counts[c1, c2]`` of ``total_shots`` windows.

    ``window_group`` is the number of raw detection windows summed into each
    compound shot (1 for raw data).
    """

    counts: np.ndarray
    total_shots: int
    window_group: int = 1

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            raise InputError("histogram counts must be a 2-D array")
        if counts.size and counts.min() < 0:
            raise InputError("histogram counts must be nonnegative")
        if not np.all(np.equal(np.mod(counts, 1), 0)):
            raise InputError("histogram counts must be integers")
        counts = _frozen(counts, dtype=np.int64)
        if int(counts.sum()) != int(self.total_shots):
            raise InputError(
                f"counts sum {int(counts.sum())} != total_shots {self.total_shots}")
        if int(self.window_group) < 1:
            raise InvalidN("window_group must be a positive integer")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "total_shots", int(self.total_shots))
        object.__setattr__(self, "window_group", int(self.window_group))

    @classmethod
    def from_counts(cls, counts, window_group=1):
        counts = np.asarray(counts, dtype=np.int64)
        return cls(counts, int(counts.sum()), window_group)

    @property
    def frequencies(self) -> np.ndarray:
        if self.total_shots == 0:
            raise EmptyData("histogram has zero total shots")
        return self.counts / self.total_shots

    def cells(self):
        """Yield ``(c1, c2, count)`` for every nonzero cell, row-major."""
        for c1, c2 in zip(*np.nonzero(self.counts)):
            yield int(c1), int(c2), int(self.counts[c1, c2])


@dataclass(frozen=True)
class EMFit:
    iterations: int
    converged: bool
    tol: float
    loglik: tuple
    efficiency: tuple
    dark: tuple


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Normalized joint photon-number distribution ``p[n1, n2]``."""

    p: np.ndarray
    fit: EMFit | None = None

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        if p.ndim != 2:
            raise InputError("distribution must be a 2-D array")
        # round-off from the EM update can leave -1e-18 style entries
        if p.min() < -1e-12 or p.max() > 1 + 1e-12:
            raise InputError("probabilities must lie in [0, 1]")
        total = p.sum()
        if abs(total - 1.0) > 1e-9:
            raise InputError(f"probabilities sum to {total!r}, not 1")
        object.__setattr__(self, "p", _frozen(np.clip(p, 0.0, 1.0)))

    @property
    def cutoff(self):
        return (self.p.shape[0] - 1, self.p.shape[1] - 1)

    @classmethod
    def from_histogram(cls, hist: JointHistogram):
        return cls(hist.frequencies)

    def to_json(self) -> dict:
        return {"cutoff": list(self.cutoff), "p": self.p.tolist()}

    @classmethod
    def from_json(cls, obj):
        p = np.asarray(obj["p"], dtype=float)
        if "cutoff" in obj and tuple(obj["cutoff"]) != (p.shape[0] - 1, p.shape[1] - 1):
            raise ParseError("cutoff does not match the shape of p")
        return cls(p)


class _MomentTable:
    """Shared behaviour of the joint moment tables."""

    _name = "w"

    def __init__(self, values, max_order=MAX_ORDER, se=None):
        max_order = int(max_order)
        if not 0 <= max_order <= MAX_ORDER:
            raise InputError(f"max_order must be in [0, {MAX_ORDER}]")
        values = np.array(values, dtype=float)
        if values.shape != (max_order + 1, max_order + 1):
            raise InputError(
                f"moment table must have shape {(max_order + 1,) * 2}, got {values.shape}")
        k, l = np.indices(values.shape)
        values[k + l > max_order] = 0.0
        if abs(values[0, 0] - 1.0) > 1e-9:
            raise InputError(f"zeroth moment must be 1, got {values[0, 0]!r}")
        self._values = _frozen(values)
        self.max_order = max_order
        if se is not None:
            se = np.array(se, dtype=float)
            if se.shape != values.shape:
                raise InputError("standard-error table shape mismatch")
            se[k + l > max_order] = 0.0
            se = _frozen(se)
        self.se = se

    @property
    def values(self) -> np.ndarray:
        return self._values

    def __getitem__(self, kl):
        k, l = kl
        if k + l > self.max_order or k < 0 or l < 0:
            raise KeyError(f"moment ({k}, {l}) not stored (max_order={self.max_order})")
        return float(self._values[k, l])

    def keys(self):
        return [(k, l) for k in range(self.max_order + 1)
                for l in range(self.max_order + 1 - k)]

    def to_dict(self):
        return {f"{k},{l}": self[k, l] for k, l in self.keys()}

    def __eq__(self, other):
        return (type(self) is type(other) and self.max_order == other.max_order
                and np.array_equal(self._values, other._values))

    def allclose(self, other, rtol=1e-9, atol=1e-12):
        return self.max_order == other.max_order and np.allclose(
            self._values, other._values, rtol=rtol, atol=atol)

    def __repr__(self):
        body = ", ".join(f"{k}{l}={v:.6g}" for (k, l), v in
                         ((kl, self[kl]) for kl in self.keys()))
        return f"{type(self).__name__}({body})"


class PhotonNumberMoments(_MomentTable):
    """Raw photon-number moments ``m[k, l] = <n1^k n2^l>``."""

    @property
    def m(self):
        return self._values


class IntensityMoments(_MomentTable):
    """Normally ordered intensity moments ``w[k, l] = <W1^k W2^l>``.

    ``se`` optionally holds a table of standard errors of the same shape.
    """

    @property
    def w(self):
        return self._values

    @classmethod
    def from_dict(cls, d, max_order=MAX_ORDER, se=None):
        arr = np.zeros((max_order + 1, max_order + 1))
        arr[0, 0] = 1.0
        for (k, l), v in d.items():
            arr[k, l] = v
        return cls(arr, max_order, se)

    def beam(self, j: int) -> "SingleBeamMoments":
        """Marginal moments of beam ``j``."""
        if j == 1:
            return SingleBeamMoments(self._values[:, 0])
        if j == 2:
            return SingleBeamMoments(self._values[0, :])
        raise InputError("beam must be 1 or 2")

    def swapped(self) -> "IntensityMoments":
        se = None if self.se is None else self.se.T
        return IntensityMoments(self._values.T, self.max_order, se)


class SingleBeamMoments:
    """Moments ``<W^k>``, ``k <= 4``, of one (possibly merged) beam."""

    def __init__(self, w, se=None):
        w = np.array(w, dtype=float)
        if w.ndim != 1 or not 1 <= w.size <= MAX_ORDER + 1:
            raise InputError("single-beam moments must be a vector of length <= 5")
        if abs(w[0] - 1.0) > 1e-9:
            raise InputError("zeroth moment must be 1")
        self.w = _frozen(w)
        self.se = None if se is None else _frozen(se)

    def __getitem__(self, k):
        return float(self.w[k])

    def __len__(self):
        return self.w.size

    def __repr__(self):
        return f"SingleBeamMoments({self.w.tolist()})"


# ---------------------------------------------------------------------------
# I/O
# ---------------------------------------------------------------------------

def _read_text(source) -> str:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"input is not UTF-8: {exc}") from None
    return data


def _data_rows(text, header):
    """Yield ``(line_number, fields)`` for the rows after the required header.

    Lines starting with ``#`` are metadata comments and are skipped.
    """
    seen_header = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        fields = [f.strip() for f in next(csv.reader([stripped]))]
        if not seen_header:
            if fields != list(header):
                raise ParseError(f"expected header {','.join(header)!r}, got {stripped!r}",
                                 lineno)
            seen_header = True
            continue
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(fields)}", lineno)
        try:
            values = [int(f) for f in fields]
        except ValueError:
            raise ParseError(f"non-integer field in {stripped!r}", lineno) from None
        if min(values) < 0:
            raise ParseError(f"negative value in {stripped!r}", lineno)
        yield lineno, values
    if not seen_header:
        raise ParseError(f"missing header {','.join(header)!r}")


def _histogram_from_cells(cells, window_group=1):
    cells = list(cells)
    if not cells:
        raise EmptyData("histogram has no rows")
    n1 = max(c[0] for c in cells) + 1
    n2 = max(c[1] for c in cells) + 1
    counts = np.zeros((n1, n2), dtype=np.int64)
    for c1, c2, n in cells:
        counts[c1, c2] += n
    if counts.sum() == 0:
        raise EmptyData("histogram has zero total shots")
    return JointHistogram.from_counts(counts, window_group)


def load_histogram(source, format: str = "csv") -> JointHistogram:
    """Read a photocount histogram.

    ``source`` is a path or a (binary or text) stream. CSV files carry the
    header ``c1,c2,count`` and one row per cell; repeated cells add up. JSON
    files hold ``{"window_group": N, "cells": [[c1, c2, count], ...]}``.
    """
    text = _read_text(source)
    if format == "csv":
        return _histogram_from_cells(v for _, v in _data_rows(text, ("c1", "c2", "count")))
    if format == "json":
        try:
            obj = json.loads(text)
            cells = [tuple(int(x) for x in row) for row in obj["cells"]]
            group = int(obj.get("window_group", 1))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"bad histogram JSON: {exc}") from None
        for row in cells:
            if len(row) != 3 or min(row) < 0:
                raise ParseError(f"bad histogram cell {list(row)!r}")
        return _histogram_from_cells(cells, group)
    raise InputError(f"unknown histogram format {format!r}")


def load_shots(source) -> np.ndarray:
    """Read a shot-stream CSV (header ``c1,c2``) into an ``(n, 2)`` int array."""
    rows = [v for _, v in _data_rows(_read_text(source), ("c1", "c2"))]
    if not rows:
        raise EmptyData("shot stream has no rows")
    return np.asarray(rows, dtype=np.int64)


def write_histogram_csv(hist: JointHistogram, stream, comments: Iterable[str] = ()):
    for line in comments:
        stream.write(f"# {line}\n")
    stream.write("c1,c2,count\n")
    for c1, c2, n in hist.cells():
        stream.write(f"{c1},{c2},{n}\n")


def write_shots_csv(shots, stream, comments: Iterable[str] = ()):
    for line in comments:
        stream.write(f"# {line}\n")
    stream.write("c1,c2\n")
    buf = io.StringIO()
    np.savetxt(buf, np.asarray(shots, dtype=np.int64), fmt="%d", delimiter=",")
    stream.write(buf.getvalue())


def histogram_from_shots(shots, window_group: int = 1) -> JointHistogram:
    shots = np.asarray(shots, dtype=np.int64).reshape(-1, 2)
    if shots.shape[0] == 0:
        raise EmptyData("no shots")
    if shots.min() < 0:
        raise InputError("photocounts must be nonnegative")
    shape = tuple(shots.max(axis=0) + 1)
    flat = np.ravel_multi_index((shots[:, 0], shots[:, 1]), shape)
    counts = np.bincount(flat, minlength=shape[0] * shape[1]).reshape(shape)
    return JointHistogram.from_counts(counts, window_group)


def group_windows(shots: Sequence, N: int) -> JointHistogram:
    """Sum consecutive non-overlapping blocks of ``N`` shots.

    A trailing partial block is dropped. The returned histogram records
    ``window_group = N``.
    """
    if int(N) != N or N < 1:
        raise InvalidN(f"N must be a positive integer, got {N!r}")
    N = int(N)
    shots = np.asarray(shots, dtype=np.int64).reshape(-1, 2)
    n_blocks = shots.shape[0] // N
    if n_blocks == 0:
        raise EmptyData(f"need at least N={N} shots, got {shots.shape[0]}")
    compound = shots[: n_blocks * N].reshape(n_blocks, N, 2).sum(axis=1)
    return histogram_from_shots(compound, window_group=N)


# ---------------------------------------------------------------------------
# Maximum-likelihood reconstruction
# ---------------------------------------------------------------------------

def response_matrix(efficiency: float, dark: float, n_counts: int, cutoff: int) -> np.ndarray:
    """Detector kernel ``R[c, n] = P(c counts | n photons)``.

    Binomial loss with the given efficiency followed by additive Poissonian
    dark counts of mean ``dark``. Rows ``c = 0..n_counts``, columns
    ``n = 0..cutoff``.
    """
    if not 0.0 < efficiency <= 1.0:
        raise BadEfficiency(f"efficiency must lie in (0, 1], got {efficiency!r}")
    if dark < 0:
        raise InputError(f"dark-count mean must be nonnegative, got {dark!r}")
    k = np.arange(n_counts + 1)[:, None]
    n = np.arange(cutoff + 1)[None, :]
    loss = stats.binom.pmf(k, n, efficiency)
    if dark == 0:
        return loss
    diff = k - np.arange(n_counts + 1)[None, :]
    noise = np.where(diff >= 0, stats.poisson.pmf(np.maximum(diff, 0), dark), 0.0)
    return noise @ loss


def _default_cutoff(max_count, efficiency):
    return int(math.ceil((max_count + 3 * math.sqrt(max_count + 1)) / efficiency)) + 5


def em_deconvolve(hist: JointHistogram, efficiency=(1.0, 1.0), dark=(0.0, 0.0),
                  cutoff=None, max_iter: int = 20000, tol: float = 1e-9,
                  strict: bool = False, init=None) -> JointDistribution:
    """Expectation-maximization estimate of the incident photon-number
    distribution.

    The response kernel factorizes over the beams; each factor is
    :func:`response_matrix`. Iteration stops once the log-likelihood gain
    per shot drops below ``tol``; the L1 change of ``p`` is a poor criterion
    here because EM creeps along the ill-conditioned directions of the
    deconvolution long after the moments have settled. When ``max_iter`` is reached first the result is
    returned with ``fit.converged = False`` and a :class:`NoConvergenceWarning`
    is issued (or :class:`NoConvergence` raised if ``strict``).

    The log-likelihood of the data before every update is stored in
    ``fit.loglik``; EM guarantees it never decreases.
    """
    eta1, eta2 = (float(x) for x in efficiency)
    d1, d2 = (float(x) for x in dark)
    for eta in (eta1, eta2):
        if not 0.0 < eta <= 1.0:
            raise BadEfficiency(f"efficiency must lie in (0, 1], got {eta!r}")
    if hist.total_shots <= 0:
        raise EmptyData("histogram has zero total shots")
    f = hist.frequencies
    c1max, c2max = f.shape[0] - 1, f.shape[1] - 1
    if cutoff is None:
        cutoff = (_default_cutoff(c1max, eta1), _default_cutoff(c2max, eta2))
    n1max, n2max = (int(c) for c in cutoff)
    r1 = response_matrix(eta1, d1, c1max, n1max)
    r2 = response_matrix(eta2, d2, c2max, n2max)

    observed = f > 0
    if init is None:
        p = np.full((n1max + 1, n2max + 1), 1.0 / ((n1max + 1) * (n2max + 1)))
    else:
        p = np.array(init, dtype=float)
        if p.shape != (n1max + 1, n2max + 1):
            raise InputError("initial distribution shape does not match cutoff")
        # keep support everywhere so no cell gets stuck at zero
        p = 0.99 * p / p.sum() + 0.01 / p.size
    q = r1 @ p @ r2.T
    if np.any(q[observed] <= 0):
        raise InputError("cutoff too small: observed counts cannot be produced")

    ll = [float(hist.total_shots * np.sum(f[observed] * np.log(q[observed])))]
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        ratio = np.zeros_like(f)
        ratio[observed] = f[observed] / q[observed]
        p_new = p * (r1.T @ ratio @ r2)
        p_new /= p_new.sum()
        p = p_new
        q = r1 @ p @ r2.T
        ll.append(float(hist.total_shots * np.sum(f[observed] * np.log(q[observed]))))
        if (ll[-1] - ll[-2]) / hist.total_shots < tol:
            converged = True
            break
    fit = EMFit(it, converged, tol, tuple(ll), (eta1, eta2), (d1, d2))
    if not converged:
        msg = f"EM did not reach tol={tol:g} within {max_iter} iterations"
        if strict:
            raise NoConvergence(msg)
        warnings.warn(msg, NoConvergenceWarning, stacklevel=2)
    return JointDistribution(p, fit)


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------

def _stirling1(n: int) -> np.ndarray:
    """Signed Stirling numbers of the first kind ``s[k, i]`` for ``k, i <= n``,
    so that ``x (x-1) ... (x-k+1) = sum_i s[k, i] x**i``."""
    s = np.zeros((n + 1, n + 1))
    s[0, 0] = 1.0
    for k in range(1, n + 1):
        for i in range(1, k + 1):
            s[k, i] = s[k - 1, i - 1] - (k - 1) * s[k - 1, i]
    return s


def _falling(x, k):
    out = np.ones_like(x, dtype=float)
    for i in range(k):
        out = out * (x - i)
    return out


def raw_moments(dist: JointDistribution, max_order: int = MAX_ORDER) -> PhotonNumberMoments:
    p = dist.p
    n1 = np.arange(p.shape[0], dtype=float)
    n2 = np.arange(p.shape[1], dtype=float)
    m = np.zeros((max_order + 1, max_order + 1))
    for k in range(max_order + 1):
        for l in range(max_order + 1 - k):
            m[k, l] = (n1 ** k) @ p @ (n2 ** l)
    m[0, 0] = 1.0
    return PhotonNumberMoments(m, max_order)


def to_intensity_moments(m: PhotonNumberMoments) -> IntensityMoments:
    """Convert raw photon-number moments into falling-factorial (intensity)
    moments with the Stirling numbers of the first kind."""
    order = m.max_order
    s = _stirling1(order)
    raw = m.values
    w = np.zeros_like(raw)
    for k in range(order + 1):
        for l in range(order + 1 - k):
            w[k, l] = s[k, : k + 1] @ raw[: k + 1, : l + 1] @ s[l, : l + 1]
    return IntensityMoments(w, order)


def factorial_moments(dist: JointDistribution, max_order: int = MAX_ORDER) -> IntensityMoments:
    """Intensity moments straight from the distribution (no Stirling step)."""
    return to_intensity_moments(raw_moments(dist, max_order))


def _sample_factorial_table(counts, max_order):
    n1 = np.arange(counts.shape[-2], dtype=float)
    n2 = np.arange(counts.shape[-1], dtype=float)
    f1 = np.stack([_falling(n1, k) for k in range(max_order + 1)])
    f2 = np.stack([_falling(n2, l) for l in range(max_order + 1)])
    # counts may carry a leading replicate axis
    return np.einsum("ki,...ij,lj->...kl", f1, counts, f2)


def bootstrap_replicates(hist: JointHistogram, n_boot: int = 200, seed=None,
                         max_order: int = MAX_ORDER) -> np.ndarray:
    """Bootstrap replicates of the sample intensity-moment table.

    Resampling shots with replacement is equivalent to drawing a multinomial
    histogram with the observed frequencies. Returns an array of shape
    ``(n_boot, max_order + 1, max_order + 1)``.
    """
    if hist.total_shots <= 0:
        raise EmptyData("histogram has zero total shots")
    rng = np.random.default_rng(seed)
    f = hist.frequencies.ravel()
    draws = rng.multinomial(hist.total_shots, f, size=int(n_boot))
    draws = draws.reshape((int(n_boot),) + hist.counts.shape) / hist.total_shots
    reps = _sample_factorial_table(draws, max_order)
    k, l = np.indices(reps.shape[1:])
    reps[:, k + l > max_order] = 0.0
    reps[:, 0, 0] = 1.0
    return reps


def intensity_moments_from_histogram(hist: JointHistogram, n_boot: int = 200, seed=None,
                                     max_order: int = MAX_ORDER,
                                     return_replicates: bool = False):
    """Unbiased sample falling-factorial moments of the photocounts.

    Valid as intensity moments when detection is ideal (or when the detected
    field itself is the object of interest). Standard errors are the spread of
    ``n_boot`` bootstrap replicates and are attached as ``.se``; set
    ``n_boot=0`` to skip them.
    """
    if hist.total_shots <= 0:
        raise EmptyData("histogram has zero total shots")
    table = _sample_factorial_table(hist.frequencies, max_order)
    reps = None
    se = None
    if n_boot:
        reps = bootstrap_replicates(hist, n_boot, seed, max_order)
        se = reps.std(axis=0, ddof=1) if n_boot > 1 else np.zeros_like(table)
    w = IntensityMoments(table, max_order, se)
    if return_replicates:
        return w, reps
    return w


# -- cumulants ---------------------------------------------------------------
#
# The factorial-moment generating function G(s, t) = sum w[k,l] s^k t^l/(k! l!)
# multiplies for independent fields, so log G (the factorial cumulants) adds.
# Truncated bivariate power series over total degree <= order do the algebra.

def _series_mul(a, b, order):
    out = np.zeros_like(a)
    for k in range(order + 1):
        for l in range(order + 1 - k):
            acc = 0.0
            for i in range(k + 1):
                for j in range(l + 1):
                    acc += a[i, j] * b[k - i, l - j]
            out[k, l] = acc
    return out


def _series_log(a, order):
    x = a.copy()
    x[0, 0] = 0.0
    out = np.zeros_like(a)
    power = x
    for n in range(1, order + 1):
        out += (-1) ** (n + 1) * power / n
        power = _series_mul(power, x, order)
    return out


def _series_exp(y, order):
    out = np.zeros_like(y)
    out[0, 0] = 1.0
    term = out.copy()
    for n in range(1, order + 1):
        term = _series_mul(term, y, order) / n
        out += term
    return out


def _fact_weights(order):
    f = np.array([math.factorial(i) for i in range(order + 1)], dtype=float)
    return np.outer(f, f)


def cumulants(w: IntensityMoments) -> np.ndarray:
    """Joint (factorial) cumulants ``kappa[k, l]`` of the intensity moments."""
    order = w.max_order
    fw = _fact_weights(order)
    return _series_log(w.values / fw, order) * fw


def from_cumulants(kappa, max_order: int = MAX_ORDER) -> IntensityMoments:
    fw = _fact_weights(max_order)
    k, l = np.indices(fw.shape)
    kappa = np.where(k + l <= max_order, np.asarray(kappa, dtype=float), 0.0)
    return IntensityMoments(_series_exp(kappa / fw, max_order) * fw, max_order)


def compose_iid(w: IntensityMoments, M: float) -> IntensityMoments:
    """Moments of the sum of ``M`` independent copies of the field ``w``."""
    if M <= 0:
        raise BadModeCount(f"mode count must be positive, got {M!r}")
    return from_cumulants(cumulants(w) * M, w.max_order)


def reduce_per_mode(w: IntensityMoments, M: float) -> IntensityMoments:
    """Moments of one typical mode of an ``M``-mode field.

    Every cumulant of order >= 1 is divided by ``M``; this inverts
    :func:`compose_iid`.
    """
    if not M >= 1:
        raise BadModeCount(f"mode count must be >= 1, got {M!r}")
    if M == 1:
        return w
    return from_cumulants(cumulants(w) / M, w.max_order)


def estimate_modes(w: IntensityMoments, beam="marginal") -> float:
    """Multithermal estimate of the effective number of modes.

    For beam ``j``: ``<W_j>^2 / (<W_j^2> - <W_j>^2)``, exact for ``M``
    identical thermal modes. ``"marginal"`` averages the two beams.
    ``"joint"`` uses ``<W1><W2> / (<W1 W2> - <W1><W2>)``, which suits
    classically correlated (chaotic) beams but not twin beams.
    """
    if beam == "marginal":
        return 0.5 * (estimate_modes(w, 1) + estimate_modes(w, 2))
    if beam in (1, "1"):
        num, var = w[1, 0] ** 2, w[2, 0] - w[1, 0] ** 2
    elif beam in (2, "2"):
        num, var = w[0, 1] ** 2, w[0, 2] - w[0, 1] ** 2
    elif beam == "joint":
        num, var = w[1, 0] * w[0, 1], w[1, 1] - w[1, 0] * w[0, 1]
    else:
        raise InputError(f"beam must be 1, 2, 'marginal' or 'joint', got {beam!r}")
    # round-off leaves ~1e-17 where the (co)variance vanishes analytically
    if not var > 1e-12 * max(abs(num), 1e-300):
        raise DegenerateVariance(f"normally ordered (co)variance {var!r} is not positive")
    return float(num / var)


def merge_beams(w: IntensityMoments) -> SingleBeamMoments:
    """Moments of ``W = W1 + W2``, the beam obtained by merging both arms."""
    order = w.max_order
    out = np.zeros(order + 1)
    for k in range(order + 1):
        out[k] = sum(math.comb(k, i) * w[i, k - i] for i in range(k + 1))
    return SingleBeamMoments(out)


def shannon_entropy(dist: JointDistribution) -> float:
    p = dist.p[dist.p > 0]
    return float(-(p * np.log(p)).sum())


# ---------------------------------------------------------------------------
# Moment-table JSON
# ---------------------------------------------------------------------------

def moments_to_json(w: IntensityMoments) -> dict:
    obj = {"max_order": w.max_order, "w": w.to_dict()}
    if w.se is not None:
        obj["se"] = {f"{k},{l}": float(w.se[k, l]) for k, l in w.keys()}
    return obj


def moments_from_json(obj) -> IntensityMoments:
    try:
        order = int(obj.get("max_order", MAX_ORDER))
        if order > MAX_ORDER:
            raise ParseError(f"max_order {order} exceeds {MAX_ORDER}")

        def table(d, fill):
            arr = np.zeros((order + 1, order + 1))
            arr[0, 0] = fill
            for key, value in d.items():
                k, l = (int(x) for x in key.split(","))
                if k + l > order or k < 0 or l < 0:
                    raise ParseError(f"moment key {key!r} outside max_order {order}")
                arr[k, l] = float(value)
            return arr

        w = table(obj["w"], 1.0)
        se = table(obj["se"], 0.0) if obj.get("se") else None
    except ParseError:
        raise
    except (KeyError, ValueError, AttributeError, TypeError) as exc:
        raise ParseError(f"bad moment-table JSON: {exc}") from None
    return IntensityMoments(w, order, se)
