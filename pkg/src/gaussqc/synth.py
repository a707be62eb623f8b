"""Synthetic photocount data for multimode noisy twin beams.

Incident photon numbers are drawn from the exact joint distribution of ``M``
identical modes of the noisy twin beam (pair mean ``Bp``, extra thermal noise
``Bn_j`` in the same mode as the pairs). For one mode the probability
generating function is ``1 / (1 + B1 x + B2 y + (B1 B2 - |D|^2) x y)`` with
``x = 1 - z1``, ``y = 1 - z2``; without noise this is a geometric pair
number. Detection applies binomial thinning with efficiency ``eta_j``, adds
Poisson dark counts and optionally clips at a saturation count.

Random numbers come from numpy's Philox 4x64 counter-based generator. Shots
are produced in fixed-size shards; shard ``k`` uses ``Philox(seed + k)``
(seeded through ``SeedSequence``) and draws photon numbers by inverse-CDF
lookup before thinning and dark counts, so a run is reproducible from its
seed and the numpy version alone.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import __version__
from .errors import BadEfficiency, InputError
from .gaussian import TwinBeamSpec, forward_moments, params_of_twin_beam
from .moments import (
    IntensityMoments,
    JointHistogram,
    compose_iid,
    cumulants,
    from_cumulants,
    histogram_from_shots,
)

__all__ = [
    "DetectorSpec",
    "SimRun",
    "GENERATOR",
    "SHARD_SIZE",
    "photon_number_pmf",
    "simulate_shots",
    "simulate",
    "analytic_moments",
    "run_metadata",
]

SHARD_SIZE = 1 << 18
GENERATOR = (f"numpy.random.Philox(seed + shard), inverse-CDF photon numbers, "
             f"shard size {SHARD_SIZE}, numpy {np.__version__}")


@dataclass(frozen=True)
class DetectorSpec:
    efficiency: float = 1.0
    dark: float = 0.0
    saturation: Optional[int] = None

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise BadEfficiency(f"efficiency must lie in (0, 1], got {self.efficiency!r}")
        if not self.dark >= 0:
            raise InputError(f"dark count mean must be nonnegative, got {self.dark!r}")
        if self.saturation is not None and (int(self.saturation) != self.saturation
                                            or self.saturation < 1):
            raise InputError(f"saturation must be a positive integer, got {self.saturation!r}")


@dataclass(frozen=True)
class SimRun:
    spec: TwinBeamSpec
    detectors: tuple = (DetectorSpec(), DetectorSpec())
    shots: int = 1
    seed: int = 0

    def __post_init__(self):
        if int(self.shots) != self.shots or self.shots < 1:
            raise InputError(f"shots must be a positive integer, got {self.shots!r}")
        if len(self.detectors) != 2:
            raise InputError("exactly two detectors are required")
        if not 0 <= self.seed < 2 ** 64:
            raise InputError("seed must be a 64-bit unsigned integer")


def photon_number_pmf(spec: TwinBeamSpec, tail: float = 1e-13) -> np.ndarray:
    """Joint photon-number distribution ``p[n1, n2]`` of ``spec.M`` modes,
    truncated where the neglected mass falls below ``tail``."""
    g = params_of_twin_beam(spec)
    B1, B2 = g.B1, g.B2
    K = B1 * B2 - abs(g.D12) ** 2
    a, b, c, d = 1 + B1 + B2 + K, B1 + K, B2 + K, K
    M = spec.M
    mean = M * max(B1, B2)
    size = int(mean + 15 * math.sqrt(M * max(B1, B2) * (1 + max(B1, B2))) + 10)
    while True:
        h = np.zeros((size, size))
        # first column: negative binomial in z2
        h[0, 0] = a ** -M
        for j in range(1, size):
            h[0, j] = h[0, j - 1] * (M + j - 1) / j * (c / a)
        # coefficients of Q^-M from Q dH/dz1 = -M (dQ/dz1) H
        for i in range(size - 1):
            row = (M + i) * (b * h[i] - d * np.concatenate(([0.0], h[i, :-1])))
            nxt = h[i + 1]
            nxt[0] = row[0] / ((i + 1) * a)
            for j in range(1, size):
                nxt[j] = (row[j] + c * (i + 1) * nxt[j - 1]) / ((i + 1) * a)
        np.maximum(h, 0.0, out=h)
        if 1 - h.sum() < tail:
            return h / h.sum()
        size *= 2


def _detect(rng, n, det: DetectorSpec):
    c = rng.binomial(n, det.efficiency) if det.efficiency < 1 else n
    if det.dark > 0:
        c = c + rng.poisson(det.dark, n.shape)
    if det.saturation is not None:
        c = np.minimum(c, det.saturation)
    return c


def _shard(run: SimRun, cdf: np.ndarray, width: int, index: int, size: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(run.seed + index))
    flat = np.searchsorted(cdf, rng.random(size), side="right")
    flat = np.minimum(flat, cdf.size - 1)
    n1, n2 = np.divmod(flat, width)
    d1, d2 = run.detectors
    return np.stack([_detect(rng, n1, d1), _detect(rng, n2, d2)], axis=1)


def simulate_shots(run: SimRun) -> np.ndarray:
    """Per-shot photocounts, shape ``(shots, 2)``."""
    sizes = [SHARD_SIZE] * (run.shots // SHARD_SIZE)
    if run.shots % SHARD_SIZE:
        sizes.append(run.shots % SHARD_SIZE)
    pmf = photon_number_pmf(run.spec)
    cdf = np.cumsum(pmf.ravel())
    cdf /= cdf[-1]
    return np.concatenate([_shard(run, cdf, pmf.shape[1], k, n) for k, n in enumerate(sizes)])


def simulate(run: SimRun) -> JointHistogram:
    """Joint photocount histogram of ``run.shots`` shots."""
    return histogram_from_shots(simulate_shots(run))


def analytic_moments(run: SimRun) -> IntensityMoments:
    """Exact intensity moments of the detected field (saturation ignored).

    Loss scales normally ordered moments by ``eta1^k eta2^l`` per mode; the
    ``M`` modes compose by cumulant additivity and dark counts enter as an
    independent Poisson field, which only shifts the first cumulants.
    """
    w = forward_moments(params_of_twin_beam(run.spec))
    d1, d2 = run.detectors
    k = np.arange(w.max_order + 1)
    scale = np.outer(d1.efficiency ** k, d2.efficiency ** k)
    w = IntensityMoments(w.values * scale, w.max_order)
    w = compose_iid(w, run.spec.M)
    if d1.dark or d2.dark:
        kappa = cumulants(w)
        kappa[1, 0] += d1.dark
        kappa[0, 1] += d2.dark
        w = from_cumulants(kappa, w.max_order)
    return w


def run_metadata(run: SimRun) -> dict:
    return {
        "spec": asdict(run.spec),
        "detectors": [asdict(d) for d in run.detectors],
        "shots": int(run.shots),
        "seed": int(run.seed),
        "generator": GENERATOR,
        "version": __version__,
    }
