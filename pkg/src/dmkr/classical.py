"""Classical dissipative modified kicked rotator: map, ensembles, histograms.

The map is calibrated in the rescaled momentum p = tau * n, in which the
classical dynamics is independent of the effective Planck constant:

    p_new = gamma * p + k [sin q + a sin(2q + phi)] + xi
    q_new = (q + p_new) mod 2 pi

k is the kick strength per period in p units (the parameter the sweep
axes use) and the optional Gaussian noise xi has variance hbar_eff = tau,
i.e. quantum-cell size in p.  Equivalently, in the unrescaled momentum:
n_new = gamma n + (k f(q) + xi) / tau and q_new = q + tau n_new, so the
bare momentum-level kick is k / tau.  The Jacobian determinant of a
noiseless step is exactly gamma.  Momentum is stored unrescaled (n), with
p = tau * n derived.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .measures import BinSpec, MomentumDistribution, normalize_distribution
from .params import ModelParams

TWO_PI = 2.0 * np.pi

# stream tags so initialization and per-step noise are independent and
# replayable from a single 64-bit seed
_STREAM_INIT = 0x01
_STREAM_NOISE = 0x02


def _generator(seed: int, *tags: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *tags])))


@dataclass(frozen=True)
class PhaseState:
    """Single phase-space point: angle q (reduced mod 2 pi) and momentum n."""

    q: float
    n: float

    def __post_init__(self):
        object.__setattr__(self, "q", float(self.q) % TWO_PI)
        object.__setattr__(self, "n", float(self.n))

    def p(self, tau: float) -> float:
        """Rescaled momentum p = tau * n."""
        return tau * self.n


@dataclass(frozen=True)
class Ensemble:
    """Trajectory ensemble with its seed and step counter.

    Identical (seed, parameters, steps) replay bit-identically; the noise
    for step t is drawn from a stream keyed by (seed, t), so evolving in
    chunks gives the same result as one long evolution.
    """

    qs: np.ndarray
    ns: np.ndarray
    rng_seed: int
    step_count: int = 0

    def __post_init__(self):
        qs = np.asarray(self.qs, dtype=float)
        ns = np.asarray(self.ns, dtype=float)
        if qs.ndim != 1 or qs.size == 0 or qs.shape != ns.shape:
            raise ConfigError("ensemble arrays must be nonempty and of equal length")
        qs.setflags(write=False)
        ns.setflags(write=False)
        object.__setattr__(self, "qs", qs)
        object.__setattr__(self, "ns", ns)

    @property
    def size(self) -> int:
        return self.qs.size

    def momenta(self, tau: float) -> np.ndarray:
        return tau * self.ns


def kick_force(q, params: ModelParams):
    """Momentum (p) impulse k [sin q + a sin(2q + phi)]; scalar or array q."""
    q = np.asarray(q, dtype=float)
    s, c = np.sin(q), np.cos(q)
    # sin(2q + phi) = sin 2q cos phi + cos 2q sin phi, via the single (s, c) pair
    sin2 = 2.0 * s * c
    cos2 = 1.0 - 2.0 * s * s
    out = params.k * (s + params.a * (sin2 * np.cos(params.phi) + cos2 * np.sin(params.phi)))
    return out if out.shape else float(out)


def _advance(q, n, params: ModelParams, xi):
    """One map step on scalars or arrays; returns (q_new, n_new).

    xi is a momentum (p) increment; n carries the same update divided by tau.
    """
    n_new = params.gamma * n + (kick_force(q, params) + xi) / params.tau
    q_new = (q + params.tau * n_new) % TWO_PI
    return q_new, n_new


def map_step(state: PhaseState, params: ModelParams, xi: float = 0.0) -> PhaseState:
    """Advance a single phase-space point by one period."""
    q_new, n_new = _advance(state.q, state.n, params, xi)
    return PhaseState(q=q_new, n=n_new)


def inverse_map_step(state: PhaseState, params: ModelParams) -> PhaseState:
    """Invert one noiseless step; requires gamma > 0."""
    if params.gamma == 0.0:
        raise DomainError("the map is not invertible at gamma = 0")
    q_prev = (state.q - params.tau * state.n) % TWO_PI
    n_prev = (state.n - kick_force(q_prev, params) / params.tau) / params.gamma
    return PhaseState(q=q_prev, n=n_prev)


def sample_noise(variance: float, rng: np.random.Generator) -> float:
    """One Gaussian sample with mean 0 and the given variance."""
    if variance < 0:
        raise DomainError(f"noise variance must be nonnegative, got {variance}")
    if variance == 0:
        return 0.0
    return float(rng.standard_normal() * np.sqrt(variance))


def initial_band_ensemble(count: int, rng_seed: int, tau: float) -> Ensemble:
    """Uniform q in [0, 2 pi) and uniform p in [-pi, pi] (n = p / tau)."""
    if count < 1:
        raise ConfigError(f"ensemble size must be >= 1, got {count}")
    if tau <= 0:
        raise ConfigError("tau must be positive")
    rng = _generator(rng_seed, _STREAM_INIT)
    qs = rng.uniform(0.0, TWO_PI, size=count)
    ps = rng.uniform(-np.pi, np.pi, size=count)
    return Ensemble(qs=qs, ns=ps / tau, rng_seed=int(rng_seed), step_count=0)


def evolve_ensemble(
    ensemble: Ensemble, params: ModelParams, steps: int, noisy: bool
) -> Ensemble:
    """Advance every trajectory by `steps` map iterations.

    Noise (variance hbar_eff in p) is drawn per step from a stream keyed
    by (ensemble seed, step index), so chunked evolution replays exactly.
    """
    if steps < 0:
        raise ConfigError("steps must be nonnegative")
    q = ensemble.qs.copy()
    n = ensemble.ns.copy()
    gamma, tau = params.gamma, params.tau
    k, a, phi = params.k, params.a, params.phi
    cphi, sphi = np.cos(phi), np.sin(phi)
    k_level = k / tau  # kick per period in n units
    sigma_level = np.sqrt(tau) / tau  # p-noise std hbar_eff^(1/2), in n units
    count = q.size

    s = np.empty_like(q)
    c = np.empty_like(q)
    force = np.empty_like(q)
    for t in range(ensemble.step_count, ensemble.step_count + steps):
        np.sin(q, out=s)
        np.cos(q, out=c)
        # force = k_level (s + a (2 s c cphi + (1 - 2 s^2) sphi))
        np.multiply(s, c, out=force)
        force *= 2.0 * cphi
        np.multiply(s, s, out=c)  # c now holds s^2
        c *= -2.0
        c += 1.0
        c *= sphi
        force += c
        force *= a
        force += s
        force *= k_level

        n *= gamma
        n += force
        if noisy:
            rng = _generator(ensemble.rng_seed, _STREAM_NOISE, t)
            n += rng.standard_normal(count) * sigma_level
        q += tau * n
        np.mod(q, TWO_PI, out=q)

    return Ensemble(
        qs=q, ns=n, rng_seed=ensemble.rng_seed, step_count=ensemble.step_count + steps
    )


def momentum_histogram(
    ensemble: Ensemble, bin_spec: BinSpec, tau: float
) -> tuple[MomentumDistribution, float]:
    """Normalized histogram of p = tau n on the given bins.

    Out-of-range trajectories are counted in the edge bins; the returned
    second value is the fraction of trajectories that fell outside.
    """
    p = ensemble.momenta(tau)
    edges = bin_spec.edges
    below = p < edges[0]
    above = p > edges[-1]
    out_fraction = float((below.sum() + above.sum()) / p.size)
    idx = np.searchsorted(edges, p, side="right") - 1
    np.clip(idx, 0, bin_spec.n_bins - 1, out=idx)
    counts = np.bincount(idx, minlength=bin_spec.n_bins).astype(float)
    return normalize_distribution(counts, bin_spec), out_fraction


_ENSEMBLE_MAGIC = b"DMKRENS\x00"
_ENSEMBLE_VERSION = 1


def save_ensemble(path, ensemble: Ensemble, params: ModelParams) -> None:
    """Write a versioned binary snapshot (header with seed and parameters)."""
    header = struct.pack(
        "<8sIQq6d",
        _ENSEMBLE_MAGIC,
        _ENSEMBLE_VERSION,
        ensemble.size,
        ensemble.step_count,
        params.k,
        params.gamma,
        params.tau,
        params.a,
        params.phi,
        params.diffusion_D,
    ) + struct.pack("<q", ensemble.rng_seed)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(ensemble.qs.astype("<f8").tobytes())
        fh.write(ensemble.ns.astype("<f8").tobytes())


def load_ensemble(path) -> tuple[Ensemble, ModelParams]:
    with open(path, "rb") as fh:
        head = fh.read(struct.calcsize("<8sIQq6d"))
        magic, version, count, step_count, k, gamma, tau, a, phi, diff = struct.unpack(
            "<8sIQq6d", head
        )
        if magic != _ENSEMBLE_MAGIC:
            raise ConfigError(f"not an ensemble snapshot: {path}")
        if version != _ENSEMBLE_VERSION:
            raise ConfigError(f"unsupported ensemble snapshot version {version}")
        (seed,) = struct.unpack("<q", fh.read(8))
        qs = np.frombuffer(fh.read(8 * count), dtype="<f8")
        ns = np.frombuffer(fh.read(8 * count), dtype="<f8")
    params = ModelParams(k=k, gamma=gamma, tau=tau, a=a, phi=phi, diffusion_D=diff)
    ensemble = Ensemble(qs=qs.copy(), ns=ns.copy(), rng_seed=seed, step_count=step_count)
    return ensemble, params
