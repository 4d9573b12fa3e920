"""Quantum dissipative kicked rotator on a truncated momentum basis.

The basis holds the 2 n_max + 1 momentum eigenstates |n>, n in
[-n_max, n_max].  One period applies, in order, the dissipative friction
channel, the kick unitary exp(-i k [cos q + (a/2) cos(2q + phi)]), and the
free rotation exp(-i tau n^2 / 2).

Friction is the zero-temperature cascade generated by the two ladder
operators

    L1 = g sum_n sqrt(n+1) |n><n+1|        (n >= 0)
    L2 = g sum_n sqrt(n+1) |-n><-n-1|      (n >= 0)

with g^2 = 2 nu, so one unit of time contracts <|n|> by gamma = exp(-2 nu).
The channel is applied exactly: the generator decouples into independent
chains along matrix diagonals, each solved in closed form (binomial
cascade within a momentum half-axis, pure exponential decay for
coherences that straddle both half-axes).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import gammaln

from .errors import BandFitError, ConfigError, DomainError, LeakageError
from .measures import BinSpec, MomentumDistribution, normalize_distribution
from .params import ModelParams

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class HilbertSpec:
    """Truncated momentum basis: levels -n_max .. n_max, tau = hbar_eff."""

    n_max: int
    tau: float

    def __post_init__(self):
        if self.n_max < 1:
            raise ConfigError(f"n_max must be >= 1, got {self.n_max}")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")

    @property
    def dim(self) -> int:
        return 2 * self.n_max + 1

    @property
    def levels(self) -> np.ndarray:
        return np.arange(-self.n_max, self.n_max + 1)

    @property
    def bins(self) -> BinSpec:
        """Momentum bins shared with the classical histograms: p = tau n."""
        return BinSpec(centers=self.tau * self.levels, width=self.tau)


def n_max_for_tau(tau: float, band: float = FOUR_PI) -> int:
    """Smallest cutoff with tau * n_max covering the attractor band."""
    return max(1, math.ceil(band / tau))


@dataclass(frozen=True)
class LindbladPair:
    """The two friction ladder operators on the truncated basis."""

    L1: np.ndarray
    L2: np.ndarray
    g: float


def build_lindblad(hilbert: HilbertSpec, g: float) -> LindbladPair:
    """Ladder operators with entries g sqrt(n+1) at (n, n+1) and (-n, -n-1)."""
    if g < 0:
        raise DomainError("coupling g must be nonnegative")
    dim = hilbert.dim
    n_max = hilbert.n_max
    L1 = np.zeros((dim, dim), dtype=complex)
    L2 = np.zeros((dim, dim), dtype=complex)
    for n in range(n_max):
        amp = g * math.sqrt(n + 1)
        L1[n + n_max, n + 1 + n_max] = amp
        L2[-n + n_max, -n - 1 + n_max] = amp
    return LindbladPair(L1=L1, L2=L2, g=g)


def validate_density_matrix(
    rho: np.ndarray,
    herm_tol: float = 1e-10,
    trace_tol: float = 1e-10,
    eig_floor: float = -1e-8,
) -> None:
    """Raise DomainError unless rho is Hermitian, unit trace, and positive."""
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DomainError("density matrix must be square")
    herm = np.max(np.abs(rho - rho.conj().T))
    if herm > herm_tol:
        raise DomainError(f"density matrix not Hermitian: max deviation {herm:.3e}")
    trace = complex(np.trace(rho))
    if abs(trace - 1.0) > trace_tol:
        raise DomainError(f"density matrix trace {trace!r} differs from 1")
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    if min_eig < eig_floor:
        raise DomainError(f"density matrix has eigenvalue {min_eig:.3e} below floor")


def initial_band_state(hilbert: HilbertSpec) -> np.ndarray:
    """Uniform mixture of momentum eigenstates with tau |n| <= pi."""
    if hilbert.tau * hilbert.n_max < math.pi:
        raise BandFitError(
            f"band |p| <= pi needs tau*n_max >= pi, got {hilbert.tau * hilbert.n_max:.4f}"
        )
    half = int(math.floor(math.pi / hilbert.tau))
    levels = hilbert.levels
    mask = np.abs(levels) <= half
    rho = np.zeros((hilbert.dim, hilbert.dim), dtype=complex)
    rho[mask, mask] = 1.0 / mask.sum()
    return rho


def _to_position(rho: np.ndarray) -> np.ndarray:
    """Conjugate by the momentum->position unitary (centered-level DFT)."""
    dim = rho.shape[0]
    x = np.fft.ifft(np.fft.ifftshift(rho, axes=0), axis=0) * math.sqrt(dim)
    y = np.fft.ifft(np.fft.ifftshift(x.conj().T, axes=0), axis=0) * math.sqrt(dim)
    return y.conj().T


def _to_momentum(rho_pos: np.ndarray) -> np.ndarray:
    dim = rho_pos.shape[0]
    x = np.fft.fftshift(np.fft.fft(rho_pos, axis=0), axes=0) / math.sqrt(dim)
    y = np.fft.fftshift(np.fft.fft(x.conj().T, axis=0), axes=0) / math.sqrt(dim)
    return y.conj().T


def kick_phases(params: ModelParams, dim: int) -> np.ndarray:
    """Diagonal of the kick unitary on the position grid theta_j = 2 pi j / dim.

    The exponent carries k / hbar_eff so the kick adds k [sin q + ...] to
    the rescaled momentum p = tau n, matching the classical map.
    """
    theta = 2.0 * math.pi * np.arange(dim) / dim
    v = params.bare_kick * (
        np.cos(theta) + 0.5 * params.a * np.cos(2.0 * theta + params.phi)
    )
    return np.exp(-1j * v)


def apply_kick(rho: np.ndarray, params: ModelParams) -> np.ndarray:
    """Unitary kick U rho U+ with U = exp(-i V(q)) sampled on the position grid."""
    if params.k == 0.0:
        return rho.copy()
    phase = kick_phases(params, rho.shape[0])
    pos = _to_position(rho)
    pos *= phase[:, None]
    pos *= phase.conj()[None, :]
    return _to_momentum(pos)


def apply_free_rotation(rho: np.ndarray, tau: float) -> np.ndarray:
    """Momentum-diagonal phases exp(-i tau (n^2 - m^2) / 2)."""
    n_max = (rho.shape[0] - 1) // 2
    levels = np.arange(-n_max, n_max + 1)
    phase = np.exp(-0.5j * tau * levels.astype(float) ** 2)
    return rho * (phase[:, None] * phase.conj()[None, :])


class _CascadePropagator:
    """Exact one-period friction channel for a given (gamma, n_max).

    Within each momentum half-axis the cascade is the multilevel damping
    channel: matrix elements flow down the diagonals with binomial
    coefficients in eta = gamma.  Coherences between the two half-axes
    only decay.  Trace is preserved exactly.
    """

    def __init__(self, gamma: float, n_max: int):
        self.gamma = gamma
        self.n_max = n_max
        m = n_max + 1
        eta = gamma
        log_eta = math.log(eta)
        log_1m = math.log1p(-eta) if eta < 1.0 else -math.inf
        lg = gammaln(np.arange(2 * m + 2, dtype=float))

        # tmats[d][r, c]: weight with which diagonal element (r+d, r) of a
        # half-axis block receives element (c+d, c); zero below the diagonal.
        self.tmats = []
        for d in range(m):
            length = m - d
            r = np.arange(length)
            j = r[None, :] - r[:, None]  # j = c - r
            valid = j >= 0
            jv = np.where(valid, j, 0)
            n_idx = r[:, None] + d + jv
            m_idx = r[:, None] + jv
            logc = 0.5 * (
                (lg[n_idx + 1] - lg[jv + 1] - lg[n_idx - jv + 1])
                + (lg[m_idx + 1] - lg[jv + 1] - lg[m_idx - jv + 1])
            )
            decay = 0.5 * (2 * r[:, None] + d) * log_eta
            feed = np.where(jv > 0, jv * log_1m, 0.0)
            t = np.exp(logc + decay + feed)
            t[~valid] = 0.0
            self.tmats.append(t)

        levels = np.arange(-n_max, n_max + 1)
        dec = eta ** (0.5 * np.abs(levels).astype(float))
        self.mixed_decay = np.outer(dec, dec)

    def _propagate_block(self, block: np.ndarray) -> np.ndarray:
        m = block.shape[0]
        out = np.zeros_like(block)
        for d in range(m):
            t = self.tmats[d]
            idx = np.arange(m - d)
            out[idx + d, idx] = t @ np.diagonal(block, offset=-d)
            if d > 0:
                out[idx, idx + d] = t @ np.diagonal(block, offset=d)
        return out

    def apply(self, rho: np.ndarray) -> np.ndarray:
        n_max = self.n_max
        out = rho * self.mixed_decay
        pos = self._propagate_block(rho[n_max:, n_max:])
        neg = self._propagate_block(rho[n_max::-1, n_max::-1])
        center = pos[0, 0] + neg[0, 0] - rho[n_max, n_max]
        out[n_max:, n_max:] = pos
        out[n_max::-1, n_max::-1] = neg
        out[n_max, n_max] = center
        return out


@lru_cache(maxsize=8)
def _cascade_propagator(gamma: float, n_max: int) -> _CascadePropagator:
    return _CascadePropagator(gamma, n_max)


def dissipative_channel(rho: np.ndarray, params: ModelParams) -> np.ndarray:
    """Exact friction channel over one period; CPTP, contracts <|n|> by gamma."""
    if params.gamma == 0.0:
        raise ConfigError(
            "gamma = 0 (infinite friction) is excluded from quantum evolution"
        )
    if params.gamma == 1.0:
        return rho.copy()
    n_max = (rho.shape[0] - 1) // 2
    return _cascade_propagator(params.gamma, n_max).apply(rho)


def dissipative_channel_ode(
    rho: np.ndarray,
    params: ModelParams,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> np.ndarray:
    """Friction channel by direct integration of the master equation.

    Reference implementation (slow); oracle for ``dissipative_channel``.
    """
    if params.gamma == 0.0:
        raise ConfigError("gamma = 0 is excluded from quantum evolution")
    dim = rho.shape[0]
    hilbert = HilbertSpec(n_max=(dim - 1) // 2, tau=params.tau)
    pair = build_lindblad(hilbert, params.g)
    ops = [(op, op.conj().T, op.conj().T @ op) for op in (pair.L1, pair.L2)]

    def rhs(_t, y):
        r = (y[: dim * dim] + 1j * y[dim * dim :]).reshape(dim, dim)
        dr = np.zeros_like(r)
        for op, op_dag, op2 in ops:
            dr += op @ r @ op_dag - 0.5 * (op2 @ r + r @ op2)
        flat = dr.ravel()
        return np.concatenate([flat.real, flat.imag])

    y0 = np.concatenate([rho.ravel().real, rho.ravel().imag])
    sol = solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"master equation integration failed: {sol.message}")
    y = sol.y[:, -1]
    return (y[: dim * dim] + 1j * y[dim * dim :]).reshape(dim, dim)


def period_map(rho: np.ndarray, params: ModelParams) -> np.ndarray:
    """One period: dissipate, then kick, then free rotation."""
    return apply_free_rotation(apply_kick(dissipative_channel(rho, params), params), params.tau)


def edge_population(rho: np.ndarray, edge_levels: int = 5) -> float:
    """Total population on the outermost edge_levels levels of each side."""
    diag = np.real(np.diagonal(rho))
    return float(diag[:edge_levels].sum() + diag[-edge_levels:].sum())


def evolve_periods(
    rho: np.ndarray,
    params: ModelParams,
    periods: int,
    leakage_guard: float = 1e-6,
    edge_levels: int = 5,
) -> tuple[np.ndarray, dict]:
    """Apply period_map `periods` times with an edge-population guard.

    Returns (rho, diagnostics); raises LeakageError naming the offending
    period once the edge population exceeds the guard.
    """
    if periods < 0:
        raise ConfigError("period count must be nonnegative")
    out = rho.copy()
    max_edge = 0.0
    for t in range(1, periods + 1):
        out = period_map(out, params)
        edge = edge_population(out, edge_levels)
        max_edge = max(max_edge, edge)
        if edge > leakage_guard:
            raise LeakageError(period=t, population=edge, guard=leakage_guard)
    diagnostics = {
        "periods": periods,
        "max_edge_population": max_edge,
        "trace_drift": abs(float(np.real(np.trace(out))) - 1.0),
    }
    return out, diagnostics


def momentum_marginal(rho: np.ndarray, tau: float) -> MomentumDistribution:
    """Diagonal of rho as a distribution on bins centered at p = tau n."""
    diag = np.real(np.diagonal(rho)).copy()
    if diag.min() < -1e-8:
        raise DomainError(f"negative population {diag.min():.3e} in marginal")
    np.clip(diag, 0.0, None, out=diag)
    n_max = (rho.shape[0] - 1) // 2
    bins = BinSpec(centers=tau * np.arange(-n_max, n_max + 1), width=tau)
    return normalize_distribution(diag, bins)


_RHO_MAGIC = b"DMKRRHO\x00"
_RHO_VERSION = 1


def save_density_matrix(path, rho: np.ndarray, tau: float) -> None:
    """Versioned binary snapshot: dimension, tau, row-major complex entries."""
    dim = rho.shape[0]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<8sIQd", _RHO_MAGIC, _RHO_VERSION, dim, tau))
        fh.write(np.ascontiguousarray(rho, dtype="<c16").tobytes())


def load_density_matrix(path) -> tuple[np.ndarray, float]:
    with open(path, "rb") as fh:
        magic, version, dim, tau = struct.unpack("<8sIQd", fh.read(struct.calcsize("<8sIQd")))
        if magic != _RHO_MAGIC:
            raise ConfigError(f"not a density matrix snapshot: {path}")
        if version != _RHO_VERSION:
            raise ConfigError(f"unsupported density matrix snapshot version {version}")
        data = np.frombuffer(fh.read(16 * dim * dim), dtype="<c16")
    return data.reshape(dim, dim).copy(), tau
