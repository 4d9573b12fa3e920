"""Discrete phase-space transforms for the truncated momentum basis.

Two transforms live here, with different natural grids:

* ``discrete_weyl_symbol`` maps an operator to its symbol on the unit
  torus (position and momentum periods 1), sampled at the half-odd-integer
  grid points x = (p, q) = (a/N, b/N) with |a|, |b| <= n_max - 1/2.  A
  matrix element (j, k) contributes to the rows with j + k = 2a (mod N),
  carrying the phase exp(i 2 pi (j - k) b / N).  With this convention the
  identity operator maps to the constant symbol 1 and the friction ladder
  symbol reproduces its closed form sqrt(l (|p| + hbar/2l)) e^{-i sign(p) q / l}
  exactly, with l = 1/(2 pi) and hbar = 1/(2 pi N).  Because the grid is
  restricted to odd half-integers, purely diagonal operators fold onto
  rows displaced by half a momentum period (|n><n| appears at
  p = n/N - sign(n)/2); the transform is meant for verifying ladder-type
  symbols, not state tomography.

* ``wigner_function`` maps a state to its Wigner function on the physical
  cylinder grid (q = 2 pi b / N, p = tau n) at integer points, where
  populations sit cleanly on their own momentum rows: the marginal over q
  equals the diagonal of rho exactly.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError
from .measures import MomentumDistribution, normalize_distribution
from .moyal import PhaseSpaceField
from .quantum import HilbertSpec

TWO_PI = 2.0 * math.pi


def torus_hbar(dim: int) -> float:
    """Effective Planck constant of the unit torus with `dim` states."""
    return 1.0 / (TWO_PI * dim)


def rescaled_ladder_sum(hilbert: HilbertSpec) -> np.ndarray:
    """The coupling-independent ladder sum with entries sqrt(hbar (n+1)).

    This is the friction operator rescaled by sqrt(hbar / (2 nu)), which
    removes the coupling and leaves the torus hbar = 1/(2 pi N) scale.
    """
    from .quantum import build_lindblad

    g_eff = math.sqrt(torus_hbar(hilbert.dim))
    pair = build_lindblad(hilbert, g_eff)
    return pair.L1 + pair.L2


def discrete_weyl_symbol(matrix: np.ndarray, hilbert: HilbertSpec) -> PhaseSpaceField:
    """Weyl symbol of a matrix on the half-odd-integer unit-torus grid."""
    dim = hilbert.dim
    n_max = hilbert.n_max
    if matrix.shape != (dim, dim):
        raise DomainError(
            f"matrix shape {matrix.shape} does not match Hilbert dimension {dim}"
        )
    # half-odd integers a, b in (-N/2, N/2)
    a_vals = np.arange(-n_max + 0.5, n_max, 1.0)
    b_vals = a_vals.copy()
    n_rows = a_vals.size

    values = np.zeros((n_rows, n_rows), dtype=complex)
    levels = np.arange(-n_max, n_max + 1)
    phase_unit = np.exp(1j * TWO_PI * np.outer(np.arange(-2 * n_max, 2 * n_max + 1), b_vals) / dim)

    for ia, a in enumerate(a_vals):
        two_a = int(round(2 * a))
        for s in (two_a, two_a - dim, two_a + dim):
            if s < -2 * n_max or s > 2 * n_max:
                continue
            j_lo = max(-n_max, s - n_max)
            j_hi = min(n_max, s + n_max)
            j = np.arange(j_lo, j_hi + 1)
            k = s - j
            entries = matrix[j + n_max, k + n_max]
            if not np.any(entries):
                continue
            deltas = 2 * j - s  # j - k
            values[ia, :] += entries @ phase_unit[deltas + 2 * n_max, :]

    return PhaseSpaceField(
        q_nodes=b_vals / dim,
        p_nodes=a_vals / dim,
        values=values,
        q_period=1.0,
    )


def ladder_symbol_closed_form(hilbert: HilbertSpec) -> PhaseSpaceField:
    """Closed form sqrt(l (|p| + hbar/2l)) exp(-i sign(p) q / l) on the grid."""
    dim = hilbert.dim
    n_max = hilbert.n_max
    a_vals = np.arange(-n_max + 0.5, n_max, 1.0)
    p = a_vals / dim
    q = a_vals / dim
    ell = 1.0 / TWO_PI
    hbar = torus_hbar(dim)
    amp = np.sqrt(ell * (np.abs(p) + hbar / (2.0 * ell)))
    phase = np.exp(-1j * np.outer(np.sign(p), q) / ell)
    values = amp[:, None] * phase
    return PhaseSpaceField(q_nodes=q, p_nodes=p, values=values, q_period=1.0)


def wigner_function(rho: np.ndarray, hilbert: HilbertSpec) -> PhaseSpaceField:
    """Wigner function on the physical grid q = 2 pi b / N, p = tau n.

    Values are scaled so the field integrates to 1 over the cell measure;
    the momentum marginal reproduces the diagonal of rho exactly.
    """
    dim = hilbert.dim
    n_max = hilbert.n_max
    if rho.shape != (dim, dim):
        raise DomainError(
            f"matrix shape {rho.shape} does not match Hilbert dimension {dim}"
        )
    b_vals = np.arange(dim)
    raw = np.zeros((dim, dim), dtype=complex)
    phase_unit = np.exp(
        1j * TWO_PI * np.outer(np.arange(-2 * n_max, 2 * n_max + 1), b_vals) / dim
    )
    for ia, a in enumerate(np.arange(-n_max, n_max + 1)):
        for s in (2 * a, 2 * a - dim, 2 * a + dim):
            if s < -2 * n_max or s > 2 * n_max:
                continue
            j_lo = max(-n_max, s - n_max)
            j_hi = min(n_max, s + n_max)
            j = np.arange(j_lo, j_hi + 1)
            k = s - j
            entries = rho[j + n_max, k + n_max]
            if not np.any(entries):
                continue
            deltas = 2 * j - s
            raw[ia, :] += entries @ phase_unit[deltas + 2 * n_max, :]

    imag_max = float(np.max(np.abs(raw.imag)))
    if imag_max > 1e-9:
        raise DomainError(f"Wigner field has imaginary residue {imag_max:.3e}")
    tau = hilbert.tau
    cell = (TWO_PI / dim) * tau
    values = raw.real / (dim * cell)
    return PhaseSpaceField(
        q_nodes=TWO_PI * b_vals / dim,
        p_nodes=tau * np.arange(-n_max, n_max + 1).astype(float),
        values=values,
        q_period=TWO_PI,
    )


def wigner_momentum_marginal(field: PhaseSpaceField) -> MomentumDistribution:
    """Integrate a Wigner field over q into a MomentumDistribution."""
    weights = field.values.sum(axis=1) * field.dq * field.dp
    if weights.min() < -1e-8:
        raise DomainError(f"negative marginal weight {weights.min():.3e}")
    weights = np.clip(weights, 0.0, None)
    from .measures import BinSpec

    bins = BinSpec(centers=field.p_nodes, width=field.dp)
    return normalize_distribution(weights, bins)
