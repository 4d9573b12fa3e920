"""Phase-space calculus for the friction dissipator.

Fields live on a uniform (q, p) grid: q periodic (period 2 pi for the
physical cylinder, period 1 for the unit torus used in symbol checks),
p on a bounded open interval.  Derivatives are 4th-order central
differences with periodic wrap in q and one-sided closures at the p
boundary.

The operators implemented here expand the friction part of the quantum
evolution in powers of hbar:

    dissipator(W) = 2 nu d_p[sign(p) f(|p|) W]                     (drift)
                  + (hbar nu / l) [3/2 d_p(f' W) - 1/2 f'' W]      (drift correction)
                  + hbar nu [ (f'^2/4)(l/f) W_qq + (f/l) W_pp ]    (diffusion)

with f evaluated at |p| and f' = df/dp (carrying the sign of p).  The
first-order piece S1 and second-order piece S2 are available both in
their general form (built from a complex symbol L and symplectic
derivatives) and in closed form for symbols of the family
L = sqrt(l f(|p| + hbar/2l)) exp(-i sign(p) q / l).

Sign conventions: sign(0) = 0, and |p| factors are regularized to
max(|p|, eps) with eps = 2 dp wherever they appear in denominators.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DomainError, GeometryError, SingularityError, StabilityError
from .params import ModelParams

TWO_PI = 2.0 * math.pi
_GRID_TOL = 1e-12


@dataclass(frozen=True)
class PhaseSpaceField:
    """Samples of a function on a uniform (q, p) grid; values[i_p, i_q].

    ``p_split_index`` marks an internal interface in the p direction:
    derivatives are taken one-sided on each block instead of reaching
    across it.  Symbol fields carrying the sign(p) phase jump set the
    split at the zero crossing so finite-difference stencils never span
    the discontinuity; smooth dynamical fields leave it unset.
    """

    q_nodes: np.ndarray
    p_nodes: np.ndarray
    values: np.ndarray
    q_period: float = TWO_PI
    q_periodic: bool = True
    p_split_index: int | None = None

    def __post_init__(self):
        q = np.asarray(self.q_nodes, dtype=float)
        p = np.asarray(self.p_nodes, dtype=float)
        v = np.asarray(self.values)
        for name, nodes in (("q", q), ("p", p)):
            if nodes.ndim != 1 or nodes.size < 2:
                raise GeometryError(f"{name} grid must be 1-d with >= 2 nodes")
            steps = np.diff(nodes)
            if np.any(steps <= 0) or np.max(np.abs(steps - steps[0])) > 1e3 * _GRID_TOL * max(
                1.0, np.max(np.abs(nodes))
            ):
                raise GeometryError(f"{name} grid must be uniform and increasing")
        if v.shape != (p.size, q.size):
            raise GeometryError(
                f"values shape {v.shape} does not match (n_p, n_q) = {(p.size, q.size)}"
            )
        q.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "q_nodes", q)
        object.__setattr__(self, "p_nodes", p)
        object.__setattr__(self, "values", v)

    @property
    def dq(self) -> float:
        return float(self.q_nodes[1] - self.q_nodes[0])

    @property
    def dp(self) -> float:
        return float(self.p_nodes[1] - self.p_nodes[0])

    @property
    def cell_area(self) -> float:
        return self.dq * self.dp

    def total(self) -> float:
        """Integral of the field over the grid."""
        return float(np.real(self.values.sum()) * self.cell_area)

    def with_values(self, values: np.ndarray) -> "PhaseSpaceField":
        return replace(self, values=values)

    def with_p_split_at_zero(self) -> "PhaseSpaceField":
        """Split p-derivatives at the sign change of p."""
        index = int(np.searchsorted(self.p_nodes, 0.0))
        if index <= 0 or index >= self.p_nodes.size:
            return replace(self, p_split_index=None)
        return replace(self, p_split_index=index)

    def same_grid(self, other: "PhaseSpaceField") -> bool:
        return (
            self.values.shape == other.values.shape
            and np.max(np.abs(self.q_nodes - other.q_nodes)) <= 1e-9
            and np.max(np.abs(self.p_nodes - other.p_nodes)) <= 1e-9
        )


def make_grid_field(
    n_q: int,
    n_p: int,
    p_max: float,
    q_period: float = TWO_PI,
    values: np.ndarray | None = None,
) -> PhaseSpaceField:
    """Zero (or given) field on q in [0, period) x p in [-p_max, p_max]."""
    q = np.arange(n_q) * (q_period / n_q)
    p = np.linspace(-p_max, p_max, n_p)
    if values is None:
        values = np.zeros((n_p, n_q))
    return PhaseSpaceField(q_nodes=q, p_nodes=p, values=values, q_period=q_period)


def _require_same_grid(a: PhaseSpaceField, b: PhaseSpaceField) -> None:
    if not a.same_grid(b):
        raise GeometryError("fields are on different grids")


# 4th-order finite differences ------------------------------------------------

def _d1_periodic(v: np.ndarray, h: float, axis: int) -> np.ndarray:
    vp1 = np.roll(v, -1, axis)
    vm1 = np.roll(v, 1, axis)
    vp2 = np.roll(v, -2, axis)
    vm2 = np.roll(v, 2, axis)
    return (-vp2 + 8.0 * vp1 - 8.0 * vm1 + vm2) / (12.0 * h)


def _d2_periodic(v: np.ndarray, h: float, axis: int) -> np.ndarray:
    vp1 = np.roll(v, -1, axis)
    vm1 = np.roll(v, 1, axis)
    vp2 = np.roll(v, -2, axis)
    vm2 = np.roll(v, 2, axis)
    return (-vp2 + 16.0 * vp1 - 30.0 * v + 16.0 * vm1 - vm2) / (12.0 * h * h)


def _d1_open(v: np.ndarray, h: float, axis: int) -> np.ndarray:
    if v.shape[axis] < 5:
        raise GeometryError("open-boundary derivative needs >= 5 nodes")
    out = np.empty_like(v)
    w = np.moveaxis(v, axis, 0)
    o = np.moveaxis(out, axis, 0)
    o[2:-2] = (-w[4:] + 8.0 * w[3:-1] - 8.0 * w[1:-3] + w[:-4]) / (12.0 * h)
    o[0] = (-25.0 * w[0] + 48.0 * w[1] - 36.0 * w[2] + 16.0 * w[3] - 3.0 * w[4]) / (12.0 * h)
    o[1] = (-3.0 * w[0] - 10.0 * w[1] + 18.0 * w[2] - 6.0 * w[3] + w[4]) / (12.0 * h)
    o[-1] = (25.0 * w[-1] - 48.0 * w[-2] + 36.0 * w[-3] - 16.0 * w[-4] + 3.0 * w[-5]) / (12.0 * h)
    o[-2] = (3.0 * w[-1] + 10.0 * w[-2] - 18.0 * w[-3] + 6.0 * w[-4] - w[-5]) / (12.0 * h)
    return out


def _d2_open(v: np.ndarray, h: float, axis: int) -> np.ndarray:
    if v.shape[axis] < 6:
        raise GeometryError("open-boundary second derivative needs >= 6 nodes")
    out = np.empty_like(v)
    w = np.moveaxis(v, axis, 0)
    o = np.moveaxis(out, axis, 0)
    h2 = 12.0 * h * h
    o[2:-2] = (-w[4:] + 16.0 * w[3:-1] - 30.0 * w[2:-2] + 16.0 * w[1:-3] - w[:-4]) / h2
    o[0] = (45.0 * w[0] - 154.0 * w[1] + 214.0 * w[2] - 156.0 * w[3] + 61.0 * w[4] - 10.0 * w[5]) / h2
    o[1] = (10.0 * w[0] - 15.0 * w[1] - 4.0 * w[2] + 14.0 * w[3] - 6.0 * w[4] + w[5]) / h2
    o[-1] = (45.0 * w[-1] - 154.0 * w[-2] + 214.0 * w[-3] - 156.0 * w[-4] + 61.0 * w[-5] - 10.0 * w[-6]) / h2
    o[-2] = (10.0 * w[-1] - 15.0 * w[-2] - 4.0 * w[-3] + 14.0 * w[-4] - 6.0 * w[-5] + w[-6]) / h2
    return out


def _dq(field: PhaseSpaceField, v: np.ndarray) -> np.ndarray:
    if field.q_periodic:
        return _d1_periodic(v, field.dq, axis=1)
    return _d1_open(v, field.dq, axis=1)


def _per_block(op, v: np.ndarray, h: float, split: int | None) -> np.ndarray:
    if split is None:
        return op(v, h, 0)
    out = np.empty_like(v)
    out[:split] = op(v[:split], h, 0)
    out[split:] = op(v[split:], h, 0)
    return out


def _dp(field: PhaseSpaceField, v: np.ndarray) -> np.ndarray:
    return _per_block(_d1_open, v, field.dp, field.p_split_index)


def _dqq(field: PhaseSpaceField, v: np.ndarray) -> np.ndarray:
    if field.q_periodic:
        return _d2_periodic(v, field.dq, axis=1)
    return _d2_open(v, field.dq, axis=1)


def _dpp(field: PhaseSpaceField, v: np.ndarray) -> np.ndarray:
    return _per_block(_d2_open, v, field.dp, field.p_split_index)


def d_dq(field: PhaseSpaceField) -> PhaseSpaceField:
    return field.with_values(_dq(field, field.values))


def d_dp(field: PhaseSpaceField) -> PhaseSpaceField:
    return field.with_values(_dp(field, field.values))


# symplectic products ----------------------------------------------------------

def symplectic_derivative(a: PhaseSpaceField, b: PhaseSpaceField) -> PhaseSpaceField:
    """Poisson bracket field dq(A) dp(B) - dp(A) dq(B)."""
    _require_same_grid(a, b)
    av, bv = a.values, b.values
    out = _dq(a, av) * _dp(b, bv) - _dp(a, av) * _dq(b, bv)
    return a.with_values(out)


def double_symplectic_derivative(a: PhaseSpaceField, b: PhaseSpaceField) -> PhaseSpaceField:
    """Second-order contraction A_qq B_pp - 2 A_qp B_qp + A_pp B_qq."""
    _require_same_grid(a, b)
    av, bv = a.values, b.values
    a_qq = _dqq(a, av)
    a_pp = _dpp(a, av)
    a_qp = _dp(a, _dq(a, av))
    b_qq = _dqq(b, bv)
    b_pp = _dpp(b, bv)
    b_qp = _dp(b, _dq(b, bv))
    return a.with_values(a_qq * b_pp - 2.0 * a_qp * b_qp + a_pp * b_qq)


def star_product_truncated(
    a: PhaseSpaceField, b: PhaseSpaceField, hbar: float, order: int = 2
) -> PhaseSpaceField:
    """A B + (i hbar / 2) A~B - (hbar^2 / 8) A~~B, truncated at `order`."""
    if order not in (0, 1, 2):
        raise ConfigError(f"star product truncation order must be 0, 1 or 2, got {order}")
    _require_same_grid(a, b)
    out = a.values * b.values
    if order >= 1 and hbar != 0.0:
        out = out + (0.5j * hbar) * symplectic_derivative(a, b).values
    if order >= 2 and hbar != 0.0:
        out = out - (hbar * hbar / 8.0) * double_symplectic_derivative(a, b).values
    return a.with_values(out)


def moyal_bracket_truncated(
    h: PhaseSpaceField, w: PhaseSpaceField, hbar: float
) -> PhaseSpaceField:
    """-(i/hbar)(H*W - W*H) truncated at second order.

    The symmetric second-order terms cancel identically, so the truncated
    bracket equals the Poisson bracket {H, W}; the would-be second-order
    remainder is exposed separately as ``coarse_graining_diagnostic``.
    """
    return symplectic_derivative(h, w)


def coarse_graining_diagnostic(
    h: PhaseSpaceField, w: PhaseSpaceField, hbar: float
) -> PhaseSpaceField:
    """-(i hbar / 4)(H_qq W_pp + H_pp W_qq - 2 H_qp W_qp).

    Imaginary-coefficient remainder of the literal second-order commutator
    expansion; vanishes for H with no second derivatives.  Diagnostic only,
    never injected into propagation.
    """
    _require_same_grid(h, w)
    hv, wv = h.values, w.values
    h_qq = _dqq(h, hv)
    h_pp = _dpp(h, hv)
    h_qp = _dp(h, _dq(h, hv))
    w_qq = _dqq(w, wv)
    w_pp = _dpp(w, wv)
    w_qp = _dp(w, _dq(w, wv))
    out = (-0.25j * hbar) * (h_qq * w_pp + h_pp * w_qq - 2.0 * h_qp * w_qp)
    return h.with_values(out)


# velocity profiles and symbols -------------------------------------------------

@dataclass(frozen=True)
class VelocityProfile:
    """Velocity dependence f of the friction force; linear or power law."""

    kind: str = "linear"
    exponent: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "power"):
            raise ConfigError(f"unknown velocity profile kind {self.kind!r}")
        if self.kind == "power" and self.exponent <= 0:
            raise ConfigError("power-law profile needs a positive exponent")

    def value(self, s):
        if self.kind == "linear":
            return np.asarray(s, dtype=float)
        return np.power(s, self.exponent)

    def d1(self, s):
        if self.kind == "linear":
            return np.ones_like(np.asarray(s, dtype=float))
        return self.exponent * np.power(s, self.exponent - 1.0)

    def d2(self, s):
        if self.kind == "linear":
            return np.zeros_like(np.asarray(s, dtype=float))
        return self.exponent * (self.exponent - 1.0) * np.power(s, self.exponent - 2.0)


@dataclass(frozen=True)
class SymbolSpec:
    """Scales of the friction symbol: length l, profile f, hbar, and nu."""

    hbar: float
    nu: float
    l: float = 1.0 / TWO_PI
    profile: VelocityProfile = VelocityProfile()

    def __post_init__(self):
        if self.l <= 0:
            raise ConfigError("length scale l must be positive")
        if self.hbar < 0 or self.nu < 0:
            raise ConfigError("hbar and nu must be nonnegative")

    @property
    def shifted_arg_offset(self) -> float:
        return self.hbar / (2.0 * self.l)


def lindblad_symbol(
    spec: SymbolSpec, q_nodes, p_nodes, q_period: float | None = None
) -> PhaseSpaceField:
    """The friction symbol sqrt(l f(|p| + hbar/2l)) exp(-i sign(p) q / l).

    The returned field splits its p-derivatives at the sign change of p,
    where the phase factor is discontinuous.
    """
    q = np.asarray(q_nodes, dtype=float)
    p = np.asarray(p_nodes, dtype=float)
    if q_period is None:
        q_period = TWO_PI * spec.l
    arg = np.abs(p) + spec.shifted_arg_offset
    radial = spec.l * spec.profile.value(arg)
    if np.any(radial < 0):
        raise SingularityError("negative symbol magnitude; check the profile")
    amp = np.sqrt(radial)
    phase = np.exp(-1j * np.outer(np.sign(p), q) / spec.l)
    field = PhaseSpaceField(
        q_nodes=q, p_nodes=p, values=amp[:, None] * phase, q_period=q_period
    )
    return field.with_p_split_at_zero()


# first- and second-order dissipator pieces -------------------------------------

def s1_general(l_field: PhaseSpaceField, w: PhaseSpaceField) -> PhaseSpaceField:
    """First-order piece L*(L~W) + L(W~L*) + 2W(L~L*) from a general symbol."""
    _require_same_grid(l_field, w)
    lc = l_field.with_values(l_field.values.conj())
    term1 = l_field.values.conj() * symplectic_derivative(l_field, w).values
    term2 = l_field.values * symplectic_derivative(w, lc).values
    term3 = 2.0 * w.values * symplectic_derivative(l_field, lc).values
    return w.with_values(term1 + term2 + term3)


def s1_closed(spec: SymbolSpec, w: PhaseSpaceField) -> PhaseSpaceField:
    """Closed form -2i d_p[sign(p) f(|p| + hbar/2l) W].

    The prefactor is fixed by the classical limit: i nu S1 must reduce to
    the drift 2 nu d_p[sign(p) f(|p|) W] as hbar -> 0.
    """
    p = w.p_nodes
    arg = np.abs(p) + spec.shifted_arg_offset
    radial = np.sign(p) * spec.profile.value(arg)
    inner = radial[:, None] * w.values
    return w.with_values(-2.0j * _dp(w, inner))


def s2_general(l_field: PhaseSpaceField, w: PhaseSpaceField) -> PhaseSpaceField:
    """Second-order piece built from nested symplectic products of L and W."""
    _require_same_grid(l_field, w)
    lf = l_field
    lc = l_field.with_values(l_field.values.conj())
    sd = symplectic_derivative
    dsd = double_symplectic_derivative

    term_a = sd(lf, sd(w, lc)).values
    term_b = 0.5 * dsd(lf, w.with_values(w.values * lc.values)).values
    term_c = 0.5 * lf.values * dsd(w, lc).values

    term_d = sd(w, sd(lc, lf)).values
    term_e = 0.5 * dsd(w, w.with_values(lc.values * lf.values)).values
    term_f = 0.5 * w.values * dsd(lc, lf).values

    term_g = sd(lc, sd(lf, w)).values
    term_h = 0.5 * dsd(lc, w.with_values(lf.values * w.values)).values
    term_i = 0.5 * lc.values * dsd(lf, w).values

    out = (term_a + term_b + term_c) - 0.5 * (term_d + term_e + term_f) - 0.5 * (
        term_g + term_h + term_i
    )
    return w.with_values(out)


def s2_closed(spec: SymbolSpec, w: PhaseSpaceField) -> PhaseSpaceField:
    """Closed form for symbols of the lindblad_symbol family.

    -1/2 (df/dp)^2 (l / f(|p|+hbar/2l)) W_qq - 2 (f(|p|+hbar/2l)/l) W_pp
    - (2/l) (df/dp) W_p

    The W_p coefficient is fixed by expanding the general nine-term form
    for this symbol family (and independently by the second-order star
    product); see also the exact mean-momentum contraction it implies.
    """
    p = w.p_nodes
    arg = np.abs(p) + spec.shifted_arg_offset
    farg = spec.profile.value(arg)
    if np.any(farg <= 0):
        raise SingularityError("f(|p| + hbar/2l) vanishes on the grid")
    fp = np.sign(p) * spec.profile.d1(arg)
    wv = w.values
    w_qq = _dqq(w, wv)
    w_pp = _dpp(w, wv)
    w_p = _dp(w, wv)
    out = (
        -0.5 * (fp**2 * spec.l / farg)[:, None] * w_qq
        - 2.0 * (farg / spec.l)[:, None] * w_pp
        - 2.0 * (fp / spec.l)[:, None] * w_p
    )
    return w.with_values(out)


def _regularized_abs_p(w: PhaseSpaceField, eps: float | None) -> np.ndarray:
    if eps is None:
        eps = 2.0 * w.dp
    return np.maximum(np.abs(w.p_nodes), eps)


def dissipator_semiclassical(
    spec: SymbolSpec,
    w: PhaseSpaceField,
    thermal_D: float = 0.0,
    eps: float | None = None,
) -> PhaseSpaceField:
    """Friction dissipator expanded to first order in hbar (general profile).

    D[W] = 2 nu d_p[sign(p) f(|p|) W]
         + (hbar nu / l)[2 d_p(f' W) - f'' W]
         + hbar nu [ (f'^2/4)(l/f(|p|)) W_qq + (f(|p|)/l) W_pp ]
         + thermal_D W_pp

    The drift-correction bracket carries the coefficients that make the
    expansion equal i nu S1 - (hbar nu / 2) S2 with the closed forms above;
    they also make the mean momentum contract at exactly 2 nu f for the
    linear profile, with no spurious O(hbar) drift.

    |p| is regularized to max(|p|, eps) in f and its derivatives; sign(0)=0.
    """
    p = w.p_nodes
    sign = np.sign(p)
    reg = _regularized_abs_p(w, eps)
    f0 = spec.profile.value(reg)
    if np.any(f0 <= 0):
        raise SingularityError("f(|p|) vanishes on the grid even after regularization")
    fp = sign * spec.profile.d1(reg)
    fpp = spec.profile.d2(reg)
    nu, hbar, ell = spec.nu, spec.hbar, spec.l
    wv = w.values

    drift = 2.0 * nu * _dp(w, (sign * f0)[:, None] * wv)
    out = drift
    if hbar != 0.0:
        corr = (hbar * nu / ell) * (
            2.0 * _dp(w, fp[:, None] * wv) - fpp[:, None] * wv
        )
        diff = hbar * nu * (
            0.25 * (fp**2 * ell / f0)[:, None] * _dqq(w, wv)
            + (f0 / ell)[:, None] * _dpp(w, wv)
        )
        out = out + corr + diff
    if thermal_D != 0.0:
        out = out + thermal_D * _dpp(w, wv)
    return w.with_values(out)


def dissipator_semiclassical_linear(
    spec: SymbolSpec,
    w: PhaseSpaceField,
    thermal_D: float = 0.0,
    eps: float | None = None,
) -> PhaseSpaceField:
    """Linear-profile specialization with g^2 = 2 nu:

    D[W] = g^2 d_p[sign(p)(|p| + hbar/l) W]
         + (g^2 hbar / 2)[ (l / (4 |p|)) W_qq + (|p|/l) W_pp ]

    The hbar/l momentum shift matches the general form's drift-correction
    bracket for the linear profile.
    """
    if spec.profile.kind != "linear":
        raise ConfigError("the linear closed form requires the linear profile")
    p = w.p_nodes
    sign = np.sign(p)
    reg = _regularized_abs_p(w, eps)
    g2 = 2.0 * spec.nu
    hbar, ell = spec.hbar, spec.l
    wv = w.values

    drift = g2 * _dp(w, (sign * (reg + hbar / ell))[:, None] * wv)
    out = drift
    if hbar != 0.0:
        diff = (0.5 * g2 * hbar) * (
            0.25 * (ell / reg)[:, None] * _dqq(w, wv) + (reg / ell)[:, None] * _dpp(w, wv)
        )
        out = out + diff
    if thermal_D != 0.0:
        out = out + thermal_D * _dpp(w, wv)
    return w.with_values(out)


# semiclassical propagation ------------------------------------------------------

def _bilinear_sample(values: np.ndarray, q_idx: np.ndarray, p_idx: np.ndarray) -> np.ndarray:
    """Bilinear interpolation at fractional indices; periodic in q, zero outside p."""
    n_p, n_q = values.shape
    q0 = np.floor(q_idx).astype(int)
    p0 = np.floor(p_idx).astype(int)
    fq = q_idx - q0
    fp = p_idx - p0
    q0m = np.mod(q0, n_q)
    q1m = np.mod(q0 + 1, n_q)

    inside = (p_idx >= 0.0) & (p_idx <= n_p - 1)
    p0c = np.clip(p0, 0, n_p - 2)
    fpc = np.where(inside, np.clip(p_idx, 0, n_p - 1) - p0c, 0.0)

    v00 = values[p0c, q0m]
    v01 = values[p0c, q1m]
    v10 = values[p0c + 1, q0m]
    v11 = values[p0c + 1, q1m]
    out = (
        (1 - fpc) * ((1 - fq) * v00 + fq * v01)
        + fpc * ((1 - fq) * v10 + fq * v11)
    )
    return np.where(inside, out, 0.0)


def transport_noiseless(w: PhaseSpaceField, params: ModelParams) -> PhaseSpaceField:
    """Transport W along one noiseless map step (semi-Lagrangian back-trace).

    Each grid node is pulled back through the exact inverse map and the
    field is sampled there bilinearly; the 1/gamma Jacobian keeps the
    density normalized under the contraction.
    """
    from .classical import kick_force

    if not 0.0 < params.gamma <= 1.0:
        raise ConfigError("transport requires gamma in (0, 1]")
    if abs(w.q_period - TWO_PI) > 1e-9:
        raise GeometryError("transport expects a q period of 2 pi")
    q = w.q_nodes
    p = w.p_nodes
    qq, pp = np.meshgrid(q, p)
    # inverse map: q_src = q_bar - p_bar, then p_src from the kick line
    q_src = np.mod(qq - pp, TWO_PI)
    p_src = (pp - kick_force(q_src, params)) / params.gamma
    q_idx = q_src / w.dq
    p_idx = (p_src - p[0]) / w.dp
    return w.with_values(_bilinear_sample(w.values, q_idx, p_idx) / params.gamma)


def apply_friction_diffusion(
    w: PhaseSpaceField,
    params: ModelParams,
    time: float = 1.0,
    thermal_D: float = 0.0,
    eps: float | None = None,
    max_substeps: int = 500_000,
) -> PhaseSpaceField:
    """Diffuse W with the friction kernel for the given time.

    Cylinder units (position period 2 pi, length scale 1): the
    coefficients are D_pp = nu tau |p| (+ thermal_D) and
    D_qq = nu tau / (4 |p|), applied by forward-Euler substeps within the
    diffusive stability limit.
    """
    nu, tau = params.nu, params.tau
    if (nu <= 0.0 and thermal_D <= 0.0) or time <= 0.0:
        return w
    reg = _regularized_abs_p(w, eps)
    d_pp = nu * tau * reg + thermal_D
    d_qq = nu * tau / (4.0 * reg)
    limit = 0.45 / (d_qq.max() / w.dq**2 + d_pp.max() / w.dp**2)
    steps = max(1, int(math.ceil(time / limit)))
    if steps > max_substeps:
        raise StabilityError(
            f"diffusion needs {steps} substeps (> {max_substeps}); refine the grid"
        )
    dt = time / steps
    v = w.values.copy()
    for _ in range(steps):
        v = v + dt * (d_qq[:, None] * _dqq(w, v) + d_pp[:, None] * _dpp(w, v))
    return w.with_values(v)


def semiclassical_period_map(
    w: PhaseSpaceField,
    params: ModelParams,
    renormalize: bool = True,
    thermal_D: float = 0.0,
    eps: float | None = None,
    max_substeps: int = 500_000,
) -> PhaseSpaceField:
    """One period: transport along the noiseless map, then hbar-size diffusion.

    The total integral is preserved (rescaled each period); a pre-rescale
    drift above 1e-3 raises StabilityError.
    """
    mass_before = w.total()
    if mass_before <= 0:
        raise DomainError("field must have positive total integral")
    out = transport_noiseless(w, params)
    out = apply_friction_diffusion(
        out, params, time=1.0, thermal_D=thermal_D, eps=eps, max_substeps=max_substeps
    )
    if renormalize:
        mass_after = out.total()
        drift = abs(mass_after - mass_before) / max(mass_before, 1e-300)
        if drift > 1e-3:
            raise StabilityError(
                f"mass drift {drift:.3e} in one period; grid too coarse for this map"
            )
        out = out.with_values(out.values * (mass_before / mass_after))
    return out


# field i/o ----------------------------------------------------------------------

_FIELD_MAGIC = b"DMKRFLD\x00"
_FIELD_VERSION = 1


def save_field(path, field: PhaseSpaceField) -> None:
    complex_flag = 1 if np.iscomplexobj(field.values) else 0
    with open(path, "wb") as fh:
        fh.write(
            struct.pack(
                "<8sIQQdI",
                _FIELD_MAGIC,
                _FIELD_VERSION,
                field.p_nodes.size,
                field.q_nodes.size,
                field.q_period,
                complex_flag,
            )
        )
        fh.write(field.p_nodes.astype("<f8").tobytes())
        fh.write(field.q_nodes.astype("<f8").tobytes())
        dtype = "<c16" if complex_flag else "<f8"
        fh.write(np.ascontiguousarray(field.values, dtype=dtype).tobytes())


def load_field(path) -> PhaseSpaceField:
    with open(path, "rb") as fh:
        head = struct.calcsize("<8sIQQdI")
        magic, version, n_p, n_q, q_period, complex_flag = struct.unpack(
            "<8sIQQdI", fh.read(head)
        )
        if magic != _FIELD_MAGIC:
            raise ConfigError(f"not a field snapshot: {path}")
        if version != _FIELD_VERSION:
            raise ConfigError(f"unsupported field snapshot version {version}")
        p = np.frombuffer(fh.read(8 * n_p), dtype="<f8").copy()
        q = np.frombuffer(fh.read(8 * n_q), dtype="<f8").copy()
        dtype = "<c16" if complex_flag else "<f8"
        itemsize = 16 if complex_flag else 8
        v = np.frombuffer(fh.read(itemsize * n_p * n_q), dtype=dtype).reshape(n_p, n_q)
    return PhaseSpaceField(q_nodes=q, p_nodes=p, values=v.copy(), q_period=q_period)


def field_to_csv(path, field: PhaseSpaceField) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if np.iscomplexobj(field.values):
            writer.writerow(["q", "p", "re", "im"])
            for i, pv in enumerate(field.p_nodes):
                for j, qv in enumerate(field.q_nodes):
                    z = field.values[i, j]
                    writer.writerow([repr(qv), repr(pv), repr(z.real), repr(z.imag)])
        else:
            writer.writerow(["q", "p", "value"])
            for i, pv in enumerate(field.p_nodes):
                for j, qv in enumerate(field.q_nodes):
                    writer.writerow([repr(qv), repr(pv), repr(float(field.values[i, j]))])
