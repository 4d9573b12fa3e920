"""Built-in verification checks for the friction calculus and channels.

Each check returns a CheckResult with the measured maximum deviation and
its tolerance; the CLI `verify` command prints one line per check and
exits nonzero if any fail.  Conventions asserted here: sign(0) = 0, and
|p| factors in closed forms are regularized to max(|p|, 2 dp).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classical import kick_force
from .measures import overlap
from .moyal import (
    PhaseSpaceField,
    SymbolSpec,
    VelocityProfile,
    dissipator_semiclassical,
    dissipator_semiclassical_linear,
    double_symplectic_derivative,
    lindblad_symbol,
    moyal_bracket_truncated,
    s1_closed,
    s1_general,
    s2_closed,
    s2_general,
    star_product_truncated,
    symplectic_derivative,
)
from .params import ModelParams
from .quantum import HilbertSpec, dissipative_channel, dissipative_channel_ode
from .weyl import discrete_weyl_symbol, ladder_symbol_closed_form, rescaled_ladder_sum

SIGN_CONVENTION_NOTE = "conventions: sign(0) = 0; |p| regularized to max(|p|, 2 dp)"


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    max_deviation: float
    tolerance: float
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.note})" if self.note else ""
        return (
            f"[{status}] {self.name}: max deviation {self.max_deviation:.3e}"
            f" (tolerance {self.tolerance:.1e}){extra}"
        )


def _result(name, deviation, tolerance, note="") -> CheckResult:
    return CheckResult(
        name=name,
        passed=bool(deviation <= tolerance),
        max_deviation=float(deviation),
        tolerance=tolerance,
        note=note,
    )


def check_channel_two_level(gammas=(0.9, 0.56, 0.34, 0.1), tolerance=1e-8) -> CheckResult:
    """|1><1| -> gamma |1><1| + (1-gamma)|0><0| and rho01 -> sqrt(gamma) rho01."""
    worst = 0.0
    for gamma in gammas:
        params = ModelParams(k=0.0, gamma=gamma, tau=0.137)
        h = HilbertSpec(n_max=2, tau=0.137)
        c = h.n_max
        rho = np.zeros((h.dim, h.dim), dtype=complex)
        rho[c, c] = 0.5
        rho[c + 1, c + 1] = 0.5
        rho[c, c + 1] = 0.25 + 0.15j
        rho[c + 1, c] = 0.25 - 0.15j
        out = dissipative_channel(rho, params)
        expected = np.zeros_like(rho)
        expected[c + 1, c + 1] = gamma * 0.5
        expected[c, c] = 0.5 + (1.0 - gamma) * 0.5
        expected[c, c + 1] = math.sqrt(gamma) * rho[c, c + 1]
        expected[c + 1, c] = math.sqrt(gamma) * rho[c + 1, c]
        worst = max(worst, float(np.max(np.abs(out - expected))))
    return _result("channel two-level analytics", worst, tolerance)


def check_channel_vs_integrator(gamma=0.56, n_max=4, seed=11, tolerance=1e-8) -> CheckResult:
    """Exact cascade channel against direct master-equation integration."""
    params = ModelParams(k=0.0, gamma=gamma, tau=0.137)
    h = HilbertSpec(n_max=n_max, tau=0.137)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((h.dim, h.dim)) + 1j * rng.standard_normal((h.dim, h.dim))
    rho = a @ a.conj().T
    rho /= np.trace(rho).real
    fast = dissipative_channel(rho, params)
    slow = dissipative_channel_ode(rho, params, rtol=1e-10, atol=1e-13)
    return _result("channel vs master-equation integrator", np.max(np.abs(fast - slow)), tolerance)


def check_ehrenfest(
    gamma=0.56,
    n_max=32,
    n_states=20,
    support=20,
    seed=5,
    contraction=None,
    tolerance=1e-6,
) -> CheckResult:
    """Tr(|n| rho) contracts by gamma per channel application."""
    params = ModelParams(k=0.0, gamma=gamma, tau=0.137)
    h = HilbertSpec(n_max=n_max, tau=0.137)
    expected_factor = gamma if contraction is None else contraction
    absn = np.abs(h.levels).astype(float)
    mask = np.abs(h.levels) <= support
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_states):
        a = rng.standard_normal((h.dim, h.dim)) + 1j * rng.standard_normal((h.dim, h.dim))
        rho = a @ a.conj().T
        rho *= np.outer(mask, mask)
        rho /= np.trace(rho).real
        before = float(np.real((absn * np.diagonal(rho).real).sum()))
        after_rho = dissipative_channel(rho, params)
        after = float(np.real((absn * np.diagonal(after_rho).real).sum()))
        worst = max(worst, abs(after - expected_factor * before))
    return _result("Ehrenfest |n| contraction", worst, tolerance)


def check_weyl_symbol(dims=(33, 65), tolerance=1e-8) -> CheckResult:
    """Discrete symbol of the rescaled ladder sum against its closed form."""
    worst = 0.0
    for dim in dims:
        h = HilbertSpec(n_max=(dim - 1) // 2, tau=0.137)
        sym = discrete_weyl_symbol(rescaled_ladder_sum(h), h)
        closed = ladder_symbol_closed_form(h)
        mask = np.abs(sym.p_nodes) > 1.0 / dim
        worst = max(worst, float(np.max(np.abs(sym.values[mask, :] - closed.values[mask, :]))))
    return _result("discrete Weyl symbol vs closed form", worst, tolerance, "|p| > 1/N")


def _random_band_limited(rng, n, modes=6):
    """Smooth periodic-in-q random field on an n x n grid."""
    q = np.arange(n) / n * 2.0 * math.pi
    p = np.linspace(-1.0, 1.0, n)
    vals = np.zeros((n, n))
    for _ in range(modes):
        mq = rng.integers(0, 4)
        mp = rng.integers(0, 4)
        amp = rng.standard_normal()
        phase = rng.uniform(0, 2 * math.pi)
        vals += amp * np.cos(mq * q[None, :] + phase) * np.cos(
            mp * math.pi * p[:, None] / 2.0
        )
    return PhaseSpaceField(q_nodes=q, p_nodes=p, values=vals)


def check_moyal_identities(n=128, seed=3, tolerance=1e-10) -> CheckResult:
    """Antisymmetry, symmetry, canonical commutator, bracket reduction."""
    rng = np.random.default_rng(seed)
    a = _random_band_limited(rng, n)
    b = _random_band_limited(rng, n)
    worst = 0.0

    anti = symplectic_derivative(a, b).values + symplectic_derivative(b, a).values
    worst = max(worst, float(np.max(np.abs(anti))))

    sym = (
        double_symplectic_derivative(a, b).values
        - double_symplectic_derivative(b, a).values
    )
    worst = max(worst, float(np.max(np.abs(sym))))

    # coordinate fields are not periodic in q: use open boundaries
    q = a.q_nodes
    p = a.p_nodes
    qq, pp = np.meshgrid(q, p)
    qf = PhaseSpaceField(q_nodes=q, p_nodes=p, values=qq, q_periodic=False)
    pf = PhaseSpaceField(q_nodes=q, p_nodes=p, values=pp, q_periodic=False)
    hbar = 0.137
    comm = (
        star_product_truncated(qf, pf, hbar).values
        - star_product_truncated(pf, qf, hbar).values
    )
    worst = max(worst, float(np.max(np.abs(comm - 1j * hbar))))

    bracket = moyal_bracket_truncated(a, b, hbar).values - symplectic_derivative(a, b).values
    worst = max(worst, float(np.max(np.abs(bracket))))
    return _result("Moyal identities", worst, tolerance)


def _equivalence_fields(n=256, hbar=0.137, nu=0.8):
    spec = SymbolSpec(hbar=hbar, nu=nu, l=1.0 / (2.0 * math.pi), profile=VelocityProfile("linear"))
    q = np.arange(n) / n
    p = np.linspace(-1.4, 1.4, n)
    sym = lindblad_symbol(spec, q, p, q_period=1.0)
    qq, pp = np.meshgrid(q, p)
    w_vals = np.exp(-((pp - 0.6) ** 2) / (2 * 0.28**2)) * (1.2 + np.sin(2 * math.pi * qq))
    w = PhaseSpaceField(
        q_nodes=q, p_nodes=p, values=w_vals, q_period=1.0
    ).with_p_split_at_zero()
    return spec, sym, w


def interior_p_mask(field: PhaseSpaceField, edge_cells: int = 6) -> np.ndarray:
    """Rows with |p| >= 3 dp that only see interior (central) stencils.

    The outermost rows use one-sided closures whose truncation constants
    are larger; nested operators widen that band, so `edge_cells` rows are
    excluded at each p boundary.
    """
    p = field.p_nodes
    mask = np.abs(p) >= 3 * field.dp
    mask[:edge_cells] = False
    mask[-edge_cells:] = False
    return mask


def check_s1_s2_equivalence(n=256, tolerance=1e-5) -> CheckResult:
    """General symplectic-product forms against the closed forms."""
    spec, sym, w = _equivalence_fields(n)
    mask = interior_p_mask(w)
    cols = np.ones(w.q_nodes.size, bool)
    sel = np.ix_(mask, cols)
    s1g = s1_general(sym, w).values
    s1c = s1_closed(spec, w).values
    s2g = s2_general(sym, w).values
    s2c = s2_closed(spec, w).values
    r1 = np.max(np.abs(s1g[sel] - s1c[sel])) / np.max(np.abs(s1g[sel]))
    r2 = np.max(np.abs(s2g[sel] - s2c[sel])) / np.max(np.abs(s2g[sel]))
    return _result(
        "S1/S2 general vs closed forms", max(r1, r2), tolerance, "interior, |p| >= 3 dp"
    )


def check_dissipator_equivalence(n=256, tolerance=1e-5) -> CheckResult:
    """General-profile expansion against the linear-profile specialization."""
    spec, _sym, w = _equivalence_fields(n)
    sel = np.ix_(interior_p_mask(w), np.ones(w.q_nodes.size, bool))
    dg = dissipator_semiclassical(spec, w).values
    dl = dissipator_semiclassical_linear(spec, w).values
    rel = np.max(np.abs(dg[sel] - dl[sel])) / np.max(np.abs(dg[sel]))
    return _result(
        "dissipator general vs linear form", rel, tolerance, "interior, |p| >= 3 dp"
    )


def check_fokker_planck_limit(n=192, min_order=0.9) -> CheckResult:
    """The hbar terms vanish linearly: two-point Richardson order >= 0.9."""
    base = SymbolSpec(hbar=0.0, nu=0.8, l=1.0 / (2.0 * math.pi))
    q = np.arange(n) / n
    p = np.linspace(-1.6, 1.6, n)
    qq, pp = np.meshgrid(q, p)
    w = PhaseSpaceField(
        q_nodes=q,
        p_nodes=p,
        values=np.exp(-((pp - 0.8) ** 2) / (2 * 0.15**2)),
        q_period=1.0,
    )
    d0 = dissipator_semiclassical(base, w).values
    h0 = 0.1
    r1 = np.max(np.abs(dissipator_semiclassical(SymbolSpec(hbar=h0, nu=0.8, l=base.l), w).values - d0))
    r2 = np.max(np.abs(dissipator_semiclassical(SymbolSpec(hbar=h0 / 2, nu=0.8, l=base.l), w).values - d0))
    order = math.log2(r1 / r2)
    return CheckResult(
        name="Fokker-Planck hbar -> 0 limit",
        passed=order >= min_order,
        max_deviation=order,
        tolerance=min_order,
        note="value is the fitted order (must be >= tolerance)",
    )


def check_classical_contraction(
    gammas=(1.0, 0.56, 0.1), n_states=1000, seed=17, tolerance=1e-6
) -> CheckResult:
    """Finite-difference Jacobian determinant of the map equals gamma."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    h = 1e-6
    for gamma in gammas:
        params = ModelParams(k=5.0, gamma=gamma, tau=0.137)
        q = rng.uniform(0, 2 * math.pi, n_states)
        p = rng.uniform(-4, 4, n_states)

        def step(qv, pv):
            p_new = params.gamma * pv + kick_force(qv, params)
            return qv + p_new, p_new  # unwrapped q for differencing

        q1p, p1p = step(q + h, p)
        q1m, p1m = step(q - h, p)
        q2p, p2p = step(q, p + h)
        q2m, p2m = step(q, p - h)
        dq_dq = (q1p - q1m) / (2 * h)
        dp_dq = (p1p - p1m) / (2 * h)
        dq_dp = (q2p - q2m) / (2 * h)
        dp_dp = (p2p - p2m) / (2 * h)
        det = dq_dq * dp_dp - dq_dp * dp_dq
        worst = max(worst, float(np.max(np.abs(det - gamma))))
    return _result("classical map contraction det J = gamma", worst, tolerance)


def run_all_checks() -> list[CheckResult]:
    return [
        check_channel_two_level(),
        check_channel_vs_integrator(),
        check_ehrenfest(),
        check_weyl_symbol(),
        check_moyal_identities(),
        check_s1_s2_equivalence(),
        check_dissipator_equivalence(),
        check_fokker_planck_limit(),
        check_classical_contraction(),
    ]
