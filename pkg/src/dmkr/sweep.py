"""Parameter-space sweeps over (k, gamma) at fixed hbar_eff.

Each cell runs the noisy and noiseless classical ensembles plus the
quantum evolution, bins all marginals on the shared quantum grid
(p = tau n), and produces one MeasureRecord.  Cells are independent and
deterministic given (master_seed, cell index), so sweeps parallelize over
a process pool and results do not depend on the worker count.

A sweep appends completed records to a checkpoint log (length-prefixed
JSON frames with CRC32), so an interrupted sweep resumes exactly where it
stopped with no duplicated or lost cells.
"""

from __future__ import annotations

import json
import math
import os
import struct
import time
import zlib
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .classical import evolve_ensemble, initial_band_ensemble, momentum_histogram
from .errors import ConfigError, DmkrError, LeakageError
from .measures import (
    MomentumDistribution,
    dispersion_complement,
    literal_overlap,
    overlap,
    participation_ratio,
)
from .params import ModelParams
from .quantum import (
    HilbertSpec,
    edge_population,
    initial_band_state,
    momentum_marginal,
    n_max_for_tau,
    period_map,
)

SCHEMA_VERSION = 1

CSV_COLUMNS = (
    "k",
    "gamma",
    "hbar_eff",
    "overlap",
    "sigma_prime",
    "eta_cl",
    "eta_q",
    "overlap_literal",
    "leakage",
    "seconds",
)

PGM_MEASURES = ("overlap", "sigma_prime", "eta_cl", "eta_q")

# seed stream tags for the independent pipelines within one cell
_SEED_NOISY = 1
_SEED_NOISELESS = 2


@dataclass(frozen=True)
class CellBudgets:
    """Per-cell computational budgets."""

    ensemble_size: int = 100_000
    classical_steps: int = 2000
    quantum_periods: int = 50
    n_max: int | None = None
    leakage_guard: float = 1e-6

    def __post_init__(self):
        if self.ensemble_size < 1 or self.classical_steps < 1 or self.quantum_periods < 1:
            raise ConfigError("all budgets must be >= 1")
        if self.n_max is not None and self.n_max < 1:
            raise ConfigError("n_max budget must be >= 1 when given")

    def resolve_n_max(self, tau: float) -> int:
        return self.n_max if self.n_max is not None else n_max_for_tau(tau)


@dataclass(frozen=True)
class SweepPlan:
    """Scan axes, budgets, and the master seed of a sweep."""

    k_values: tuple
    gamma_values: tuple
    hbar_list: tuple
    budgets: CellBudgets = field(default_factory=CellBudgets)
    master_seed: int = 0

    def __post_init__(self):
        ks = tuple(float(v) for v in self.k_values)
        gs = tuple(float(v) for v in self.gamma_values)
        hs = tuple(float(v) for v in self.hbar_list)
        if not ks or not gs or not hs:
            raise ConfigError("sweep axes must be nonempty")
        if any(b <= a for a, b in zip(ks, ks[1:])) or any(
            b <= a for a, b in zip(gs, gs[1:])
        ):
            raise ConfigError("k and gamma axes must be strictly ascending")
        if min(gs) < 0.01 or max(gs) > 0.99:
            raise ConfigError("sweep gamma values must lie within [0.01, 0.99]")
        object.__setattr__(self, "k_values", ks)
        object.__setattr__(self, "gamma_values", gs)
        object.__setattr__(self, "hbar_list", hs)

    @property
    def n_cells(self) -> int:
        return len(self.k_values) * len(self.gamma_values) * len(self.hbar_list)

    def cell(self, index: int) -> tuple[float, float, float]:
        nk, ng = len(self.k_values), len(self.gamma_values)
        ik = index % nk
        ig = (index // nk) % ng
        ih = index // (nk * ng)
        return self.k_values[ik], self.gamma_values[ig], self.hbar_list[ih]

    def cells(self):
        for index in range(self.n_cells):
            yield index, *self.cell(index)

    def cell_seed(self, index: int) -> int:
        return int(
            np.random.SeedSequence([self.master_seed, index]).generate_state(1, np.uint64)[0]
        )

    def to_dict(self) -> dict:
        return {
            "k_values": list(self.k_values),
            "gamma_values": list(self.gamma_values),
            "hbar_list": list(self.hbar_list),
            "budgets": asdict(self.budgets),
            "master_seed": self.master_seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepPlan":
        return cls(
            k_values=tuple(data["k_values"]),
            gamma_values=tuple(data["gamma_values"]),
            hbar_list=tuple(data["hbar_list"]),
            budgets=CellBudgets(**data["budgets"]),
            master_seed=int(data["master_seed"]),
        )

    @classmethod
    def grid(
        cls,
        k_min: float = 0.5,
        k_max: float = 10.0,
        n_k: int = 20,
        gamma_min: float = 0.01,
        gamma_max: float = 0.99,
        n_gamma: int = 20,
        hbar_list=(0.137,),
        budgets: CellBudgets | None = None,
        master_seed: int = 0,
    ) -> "SweepPlan":
        return cls(
            k_values=tuple(np.linspace(k_min, k_max, n_k)),
            gamma_values=tuple(np.linspace(gamma_min, gamma_max, n_gamma)),
            hbar_list=tuple(hbar_list),
            budgets=budgets or CellBudgets(),
            master_seed=master_seed,
        )


@dataclass(frozen=True)
class MeasureRecord:
    """All comparison measures for one sweep cell."""

    cell_index: int
    k: float
    gamma: float
    hbar_eff: float
    overlap: float
    sigma_prime: float
    eta_cl: float
    eta_q: float
    overlap_literal: float
    leakage: float
    seconds: float
    diagnostics: dict = field(default_factory=dict)

    def physics_key(self) -> tuple:
        """Deterministic fields only (excludes wall time and diagnostics timing)."""
        return (
            self.cell_index,
            self.k,
            self.gamma,
            self.hbar_eff,
            self.overlap,
            self.sigma_prime,
            self.eta_cl,
            self.eta_q,
            self.overlap_literal,
            self.leakage,
        )

    def to_dict(self) -> dict:
        return {
            "cell_index": self.cell_index,
            "k": self.k,
            "gamma": self.gamma,
            "hbar_eff": self.hbar_eff,
            "overlap": self.overlap,
            "sigma_prime": self.sigma_prime,
            "eta_cl": self.eta_cl,
            "eta_q": self.eta_q,
            "overlap_literal": self.overlap_literal,
            "leakage": self.leakage,
            "seconds": self.seconds,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MeasureRecord":
        return cls(**data)


@dataclass
class CellData:
    """Marginals and diagnostics of one cell, before measure extraction."""

    params: ModelParams
    n_max: int
    classical_noisy: MomentumDistribution
    classical_noiseless: MomentumDistribution
    quantum: MomentumDistribution
    classical_out_fraction: float
    classical_out_fraction_noiseless: float
    quantum_edge_population: float
    convergence_overlap: float
    trace_drift: float


def compute_cell(
    cell: tuple[float, float, float], budgets: CellBudgets, seed: int
) -> CellData:
    """Run both classical pipelines and the quantum pipeline for one cell."""
    k, gamma, hbar_eff = cell
    params = ModelParams(k=k, gamma=gamma, tau=hbar_eff)
    n_max = budgets.resolve_n_max(hbar_eff)
    hilbert = HilbertSpec(n_max=n_max, tau=hbar_eff)
    bins = hilbert.bins

    noisy_seed = int(np.random.SeedSequence([seed, _SEED_NOISY]).generate_state(1, np.uint64)[0])
    quiet_seed = int(
        np.random.SeedSequence([seed, _SEED_NOISELESS]).generate_state(1, np.uint64)[0]
    )

    ens = initial_band_ensemble(budgets.ensemble_size, noisy_seed, hbar_eff)
    ens = evolve_ensemble(ens, params, budgets.classical_steps, noisy=True)
    p_noisy, out_noisy = momentum_histogram(ens, bins, hbar_eff)

    ens0 = initial_band_ensemble(budgets.ensemble_size, quiet_seed, hbar_eff)
    ens0 = evolve_ensemble(ens0, params, budgets.classical_steps, noisy=False)
    p_quiet, out_quiet = momentum_histogram(ens0, bins, hbar_eff)

    rho = initial_band_state(hilbert)
    previous = momentum_marginal(rho, hbar_eff)
    max_edge = 0.0
    for period in range(1, budgets.quantum_periods + 1):
        rho = period_map(rho, params)
        edge = edge_population(rho)
        max_edge = max(max_edge, edge)
        if edge > budgets.leakage_guard:
            raise LeakageError(period=period, population=edge, guard=budgets.leakage_guard)
        if period == budgets.quantum_periods - 1:
            previous = momentum_marginal(rho, hbar_eff)
    p_quantum = momentum_marginal(rho, hbar_eff)
    convergence = overlap(p_quantum, previous) if budgets.quantum_periods >= 2 else 1.0

    return CellData(
        params=params,
        n_max=n_max,
        classical_noisy=p_noisy,
        classical_noiseless=p_quiet,
        quantum=p_quantum,
        classical_out_fraction=out_noisy,
        classical_out_fraction_noiseless=out_quiet,
        quantum_edge_population=max_edge,
        convergence_overlap=convergence,
        trace_drift=abs(float(np.real(np.trace(rho))) - 1.0),
    )


def run_cell(
    cell: tuple[float, float, float],
    budgets: CellBudgets,
    seed: int,
    cell_index: int = 0,
) -> MeasureRecord:
    """Compute all measures for one (k, gamma, hbar_eff) cell."""
    start = time.perf_counter()
    data = compute_cell(cell, budgets, seed)
    p_noisy, p_quiet, p_quantum = (
        data.classical_noisy,
        data.classical_noiseless,
        data.quantum,
    )
    record = MeasureRecord(
        cell_index=cell_index,
        k=cell[0],
        gamma=cell[1],
        hbar_eff=cell[2],
        overlap=overlap(p_noisy, p_quantum),
        sigma_prime=dispersion_complement(p_noisy, p_quantum),
        eta_cl=participation_ratio(p_quiet),
        eta_q=participation_ratio(p_quantum),
        overlap_literal=literal_overlap(p_noisy, p_quantum),
        leakage=data.classical_out_fraction,
        seconds=time.perf_counter() - start,
        diagnostics={
            "eta_cl_noisy": participation_ratio(p_noisy),
            "convergence_overlap": data.convergence_overlap,
            "quantum_edge_population": data.quantum_edge_population,
            "classical_out_fraction_noiseless": data.classical_out_fraction_noiseless,
            "trace_drift": data.trace_drift,
            "n_max": data.n_max,
            "seed": seed,
        },
    )
    return record


def _run_cell_task(args):
    plan_dict, index = args
    plan = SweepPlan.from_dict(plan_dict)
    cell = plan.cell(index)
    try:
        record = run_cell(cell, plan.budgets, plan.cell_seed(index), cell_index=index)
        return index, record.to_dict(), None
    except DmkrError as exc:
        return index, None, f"{type(exc).__name__}: {exc}"


@dataclass
class SweepResult:
    plan: SweepPlan
    records: list
    failures: dict

    def records_by_index(self) -> dict:
        return {r.cell_index: r for r in self.records}

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "plan": self.plan.to_dict(),
            "records": [r.to_dict() for r in sorted(self.records, key=lambda r: r.cell_index)],
            "failures": {str(k): v for k, v in sorted(self.failures.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SweepResult":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported sweep schema version {data.get('schema_version')}")
        return cls(
            plan=SweepPlan.from_dict(data["plan"]),
            records=[MeasureRecord.from_dict(r) for r in data["records"]],
            failures={int(k): v for k, v in data.get("failures", {}).items()},
        )


# checkpoint log ----------------------------------------------------------------

_FRAME_HEAD = struct.Struct("<I")


def _append_frame(fh, payload: bytes) -> None:
    fh.write(_FRAME_HEAD.pack(len(payload)))
    fh.write(payload)
    fh.write(_FRAME_HEAD.pack(zlib.crc32(payload)))
    fh.flush()
    os.fsync(fh.fileno())


def read_checkpoint(path) -> tuple[list, int]:
    """Parse valid frames; returns (record dicts, byte offset of valid prefix)."""
    records = []
    offset = 0
    path = Path(path)
    if not path.exists():
        return records, offset
    blob = path.read_bytes()
    pos = 0
    while pos + _FRAME_HEAD.size <= len(blob):
        (length,) = _FRAME_HEAD.unpack_from(blob, pos)
        end = pos + _FRAME_HEAD.size + length + _FRAME_HEAD.size
        if end > len(blob):
            break
        payload = blob[pos + _FRAME_HEAD.size : pos + _FRAME_HEAD.size + length]
        (crc,) = _FRAME_HEAD.unpack_from(blob, pos + _FRAME_HEAD.size + length)
        if crc != zlib.crc32(payload):
            break
        try:
            records.append(json.loads(payload.decode("utf-8")))
        except ValueError:
            break
        pos = end
        offset = pos
    return records, offset


def run_sweep(
    plan: SweepPlan,
    parallelism: int = 1,
    checkpoint_path=None,
    progress=None,
) -> SweepResult:
    """Run every planned cell exactly once, resuming from the checkpoint.

    Results are independent of `parallelism`; cells that abort with a
    numerical-guard error are reported in ``failures`` and retried on the
    next resume.
    """
    if parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    # single-threaded BLAS in the workers keeps records bit-identical
    # across worker counts
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1")

    done: dict[int, MeasureRecord] = {}
    ckpt_fh = None
    if checkpoint_path is not None:
        existing, valid_offset = read_checkpoint(checkpoint_path)
        for item in existing:
            if item.get("plan_fingerprint") is not None:
                continue
            record = MeasureRecord.from_dict(item)
            done[record.cell_index] = record
        # drop any torn tail before appending
        path = Path(checkpoint_path)
        if path.exists() and path.stat().st_size > valid_offset:
            with open(path, "rb+") as fh:
                fh.truncate(valid_offset)
        ckpt_fh = open(checkpoint_path, "ab")

    pending = [index for index in range(plan.n_cells) if index not in done]
    failures: dict[int, str] = {}
    plan_dict = plan.to_dict()

    def _note(index, record_dict, error):
        if error is not None:
            failures[index] = error
            return
        record = MeasureRecord.from_dict(record_dict)
        done[index] = record
        if ckpt_fh is not None:
            payload = json.dumps(record_dict, sort_keys=True).encode("utf-8")
            _append_frame(ckpt_fh, payload)
        if progress is not None:
            progress(len(done), plan.n_cells)

    try:
        if pending:
            ctx = get_context("spawn")
            with ProcessPoolExecutor(max_workers=parallelism, mp_context=ctx) as pool:
                futures = {
                    pool.submit(_run_cell_task, (plan_dict, index)): index
                    for index in pending
                }
                for future in as_completed(futures):
                    index, record_dict, error = future.result()
                    _note(index, record_dict, error)
    finally:
        if ckpt_fh is not None:
            ckpt_fh.close()

    records = [done[i] for i in sorted(done)]
    return SweepResult(plan=plan, records=records, failures=failures)


# emission ------------------------------------------------------------------------

def write_pgm16(path, image: np.ndarray, lo: float | None = None, hi: float | None = None):
    """Binary 16-bit P5 image scaled over [lo, hi]; returns (lo, hi)."""
    data = np.asarray(image, dtype=float)
    lo = float(np.nanmin(data)) if lo is None else lo
    hi = float(np.nanmax(data)) if hi is None else hi
    if hi > lo:
        scaled = (np.nan_to_num(data, nan=lo) - lo) / (hi - lo)
    else:
        scaled = np.zeros_like(data)
    pixels = np.round(scaled * 65535.0).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n65535\n".encode("ascii"))
        fh.write(pixels.tobytes())
    return lo, hi


def _fmt(value: float) -> str:
    return repr(float(value))


def emit(result: SweepResult, formats, out_dir, basename: str = "sweep") -> list:
    """Write CSV / JSON / PGM outputs; returns the list of files written."""
    if isinstance(formats, str):
        formats = [f.strip() for f in formats.split(",") if f.strip()]
    unknown = set(formats) - {"csv", "json", "pgm"}
    if unknown:
        raise ConfigError(f"unknown output formats: {sorted(unknown)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    ordered = sorted(result.records, key=lambda r: r.cell_index)

    if "csv" in formats:
        path = out_dir / f"{basename}.csv"
        with open(path, "w", newline="") as fh:
            fh.write(f"# schema_version: {SCHEMA_VERSION}\n")
            fh.write(f"# plan: {json.dumps(result.plan.to_dict(), sort_keys=True)}\n")
            fh.write(",".join(CSV_COLUMNS) + "\n")
            for rec in ordered:
                row = [
                    _fmt(rec.k),
                    _fmt(rec.gamma),
                    _fmt(rec.hbar_eff),
                    _fmt(rec.overlap),
                    _fmt(rec.sigma_prime),
                    _fmt(rec.eta_cl),
                    _fmt(rec.eta_q),
                    _fmt(rec.overlap_literal),
                    _fmt(rec.leakage),
                    _fmt(rec.seconds),
                ]
                fh.write(",".join(row) + "\n")
        written.append(path)

    if "json" in formats:
        path = out_dir / f"{basename}.json"
        with open(path, "w") as fh:
            json.dump(result.to_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")
        written.append(path)

    if "pgm" in formats:
        plan = result.plan
        nk, ng = len(plan.k_values), len(plan.gamma_values)
        by_index = result.records_by_index()
        for ih, hbar in enumerate(plan.hbar_list):
            tag = f"{basename}_h{hbar:g}".replace(".", "p")
            for measure in PGM_MEASURES:
                grid = np.full((ng, nk), np.nan)
                for ig in range(ng):
                    for ik in range(nk):
                        index = (ih * ng + ig) * nk + ik
                        rec = by_index.get(index)
                        if rec is not None:
                            grid[ig, ik] = getattr(rec, measure)
                path = out_dir / f"{tag}_{measure}.pgm"
                lo, hi = write_pgm16(path, grid)
                side = out_dir / f"{tag}_{measure}.scale.txt"
                with open(side, "w") as fh:
                    fh.write(f"measure: {measure}\n")
                    fh.write(f"hbar_eff: {hbar!r}\n")
                    fh.write(f"min: {lo!r}\nmax: {hi!r}\n")
                    fh.write("rows: gamma ascending (top row = smallest gamma)\n")
                    fh.write("cols: k ascending\n")
                    missing = [
                        (ih * ng + ig) * nk + ik
                        for ig in range(ng)
                        for ik in range(nk)
                        if ((ih * ng + ig) * nk + ik) not in by_index
                    ]
                    fh.write(f"missing_cells: {missing}\n")
                written.extend([path, side])

    return written


def load_result_json(path) -> SweepResult:
    with open(path) as fh:
        return SweepResult.from_dict(json.load(fh))
