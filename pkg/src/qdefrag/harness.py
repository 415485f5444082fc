"""Run configuration, the naive growing-memory oracle, experiment drivers and
CSV output."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import defrag
from .model import ChainSpec, SystemPartition, build_chain_hamiltonian, make_layout
from .protocol import (_swap, download_step, init_protocol, residual_weight, run_download,
                       xi_family)
from .qcore import apply_local, hermitian_propagator, orthonormal_basis_of_span

CSV_HEADER = ("step", "residual_weight", "memory_rank", "gram_error", "m1_leakage",
              "wall_time_s")
ORACLE_MAX_SITES = 3
ORACLE_MAX_STEPS = 12
ORACLE_TOL = 1e-9


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` names the offending entry."""

    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class RunConfig:
    model: str = "XX"
    n_sites: int = 3
    couplings: Optional[tuple] = None
    fields: Optional[tuple] = None
    controlled_site: int = 0
    step_time: float = math.pi / 2
    steps: int = 100
    seed: int = 0
    rank_rel_tol: float = 1e-12
    gram_tol: float = 1e-10
    oracle_steps: int = 8
    output: str = "trace.csv"

    def __post_init__(self):
        n = self.n_sites
        if not isinstance(n, int) or isinstance(n, bool) or n < 2:
            raise ConfigError("n_sites", f"must be an integer >= 2, got {n!r}")
        if self.model not in ("XX", "Heisenberg"):
            raise ConfigError("model", f"must be 'XX' or 'Heisenberg', got {self.model!r}")
        couplings = (1.0,) * (n - 1) if self.couplings is None else self.couplings
        fields_ = (0.0,) * n if self.fields is None else self.fields
        try:
            couplings = tuple(float(j) for j in couplings)
        except (TypeError, ValueError):
            raise ConfigError("couplings", "must be a list of numbers") from None
        try:
            fields_ = tuple(float(h) for h in fields_)
        except (TypeError, ValueError):
            raise ConfigError("fields", "must be a list of numbers") from None
        if len(couplings) != n - 1:
            raise ConfigError("couplings", f"need {n - 1} entries, got {len(couplings)}")
        if any(j == 0.0 for j in couplings):
            raise ConfigError("couplings", "all couplings must be nonzero")
        if len(fields_) != n:
            raise ConfigError("fields", f"need {n} entries, got {len(fields_)}")
        object.__setattr__(self, "couplings", couplings)
        object.__setattr__(self, "fields", fields_)
        _check_int(self, "controlled_site", 0, n - 1)
        _check_int(self, "steps", 0)
        _check_int(self, "seed", 0)
        _check_int(self, "oracle_steps", 0)
        for name in ("step_time", "rank_rel_tol", "gram_tol"):
            val = getattr(self, name)
            if isinstance(val, bool) or not isinstance(val, (int, float)) or not val > 0:
                raise ConfigError(name, f"must be a positive number, got {val!r}")
            object.__setattr__(self, name, float(val))
        if not self.rank_rel_tol < 1:
            raise ConfigError("rank_rel_tol", "must be below 1")
        if not isinstance(self.output, str) or not self.output:
            raise ConfigError("output", "must be a non-empty path string")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown field")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read {path}: {exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from None
        return cls.from_dict(data)

    @property
    def spec(self) -> ChainSpec:
        return ChainSpec(self.model, self.couplings, self.fields)

    @property
    def partition(self) -> SystemPartition:
        return SystemPartition(self.n_sites, self.controlled_site)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["couplings"] = list(self.couplings)
        d["fields"] = list(self.fields)
        return d


def _check_int(cfg, name, lo, hi=None):
    val = getattr(cfg, name)
    if isinstance(val, bool) or not isinstance(val, int) or val < lo or (hi is not None and val > hi):
        rng = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
        raise ConfigError(name, f"must be an integer {rng}, got {val!r}")


# -- naive growing-memory protocol -------------------------------------------

@dataclass(frozen=True)
class NaiveState:
    """Joint columns on V (x) one memory qubit per elapsed step."""

    n_sites: int
    columns: np.ndarray
    step: int = 0

    @property
    def dims(self) -> tuple[int, ...]:
        return (2,) * (self.n_sites + self.step)

    @property
    def dim(self) -> int:
        return 2 ** (self.n_sites + self.step)


def _guard(partition, L):
    if partition.n_sites > ORACLE_MAX_SITES or L > ORACLE_MAX_STEPS:
        raise ValueError(
            f"naive oracle limited to N <= {ORACLE_MAX_SITES}, L <= {ORACLE_MAX_STEPS} "
            f"(got N={partition.n_sites}, L={L})")


def naive_steps(spec: ChainSpec, partition: SystemPartition, t: float, L: int, columns):
    """Yield NaiveState after each of L uncompressed steps, starting from ``columns``."""
    _guard(partition, L)
    n = partition.n_sites
    U = hermitian_propagator(build_chain_hamiltonian(spec, partition), t).mat
    swap = _swap(2)
    state = NaiveState(n, np.asarray(columns, dtype=np.complex128).reshape(2 ** n, -1), 0)
    for _ in range(L):
        grown = np.zeros((2 * state.dim, state.columns.shape[1]), dtype=np.complex128)
        grown[0::2] = state.columns
        dims = (2,) * (n + state.step + 1)
        grown = apply_local(U, dims, range(n), grown)
        grown = apply_local(swap, dims, (partition.controlled_site, len(dims) - 1), grown)
        state = NaiveState(n, grown, state.step + 1)
        yield state


def naive_download(spec, partition, t, L, psi):
    """Naive protocol on a single input; returns (NaiveState, residual traces)."""
    amp = np.asarray(getattr(psi, "amp", psi)).reshape(-1, 1)
    state = NaiveState(partition.n_sites, amp, 0)
    traces = []
    for state in naive_steps(spec, partition, t, L, amp):
        dim_M = state.dim // partition.dim_V
        traces.append(float(np.sum(np.abs(state.columns[dim_M:]) ** 2)))
    return state, traces


def naive_basis_images(spec, partition, t, L):
    """Yield (step, columns) for basis inputs; step 0 is the identity embedding."""
    cols = np.eye(partition.dim_V, dtype=np.complex128)
    yield 0, cols
    for state in naive_steps(spec, partition, t, L, cols):
        yield state.step, state.columns


def reduced_blocks(columns, dim_V):
    """R[k', j', k, j] = Tr_M |col_k><col_j| in the V basis."""
    A = np.asarray(columns).reshape(dim_V, -1, dim_V)
    return np.einsum("amk,bmj->abkj", A, A.conj())


@dataclass
class OracleRow:
    step: int
    rho_diff: float
    gram_diff: float
    m1_leakage: float


@dataclass
class OracleReport:
    rows: list = field(default_factory=list)
    tol: float = ORACLE_TOL
    leak_tol: float = 1e-10

    @property
    def max_rho_diff(self):
        return max((r.rho_diff for r in self.rows), default=0.0)

    @property
    def max_gram_diff(self):
        return max((r.gram_diff for r in self.rows), default=0.0)

    @property
    def max_leakage(self):
        return max((r.m1_leakage for r in self.rows), default=0.0)

    @property
    def passed(self) -> bool:
        return (self.max_rho_diff <= self.tol and self.max_gram_diff <= self.tol
                and self.max_leakage <= self.leak_tol)


def compare_with_oracle(config: RunConfig, skip_defrag: bool = False) -> OracleReport:
    """Step-by-step comparison of the defragmented and naive protocols."""
    partition = config.partition
    _guard(partition, config.oracle_steps)
    spec, dim_V = config.spec, partition.dim_V
    state = init_protocol(spec, partition, make_layout(partition), config.step_time,
                          config.rank_rel_tol)
    report = OracleReport(leak_tol=config.gram_tol)
    for step, naive_cols in naive_basis_images(spec, partition, config.step_time,
                                               config.oracle_steps):
        leak = 0.0
        if step:
            state, tr = download_step(state, apply_defrag=not skip_defrag)
            leak = tr.m1_leakage
        cols = state.images.columns
        rho_diff = np.abs(reduced_blocks(cols, dim_V) - reduced_blocks(naive_cols, dim_V)).max()
        g_naive = defrag.gram(defrag.extract_xi_family(naive_cols, dim_V, step))
        g_defrag = defrag.gram(xi_family(state))
        gram_diff = defrag.verify_gram_preserved(g_naive, g_defrag).max_abs_diff
        report.rows.append(OracleRow(step, float(rho_diff), gram_diff, leak))
    return report


# -- experiment driver ---------------------------------------------------------

def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_trace_csv(path, traces):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for tr in traces:
            w.writerow([tr.step, _fmt(tr.residual_weight), tr.memory_rank,
                        _fmt(tr.gram_error), _fmt(tr.m1_leakage), _fmt(tr.wall_time)])


def run_experiment(config: RunConfig, output=None) -> dict:
    """Download ``config.steps`` steps, write the CSV trace, return a summary."""
    path = Path(output or config.output)
    if path.parent and not path.parent.exists():
        raise OSError(f"output directory {path.parent} does not exist")
    partition = config.partition
    layout = make_layout(partition)
    state = init_protocol(config.spec, partition, layout, config.step_time,
                          config.rank_rel_tol)
    r0 = residual_weight(state)
    state, traces = run_download(state, config.steps)
    write_trace_csv(path, traces)

    # one seeded input to witness that the worst case dominates a sampled state
    rng = np.random.default_rng(config.seed)
    alpha = rng.standard_normal(partition.dim_V) + 1j * rng.standard_normal(partition.dim_V)
    alpha /= np.linalg.norm(alpha)
    joint = state.images.columns @ alpha
    sample_residual = float(np.sum(np.abs(joint[layout.dim_M:]) ** 2))

    bound = partition.dim_V ** 2
    summary = {
        "config": config.to_dict(),
        "steps": config.steps,
        "final_residual_weight": traces[-1].residual_weight if traces else r0,
        "sampled_state_residual": sample_residual,
        "max_memory_rank": max((t.memory_rank for t in traces), default=1),
        "max_gram_error": max((t.gram_error for t in traces), default=0.0),
        "max_m1_leakage": max((t.m1_leakage for t in traces), default=0.0),
        "rank_bound": bound,
        "dim_V": partition.dim_V,
        "dim_M0": layout.dim_M0,
        "dim_M1": layout.dim_M1,
        "dim_M": layout.dim_M,
        "qubits_V": partition.n_sites,
        "qubits_M0": 2 * partition.n_sites,
        "output": str(path),
    }
    summary["passed"] = bool(
        summary["max_memory_rank"] <= min(bound, layout.dim_M0)
        and summary["max_gram_error"] <= config.gram_tol
        and summary["max_m1_leakage"] <= config.gram_tol
        and sample_residual <= summary["final_residual_weight"] + 1e-9)
    return summary


# -- randomized defrag property suite -----------------------------------------

def random_images(partition, rng):
    """Random isometry columns on V (x) M0 (x) M1, one per V basis state."""
    layout = make_layout(partition)
    d = partition.dim_V * layout.dim_M
    G = rng.standard_normal((d, partition.dim_V)) + 1j * rng.standard_normal((d, partition.dim_V))
    Q, _ = np.linalg.qr(G)
    return Q


def gram_selftest(trials: int = 200, seed: int = 0, sites=(2, 3), tol: float = 1e-10) -> dict:
    """Build defrag unitaries for random image maps and check every contract."""
    rng = np.random.default_rng(seed)
    worst = {"gram": 0.0, "unitarity": 0.0, "leakage": 0.0}
    rank_ok = True
    t0 = time.perf_counter()
    for i in range(trials):
        partition = SystemPartition(sites[i % len(sites)])
        layout = make_layout(partition)
        fam = defrag.extract_xi_family(random_images(partition, rng), partition.dim_V)
        D, rank = defrag.build_defrag_unitary(fam, layout)
        after = defrag.apply_to_family(D, fam)
        rank_ok &= rank <= len(fam) and rank <= layout.dim_M0
        worst["gram"] = max(worst["gram"], defrag.verify_gram_preserved(
            defrag.gram(fam), defrag.gram(after)).max_abs_diff)
        worst["unitarity"] = max(worst["unitarity"], float(
            np.abs(D.mat.conj().T @ D.mat - np.eye(layout.dim_M)).max()))
        worst["leakage"] = max(worst["leakage"], defrag.m1_leakage(after, layout.dim_M1))
    return {
        "trials": trials,
        "max_gram_diff": worst["gram"],
        "max_unitarity_error": worst["unitarity"],
        "max_m1_leakage": worst["leakage"],
        "rank_bound_ok": bool(rank_ok),
        "elapsed_s": time.perf_counter() - t0,
        "passed": bool(rank_ok and all(v <= tol for v in worst.values())),
    }


def memory_rank(columns, dim_V, rel_tol=1e-12) -> int:
    fam = defrag.extract_xi_family(columns, dim_V)
    return orthonormal_basis_of_span(fam.matrix(), rel_tol)[1]
