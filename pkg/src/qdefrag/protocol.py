"""Downloading stage with defragmentation, the stored-image map, and the
reversed uploading stage."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import defrag
from .model import (ChainSpec, MemoryLayout, SystemPartition, build_chain_hamiltonian,
                    joint_space)
from .qcore import (HilbertSpace, Operator, StateVector, apply_embedded, apply_local,
                    hermitian_propagator, identity, partial_trace, tensor, unitarity_error)
from . import qcore

ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class BasisImageMap:
    """Column k is W_l (|k>_V (x) |0>_M) on V (x) M0 (x) M1."""

    space: HilbertSpace
    columns: np.ndarray
    step_index: int = 0

    def __post_init__(self):
        cols = np.array(self.columns, dtype=np.complex128)
        if cols.shape[0] != self.space.total_dim:
            raise ValueError("column length does not match the joint space")
        cols.flags.writeable = False
        object.__setattr__(self, "columns", cols)

    def orthonormality_error(self) -> float:
        return unitarity_error(self.columns)


@dataclass(frozen=True)
class AppliedOp:
    op: Operator
    targets: tuple[str, ...]


@dataclass(frozen=True)
class StepTrace:
    step: int
    residual_weight: float
    memory_rank: int
    gram_error: float
    m1_leakage: float
    wall_time: float


@dataclass(frozen=True)
class ProtocolState:
    spec: ChainSpec
    partition: SystemPartition
    layout: MemoryLayout
    step_time: float
    hamiltonian: Operator
    step_unitary: Operator
    images: BasisImageMap
    applied_ops: tuple[AppliedOp, ...] = ()
    rel_tol: float = 1e-12
    space: HilbertSpace = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "space", joint_space(self.partition, self.layout))

    @property
    def step_index(self) -> int:
        return self.images.step_index

    @property
    def step_targets(self) -> tuple[str, ...]:
        return self.partition.site_labels + ("m1",)


def _swap(d=2):
    P = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            P[j * d + i, i * d + j] = 1.0
    return P


def step_unitary(spec: ChainSpec, partition: SystemPartition, layout: MemoryLayout,
                 t: float) -> Operator:
    """SWAP(C, M1) . (exp(-iHt) (x) I_M1) as an operator on V (x) M1.

    It acts as the identity on M0; use ``qcore.embed_operator`` for the
    full matrix on V (x) M0 (x) M1.
    """
    if t < 0:
        raise ValueError("step time must be non-negative")
    H = build_chain_hamiltonian(spec, partition)
    U = hermitian_propagator(H, t)
    space = partition.space_V.concat(layout.space_M1)
    evolve = tensor(U, identity(layout.space_M1))
    swap = qcore.embed_operator(
        Operator(HilbertSpace.of(("a", 2), ("b", 2)), _swap(2), "unitary"),
        (partition.controlled_label, "m1"), space)
    return Operator(space, swap.mat @ evolve.mat, "unitary")


def init_protocol(spec: ChainSpec, partition: SystemPartition, layout: MemoryLayout,
                  step_time: float, rel_tol: float = 1e-12) -> ProtocolState:
    if not step_time > 0:
        raise ValueError("step_time must be positive")
    space = joint_space(partition, layout)
    dim_V, dim_M = partition.dim_V, layout.dim_M
    cols = np.zeros((space.total_dim, dim_V), dtype=np.complex128)
    cols[np.arange(dim_V) * dim_M, np.arange(dim_V)] = 1.0
    return ProtocolState(
        spec=spec, partition=partition, layout=layout, step_time=float(step_time),
        hamiltonian=build_chain_hamiltonian(spec, partition),
        step_unitary=step_unitary(spec, partition, layout, step_time),
        images=BasisImageMap(space, cols, 0), rel_tol=rel_tol)


def _axes(state: ProtocolState, labels):
    return [state.space.axis(lbl) for lbl in labels]


def residual_weight(state) -> float:
    """Worst-case weight left outside |0>_V: ||P_perp W_l||^2 over inputs."""
    images = state.images if isinstance(state, ProtocolState) else state
    dim_V = images.columns.shape[1]
    perp = images.columns[images.columns.shape[0] // dim_V:]
    if not perp.size:
        return 0.0
    s = np.linalg.norm(perp, ord=2)
    return float(min(1.0, s * s))


def extract_phi_map(state) -> np.ndarray:
    """(dim_M, dim_V) matrix: column k is <0|_V W_l |k>|0>_M."""
    images = state.images if isinstance(state, ProtocolState) else state
    dim_V = images.columns.shape[1]
    return images.columns[: images.columns.shape[0] // dim_V].copy()


def xi_family(state: ProtocolState) -> defrag.XiFamily:
    return defrag.extract_xi_family(state.images.columns, state.partition.dim_V,
                                    state.step_index)


def download_step(state: ProtocolState, apply_defrag: bool = True):
    """One coupling step followed by defragmentation of the memory.

    Returns the new state and its StepTrace. With ``apply_defrag=False`` the
    defrag unitary is still built (rank is reported) but not applied; only
    meant for debugging the reset contract.
    """
    t0 = time.perf_counter()
    dims = state.space.dims
    step = state.step_index + 1
    cols = apply_local(state.step_unitary.mat, dims, _axes(state, state.step_targets),
                       state.images.columns)
    fam = defrag.extract_xi_family(cols, state.partition.dim_V, step)
    D, rank = defrag.build_defrag_unitary(fam, state.layout, state.rel_tol)
    ops = state.applied_ops + (AppliedOp(state.step_unitary, state.step_targets),)
    if apply_defrag:
        cols = apply_local(D.mat, dims, _axes(state, ("m0", "m1")), cols)
        ops = ops + (AppliedOp(D, ("m0", "m1")),)
    after = defrag.extract_xi_family(cols, state.partition.dim_V, step)
    report = defrag.verify_gram_preserved(defrag.gram(fam), defrag.gram(after))
    images = BasisImageMap(state.space, cols, step)
    new = replace(state, images=images, applied_ops=ops)
    trace = StepTrace(
        step=step,
        residual_weight=residual_weight(images),
        memory_rank=rank,
        gram_error=report.max_abs_diff,
        m1_leakage=defrag.m1_leakage(after, state.layout.dim_M1),
        wall_time=time.perf_counter() - t0,
    )
    return new, trace


def run_download(state: ProtocolState, L: int, apply_defrag: bool = True):
    if L < 0:
        raise ValueError("number of steps must be non-negative")
    traces = []
    for _ in range(L):
        state, tr = download_step(state, apply_defrag)
        traces.append(tr)
    return state, traces


def replay(state: ProtocolState, columns: Optional[np.ndarray] = None) -> np.ndarray:
    """Re-apply the logged unitaries to ``columns`` (default: the l=0 embedding)."""
    if columns is None:
        columns = init_protocol(state.spec, state.partition, state.layout,
                                state.step_time, state.rel_tol).images.columns
    dims = state.space.dims
    for entry in state.applied_ops:
        columns = apply_local(entry.op.mat, dims, _axes(state, entry.targets), columns)
    return columns


def embed_input(state: ProtocolState, psi: StateVector) -> StateVector:
    """psi (x) |0>_M on the joint space."""
    if psi.space.dims != state.partition.space_V.dims:
        raise ValueError("input state does not live on V")
    zero = StateVector.basis(state.layout.space_M, 0)
    return tensor(StateVector(state.partition.space_V, psi.amp, psi.normalized), zero)


def upload(state: ProtocolState, joint: StateVector) -> StateVector:
    """Apply the inverses of the logged unitaries in reverse order."""
    for entry in reversed(state.applied_ops):
        joint = apply_embedded(entry.op.dag, entry.targets, joint)
    return joint


def logical_memory_gate(state: ProtocolState, gate_V) -> Operator:
    """Unitary on M acting as ``gate_V`` on the stored images.

    Uses the isometric part Q of the polar decomposition Phi = Q P and
    returns Q g Q^dagger + (1 - Q Q^dagger).
    """
    gate_V = np.asarray(gate_V, dtype=np.complex128)
    phi = extract_phi_map(state)
    U, _, Vh = np.linalg.svd(phi, full_matrices=False)
    Q = U @ Vh
    G = Q @ gate_V @ Q.conj().T + np.eye(phi.shape[0]) - Q @ Q.conj().T
    return Operator(state.layout.space_M, G, "unitary")


def run_roundtrip(spec: ChainSpec, partition: SystemPartition, layout: MemoryLayout,
                  t: float, L: int, psi: StateVector, memory_gate: Optional[Operator] = None,
                  target: Optional[StateVector] = None, rel_tol: float = 1e-12):
    """Download ``psi`` for L steps, optionally gate the memory, upload.

    ``memory_gate`` may also be a callable taking the downloaded
    ProtocolState and returning the gate (so it can depend on the stored
    image map). Returns the fidelity of the reduced V state with ``target``
    (default ``psi``) and the download traces.
    """
    if abs(psi.norm() - 1.0) > qcore.NORM_TOL:
        raise ValueError("input state must be normalized")
    state = init_protocol(spec, partition, layout, t, rel_tol)
    state, traces = run_download(state, L)
    joint = embed_input(state, psi)
    for entry in state.applied_ops:
        joint = apply_embedded(entry.op, entry.targets, joint)
    if callable(memory_gate):
        memory_gate = memory_gate(state)
    if memory_gate is not None:
        if memory_gate.space.dims != layout.space_M.dims:
            raise ValueError("memory gate must act on M0 (x) M1")
        if unitarity_error(memory_gate.mat) > qcore.UNITARY_TOL:
            raise ValueError("memory gate is not unitary")
        joint = apply_embedded(memory_gate, ("m0", "m1"), joint)
    joint = upload(state, joint)
    rho = partial_trace(joint, partition.site_labels)
    want = psi if target is None else target
    return qcore.fidelity(StateVector(rho.space, want.amp), rho), traces
