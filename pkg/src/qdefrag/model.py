"""Concrete physical instantiation: a qubit chain V with one controlled site
C, and the memory layout M = M0 (x) M1."""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .qcore import HilbertSpace, Operator, StateVector

SX = np.array([[0, 1], [1, 0]], dtype=np.complex128)
SY = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
SZ = np.array([[1, 0], [0, -1]], dtype=np.complex128)
I2 = np.eye(2, dtype=np.complex128)

MODELS = ("XX", "Heisenberg")


@dataclass(frozen=True)
class SystemPartition:
    n_sites: int
    controlled_site: int = 0

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError(f"chain needs at least 2 sites, got {self.n_sites}")
        if not 0 <= self.controlled_site < self.n_sites:
            raise ValueError(
                f"controlled_site {self.controlled_site} outside [0, {self.n_sites})")

    @property
    def site_labels(self) -> tuple[str, ...]:
        return tuple(f"v{i}" for i in range(self.n_sites))

    @property
    def space_V(self) -> HilbertSpace:
        return HilbertSpace(tuple((lbl, 2) for lbl in self.site_labels))

    @property
    def controlled_label(self) -> str:
        return self.site_labels[self.controlled_site]

    dim_C = 2

    @property
    def dim_V(self) -> int:
        return 2 ** self.n_sites


@dataclass(frozen=True)
class MemoryLayout:
    """M = M0 (x) M1 with dim M0 = (dim V)^2 and dim M1 = dim C."""

    dim_V: int
    dim_C: int = 2

    @property
    def dim_M0(self) -> int:
        return self.dim_V ** 2

    @property
    def dim_M1(self) -> int:
        return self.dim_C

    @property
    def dim_M(self) -> int:
        return self.dim_M0 * self.dim_M1

    @property
    def space_M0(self) -> HilbertSpace:
        return HilbertSpace.of(("m0", self.dim_M0))

    @property
    def space_M1(self) -> HilbertSpace:
        return HilbertSpace.of(("m1", self.dim_M1))

    @property
    def space_M(self) -> HilbertSpace:
        return self.space_M0.concat(self.space_M1)

    @property
    def memory_labels(self) -> tuple[str, str]:
        return ("m0", "m1")

    def qubit_counts(self) -> dict:
        """Register sizes in qubits (log2 of dimension)."""
        return {
            "M0": float(np.log2(self.dim_M0)),
            "M1": float(np.log2(self.dim_M1)),
            "M": float(np.log2(self.dim_M)),
        }


@dataclass(frozen=True)
class ChainSpec:
    model: str = "XX"
    couplings: tuple[float, ...] = ()
    fields: tuple[float, ...] = ()

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        object.__setattr__(self, "couplings", tuple(float(j) for j in self.couplings))
        object.__setattr__(self, "fields", tuple(float(h) for h in self.fields))
        if any(j == 0.0 for j in self.couplings):
            raise ValueError("all couplings must be nonzero")

    @classmethod
    def uniform(cls, n_sites, model="XX", J=1.0, h=0.0):
        return cls(model, (J,) * (n_sites - 1), (h,) * n_sites)


def _site_op(single, site, n):
    mats = [I2] * n
    mats[site] = single
    return reduce(np.kron, mats)


def build_chain_hamiltonian(spec: ChainSpec, partition: SystemPartition) -> Operator:
    """H = sum_i (J_i/2)(X_i X_i+1 + Y_i Y_i+1) [+ (J_i/2) Z_i Z_i+1] + sum_i h_i Z_i."""
    n = partition.n_sites
    if len(spec.couplings) != n - 1:
        raise ValueError(f"need {n - 1} couplings, got {len(spec.couplings)}")
    if len(spec.fields) != n:
        raise ValueError(f"need {n} fields, got {len(spec.fields)}")
    pairs = [(SX, SX), (SY, SY)]
    if spec.model == "Heisenberg":
        pairs.append((SZ, SZ))
    H = np.zeros((2 ** n, 2 ** n), dtype=np.complex128)
    for i, J in enumerate(spec.couplings):
        for a, b in pairs:
            H += 0.5 * J * (_site_op(a, i, n) @ _site_op(b, i + 1, n))
    for i, h in enumerate(spec.fields):
        if h:
            H += h * _site_op(SZ, i, n)
    return Operator(partition.space_V, H, "hermitian")


def total_z(partition: SystemPartition) -> Operator:
    n = partition.n_sites
    Z = sum(_site_op(SZ, i, n) for i in range(n))
    return Operator(partition.space_V, Z, "hermitian")


def make_layout(partition: SystemPartition) -> MemoryLayout:
    return MemoryLayout(partition.dim_V, partition.dim_C)


def joint_space(partition: SystemPartition, layout: MemoryLayout) -> HilbertSpace:
    """V (x) M0 (x) M1, the space every protocol column lives on."""
    return partition.space_V.concat(layout.space_M)


def random_state(space: HilbertSpace, seed: int) -> StateVector:
    """Haar-random pure state from i.i.d. complex Gaussian amplitudes."""
    rng = np.random.default_rng(seed)
    d = space.total_dim
    amp = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return StateVector(space, amp / np.linalg.norm(amp), normalized=True)
