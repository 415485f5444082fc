"""Quantum defragmentation of the memory.

After a download step the joint state of V and M, for basis input |k>, is
sum_k' |k'>_V (x) v_kk' with (dim V)^2 memory vectors v_kk'. The defrag
unitary D acts on M alone, maps every v_kk' into M0 (x) |0>_M1 and keeps all
mutual inner products <v_jj'|v_kk'> unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MemoryLayout
from .qcore import Operator, complete_to_unitary, orthonormal_basis_of_span


class RankBoundError(RuntimeError):
    """The memory vectors span more than M0 can hold."""


@dataclass(frozen=True)
class XiFamily:
    """Unnormalized memory vectors, ``vectors[k, k']`` = v_kk' (length dim M)."""

    vectors: np.ndarray
    step: int = 0

    def __post_init__(self):
        vecs = np.array(self.vectors, dtype=np.complex128)
        if vecs.ndim != 3 or vecs.shape[0] != vecs.shape[1]:
            raise ValueError("vectors must have shape (dim_V, dim_V, dim_M)")
        vecs.flags.writeable = False
        object.__setattr__(self, "vectors", vecs)

    @property
    def dim_V(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim_M(self) -> int:
        return self.vectors.shape[2]

    def __len__(self):
        return self.dim_V ** 2

    def matrix(self) -> np.ndarray:
        """(dim_M, dim_V**2) matrix, column k*dim_V + k' holds v_kk'."""
        return self.vectors.reshape(self.dim_V ** 2, self.dim_M).T

    def column_norms(self) -> np.ndarray:
        """sum_k' ||v_kk'||^2 for each k."""
        return np.sum(np.abs(self.vectors) ** 2, axis=(1, 2))

    def reassemble(self) -> np.ndarray:
        """Rebuild the (dim_V*dim_M, dim_V) image columns."""
        return self.vectors.transpose(1, 2, 0).reshape(self.dim_V * self.dim_M, self.dim_V)


def extract_xi_family(columns: np.ndarray, dim_V: int, step: int = 0) -> XiFamily:
    """Read v_kk'[m] = columns[(k', m), k]."""
    columns = np.asarray(columns)
    total, n = columns.shape
    if n != dim_V or total % dim_V:
        raise ValueError(f"columns of shape {columns.shape} do not fit dim_V={dim_V}")
    dim_M = total // dim_V
    vecs = columns.reshape(dim_V, dim_M, dim_V).transpose(2, 0, 1)
    return XiFamily(vecs, step)


def gram(family) -> np.ndarray:
    """G[(k''k'''), (kk')] = <v_k''k''', v_kk'>, pairs flattened row-major."""
    A = family.matrix() if isinstance(family, XiFamily) else np.asarray(family)
    G = A.conj().T @ A
    return 0.5 * (G + G.conj().T)


def build_defrag_unitary(family: XiFamily, layout: MemoryLayout,
                         rel_tol: float = 1e-12) -> tuple[Operator, int]:
    """Unitary on M = M0 (x) M1 sending span{v_kk'} into M0 (x) |0>_M1.

    An orthonormal basis B of the span is mapped onto the lowest canonical
    basis vectors of M0 tensored with |0>_M1; both sets are completed to
    unitaries and D = U_T U_B^dagger.

    Returns
    -------
    D : Operator
        Unitary on ``layout.space_M``.
    rank : int
        Dimension of the span at tolerance ``rel_tol``.
    """
    if family.dim_M != layout.dim_M:
        raise ValueError(f"family lives in dim {family.dim_M}, memory has dim {layout.dim_M}")
    basis, rank, _ = orthonormal_basis_of_span(family.matrix(), rel_tol)
    if rank > layout.dim_M0 or rank > len(family):
        raise RankBoundError(
            f"rank bound violated: span has dimension {rank} > dim M0 = {layout.dim_M0}")
    # canonical M0 vector i tensored with |0>_M1 has flat index i * dim_M1
    targets = np.zeros((layout.dim_M, rank), dtype=np.complex128)
    targets[np.arange(rank) * layout.dim_M1, np.arange(rank)] = 1.0
    U_B = complete_to_unitary(basis)
    U_T = complete_to_unitary(targets)
    D = U_T @ U_B.conj().T
    return Operator(layout.space_M, D, "unitary"), rank


def apply_to_family(D: Operator, family: XiFamily) -> XiFamily:
    return XiFamily(family.vectors @ D.mat.T, family.step)


def m1_leakage(family: XiFamily, dim_M1: int = 2) -> float:
    """Total weight of all v_kk' on M1 components other than |0>."""
    v = family.vectors.reshape(family.dim_V, family.dim_V, -1, dim_M1)
    return float(np.sum(np.abs(v[..., 1:]) ** 2))


@dataclass(frozen=True)
class GramReport:
    max_abs_diff: float
    passed: bool

    def __bool__(self):
        return self.passed


def verify_gram_preserved(before, after, tol: float = 1e-10) -> GramReport:
    before = np.asarray(before)
    after = np.asarray(after)
    if before.shape != after.shape:
        raise ValueError(f"Gram shapes differ: {before.shape} vs {after.shape}")
    diff = float(np.abs(before - after).max()) if before.size else 0.0
    return GramReport(diff, diff <= tol)
