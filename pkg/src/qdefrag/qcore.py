"""Dense complex linear algebra over composite Hilbert spaces.

Index convention everywhere: row-major Kronecker order, the first factor of a
space is the slowest-varying index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-10
NORM_TOL = 1e-9


def _frozen(arr):
    arr = np.array(arr, dtype=np.complex128, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered list of labelled tensor factors."""

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        factors = tuple((str(lbl), int(d)) for lbl, d in self.factors)
        if not factors:
            raise ValueError("a space needs at least one factor")
        labels = [lbl for lbl, _ in factors]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate factor labels in {labels}")
        for lbl, d in factors:
            if d < 2:
                raise ValueError(f"factor {lbl!r} has dimension {d} < 2")
        object.__setattr__(self, "factors", factors)

    @classmethod
    def of(cls, *factors):
        return cls(tuple(factors))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lbl for lbl, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.factors)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims))

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown factor label {label!r}") from None

    def concat(self, other: "HilbertSpace") -> "HilbertSpace":
        clash = set(self.labels) & set(other.labels)
        if clash:
            raise ValueError(f"label collision: {sorted(clash)}")
        return HilbertSpace(self.factors + other.factors)

    def sub(self, labels: Sequence[str]) -> "HilbertSpace":
        return HilbertSpace(tuple(self.factors[self.axis(lbl)] for lbl in labels))


@dataclass(frozen=True)
class StateVector:
    space: HilbertSpace
    amp: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        amp = _frozen(self.amp).reshape(-1)
        if amp.shape[0] != self.space.total_dim:
            raise ValueError(
                f"amplitude length {amp.shape[0]} != space dimension {self.space.total_dim}")
        if self.normalized and abs(np.linalg.norm(amp) - 1.0) > NORM_TOL:
            raise ValueError("state flagged normalized but norm is %r" % np.linalg.norm(amp))
        object.__setattr__(self, "amp", amp)

    @classmethod
    def basis(cls, space: HilbertSpace, index: int) -> "StateVector":
        amp = np.zeros(space.total_dim, dtype=np.complex128)
        amp[index] = 1.0
        return cls(space, amp, normalized=True)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amp))


@dataclass(frozen=True)
class Operator:
    space: HilbertSpace
    mat: np.ndarray
    kind: str = "general"

    def __post_init__(self):
        mat = _frozen(self.mat)
        d = self.space.total_dim
        if mat.shape != (d, d):
            raise ValueError(f"matrix shape {mat.shape} != ({d}, {d})")
        if self.kind not in ("general", "hermitian", "unitary"):
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.kind == "hermitian" and hermiticity_error(mat) > HERMITIAN_TOL:
            raise ValueError("operator flagged hermitian is not Hermitian")
        if self.kind == "unitary" and unitarity_error(mat) > UNITARY_TOL:
            raise ValueError("operator flagged unitary is not unitary")
        object.__setattr__(self, "mat", mat)

    @property
    def dag(self) -> "Operator":
        return Operator(self.space, self.mat.conj().T, self.kind)


def hermiticity_error(mat) -> float:
    mat = np.asarray(mat)
    return float(np.abs(mat - mat.conj().T).max())


def unitarity_error(mat) -> float:
    mat = np.asarray(mat)
    return float(np.abs(mat.conj().T @ mat - np.eye(mat.shape[1])).max())


def identity(space: HilbertSpace) -> Operator:
    return Operator(space, np.eye(space.total_dim), "unitary")


def tensor(a, b):
    """Kronecker product of two states or two operators on disjoint spaces."""
    space = a.space.concat(b.space)
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        return StateVector(space, np.kron(a.amp, b.amp),
                           normalized=a.normalized and b.normalized)
    if isinstance(a, Operator) and isinstance(b, Operator):
        if a.kind == b.kind and a.kind in ("unitary", "hermitian"):
            kind = a.kind
        else:
            kind = "general"
        return Operator(space, np.kron(a.mat, b.mat), kind)
    raise TypeError("tensor needs two StateVectors or two Operators")


def apply_local(mat, dims, axes, arr):
    """Apply ``mat`` to the tensor factors ``axes`` of ``arr``.

    ``arr`` has shape ``(prod(dims),)`` or ``(prod(dims), batch)``; a trailing
    batch axis is carried along untouched. Returns a new array.
    """
    dims = tuple(dims)
    axes = tuple(axes)
    arr = np.asarray(arr)
    batch = arr.shape[1:]
    t = arr.reshape(dims + batch)
    rest = [i for i in range(len(dims)) if i not in axes]
    order = list(axes) + rest + list(range(len(dims), len(dims) + len(batch)))
    t = t.transpose(order)
    dsub = int(np.prod([dims[i] for i in axes]))
    shape_t = t.shape
    t = (np.asarray(mat) @ t.reshape(dsub, -1)).reshape(shape_t)
    t = t.transpose(np.argsort(order))
    return t.reshape(arr.shape)


def _check_targets(op, target_factors, space):
    axes = [space.axis(lbl) for lbl in target_factors]
    if len(set(axes)) != len(axes):
        raise ValueError("repeated target factor")
    want = tuple(space.dims[i] for i in axes)
    if want != op.space.dims:
        raise ValueError(f"operator dims {op.space.dims} do not match target dims {want}")
    return axes


def apply_embedded(op: Operator, target_factors: Sequence[str], state: StateVector) -> StateVector:
    """Apply ``op`` to the named factors of ``state``, identity elsewhere."""
    axes = _check_targets(op, target_factors, state.space)
    out = apply_local(op.mat, state.space.dims, axes, state.amp)
    return StateVector(state.space, out, normalized=state.normalized and op.kind == "unitary")


def embed_operator(op: Operator, target_factors: Sequence[str], space: HilbertSpace) -> Operator:
    """Full matrix of ``op`` padded with identities on ``space``."""
    axes = _check_targets(op, target_factors, space)
    full = apply_local(op.mat, space.dims, axes, np.eye(space.total_dim, dtype=np.complex128))
    kind = op.kind if op.kind == "unitary" else "general"
    return Operator(space, full, kind)


def partial_trace(state: StateVector, keep: Sequence[str]) -> Operator:
    """Reduced density matrix on the factors ``keep`` (in the given order)."""
    keep = list(keep)
    if not keep:
        raise ValueError("keep must name at least one factor")
    space = state.space
    axes = [space.axis(lbl) for lbl in keep]
    rest = [i for i in range(len(space.dims)) if i not in axes]
    t = state.amp.reshape(space.dims).transpose(axes + rest)
    dkeep = int(np.prod([space.dims[i] for i in axes]))
    psi = t.reshape(dkeep, -1)
    rho = psi @ psi.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    return Operator(space.sub(keep), rho, "hermitian")


def hermitian_propagator(H: Operator, t: float) -> Operator:
    """exp(-i H t) from the eigendecomposition of the Hermitian ``H``."""
    if hermiticity_error(H.mat) > HERMITIAN_TOL:
        raise ValueError("hermitian_propagator needs a Hermitian operator")
    evals, evecs = np.linalg.eigh(H.mat)
    U = (evecs * np.exp(-1j * evals * t)) @ evecs.conj().T
    return Operator(H.space, U, "unitary")


def orthonormal_basis_of_span(vectors, rel_tol: float = 1e-12):
    """Orthonormal basis of the span of ``vectors`` via SVD.

    Parameters
    ----------
    vectors
        Sequence of StateVector on one space, or a 2-D array whose columns are
        the vectors.
    rel_tol
        Singular values at or below ``rel_tol * s_max`` count as zero.

    Returns
    -------
    basis : ndarray, shape (d, rank)
        Orthonormal columns.
    rank : int
    coeffs : ndarray, shape (rank, n)
        ``basis @ coeffs`` reproduces the input columns.
    """
    if not 0 < rel_tol < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    if isinstance(vectors, np.ndarray):
        A = np.asarray(vectors, dtype=np.complex128)
        if A.ndim != 2 or A.shape[1] == 0:
            raise ValueError("need a non-empty 2-D array of column vectors")
    else:
        vectors = list(vectors)
        if not vectors:
            raise ValueError("need at least one vector")
        space = vectors[0].space
        if any(v.space != space for v in vectors):
            raise ValueError("vectors live on different spaces")
        A = np.stack([v.amp for v in vectors], axis=1)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        rank = 0
    else:
        rank = int(np.count_nonzero(s > rel_tol * s[0]))
    basis = U[:, :rank]
    coeffs = basis.conj().T @ A
    return basis, rank, coeffs


def complete_to_unitary(columns, pivot_tol: float | None = None) -> np.ndarray:
    """Extend orthonormal columns to a unitary, deterministically.

    Missing columns come from Gram-Schmidt against the canonical basis, taken
    in ascending index order; a canonical vector is accepted when its residual
    after projecting out the current columns exceeds ``pivot_tol``
    (default ``1 / (2 sqrt(d))``, which always admits at least one candidate).

    Returns the unitary as an ndarray; its leading columns equal the input.
    """
    if isinstance(columns, np.ndarray):
        Q = np.array(columns, dtype=np.complex128)
        if Q.ndim == 1:
            Q = Q[:, None]
    else:
        Q = np.stack([c.amp for c in columns], axis=1)
    d, m = Q.shape
    if m > d:
        raise ValueError(f"{m} columns cannot be orthonormal in dimension {d}")
    if m and unitarity_error(Q) > UNITARY_TOL:
        raise ValueError("input columns are not orthonormal")
    if pivot_tol is None:
        pivot_tol = 0.5 / np.sqrt(d)
    out = np.zeros((d, d), dtype=np.complex128)
    out[:, :m] = Q
    # squared residual of e_i against the current columns is 1 - sum_j |out[i, j]|^2
    weight = np.sum(np.abs(Q) ** 2, axis=1)
    n = m
    while n < d:
        # residuals only shrink, so the first admissible index never decreases
        i = int(np.argmax(1.0 - weight > pivot_tol ** 2))
        cur = out[:, :n]
        v = -cur @ cur[i].conj()
        v[i] += 1.0
        v -= cur @ (cur.conj().T @ v)
        v /= np.linalg.norm(v)
        out[:, n] = v
        weight += np.abs(v) ** 2
        n += 1
    return out


def fidelity(psi: StateVector, rho: Operator) -> float:
    """<psi|rho|psi>, clamped to [0, 1]."""
    if psi.space.total_dim != rho.space.total_dim:
        raise ValueError("dimension mismatch between state and density matrix")
    val = np.vdot(psi.amp, rho.mat @ psi.amp)
    if abs(val.imag) > 1e-12:
        raise ValueError(f"<psi|rho|psi> has imaginary part {val.imag!r}")
    return float(min(1.0, max(0.0, val.real)))
