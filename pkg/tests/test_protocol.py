import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from qdefrag import defrag
from qdefrag.harness import naive_basis_images
from qdefrag.model import ChainSpec, SystemPartition, build_chain_hamiltonian, make_layout, random_state
from qdefrag.protocol import (download_step, embed_input, extract_phi_map, init_protocol,
                              logical_memory_gate, replay, residual_weight, run_download,
                              run_roundtrip, step_unitary, xi_family)
from qdefrag.qcore import Operator, StateVector, embed_operator, unitarity_error

HALF_PI = np.pi / 2


def setup(n, t=HALF_PI, spec=None, site=0):
    p = SystemPartition(n, site)
    lay = make_layout(p)
    return init_protocol(spec or ChainSpec.uniform(n), p, lay, t)


def test_init_state():
    st0 = setup(3)
    assert st0.step_index == 0
    assert residual_weight(st0) == 1.0
    assert st0.images.orthonormality_error() <= 1e-12
    fam = xi_family(st0)
    assert np.array_equal(defrag.gram(fam)[0], np.eye(64)[[0, 9, 18, 27, 36, 45, 54, 63]].sum(0))
    with pytest.raises(ValueError):
        setup(2, t=0.0)


def test_step_unitary_zero_time_is_swap():
    p = SystemPartition(2)
    lay = make_layout(p)
    S = step_unitary(ChainSpec.uniform(2), p, lay, 0.0)
    assert S.space.labels == ("v0", "v1", "m1")
    # SWAP(v0, m1) on |v0 v1 m1>: index 4*a + 2*b + c -> 4*c + 2*b + a
    P = np.zeros((8, 8))
    for a in range(2):
        for b in range(2):
            for c in range(2):
                P[4 * c + 2 * b + a, 4 * a + 2 * b + c] = 1
    assert np.abs(S.mat - P).max() <= 1e-15


def test_step_unitary_full_matrix_n3():
    st0 = setup(3)
    full = embed_operator(st0.step_unitary, st0.step_targets, st0.space).mat
    assert unitarity_error(full) <= 1e-10
    # identity on M0: no matrix element changes the m0 index
    t = full.reshape(8, 64, 2, 8, 64, 2)
    off = t.copy()
    for m in range(64):
        off[:, m, :, :, m, :] = 0
    assert np.abs(off).max() == 0
    vac = np.zeros(full.shape[0])
    vac[0] = 1
    assert np.abs(full @ vac - vac).max() <= 1e-10


def brute_force_first_residual():
    """3-qubit step unitary (v0, v1, m) built from explicit matrices."""
    H = np.zeros((4, 4))
    H[1, 2] = H[2, 1] = 1.0
    U = np.kron(expm(-1j * HALF_PI * H), np.eye(2))
    swap = np.zeros((8, 8))
    for a in range(2):
        for b in range(2):
            for c in range(2):
                swap[4 * c + 2 * b + a, 4 * a + 2 * b + c] = 1
    S = swap @ U
    cols = S[:, ::2]  # inputs |k> (x) |0>_m
    off = cols[2:]  # rows with V != |00>
    return np.linalg.norm(off, 2) ** 2


def test_first_residual_matches_brute_force():
    st1, tr = download_step(setup(2))
    assert abs(tr.residual_weight - brute_force_first_residual()) <= 1e-12
    assert tr.step == 1 and st1.step_index == 1


def test_download_step_contract():
    st0 = setup(3)
    st1, tr = download_step(st0)
    assert st1.images.orthonormality_error() <= 1e-9
    assert tr.gram_error <= 1e-10
    assert tr.m1_leakage <= 1e-9
    cols = st1.images.columns.reshape(8, 64, 2, 8)
    assert np.sum(np.abs(cols[:, :, 1, :]) ** 2) <= 1e-9
    assert len(st1.applied_ops) == 2
    assert st1.applied_ops[1].targets == ("m0", "m1")
    assert st0.step_index == 0  # input state untouched


def test_skip_defrag_leaks_into_m1():
    _, tr = download_step(setup(2), apply_defrag=False)
    assert tr.gram_error == 0
    assert tr.m1_leakage > 0.1


def test_run_download_bookkeeping():
    st0 = setup(2)
    same, traces = run_download(st0, 0)
    assert same is st0 and traces == []
    st, traces = run_download(st0, 20)
    assert [t.step for t in traces] == list(range(1, 21))
    assert all(t.memory_rank <= 16 for t in traces)
    with pytest.raises(ValueError):
        run_download(st0, -1)


def test_rank_matches_independent_svd():
    st = setup(3)
    for _ in range(6):
        st, tr = download_step(st)
        # rank of the memory vectors before defrag equals rank after (D is unitary)
        s = np.linalg.svd(xi_family(st).matrix(), compute_uv=False)
        assert tr.memory_rank == int(np.sum(s > 1e-12 * s[0]))


def test_replay_reproduces_images():
    st, _ = run_download(setup(3), 15)
    assert np.abs(replay(st) - st.images.columns).max() <= 1e-9


def test_residual_weight_extremes():
    st = setup(2)
    cols = np.zeros_like(st.images.columns)
    cols[: st.layout.dim_M, :] = np.eye(st.layout.dim_M)[:, :4]
    from qdefrag.protocol import BasisImageMap
    assert residual_weight(BasisImageMap(st.space, cols, 0)) == 0.0


def test_residual_matches_naive_oracle_small_l():
    st = setup(3)
    naive = dict(naive_basis_images(st.spec, st.partition, HALF_PI, 10))
    for ell in range(1, 11):
        st, tr = download_step(st)
        nc = naive[ell]
        r_naive = np.linalg.norm(nc[nc.shape[0] // 8:], 2) ** 2
        assert abs(tr.residual_weight - r_naive) <= 1e-12


def test_residual_converges_n3():
    st, traces = run_download(setup(3), 50)
    assert traces[-1].residual_weight <= 1e-20


def test_phi_map_initial():
    phi = extract_phi_map(setup(2))
    expect = np.zeros((32, 4))
    expect[0, 0] = 1
    assert np.array_equal(phi, expect)


@pytest.mark.parametrize("n,ell", [(2, 5), (3, 3), (3, 5), (3, 8)])
def test_phi_map_near_isometry(n, ell):
    st, _ = run_download(setup(n), ell)
    r = residual_weight(st)
    phi = extract_phi_map(st)
    gram = phi.conj().T @ phi
    # 1e-12 absorbs round-off once r itself has reached the float64 floor
    assert np.abs(gram - np.eye(gram.shape[0])).max() <= 2 * np.sqrt(r) + r + 1e-12
    d = np.diag(gram).real
    assert np.all(d >= 1 - r - 1e-12) and np.all(d <= 1 + 1e-12)


def test_phi_isometry_when_transfer_exact():
    # N=2, t=pi/2 transfers everything after two steps
    st, _ = run_download(setup(2), 2)
    phi = extract_phi_map(st)
    assert residual_weight(st) <= 1e-30
    assert np.abs(phi.conj().T @ phi - np.eye(4)).max() <= 1e-12


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_orthonormality_random_configs(seed):
    rng = np.random.default_rng(seed)
    spec = ChainSpec(str(rng.choice(["XX", "Heisenberg"])), rng.uniform(0.3, 2.0, 1) * rng.choice([-1, 1]),
                     rng.uniform(-1, 1, 2))
    st = setup(2, t=float(rng.uniform(0.1, 3.0)), spec=spec, site=int(rng.integers(2)))
    for _ in range(4):
        st, tr = download_step(st)
        assert st.images.orthonormality_error() <= 1e-9
        assert tr.gram_error <= 1e-10 and tr.m1_leakage <= 1e-10


def test_worst_case_dominates_sampled_state():
    st, _ = run_download(setup(3), 6)
    r = residual_weight(st)
    dim_M = st.layout.dim_M
    for seed in range(20):
        psi = random_state(st.partition.space_V, seed)
        joint = st.images.columns @ psi.amp
        assert np.sum(np.abs(joint[dim_M:]) ** 2) <= r + 1e-9


def test_roundtrip_identity_without_gate():
    st = setup(2)
    psi = random_state(st.partition.space_V, 5)
    for L in (0, 1, 3, 10):
        fid, traces = run_roundtrip(st.spec, st.partition, st.layout, HALF_PI, L, psi)
        assert fid >= 1 - 1e-9
        assert len(traces) == L


def test_roundtrip_identity_gate_at_zero_steps():
    st = setup(2)
    psi = random_state(st.partition.space_V, 6)
    gate = Operator(st.layout.space_M, np.eye(st.layout.dim_M), "unitary")
    fid, _ = run_roundtrip(st.spec, st.partition, st.layout, HALF_PI, 0, psi, memory_gate=gate)
    assert fid >= 1 - 1e-12


def test_roundtrip_rejects_bad_inputs():
    st = setup(2)
    psi = random_state(st.partition.space_V, 6)
    with pytest.raises(ValueError):
        run_roundtrip(st.spec, st.partition, st.layout, HALF_PI, 1,
                      StateVector(psi.space, 2 * psi.amp))
    bad = Operator(st.layout.space_M, 2 * np.eye(st.layout.dim_M))
    with pytest.raises(ValueError):
        run_roundtrip(st.spec, st.partition, st.layout, HALF_PI, 1, psi, memory_gate=bad)


def naive_logical_roundtrip(spec, partition, t, L, psi, g):
    """Same experiment on the uncompressed growing memory."""
    n, dV = partition.n_sites, partition.dim_V
    cols = dict(naive_basis_images(spec, partition, t, L))[L]
    dM = cols.shape[0] // dV
    phi = cols[:dM]
    U_, _, Vh = np.linalg.svd(phi, full_matrices=False)
    Q = U_ @ Vh
    G = Q @ g @ Q.conj().T + np.eye(dM) - Q @ Q.conj().T
    joint = (cols @ psi).reshape(dV, dM)
    joint = joint @ G.T
    Uv = expm(-1j * t * build_chain_hamiltonian(spec, partition).mat)
    dims = [2] * (n + L)
    x = joint.reshape(dims)
    for j in range(L, 0, -1):
        x = np.swapaxes(x, partition.controlled_site, n + j - 1)
        x = np.tensordot(Uv.conj().T, x.reshape(dV, -1), axes=1).reshape(dims)
    x = x.reshape(dV, -1)
    return float(np.real(np.vdot(g @ psi, (x @ x.conj().T) @ (g @ psi))))


@pytest.mark.parametrize("L", [3, 6, 10, 12])
def test_logical_bit_flip_matches_naive(L):
    st = setup(3)
    sx = np.array([[0, 1], [1, 0]])
    g = np.kron(sx, np.eye(4))
    psi = random_state(st.partition.space_V, 11)
    target = StateVector(psi.space, g @ psi.amp)
    fid, traces = run_roundtrip(st.spec, st.partition, st.layout, HALF_PI, L, psi,
                                memory_gate=lambda s: logical_memory_gate(s, g), target=target)
    r = traces[-1].residual_weight
    loss = (2 * np.sqrt(r) + 2 * r) ** 2
    naive = naive_logical_roundtrip(st.spec, st.partition, HALF_PI, L, psi.amp, g)
    assert fid >= 1 - loss - 1e-12
    assert naive >= 1 - loss - 1e-12
    # M1 content produced while uploading is not re-compressed, so the two
    # protocols only agree to the order of the residual weight
    assert abs(fid - naive) <= loss + 1e-12


def test_logical_gate_at_large_l():
    st = setup(3)
    g = np.kron(np.diag([1, -1]), np.eye(4))
    psi = random_state(st.partition.space_V, 12)
    target = StateVector(psi.space, g @ psi.amp)
    fid, _ = run_roundtrip(st.spec, st.partition, st.layout, HALF_PI, 60, psi,
                           memory_gate=lambda s: logical_memory_gate(s, g), target=target)
    assert fid >= 1 - 1e-9


def test_embed_input_checks_space():
    st = setup(2)
    with pytest.raises(ValueError):
        embed_input(st, random_state(setup(3).partition.space_V, 0))
