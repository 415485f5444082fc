"""Control V through the memory: download, apply a logical gate on M, upload.

The gate is built from the stored-image map Phi (its isometric part), so it
acts on the images as the intended gate acts on V. The fidelity with the
gated input approaches 1 as the residual weight vanishes.
"""
import numpy as np

from qdefrag.model import SX, ChainSpec, SystemPartition, make_layout, random_state
from qdefrag.protocol import logical_memory_gate, run_roundtrip
from qdefrag.qcore import StateVector

partition = SystemPartition(3)
layout = make_layout(partition)
spec = ChainSpec.uniform(3)
gate = np.kron(SX, np.eye(4))  # bit flip on the first site
psi = random_state(partition.space_V, seed=1)
target = StateVector(psi.space, gate @ psi.amp)

for L in (2, 4, 8, 12, 20, 40):
    fid, traces = run_roundtrip(spec, partition, layout, np.pi / 2, L, psi,
                                memory_gate=lambda s: logical_memory_gate(s, gate),
                                target=target)
    plain, _ = run_roundtrip(spec, partition, layout, np.pi / 2, L, psi)
    print(f"L={L:3d}  r_L={traces[-1].residual_weight:.2e}  "
          f"gated fidelity={fid:.10f}  ungated fidelity={plain:.12f}")
