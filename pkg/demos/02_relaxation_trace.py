"""Download a 3-site XX chain for many steps with M fixed at M0 (x) M1.

The worst-case residual weight left in V drops geometrically until it reaches
double-precision round-off, while the memory rank stays far below (dim V)^2.
"""
import numpy as np

from qdefrag.model import ChainSpec, SystemPartition, make_layout
from qdefrag.protocol import init_protocol, run_download

partition = SystemPartition(3)
layout = make_layout(partition)
state = init_protocol(ChainSpec.uniform(3), partition, layout, np.pi / 2)
state, traces = run_download(state, 60)

print(f"memory: dim M0 = {layout.dim_M0}, dim M = {layout.dim_M} at every step")
print(" step   residual   rank   gram_err   m1_leak")
for tr in traces[:15] + traces[-3:]:
    print(f"{tr.step:5d}  {tr.residual_weight:9.2e}  {tr.memory_rank:4d}"
          f"  {tr.gram_error:9.2e}  {tr.m1_leakage:8.1e}")

# fit a geometric rate on the resolvable part
r = np.array([t.residual_weight for t in traces])
ell = np.arange(1, len(r) + 1)
mask = (ell >= 4) & (r > 1e-25)
slope = np.polyfit(ell[mask], np.log(r[mask]), 1)[0]
print(f"average decay factor per step: {np.exp(slope):.3f}")
