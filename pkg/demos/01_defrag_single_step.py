"""One download step on a 2-site chain, taken apart.

Shows the memory vectors v_kk' read off the joint state, their Gram matrix,
and what the defragmentation unitary does to them.
"""
import numpy as np

from qdefrag import defrag
from qdefrag.model import ChainSpec, SystemPartition, make_layout
from qdefrag.protocol import init_protocol, download_step, xi_family

partition = SystemPartition(2)
layout = make_layout(partition)
state = init_protocol(ChainSpec.uniform(2), partition, layout, np.pi / 2)

print("dim V =", partition.dim_V, " dim M0 =", layout.dim_M0, " dim M1 =", layout.dim_M1)

# At l = 0 every basis input sits in V and the memory is |0>: only v_kk is nonzero.
fam0 = xi_family(state)
print("l=0 nonzero memory vectors:", int(np.sum(np.linalg.norm(fam0.vectors, axis=2) > 0)))

# Couple and swap, but keep the memory as it is, to look at the raw family.
raw, trace = download_step(state, apply_defrag=False)
fam = xi_family(raw)
print("after the coupling, weight on M1=|1>:", trace.m1_leakage)

D, rank = defrag.build_defrag_unitary(fam, layout)
after = defrag.apply_to_family(D, fam)
report = defrag.verify_gram_preserved(defrag.gram(fam), defrag.gram(after))
print("span rank:", rank, " Gram change:", report.max_abs_diff)
print("weight on M1=|1> after defrag:", defrag.m1_leakage(after))

# The protocol does the same thing on every step.
state, trace = download_step(state)
print(trace)
