"""Control-by-relaxation simulation with fixed-size quantum memory via
defragmentation."""

from .qcore import (HilbertSpace, Operator, StateVector, apply_embedded, complete_to_unitary,
                    fidelity, hermitian_propagator, orthonormal_basis_of_span, partial_trace,
                    tensor)
from .model import (ChainSpec, MemoryLayout, SystemPartition, build_chain_hamiltonian,
                    make_layout, random_state)
from .defrag import (RankBoundError, XiFamily, build_defrag_unitary, extract_xi_family, gram,
                     verify_gram_preserved)
from .protocol import (BasisImageMap, ProtocolState, StepTrace, download_step, extract_phi_map,
                       init_protocol, residual_weight, run_download, run_roundtrip, step_unitary)
from .harness import RunConfig, compare_with_oracle, naive_download, run_experiment

__version__ = "0.1.0"
