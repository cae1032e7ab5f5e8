"""CHSH-gated matrix Module-LWE key agreement at desk scale."""

from .chsh import (ChshEstimate, ChshRound, ChshTranscript, epr_state, joint_outcome_probs,
                   lhv_max, quantum_advantage_gap, run_game, tsirelson_scan, verify_session)
from .evolution import (ChainSpec, KernelMatrix, NoiseLaw, build_kernel, check_primitive,
                        markov_step, noise_accumulation_check, prf_evolve, spectral_report,
                        verify_ergodicity)
from .hamiltonian import (decide_promise, ground_energy, instance_from_transcript,
                          term_from_settings)
from .mlwe import Params, cbd_sample, decaps, encaps, keygen, paramset
from .security import (cca_bound, delta_blocksize, effective_variance, enhanced_bits,
                       modulate_noise, resource_report, table_report)
from .session import SessionConfig, fo_decaps, fo_encaps, run_campaign, run_session

__version__ = "0.1.0"
