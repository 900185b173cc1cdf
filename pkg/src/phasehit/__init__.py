"""Joint densities and tail probabilities of first hitting times of finite
continuous-time Markov chains."""
from .errors import *  # noqa: F401,F403
from .mcore import (IntensityModel, StateSet, StateSpace, ValidationReport, extend, mask,
                    projector, reach_within, restrict, validate)
from .expmat import ExpmWorkspace, QuadratureRule, expm_apply, integrate, solve
from .partitions import (SubPartition, classify, enumerate_partitions, fubini, parse,
                         render, subpermutations, union_targets, waiting_target_sets)
from .hitting import (DensityValue, Survival, conditional_density, decompose_initial,
                      defective_mass, density_single, joint_density, joint_density_absorbing,
                      post_jump_distribution, region_mass_vector, region_probability,
                      survival_single, taboo_distribution)
from .tails import (Equal, NotEqual, TailQuery, TailResult, Threshold, canonicalize,
                    embedded_chain, equality_prob, tail_p, tail_p_absorbing, tail_p_alt,
                    tail_p_simple, tail_probability)
from .simkit import (BoxEstimate, EmpiricalEstimate, HittingSample, binned_density,
                     estimate_region_prob, estimate_tail, grid_boxes, sample_path, simulate)
from .modelfile import bundled_models, dump_model, load_model, parse_model

__version__ = "0.1.0"
