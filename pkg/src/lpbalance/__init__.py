"""Online l_p load balancing with smoothed-norm greedy algorithms."""

from .balancing import (ALGORITHMS, check_refined_guarantee, greedy_step, make_policy, run_greedy,
                        run_greedy_wr, run_smooth_greedy, run_ultimate)
from .errors import (EnumerationTooLarge, NondeterministicAlgorithm, OracleTooLarge, OutOfRange,
                     ParseError, RangeError, ZeroVector)
from .harness import ExperimentConfig, InstanceSource, emit_report, run_experiment
from .instances import (gen_adversarial_wc, gen_example1, gen_random, gen_walsh_instance,
                        read_instance, walsh_vectors, write_instance)
from .model import Assignment, Instance, JobMatrix
from .offline import OptResult, brute_force_opt, fractional_lower_bound, opt_bound
from .olo import run_olo_game
from .smoothing import (INF, PNormParams, SmoothingParams, effective_p, linlp_bound, linlp_vector,
                        lp_norm, psi, psi_gradient, radius)

__version__ = "0.1.0"
