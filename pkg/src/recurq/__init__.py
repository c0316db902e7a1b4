"""recurq: recurrence entropy bounds and quantized recurrence-enforcing control.

Tools for checking windowed recurrence of nonlinear control trajectories,
computing entropy-style upper/lower bounds on the information rate needed
to enforce it, searching exact minimum spanning control sets on small
instances, and running a quantized sensor/controller loop whose bit rate
and guarantees can be audited offline.
"""

from .geometry import (Box, CompactSet, GridCover, OverlapError, distance,
                       distance_many, grid, lebesgue, min_cover_size,
                       neighborhood, quantize)
from .systems import (BUILTIN_SYSTEMS, ControlSignal, ControlSystem,
                      DomainError, IntegrationBlowupError, Trajectory,
                      divergence, double_integrator, eval_field, integrate,
                      jacobian_fd, make_system, rk4_step, scalar_linear)
from .recurrence import (ContainmentConstants, RecurrenceSpec, ResolutionError,
                         containment_radius, estimate_F_Q, estimate_L,
                         first_return_time, is_invariant, is_recurrent,
                         lipschitz_region)
from .entropy import (BoundReport, CandidateClass, InfeasibleInstanceError,
                      InstanceTooLargeError, SpanningInstance,
                      build_spanning_instance, dim_box_counting,
                      empirical_rate, greedy_cover, initial_point_grid,
                      lower_bound, min_spanning_cardinality,
                      uncoverable_points, upper_bound)
from .quantized import (BitRateReport, ClauseResult, ControllerInvalidError,
                        CountedChannel, DeterminismError, EpisodeLog,
                        GridMirror, GuaranteeReport, GuaranteeViolationError,
                        ProtocolError, RecurrenceController, StepRecord,
                        bit_rate, build_feedback_controller, closed_loop,
                        decode, encode, load_step_records,
                        reference_controller_double_integrator, run_episode,
                        steady_state_cover_size, verify_guarantees)

__version__ = "0.1.0"
