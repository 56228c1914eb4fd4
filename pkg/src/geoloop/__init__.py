"""geoloop: certified curve and loop-family shortening on model manifolds."""

__version__ = "0.1.0"

from .birkhoff import (ShorteningTrace, loop_residual, probe_local_minimality,
                       shorten_based_loop, shorten_free_loop, sweep_once)
from .certificates import BoundCertificate, Slack, evaluate, verify
from .curve_shorten import (ShortenResult, ShorteningFamily, ShorteningParams,
                            partial_shortening, shorten_curve)
from .curves import (LoopAt, PLCurve, concat, displacement, length, minimal_geodesic,
                     refine, reverse, subcurve, trace_geodesic)
from .errors import (BoundViolation, EndpointMismatch, GeoloopError, HypothesisViolated,
                     IterationBudgetExceeded, MissingSymbol, NonFiniteState, RangeError,
                     ShootingFailed, SyncFailed)
from .family_shorten import (FamilyResult, GapContraction, LoopFamily, Synchronization,
                             contract_adjacent, shorten_family, synchronize)
from .homotopy import (LengthHomotopy, contract_path_family, doubled_loop_contraction,
                       loop_to_path_homotopy, trace_homotopy)
from .manifolds import (ChartMetric, Ellipsoid, FlatTorus, Manifold, ParamSurface,
                        RoundSphere, Tangent, distance, flat_chart, manifold_from_json,
                        sphere_chart, validate_diameter)
from .sweepout import MinimaxResult, bound_formula, loop_count_bound, minimax_geodesic
