"""Set-to-set similarity of fragment embeddings through entropic optimal
transport with dustbin-based partial matching."""

from .baselines import (CamConfig, GaussianEmbedding, cam_similarity, pem_similarity,
                        pem_wasserstein, vse_similarity)
from .estimator import SinkhornMatcher, check_fragment_sets
from .exceptions import (DimensionMismatch, FormatError, InvalidGlobal, InvalidGroundTruth,
                         InvalidInput, NumericalUnderflow, SinkmatchError, UnsupportedSize)
from .fragments import FragmentSet, MarginKind, MarginStrategy, compute_margins, ingest_set
from .ot import (LogDomain, SolverConfig, TransportPlan, build_cost_matrix, exact_emd_oracle,
                 round_to_polytope,
                 plan_entropy, similarity_matrix, sinkhorn_bregman, sinkhorn_matrix_scaling,
                 sinkhorn_similarity, transport_cost)
from .partial import PartialProblem, extend_problem, partial_similarity, solve_partial
from .retrieval import (GroundTruth, LossConfig, MatchConfig, Method, RetrievalReport,
                        SimilarityMatrix, batch_similarity, pair_similarity, recall_report,
                        triplet_loss)

__version__ = "0.1.0"
