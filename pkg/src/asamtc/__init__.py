"""Active-subspace polynomial chaos with graph-accelerated tensor-grid evaluation."""

__version__ = "0.1.0"

from .distributions import Marginal, RandomVector
from .active_subspace import ActiveSubspace, choose_dim, discover, eigendecompose, estimate_C
from .whitening import WhitenedBasis, compute_G, hermite_fast_path, make_basis, whiten
from .quadrature import QuadratureRule, node_count, solve_rule, tensor_product_rule
from .nipc import PceSurrogate, compute_coefficients
from .pipelines import Seeds, UqResult, convergence_study, run_as_amtc, run_as_nipc, run_mc
from .models import get_model

__all__ = [
    "Marginal", "RandomVector", "ActiveSubspace", "choose_dim", "discover", "eigendecompose", "estimate_C",
    "WhitenedBasis", "compute_G", "hermite_fast_path", "make_basis", "whiten", "QuadratureRule",
    "node_count", "solve_rule", "tensor_product_rule", "PceSurrogate", "compute_coefficients", "Seeds",
    "UqResult", "convergence_study", "run_as_amtc", "run_as_nipc", "run_mc", "get_model",
]
