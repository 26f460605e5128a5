"""Waste-recycling Monte Carlo on finite state spaces.

Exact asymptotic variances (``wrmc.exact``), chain simulation
(``wrmc.chain``), estimators (``wrmc.estimators``) and a replication
harness (``wrmc.bench``) for single- and multi-proposal Metropolis-Hastings.
"""

from .model import (
    AlphaBarker,
    Barker,
    BoltzmannKappa,
    ExplicitKappa,
    ExplicitRho,
    Metropolis,
    MetropolisKappa,
    ModelError,
    ModelValidationError,
    MultiProposalKernel,
    MultiProposalModel,
    SingleProposalModel,
    StateSpace,
    load_model,
    load_model_file,
    pair_embedding,
    validate_model,
)
from .exact import solve_poisson, variance_report
from .chain import run_chain
from .estimators import estimate, simulate_estimate
from .bench import BenchConfig, counterexample_f, counterexample_model, run_bench

__version__ = "0.1.0"
