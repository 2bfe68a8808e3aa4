"""Exact and approximate inference in discrete graphical models.

Variable elimination over commutative semirings, elimination orderings and
tree decompositions, message passing, mean field, and coupled HMMs.
"""

from .errors import GMError
from .graph import Graph
from .model import (
    DiscreteVariable,
    Evidence,
    Factor,
    GraphicalModel,
    brute_force,
    combine,
    condition,
    eliminate,
    eliminate_var,
    enumerate_joint,
    primal_graph,
)
from .semiring import MAX_PLUS, MAX_PRODUCT, MIN_PLUS, OR_AND, SUM_PRODUCT, Semiring, get_semiring
from .treewidth import (
    EliminationOrdering,
    TreeDecomposition,
    decomposition_from_ordering,
    elimination_game,
    greedy_order,
    is_chordal,
    ordering_from_decomposition,
    randomized_iterative_minfill,
    validate_decomposition,
)
from .elimination import (
    block_elimination,
    entropy,
    log_partition,
    map_assignment,
    marginal,
    variable_elimination,
)
from .messages import (
    bethe_free_energy,
    calibrate_junction_tree,
    check_calibration,
    loopy_bp,
    reparametrize_tree,
    tree_message_pass,
)
from .variational import PottsModel, kl_divergence, mean_field_fit, mf_objective
from .chmm import (
    CHMMParams,
    build_chmm,
    exact_em,
    forward_backward,
    merge_hidden,
    variational_e_step,
    variational_em,
    viterbi,
)
from .uai import parse_evidence, parse_model, write_model
from .bench import benchmark_orderings

__all__ = [name for name in dir() if not name.startswith("_")]
