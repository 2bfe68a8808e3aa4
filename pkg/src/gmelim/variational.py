"""Mean-field approximation for binary pairwise (Potts/Ising) models.

The model is ``p(x) ∝ exp(sum_i a_i x_i + sum_ij b_ij x_i x_j)`` with
``x_i in {0, 1}``.  The approximation is a product of Bernoulli(q_i).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ArityError, ParameterError, StructureError
from .model import Factor, GraphicalModel, enumerate_joint
from .semiring import SUM_PRODUCT


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


@dataclass
class PottsModel:
    """Fields ``a`` and couplings ``b[(i, j)]`` (``i < j``) of a binary pairwise model.

    ``log_offset`` is an additive constant in the exponent; it only matters
    when comparing with a factor model that carries a global scale.
    """

    a: np.ndarray
    b: dict[tuple[int, int], float] = field(default_factory=dict)
    log_offset: float = 0.0

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64).reshape(-1)
        couplings = {}
        for (i, j), w in dict(self.b).items():
            i, j = int(i), int(j)
            if i == j or not (0 <= i < self.n and 0 <= j < self.n):
                raise StructureError(f"invalid coupling edge ({i}, {j}) for {self.n} variables")
            key = (min(i, j), max(i, j))
            couplings[key] = couplings.get(key, 0.0) + float(w)
        self.b = couplings
        self._nbrs = [[] for _ in range(self.n)]
        for (i, j), w in self.b.items():
            self._nbrs[i].append((j, w))
            self._nbrs[j].append((i, w))

    @property
    def n(self) -> int:
        return len(self.a)

    def field_at(self, i: int, q: np.ndarray) -> float:
        """a_i + sum_j b_ij q_j."""
        return self.a[i] + sum(w * q[j] for j, w in self._nbrs[i])

    def energy_terms(self, x: np.ndarray) -> float:
        x = np.asarray(x)
        return float(self.a @ x + sum(w * x[i] * x[j] for (i, j), w in self.b.items()))


@dataclass
class MeanFieldState:
    q: np.ndarray
    iterations: int
    converged: bool
    free_energy: float
    history: list[float] = field(default_factory=list)
    residual: float = float("inf")


def _xlogx(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    mask = p > 0
    out[mask] = p[mask] * np.log(p[mask])
    return out


def mf_objective(m: PottsModel, q) -> float:
    """KL(q || p) - ln Z in closed form for a product of Bernoullis."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (m.n,):
        raise StructureError(f"q has shape {q.shape}, expected ({m.n},)")
    if np.any((q < 0) | (q > 1)):
        raise ValueError("q must lie in [0, 1]")
    neg_entropy = float(np.sum(_xlogx(q) + _xlogx(1.0 - q)))
    energy = float(m.a @ q) + sum(w * q[i] * q[j] for (i, j), w in m.b.items())
    return neg_entropy - energy - m.log_offset


def fixed_point_residual(m: PottsModel, q: np.ndarray) -> float:
    return max((abs(q[i] - sigmoid(m.field_at(i, q))) for i in range(m.n)), default=0.0)


def mean_field_fit(m: PottsModel, init: str = "half", seed: Optional[int] = None, tol: float = 1e-10,
                   max_iter: int = 1000) -> MeanFieldState:
    """Sequential coordinate updates ``q_i <- sigmoid(a_i + sum_j b_ij q_j)``.

    Each coordinate step is an exact minimization of the objective in
    ``q_i``, so the objective never increases.  The run stops once the
    fixed-point residual is below ``tol`` or after ``max_iter`` sweeps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if init == "half":
        q = np.full(m.n, 0.5)
    elif init == "random":
        q = np.random.default_rng(seed).uniform(0.0, 1.0, m.n)
    else:
        raise ValueError(f"unknown init {init!r}; use 'half' or 'random'")
    history = [mf_objective(m, q)]
    residual = fixed_point_residual(m, q)
    sweeps = 0
    while residual >= tol and sweeps < max_iter:
        for i in range(m.n):
            q[i] = sigmoid(m.field_at(i, q))
        sweeps += 1
        history.append(mf_objective(m, q))
        residual = fixed_point_residual(m, q)
    return MeanFieldState(q, sweeps, residual < tol, history[-1], history, residual)


def _as_distributions(q) -> list[np.ndarray]:
    out = []
    for item in q:
        arr = np.atleast_1d(np.asarray(item, dtype=np.float64))
        if arr.size == 1:
            arr = np.array([1.0 - arr[0], arr[0]])
        out.append(arr)
    return out


def kl_divergence(q, model: GraphicalModel, cap: int = 10**6) -> float:
    """KL(q || p) by enumeration, with ``q`` a product of per-variable distributions.

    Each entry of ``q`` is either a probability vector over that variable's
    states or a scalar ``P(x_i = 1)`` for a binary variable.  Returns
    ``inf`` when ``q`` puts mass where ``p`` vanishes.
    """
    dists = _as_distributions(q)
    free = model.free_variables
    if len(dists) != len(free):
        raise StructureError(f"q has {len(dists)} components, model has {len(free)} free variables")
    for v, d in zip(free, dists):
        if d.shape != (model.variables[v].cardinality,):
            raise StructureError(f"distribution for variable {v} has {d.size} states")
    logp = enumerate_joint(model, SUM_PRODUCT, cap, log_domain=True).values
    logp = logp - np.logaddexp.reduce(logp.reshape(-1))
    qx = np.ones(())
    for d in dists:
        qx = np.multiply.outer(qx, d)
    mask = qx > 0
    if np.any(np.isneginf(logp[mask])):
        return float("inf")
    return float(np.sum(qx[mask] * (np.log(qx[mask]) - logp[mask])))


def potts_to_model(m: PottsModel) -> GraphicalModel:
    factors = [Factor((i,), np.exp([0.0, m.a[i]])) for i in range(m.n)]
    for (i, j), w in sorted(m.b.items()):
        factors.append(Factor((i, j), np.exp([[0.0, 0.0], [0.0, w]])))
    if m.log_offset:
        factors.append(Factor.scalar(np.exp(m.log_offset)))
    return GraphicalModel.from_cards([2] * m.n, factors)


def potts_from_model(model: GraphicalModel) -> PottsModel:
    """Read (a, b) off a binary model with unary and pairwise factors.

    The gauge puts cell (0, 0) of each table at the reference: a pairwise log
    table ``l`` contributes ``l[0,0]`` to the offset, ``l[1,0] - l[0,0]`` and
    ``l[0,1] - l[0,0]`` to the two fields and
    ``l[1,1] - l[1,0] - l[0,1] + l[0,0]`` to the coupling.
    """
    if model.evidence:
        raise StructureError("condition-free models only")
    if any(c != 2 for c in model.cards):
        raise ParameterError("all variables must be binary")
    a = np.zeros(model.n)
    b: dict[tuple[int, int], float] = {}
    offset = 0.0
    for k, f in enumerate(model.factors):
        if len(f.scope) > 2:
            raise ArityError(f"factor {k} has arity {len(f.scope)}")
        lg = f.to_log().values
        if np.any(np.isneginf(lg)):
            raise ParameterError(f"factor {k} has zero entries; no finite coefficients exist")
        if len(f.scope) == 0:
            offset += float(lg)
        elif len(f.scope) == 1:
            offset += lg[0]
            a[f.scope[0]] += lg[1] - lg[0]
        else:
            i, j = f.scope
            offset += lg[0, 0]
            a[i] += lg[1, 0] - lg[0, 0]
            a[j] += lg[0, 1] - lg[0, 0]
            b[(i, j)] = b.get((i, j), 0.0) + lg[1, 1] - lg[1, 0] - lg[0, 1] + lg[0, 0]
    return PottsModel(a, b, float(offset))


def random_potts(n: int, edges: Sequence[tuple[int, int]], rng: np.random.Generator,
                 field_scale: float = 1.0, coupling_scale: float = 1.0) -> PottsModel:
    a = rng.uniform(-field_scale, field_scale, n)
    b = {(int(i), int(j)): float(rng.uniform(-coupling_scale, coupling_scale)) for i, j in edges}
    return PottsModel(a, b)
