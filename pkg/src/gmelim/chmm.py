"""Coupled hidden Markov models: construction, exact EM and variational EM.

``I`` hidden chains of length ``T`` share a transition table ``psiM``, an
emission table ``psiE`` and an initial table ``psiInit``.  At every time step
the hidden states are tied together by a coupling potential ``psiC``, either
a full table over ``K**I`` joint states or a symmetric ``K x K`` table applied
to every pair of chains.  Observation matrices have shape ``(I, T)``.

All tables are kept normalized (rows of ``psiM`` and ``psiE``, ``psiInit``
and the whole of ``psiC`` sum to one), and the likelihood is the total mass
``ln sum_h prod(potentials)`` of the unnormalized product at the observed
data.  Every M-step below maximizes the expected log of that product exactly.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Optional

import numpy as np

from .errors import CapacityError, ImpossibleObservationError, ParameterError
from .messages import loopy_bp, bethe_free_energy
from .model import Factor, GraphicalModel, condition
from .semiring import SUM_PRODUCT

DEFAULT_MERGE_CAP = 4096
INNER_TOL = 1e-6
INNER_SWEEPS = 50
EM_TOL = 1e-7
FAMILIES = ("q0", "qm", "bethe")


@dataclass
class CHMMParams:
    """Tied parameters of a coupled HMM.

    ``coupling`` is ``"pairwise"`` (``psiC`` symmetric ``K x K``) or
    ``"full"`` (``psiC`` of shape ``(K,) * I``).
    """

    I: int
    T: int
    K: int
    M: int
    psiM: np.ndarray
    psiC: np.ndarray
    psiE: np.ndarray
    psiInit: np.ndarray
    coupling: str = "pairwise"

    def __post_init__(self):
        self.psiM = np.asarray(self.psiM, dtype=np.float64)
        self.psiC = np.asarray(self.psiC, dtype=np.float64)
        self.psiE = np.asarray(self.psiE, dtype=np.float64)
        self.psiInit = np.asarray(self.psiInit, dtype=np.float64)
        self.validate()

    def validate(self):
        I, T, K, M = self.I, self.T, self.K, self.M
        if min(I, T, K, M) < 1:
            raise ParameterError("I, T, K and M must all be positive")
        expected = {
            "psiM": (K, K),
            "psiE": (K, M),
            "psiInit": (K,),
            "psiC": (K, K) if self.coupling == "pairwise" else (K,) * I,
        }
        if self.coupling not in ("pairwise", "full"):
            raise ParameterError(f"coupling must be 'pairwise' or 'full', got {self.coupling!r}")
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ParameterError(f"{name} has shape {arr.shape}, expected {shape}")
            if np.isnan(arr).any() or (arr < 0).any():
                raise ParameterError(f"{name} must be nonnegative")
        for name in ("psiM", "psiE"):
            if (getattr(self, name).sum(axis=1) <= 0).any():
                raise ParameterError(f"every row of {name} needs positive mass")
        if self.psiInit.sum() <= 0 or self.psiC.sum() <= 0:
            raise ParameterError("psiInit and psiC need positive mass")
        if self.coupling == "pairwise" and not np.allclose(self.psiC, self.psiC.T):
            raise ParameterError("pairwise coupling table must be symmetric")

    @property
    def n_states(self) -> int:
        return self.K ** self.I

    def copy(self) -> "CHMMParams":
        return replace(self, psiM=self.psiM.copy(), psiC=self.psiC.copy(), psiE=self.psiE.copy(),
                       psiInit=self.psiInit.copy())


def hidden_id(p: CHMMParams, i: int, t: int) -> int:
    return t * p.I + i


def observed_id(p: CHMMParams, i: int, t: int) -> int:
    return p.I * p.T + t * p.I + i


def _check_obs(p: CHMMParams, obs) -> np.ndarray:
    obs = np.asarray(obs, dtype=np.int64)
    if obs.shape != (p.I, p.T):
        raise ParameterError(f"observations have shape {obs.shape}, expected {(p.I, p.T)}")
    if obs.min(initial=0) < 0 or obs.max(initial=0) >= p.M:
        raise ParameterError(f"observations must lie in 0..{p.M - 1}")
    return obs


def build_chmm(p: CHMMParams) -> GraphicalModel:
    """Factor model over ``I*T`` hidden then ``I*T`` observed variables.

    Factors come in the order: initial tables, transitions, couplings,
    emissions.  Pairwise coupling emits one factor per chain pair and time.
    """
    I, T, K = p.I, p.T, p.K
    factors = [Factor((hidden_id(p, i, 0),), p.psiInit) for i in range(I)]
    for i in range(I):
        for t in range(1, T):
            factors.append(Factor((hidden_id(p, i, t - 1), hidden_id(p, i, t)), p.psiM))
    for t in range(T):
        if p.coupling == "full":
            factors.append(Factor([hidden_id(p, i, t) for i in range(I)], p.psiC))
        else:
            for i, j in combinations(range(I), 2):
                factors.append(Factor((hidden_id(p, i, t), hidden_id(p, j, t)), p.psiC))
    for i in range(I):
        for t in range(T):
            factors.append(Factor((hidden_id(p, i, t), observed_id(p, i, t)), p.psiE))
    return GraphicalModel.from_cards([K] * (I * T) + [p.M] * (I * T), factors)


def conditioned_chmm(p: CHMMParams, obs) -> GraphicalModel:
    obs = _check_obs(p, obs)
    ev = {observed_id(p, i, t): int(obs[i, t]) for i in range(p.I) for t in range(p.T)}
    return condition(build_chmm(p), ev)


@dataclass
class HMM:
    """A hidden Markov model with the per-time emission likelihoods already applied.

    ``lik[t, s]`` is the emission weight of state ``s`` at time ``t``.
    """

    init: np.ndarray
    trans: np.ndarray
    lik: np.ndarray

    @property
    def n_states(self) -> int:
        return len(self.init)

    @property
    def T(self) -> int:
        return self.lik.shape[0]


def joint_states(p: CHMMParams) -> np.ndarray:
    """Array ``(I, K**I)``: the chain values of each merged state (chain 0 most significant)."""
    return np.indices((p.K,) * p.I).reshape(p.I, -1)


def _coupling_vector(p: CHMMParams, states: np.ndarray) -> np.ndarray:
    if p.coupling == "full":
        return p.psiC.reshape(-1).copy()
    out = np.ones(states.shape[1])
    for i, j in combinations(range(p.I), 2):
        out *= p.psiC[states[i], states[j]]
    return out


def merge_hidden(p: CHMMParams, obs, cap: int = DEFAULT_MERGE_CAP) -> HMM:
    """Collapse the ``I`` chains into one HMM with ``K**I`` states."""
    obs = _check_obs(p, obs)
    if p.n_states > cap:
        raise CapacityError(
            f"merged chain has K^I = {p.n_states} states (cap {cap}); use a variational family instead"
        )
    states = joint_states(p)
    coup = _coupling_vector(p, states)
    init = np.prod(p.psiInit[states], axis=0) * coup
    trans = np.ones((p.n_states, p.n_states))
    for i in range(p.I):
        trans *= p.psiM[states[i][:, None], states[i][None, :]]
    trans *= coup[None, :]
    lik = np.ones((p.T, p.n_states))
    for i in range(p.I):
        lik *= p.psiE[states[i][None, :], obs[i][:, None]]
    return HMM(init, trans, lik)


@dataclass
class FBResult:
    gamma: np.ndarray
    xi: np.ndarray
    loglik: float
    ops: int


def forward_backward(hmm: HMM, xi: str = "full") -> FBResult:
    """Scaled forward-backward recursion.

    ``xi="full"`` returns pairwise posteriors of shape ``(T-1, S, S)``;
    ``xi="sum"`` returns their sum over time, shape ``(S, S)``.
    ``ops`` counts the multiply-adds of the two matrix recursions.
    """
    T, S = hmm.T, hmm.n_states
    alpha = np.empty((T, S))
    scale = np.empty(T)
    a = hmm.init * hmm.lik[0]
    for t in range(T):
        if t > 0:
            a = (alpha[t - 1] @ hmm.trans) * hmm.lik[t]
        c = a.sum()
        if not c > 0:
            raise ImpossibleObservationError(f"observations have zero probability (at time {t})")
        alpha[t] = a / c
        scale[t] = c
    beta = np.ones((T, S))
    for t in range(T - 2, -1, -1):
        beta[t] = (hmm.trans @ (hmm.lik[t + 1] * beta[t + 1])) / scale[t + 1]
    gamma = alpha * beta
    gamma /= gamma.sum(axis=1, keepdims=True)
    pair = np.zeros((T - 1, S, S)) if xi == "full" else np.zeros((S, S))
    for t in range(T - 1):
        x = alpha[t][:, None] * hmm.trans * (hmm.lik[t + 1] * beta[t + 1])[None, :] / scale[t + 1]
        if xi == "full":
            pair[t] = x
        else:
            pair += x
    return FBResult(gamma, pair, float(np.log(scale).sum()), 2 * T * S * S)


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


def viterbi(hmm: HMM) -> tuple[list[int], float]:
    """Most probable state path and its log weight.

    Backward max-messages are computed first, then the path is chosen
    forwards taking the lowest state index among ties, which yields the
    lexicographically first optimal path.
    """
    T, S = hmm.T, hmm.n_states
    lt, ll = _log(hmm.trans), _log(hmm.lik)
    back = np.zeros((T, S))
    for t in range(T - 2, -1, -1):
        back[t] = np.max(lt + (ll[t + 1] + back[t + 1])[None, :], axis=1)
    score = _log(hmm.init) + ll[0] + back[0]
    best = float(score.max())
    if best == -np.inf:
        raise ImpossibleObservationError("observations have zero probability")
    path = [int(np.argmax(score))]
    for t in range(1, T):
        step = lt[path[-1]] + ll[t] + back[t]
        path.append(int(np.argmax(step)))
    return path, best


def decode_path(p: CHMMParams, path) -> np.ndarray:
    """Merged state indices to an ``(I, T)`` array of chain states."""
    return joint_states(p)[:, np.asarray(path)]


# ---- expected statistics and the M-step ----


@dataclass
class Posterior:
    """Marginals of an E-step: per-chain singles and consecutive pairs, plus coupling counts.

    ``xi`` has shape ``(I, T-1, K, K)``; the exact E-step leaves it ``None``
    and fills ``trans_counts`` (pair counts summed over chains and time).

    ``coupling_counts`` is the expected number of (h^i_t, h^j_t) co-occurrences
    summed over t and i < j (pairwise), or the expected joint-state counts
    summed over t (full).
    """

    gamma: np.ndarray
    xi: np.ndarray
    coupling_counts: Optional[np.ndarray]
    objective: float
    family: str
    sweeps: int = 0
    converged: bool = True
    ops: int = 0
    history: list[float] = field(default_factory=list)
    trans_counts: Optional[np.ndarray] = None

    def transition_counts(self) -> np.ndarray:
        if self.trans_counts is not None:
            return self.trans_counts
        return self.xi.sum(axis=(0, 1))


@dataclass
class ExpectedCounts:
    init: np.ndarray
    trans: np.ndarray
    emit: np.ndarray
    coupling: Optional[np.ndarray]


def expected_counts(p: CHMMParams, obs, post: Posterior) -> ExpectedCounts:
    obs = _check_obs(p, obs)
    emit = np.zeros((p.K, p.M))
    for i in range(p.I):
        np.add.at(emit.T, obs[i], post.gamma[i])
    return ExpectedCounts(
        post.gamma[:, 0, :].sum(axis=0),
        post.transition_counts(),
        emit,
        post.coupling_counts,
    )


def _normalize_rows(counts: np.ndarray, previous: np.ndarray) -> np.ndarray:
    out = previous.copy()
    tot = counts.sum(axis=1)
    ok = tot > 0
    out[ok] = counts[ok] / tot[ok, None]
    return out


def m_step(p: CHMMParams, counts: ExpectedCounts) -> CHMMParams:
    """Closed-form maximizer of the expected log potential product."""
    new = p.copy()
    if counts.init.sum() > 0:
        new.psiInit = counts.init / counts.init.sum()
    new.psiM = _normalize_rows(counts.trans, p.psiM)
    new.psiE = _normalize_rows(counts.emit, p.psiE)
    c = counts.coupling
    if c is not None:
        if p.coupling == "pairwise":
            c = c + c.T
        if c.sum() > 0:
            new.psiC = c / c.sum()
    return new


def exact_posterior(p: CHMMParams, obs, cap: int = DEFAULT_MERGE_CAP) -> Posterior:
    hmm = merge_hidden(p, obs, cap)
    fb = forward_backward(hmm, xi="sum")
    shape = (p.K,) * p.I
    g = fb.gamma.reshape((p.T,) + shape)
    gamma = np.stack([g.sum(axis=tuple(1 + j for j in range(p.I) if j != i)) for i in range(p.I)])
    x = fb.xi.reshape(shape + shape)
    trans = np.zeros((p.K, p.K))
    for i in range(p.I):
        trans += x.sum(axis=tuple(a for a in range(2 * p.I) if a not in (i, p.I + i)))
    if p.coupling == "full":
        coupling = fb.gamma.sum(axis=0).reshape(shape)
    elif p.I > 1:
        coupling = np.zeros((p.K, p.K))
        for i, j in combinations(range(p.I), 2):
            coupling += g.sum(axis=(0,) + tuple(1 + a for a in range(p.I) if a not in (i, j)))
    else:
        coupling = None
    return Posterior(gamma, None, coupling, fb.loglik, "exact", 1, True, fb.ops, trans_counts=trans)


def log_likelihood(p: CHMMParams, obs, cap: int = DEFAULT_MERGE_CAP) -> float:
    return forward_backward(merge_hidden(p, obs, cap), xi="sum").loglik


# ---- variational E-steps ----


def _safe_dot(q: np.ndarray, table: np.ndarray, axis: int = 0) -> np.ndarray:
    """Contract ``table`` along ``axis`` with weights ``q``, taking 0 * -inf = 0."""
    table = np.moveaxis(table, axis, 0)
    neg = np.isneginf(table)
    out = np.tensordot(q, np.where(neg, 0.0, table), axes=(0, 0))
    bad = np.tensordot(q > 0, neg, axes=(0, 0))
    return np.where(bad, -np.inf, out)


def _xlogy(x: np.ndarray, y: np.ndarray) -> float:
    mask = x > 0
    return float(np.sum(x[mask] * y[mask]))


class _Logs:
    def __init__(self, p: CHMMParams):
        self.M = _log(p.psiM)
        self.E = _log(p.psiE)
        self.I = _log(p.psiInit)
        self.C = _log(p.psiC)


def _coupling_field(p: CHMMParams, L: _Logs, gamma: np.ndarray, i: int, t: int, total=None) -> np.ndarray:
    """E over the other chains at time t of ln psiC, as a function of h^i_t."""
    if p.I == 1:
        return L.C.copy() if p.coupling == "full" else np.zeros(p.K)
    if p.coupling == "pairwise":
        others = total - gamma[i, t]
        others = np.where(others < 0, 0.0, others)
        return _safe_dot(others, L.C.T)
    table = L.C
    for j in range(p.I - 1, -1, -1):
        if j != i:
            table = _safe_dot(gamma[j, t], table, axis=j)
    return table


def _product_coupling_energy(p: CHMMParams, L: _Logs, gamma: np.ndarray) -> tuple[float, Optional[np.ndarray]]:
    """E ln psiC under chains independent at each t, plus the matching counts."""
    if p.coupling == "pairwise":
        if p.I == 1:
            return 0.0, None
        s = gamma.sum(axis=0)
        counts = np.zeros((p.K, p.K))
        for t in range(p.T):
            counts += (np.outer(s[t], s[t]) - sum(np.outer(gamma[i, t], gamma[i, t]) for i in range(p.I))) / 2
        counts = np.maximum(counts, 0.0)
        return _xlogy(counts, L.C), counts
    counts = np.zeros((p.K,) * p.I)
    for t in range(p.T):
        joint = np.ones(())
        for i in range(p.I):
            joint = np.multiply.outer(joint, gamma[i, t])
        counts += joint
    return _xlogy(counts, L.C), counts


def variational_objective(p: CHMMParams, obs, gamma: np.ndarray, xi: np.ndarray) -> tuple[float, Optional[np.ndarray]]:
    """F(theta, q) for q independent across chains and Markov along each chain.

    A fully factorized q is the special case ``xi[i, t] = outer(gamma[i, t], gamma[i, t+1])``.
    """
    obs = np.asarray(obs)
    L = _Logs(p)
    f = 0.0
    for i in range(p.I):
        f += _xlogy(gamma[i, 0], L.I)
        f += _xlogy(gamma[i], L.E[:, obs[i]].T)
        if p.T > 1:
            f += _xlogy(xi[i], np.broadcast_to(L.M, xi[i].shape))
        # entropy of a Markov chain: H(h_0) + sum_t H(h_t | h_{t-1})
        f -= _xlogy(gamma[i, 0], _log(gamma[i, 0]))
        if p.T > 1:
            with np.errstate(invalid="ignore"):
                cond = _log(xi[i]) - _log(gamma[i, :-1])[:, :, None]
            f -= _xlogy(xi[i], cond)
    energy, counts = _product_coupling_energy(p, L, gamma)
    return f + energy, counts


def _softmax(field_: np.ndarray, where: str) -> np.ndarray:
    top = field_.max()
    if top == -np.inf:
        raise ImpossibleObservationError(f"no state has positive weight at {where}")
    w = np.exp(field_ - top)
    return w / w.sum()


def _outer_xi(gamma: np.ndarray) -> np.ndarray:
    return gamma[:, :-1, :, None] * gamma[:, 1:, None, :]


def _q0_sweep(p: CHMMParams, L: _Logs, obs: np.ndarray, gamma: np.ndarray) -> int:
    ops = 0
    totals = gamma.sum(axis=0)
    for i in range(p.I):
        for t in range(p.T):
            f = L.E[:, obs[i, t]].copy()
            if t == 0:
                f = f + L.I
            else:
                f = f + _safe_dot(gamma[i, t - 1], L.M)
            if t + 1 < p.T:
                f = f + _safe_dot(gamma[i, t + 1], L.M.T)
            f = f + _coupling_field(p, L, gamma, i, t, totals[t])
            new = _softmax(f, f"chain {i}, time {t}")
            totals[t] += new - gamma[i, t]
            gamma[i, t] = new
            ops += 3 * p.K * p.K
    return ops


def _qm_sweep(p: CHMMParams, L: _Logs, obs: np.ndarray, gamma: np.ndarray, xi: np.ndarray) -> int:
    ops = 0
    totals = gamma.sum(axis=0)
    for i in range(p.I):
        lik = np.empty((p.T, p.K))
        for t in range(p.T):
            field_ = _coupling_field(p, L, gamma, i, t, totals[t])
            top = field_.max()
            if top == -np.inf:
                raise ImpossibleObservationError(f"coupling excludes every state of chain {i} at time {t}")
            lik[t] = p.psiE[:, obs[i, t]] * np.exp(field_ - top)
        fb = forward_backward(HMM(p.psiInit, p.psiM, lik))
        ops += fb.ops + p.T * p.K * p.K
        totals += fb.gamma - gamma[i]
        gamma[i] = fb.gamma
        if p.T > 1:
            xi[i] = fb.xi
    return ops


def _bethe_posterior(p: CHMMParams, obs, damping: float, max_iter: int, tol: float) -> Posterior:
    cond = conditioned_chmm(p, obs)
    res = loopy_bp(cond, SUM_PRODUCT, damping=damping, tol=tol, max_iter=max_iter)
    q = res.beliefs
    gamma = np.stack([[q.singles[hidden_id(p, i, t)] for t in range(p.T)] for i in range(p.I)])
    xi = np.zeros((p.I, p.T - 1, p.K, p.K))
    for i in range(p.I):
        for t in range(1, p.T):
            xi[i, t - 1] = q.pair(hidden_id(p, i, t - 1), hidden_id(p, i, t))
    if p.I == 1:
        coupling = gamma[0].sum(axis=0) if p.coupling == "full" else None
    else:
        coupling = np.zeros((p.K, p.K))
        for t in range(p.T):
            for i, j in combinations(range(p.I), 2):
                coupling += q.pair(hidden_id(p, i, t), hidden_id(p, j, t))
    objective = -bethe_free_energy(cond, q)
    return Posterior(gamma, xi, coupling, objective, "bethe", res.iterations, res.converged)


def variational_e_step(p: CHMMParams, obs, family: str = "qm", init: Optional[Posterior] = None,
                       tol: float = INNER_TOL, max_sweeps: int = INNER_SWEEPS, *,
                       damping: float = 0.0, lbp_iter: int = 1000) -> Posterior:
    """Approximate posterior of the hidden chains and the matching objective.

    ``q0`` uses site-wise coordinate updates, ``qm`` one exact
    forward-backward per chain against the coupling averaged over the
    other chains, both sweeping until the gain in F is below ``tol``.
    ``init`` warm-starts from a previous posterior.  ``bethe`` runs loopy
    belief propagation on the hidden model and reports the negated Bethe
    free energy, which is not a bound.
    """
    family = family.lower()
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    obs = _check_obs(p, obs)
    if family == "bethe":
        return _bethe_posterior(p, obs, damping, lbp_iter, 1e-10)
    L = _Logs(p)
    if init is not None and init.gamma.shape == (p.I, p.T, p.K):
        gamma = init.gamma.copy()
        xi = init.xi.copy() if family == "qm" else _outer_xi(gamma)
        if xi.shape != (p.I, p.T - 1, p.K, p.K):
            xi = _outer_xi(gamma)
    else:
        gamma = np.full((p.I, p.T, p.K), 1.0 / p.K)
        xi = _outer_xi(gamma)
    current, _ = variational_objective(p, obs, gamma, xi)
    history = [current]
    ops, sweeps, converged = 0, 0, False
    while sweeps < max_sweeps:
        if family == "q0":
            ops += _q0_sweep(p, L, obs, gamma)
            xi = _outer_xi(gamma)
        else:
            ops += _qm_sweep(p, L, obs, gamma, xi)
        sweeps += 1
        new, _ = variational_objective(p, obs, gamma, xi)
        history.append(new)
        gain = new - current
        current = new
        if gain < tol:
            converged = True
            break
    _, counts = variational_objective(p, obs, gamma, xi)
    return Posterior(gamma, xi, counts, current, family, sweeps, converged, ops, history)


def chain_log_q(post: Posterior, h: np.ndarray) -> float:
    """ln q(h) for an ``(I, T)`` hidden configuration under a q0/qm posterior."""
    h = np.asarray(h)
    total = 0.0
    I, T = h.shape
    for i in range(I):
        total += _log(post.gamma[i, 0, h[i, 0]])
        for t in range(1, T):
            joint = post.xi[i, t - 1, h[i, t - 1], h[i, t]]
            total += _log(joint) - _log(post.gamma[i, t - 1, h[i, t - 1]])
    return float(total)


# ---- EM drivers ----


@dataclass
class EMRecord:
    iteration: int
    objective: float
    seconds: float
    params: CHMMParams


@dataclass
class EMTrace:
    records: list[EMRecord] = field(default_factory=list)
    stopped_by: str = "iterations"

    @property
    def objectives(self) -> list[float]:
        return [r.objective for r in self.records]

    def to_csv(self, include_time: bool = True) -> str:
        head = "iteration,objective,seconds" if include_time else "iteration,objective"
        lines = [head]
        for r in self.records:
            row = f"{r.iteration},{r.objective!r}"
            lines.append(f"{row},{r.seconds:.6f}" if include_time else row)
        return "\n".join(lines) + "\n"

    def __len__(self):
        return len(self.records)


def _relative_gain(old: float, new: float) -> float:
    return (new - old) / max(abs(old), 1e-300)


def exact_em(p0: CHMMParams, obs, iters: int = 50, tol: Optional[float] = EM_TOL,
             cap: int = DEFAULT_MERGE_CAP) -> tuple[CHMMParams, EMTrace]:
    """EM with the exact posterior from the merged chain.

    Record ``k`` holds the parameters entering iteration ``k`` and their
    log-likelihood.  The returned parameters come from the last M-step.
    """
    obs = _check_obs(p0, obs)
    p = p0.copy()
    trace = EMTrace()
    start = time.perf_counter()
    for it in range(iters):
        post = exact_posterior(p, obs, cap)
        trace.records.append(EMRecord(it, post.objective, time.perf_counter() - start, p))
        p = m_step(p, expected_counts(p, obs, post))
        if tol is not None and it > 0 and _relative_gain(trace.records[-2].objective, post.objective) < tol:
            trace.stopped_by = "tolerance"
            break
    return p, trace


def variational_em(p0: CHMMParams, obs, family: str = "qm", iters: int = 50, tol: Optional[float] = EM_TOL,
                   **e_step_options) -> tuple[CHMMParams, EMTrace]:
    """EM with a variational E-step; each record holds F at the E-step's q.

    For q0 and qm the E-step warm-starts from the previous q, so F never
    decreases from one record to the next.
    """
    obs = _check_obs(p0, obs)
    p = p0.copy()
    trace = EMTrace()
    start = time.perf_counter()
    post = None
    for it in range(iters):
        post = variational_e_step(p, obs, family, init=post, **e_step_options)
        trace.records.append(EMRecord(it, post.objective, time.perf_counter() - start, p))
        p = m_step(p, expected_counts(p, obs, post))
        if tol is not None and it > 0 and _relative_gain(trace.records[-2].objective, post.objective) < tol:
            trace.stopped_by = "tolerance"
            break
    return p, trace


# ---- synthetic data ----


def _normalized(x: np.ndarray, axis=None) -> np.ndarray:
    return x / x.sum(axis=axis, keepdims=axis is not None)


def random_params(I: int, T: int, K: int, M: int, rng: np.random.Generator, coupling: str = "pairwise",
                  concentration: float = 1.0) -> CHMMParams:
    """Dirichlet-distributed tables (a symmetric draw for pairwise coupling)."""
    psiM = rng.dirichlet(np.full(K, concentration), size=K)
    psiE = rng.dirichlet(np.full(M, concentration), size=K)
    psiInit = rng.dirichlet(np.full(K, concentration))
    if coupling == "pairwise":
        c = rng.gamma(concentration, size=(K, K))
        psiC = _normalized(c + c.T)
    else:
        psiC = rng.dirichlet(np.full(K ** I, concentration)).reshape((K,) * I)
    return CHMMParams(I, T, K, M, psiM, psiC, psiE, psiInit, coupling)


def uniform_coupling(p: CHMMParams) -> CHMMParams:
    q = p.copy()
    q.psiC = np.full(p.psiC.shape, 1.0 / p.psiC.size)
    return q


def _emit(p: CHMMParams, hidden: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    obs = np.empty_like(hidden)
    for i in range(p.I):
        for t in range(p.T):
            obs[i, t] = rng.choice(p.M, p=_normalized(p.psiE[hidden[i, t]]))
    return obs


def sample_chmm(p: CHMMParams, rng: np.random.Generator, method: str = "auto", gibbs_sweeps: int = 200,
                cap: int = DEFAULT_MERGE_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``(hidden, obs)``, both of shape ``(I, T)``.

    ``"exact"`` samples the merged chain backwards from its forward
    filter; ``"gibbs"`` runs single-site Gibbs sweeps on the hidden
    variables.  ``"auto"`` picks exact when ``K**I <= cap``.
    """
    if method == "auto":
        method = "exact" if p.n_states <= cap else "gibbs"
    if method == "exact":
        hmm = merge_hidden(p, np.zeros((p.I, p.T), dtype=int), cap)
        hmm.lik[:] = 1.0
        alpha = np.empty((p.T, p.n_states))
        alpha[0] = _normalized(hmm.init)
        for t in range(1, p.T):
            alpha[t] = _normalized(alpha[t - 1] @ hmm.trans)
        path = [0] * p.T
        path[-1] = rng.choice(p.n_states, p=alpha[-1])
        for t in range(p.T - 2, -1, -1):
            path[t] = rng.choice(p.n_states, p=_normalized(alpha[t] * hmm.trans[:, path[t + 1]]))
        hidden = decode_path(p, path)
    elif method == "gibbs":
        hidden = _gibbs(p, rng, gibbs_sweeps)
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    return hidden, _emit(p, hidden, rng)


def _gibbs(p: CHMMParams, rng: np.random.Generator, sweeps: int) -> np.ndarray:
    L = _Logs(p)
    h = rng.integers(0, p.K, size=(p.I, p.T))
    for _ in range(sweeps):
        for t in range(p.T):
            for i in range(p.I):
                f = np.zeros(p.K)
                f += L.I if t == 0 else L.M[h[i, t - 1]]
                if t + 1 < p.T:
                    f += L.M[:, h[i, t + 1]]
                if p.coupling == "pairwise":
                    for j in range(p.I):
                        if j != i:
                            f += L.C[:, h[j, t]]
                else:
                    idx = tuple(slice(None) if j == i else h[j, t] for j in range(p.I))
                    f += L.C[idx]
                h[i, t] = rng.choice(p.K, p=_softmax(f, f"chain {i}, time {t}"))
    return h


def brute_force_loglik(p: CHMMParams, obs, cap: int = 10**6) -> float:
    """ln of the total potential mass at ``obs`` by enumerating every hidden configuration."""
    obs = _check_obs(p, obs)
    n = p.I * p.T
    if p.K ** n > cap:
        raise CapacityError(f"{p.K ** n} hidden configurations exceed the cap {cap}")
    total = 0.0
    for flat in range(p.K ** n):
        h = np.array(np.unravel_index(flat, (p.K,) * n)).reshape(p.T, p.I).T
        w = math.prod(p.psiInit[h[i, 0]] for i in range(p.I))
        for t in range(p.T):
            if t:
                w *= math.prod(p.psiM[h[i, t - 1], h[i, t]] for i in range(p.I))
            if p.coupling == "full":
                w *= p.psiC[tuple(h[:, t])]
            else:
                w *= math.prod(p.psiC[h[i, t], h[j, t]] for i, j in combinations(range(p.I), 2))
            w *= math.prod(p.psiE[h[i, t], obs[i, t]] for i in range(p.I))
        total += w
    if total <= 0:
        raise ImpossibleObservationError("observations have zero probability")
    return math.log(total)
