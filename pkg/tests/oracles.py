"""Independent oracles shared by the coupled-HMM and acceptance tests."""

import math
from itertools import product

import numpy as np

from gmelim.chmm import brute_force_loglik, chain_log_q


def log_weight(p, h, obs):
    """ln of the potential product at hidden configuration h (shape (I, T))."""
    with np.errstate(divide="ignore"):
        w = sum(np.log(p.psiInit[h[i, 0]]) for i in range(p.I))
        for t in range(p.T):
            if t:
                w += sum(np.log(p.psiM[h[i, t - 1], h[i, t]]) for i in range(p.I))
            if p.coupling == "full":
                w += np.log(p.psiC[tuple(h[:, t])])
            else:
                w += sum(np.log(p.psiC[h[i, t], h[j, t]]) for i in range(p.I) for j in range(i + 1, p.I))
            w += sum(np.log(p.psiE[h[i, t], obs[i, t]]) for i in range(p.I))
    return float(w)


def all_hidden(p):
    for flat in product(range(p.K), repeat=p.I * p.T):
        yield np.array(flat).reshape(p.I, p.T)


def brute_kl(p, obs, post):
    """KL(q || p(h | o)) by enumerating every hidden configuration."""
    ll = brute_force_loglik(p, obs)
    kl = 0.0
    for h in all_hidden(p):
        lq = chain_log_q(post, h)
        if lq == -np.inf:
            continue
        kl += math.exp(lq) * (lq - (log_weight(p, h, obs) - ll))
    return kl


def baum_welch_oracle(init, trans, emit, obs, iters):
    """Plain single-chain Baum-Welch with unscaled recursions; returns the log-likelihood trace."""
    init, trans, emit = init.copy(), trans.copy(), emit.copy()
    T, K = len(obs), len(init)
    trace = []
    for _ in range(iters):
        alpha = np.zeros((T, K))
        beta = np.ones((T, K))
        alpha[0] = init * emit[:, obs[0]]
        for t in range(1, T):
            for s in range(K):
                alpha[t, s] = sum(alpha[t - 1, r] * trans[r, s] for r in range(K)) * emit[s, obs[t]]
        for t in range(T - 2, -1, -1):
            for r in range(K):
                beta[t, r] = sum(trans[r, s] * emit[s, obs[t + 1]] * beta[t + 1, s] for s in range(K))
        z = alpha[-1].sum()
        trace.append(math.log(z))
        gamma = alpha * beta / z
        xi = np.zeros((K, K))
        for t in range(T - 1):
            xi += alpha[t][:, None] * trans * (emit[:, obs[t + 1]] * beta[t + 1])[None, :] / z
        init = gamma[0] / gamma[0].sum()
        trans = xi / xi.sum(axis=1, keepdims=True)
        counts = np.zeros_like(emit)
        for t in range(T):
            counts[:, obs[t]] += gamma[t]
        emit = counts / counts.sum(axis=1, keepdims=True)
    return trace
