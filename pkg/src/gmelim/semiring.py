"""Commutative semirings used for combination and elimination.

A semiring pairs an elimination operator ``oplus`` with a combination
operator ``otimes``.  Counting tasks use (sum, product), optimization tasks
use (max, product) or equivalently (max, plus) on log values, weighted CSPs
use (min, plus) on costs and plain CSPs use (or, and) on Booleans.

Semirings whose carrier is a probability (``sum-product`` and
``max-product``) also carry a log-space counterpart; it is selected when a
factor is stored in the log domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


def _or(a, b):
    return np.logical_or(a, b).astype(np.float64)


def _and(a, b):
    return np.logical_and(a, b).astype(np.float64)


def _or_reduce(values, axis):
    return np.logical_or.reduce(values, axis=axis).astype(np.float64)


@dataclass(frozen=True)
class Semiring:
    """An (oplus, otimes) pair with identities.

    ``zero`` is the oplus identity (and otimes annihilator), ``one`` the
    otimes identity.  ``log`` is the log-carrier counterpart used for
    log-domain tables, or ``None`` when the carrier is already additive.
    """

    name: str
    oplus: Callable
    otimes: Callable
    zero: float
    one: float
    reducer: Callable
    log: Optional["Semiring"] = None

    def reduce(self, values, axis=None):
        values = np.asarray(values, dtype=np.float64)
        if axis is None:
            return self.reducer(values.reshape(-1), 0)
        return self.reducer(values, axis)

    def for_domain(self, log_domain: bool) -> "Semiring":
        """Return the semiring acting on tables stored in the given domain."""
        if log_domain and self.log is not None:
            return self.log
        return self

    def __repr__(self):
        return f"Semiring({self.name!r})"


_LOG_SUM = Semiring(
    "log-sum-product", np.logaddexp, np.add, -np.inf, 0.0,
    lambda v, axis: np.logaddexp.reduce(v, axis=axis),
)
_LOG_MAX = Semiring(
    "log-max-product", np.maximum, np.add, -np.inf, 0.0,
    lambda v, axis: np.max(v, axis=axis, initial=-np.inf),
)

SUM_PRODUCT = Semiring(
    "sum-product", np.add, np.multiply, 0.0, 1.0,
    lambda v, axis: np.sum(v, axis=axis), log=_LOG_SUM,
)
MAX_PRODUCT = Semiring(
    "max-product", np.maximum, np.multiply, 0.0, 1.0,
    lambda v, axis: np.max(v, axis=axis, initial=0.0), log=_LOG_MAX,
)
MAX_PLUS = Semiring(
    "max-plus", np.maximum, np.add, -np.inf, 0.0,
    lambda v, axis: np.max(v, axis=axis, initial=-np.inf),
)
MIN_PLUS = Semiring(
    "min-plus", np.minimum, np.add, np.inf, 0.0,
    lambda v, axis: np.min(v, axis=axis, initial=np.inf),
)
OR_AND = Semiring("or-and", _or, _and, 0.0, 1.0, _or_reduce)

SEMIRINGS = {s.name: s for s in (SUM_PRODUCT, MAX_PRODUCT, MAX_PLUS, MIN_PLUS, OR_AND)}


def get_semiring(name) -> Semiring:
    if isinstance(name, Semiring):
        return name
    try:
        return SEMIRINGS[name]
    except KeyError:
        raise ValueError(f"unknown semiring {name!r}; expected one of {sorted(SEMIRINGS)}") from None
