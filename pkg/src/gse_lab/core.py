"""Escort distributions and Generalized Shannon's Entropy (GSE).

Every quantity is evaluated in the log domain: with ``L = m * max_i ln p_i``
the power sum is ``S = exp(L) * sum_i exp(m ln p_i - L)``, so nothing
underflows for large orders or tiny probabilities. Entropies are in nats.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

SUM_TOL = 1e-12
TIE_TOL = 1e-12
M_MAX = 64.0


class ValidationError(ValueError):
    """Raised for malformed distributions, orders or signatures."""


def _as_float_array(values, name: str) -> np.ndarray:
    try:
        arr = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name}: not a numeric sequence") from exc
    if arr.ndim != 1:
        raise ValidationError(f"{name}: expected a flat sequence")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: non-finite entry")
    return arr


@dataclass(frozen=True)
class Distribution:
    """Strictly positive probability vector of length K >= 2."""

    probs: np.ndarray

    def __post_init__(self):
        p = _as_float_array(self.probs, "probs")
        if p.size < 2:
            raise ValidationError("probs: need at least two categories")
        if np.any(p <= 0.0):
            raise ValidationError("probs: entries must be strictly positive")
        if abs(p.sum() - 1.0) > SUM_TOL:
            raise ValidationError(f"probs: sum is {float(p.sum())!r}, expected 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def K(self) -> int:
        return int(self.probs.size)

    def __eq__(self, other):
        return type(other) is type(self) and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash((type(self).__name__, tuple(self.probs.tolist())))

    def __len__(self):
        return self.K

    def sorted(self, tie_tol: float = TIE_TOL) -> "SortedDistribution":
        return SortedDistribution(np.sort(self.probs)[::-1], tie_tol=tie_tol)

    def to_json(self) -> dict:
        return {"probs": [float(x) for x in self.probs]}


@dataclass(frozen=True, eq=False)
class SortedDistribution(Distribution):
    """Non-increasing probability vector; point of the closed sorted simplex.

    Consecutive gaps at or below ``tie_tol`` are ties. They are kept as
    they are (no perturbation) and exposed through :attr:`multiplicity`,
    so callers that need the open sorted simplex must check
    :attr:`has_ties`.
    """

    tie_tol: float = TIE_TOL
    multiplicity: tuple = field(init=False)

    def __post_init__(self):
        super().__post_init__()
        if self.tie_tol < 0:
            raise ValidationError("tie_tol must be nonnegative")
        gaps = -np.diff(self.probs)
        if np.any(gaps < 0):
            raise ValidationError("probs: not sorted in decreasing order")
        counts = [1]
        for g in gaps:
            if g <= self.tie_tol:
                counts[-1] += 1
            else:
                counts.append(1)
        object.__setattr__(self, "multiplicity", tuple(counts))

    @property
    def has_ties(self) -> bool:
        return len(self.multiplicity) < self.K

    @property
    def chart(self) -> np.ndarray:
        """Coordinates ``(p_2, ..., p_K)``."""
        return self.probs[1:].copy()

    @classmethod
    def from_chart(cls, x, tie_tol: float = TIE_TOL) -> "SortedDistribution":
        x = np.asarray(x, dtype=float)
        return cls(np.concatenate([[1.0 - x.sum()], x]), tie_tol=tie_tol)


@dataclass(frozen=True)
class OrderSet:
    """Strictly increasing positive GSE orders, capped at ``M_MAX``."""

    orders: np.ndarray

    def __post_init__(self):
        m = _as_float_array(self.orders, "orders")
        if m.size < 1:
            raise ValidationError("orders: need at least one order")
        if np.any(m <= 0):
            raise ValidationError("orders: every order must be positive")
        if np.any(m > M_MAX):
            raise ValidationError(f"orders: orders above {M_MAX:g} are not supported")
        if np.any(np.diff(m) <= 0):
            raise ValidationError("orders: must be strictly increasing (distinct)")
        m.setflags(write=False)
        object.__setattr__(self, "orders", m)

    @classmethod
    def parse(cls, text: str) -> "OrderSet":
        """Parse a comma list such as ``"0.5,2"``; duplicates are rejected."""
        try:
            vals = [float(tok) for tok in text.split(",") if tok.strip()]
        except ValueError as exc:
            raise ValidationError(f"orders: cannot parse {text!r}") from exc
        if len(set(vals)) != len(vals):
            raise ValidationError("orders: duplicate order")
        return cls(sorted(vals))

    @classmethod
    def default_for(cls, K: int) -> "OrderSet":
        return cls(0.5 + 0.75 * np.arange(K - 1))

    def __len__(self):
        return int(self.orders.size)

    def __eq__(self, other):
        return isinstance(other, OrderSet) and np.array_equal(self.orders, other.orders)

    def __hash__(self):
        return hash(tuple(self.orders.tolist()))

    def __iter__(self):
        return iter(float(m) for m in self.orders)

    def tolist(self) -> list:
        return [float(m) for m in self.orders]


@dataclass(frozen=True)
class ScalarProfile:
    order: float
    power_sum: float
    log_power_sum: float
    mu: float
    alpha: float
    alpha_prime: float


@dataclass(frozen=True)
class GseSignature:
    orders: OrderSet
    values: np.ndarray

    def __post_init__(self):
        if not isinstance(self.orders, OrderSet):
            object.__setattr__(self, "orders", OrderSet(self.orders))
        v = _as_float_array(self.values, "values")
        if v.size != len(self.orders):
            raise ValidationError("values: length does not match orders")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __eq__(self, other):
        return isinstance(other, GseSignature) and self.orders == other.orders and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.orders, tuple(self.values.tolist())))

    def check_range(self, K: int, slack: float = 1e-12):
        if np.any(self.values < -slack) or np.any(self.values > math.log(K) + slack):
            raise ValidationError(f"values: outside [0, ln {K}]")

    def to_json(self) -> dict:
        return {"orders": self.orders.tolist(), "values": [float(v) for v in self.values]}

    @classmethod
    def from_json(cls, obj: dict) -> "GseSignature":
        try:
            orders, values = obj["orders"], obj["values"]
        except (KeyError, TypeError) as exc:
            raise ValidationError("signature: need 'orders' and 'values'") from exc
        try:
            if len(orders) != len(values):
                raise ValidationError("values: length does not match orders")
            pairs = sorted(zip(map(float, orders), map(float, values)))
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"signature: malformed orders or values ({exc})") from exc
        return cls(OrderSet([o for o, _ in pairs]), [v for _, v in pairs])


ProbLike = Union[Distribution, Sequence[float], np.ndarray]


def _probs(p: ProbLike) -> np.ndarray:
    if isinstance(p, Distribution):
        return p.probs
    return Distribution(p).probs


def _sorted_probs(p: ProbLike) -> np.ndarray:
    if isinstance(p, SortedDistribution):
        return p.probs
    q = _probs(p)
    if np.any(np.diff(q) > 0):
        raise ValidationError("probs: expected a decreasingly sorted distribution")
    return q


def _check_order(m: float) -> float:
    m = float(m)
    if not m > 0 or not math.isfinite(m):
        raise ValidationError(f"order must be positive, got {m!r}")
    return m


def _orders(M) -> OrderSet:
    return M if isinstance(M, OrderSet) else OrderSet(M)


def make_sorted(weights: Iterable[float], tie_tol: float = TIE_TOL) -> SortedDistribution:
    """Normalize nonnegative weights, drop zeros and sort decreasingly."""
    w = _as_float_array(list(weights), "weights")
    if np.any(w < 0):
        raise ValidationError("weights: negative entry")
    w = w[w > 0]
    if w.size < 2:
        raise ValidationError("weights: need at least two positive entries")
    p = np.sort(w / w.sum())[::-1]
    # renormalize after sorting so the sum check sees the same rounding
    return SortedDistribution(p / p.sum(), tie_tol=tie_tol)


def _log_escort(lp: np.ndarray, m: float):
    """Shifted exponents, normalizer and weights for order ``m``.

    Returns ``(d, log_s, w, L)`` with ``d_i = m ln p_i - L <= 0``,
    ``s = sum exp(d)``, ``w = exp(d)/s`` and ``L = m max ln p``.
    """
    a = m * lp
    L = a.max()
    d = a - L
    e = np.exp(d)
    s = e.sum()
    return d, math.log(s), e / s, L


def escort(p: ProbLike, m: float) -> Distribution:
    """Escort (CDOTC) distribution ``p_i^m / sum_j p_j^m``."""
    m = _check_order(m)
    lp = np.log(_probs(p))
    _, _, w, _ = _log_escort(lp, m)
    return Distribution(w / w.sum())


def shannon(p: ProbLike) -> float:
    q = _probs(p)
    return float(-np.sum(q * np.log(q)))


def scalar_profile(p: ProbLike, m: float) -> ScalarProfile:
    m = _check_order(m)
    lp = np.log(_sorted_probs(p))
    _, log_s, w, L = _log_escort(lp, m)
    y = L + log_s
    mu = float(w @ lp)
    var = float(w @ (lp - mu) ** 2)
    return ScalarProfile(
        order=m,
        power_sum=math.exp(y),
        log_power_sum=y,
        mu=mu,
        alpha=min(mu - lp[0], 0.0),
        alpha_prime=var,
    )


def gse(p: ProbLike, m: float) -> float:
    """Generalized Shannon's Entropy of order ``m`` (nats).

    Evaluated as ``ln s - sum_i w_i d_i`` with the shifted exponents of
    ``_log_escort``; both terms are nonnegative so there is no cancellation
    between large logarithms.
    """
    m = _check_order(m)
    # sorting fixes the summation order, so relabelling is bit-exact
    lp = np.log(np.sort(_probs(p))[::-1])
    d, log_s, w, _ = _log_escort(lp, m)
    return float(log_s - w @ d)


def gse_signature(p: ProbLike, M) -> GseSignature:
    M = _orders(M)
    q = _probs(p)
    return GseSignature(M, [gse(q, m) for m in M])


def gse_gradient(p: ProbLike, m: float) -> np.ndarray:
    """Partial derivatives ``m^2 p_k^(m-1) / S * (mu - ln p_k)``."""
    m = _check_order(m)
    lp = np.log(_probs(p))
    _, log_s, w, L = _log_escort(lp, m)
    y = L + log_s
    mu = w @ lp
    return m * m * np.exp((m - 1.0) * lp - y) * (mu - lp)


def phi(m: float, u, alpha: float):
    """``(alpha - u) * exp((m - 1) u) - alpha`` for ``u <= 0``."""
    m = _check_order(m)
    u = np.asarray(u, dtype=float)
    if np.any(u > 0):
        raise ValidationError("phi: u must be nonpositive")
    out = (alpha - u) * np.exp((m - 1.0) * u) - alpha
    return float(out) if out.ndim == 0 else out


def uniform(K: int) -> Distribution:
    return Distribution(np.full(K, 1.0 / K))


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg})") from exc


def load_distribution(path) -> Distribution:
    obj = read_json(path)
    if not isinstance(obj, dict) or "probs" not in obj:
        raise ValidationError("probs: missing field")
    return Distribution(obj["probs"])


def load_signature(path) -> GseSignature:
    return GseSignature.from_json(read_json(path))
