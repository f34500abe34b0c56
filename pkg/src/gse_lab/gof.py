"""Signature-based goodness-of-fit and two-sample tests from count data.

Both tests only see sorted empirical distributions, so they are blind to
category labels and work across alphabets of different sizes. Replicate
``b`` draws from its own stream ``default_rng([seed, b])``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._backend import batch_gse
from .core import Distribution, GseSignature, OrderSet, ValidationError, _orders, _probs

DEFAULT_ORDERS = (0.5, 1.0, 2.0)
MIN_REPLICATES = 99
PARAMETRIC = "parametric-bootstrap"
RECENTERED = "recentered-bootstrap"


@dataclass(frozen=True)
class CountVector:
    counts: tuple

    def __post_init__(self):
        raw = np.asarray(self.counts)
        if raw.ndim != 1 or raw.size == 0:
            raise ValidationError("counts: expected a non-empty list of integers")
        if raw.dtype.kind == "f":
            if not np.all(np.isfinite(raw)) or np.any(raw != np.round(raw)):
                raise ValidationError("counts: entries must be integers")
        elif raw.dtype.kind not in "iu":
            raise ValidationError("counts: entries must be integers")
        c = raw.astype(np.int64)
        if np.any(c < 0):
            raise ValidationError("counts: negative entry")
        if np.count_nonzero(c) < 2:
            raise ValidationError("counts: need at least two positive categories")
        object.__setattr__(self, "counts", tuple(int(v) for v in c))

    @property
    def N(self) -> int:
        return sum(self.counts)

    def sorted_positive(self) -> np.ndarray:
        """Positive counts in decreasing order (the label-free content)."""
        c = np.array([v for v in self.counts if v > 0], dtype=float)
        return np.sort(c)[::-1]

    def empirical(self) -> Distribution:
        c = self.sorted_positive()
        return Distribution(c / c.sum())

    def to_json(self) -> dict:
        return {"counts": list(self.counts)}


@dataclass(frozen=True)
class TestReport:
    __test__ = False  # keep pytest from collecting the dataclass

    statistic: float
    p_value: float
    B: int
    seed: int
    orders: OrderSet
    method: str

    def to_json(self) -> dict:
        return {
            "statistic": float(self.statistic),
            "p_value": float(self.p_value),
            "B": int(self.B),
            "seed": int(self.seed),
            "orders": self.orders.tolist(),
            "method": self.method,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TestReport":
        try:
            return cls(
                float(obj["statistic"]),
                float(obj["p_value"]),
                int(obj["B"]),
                int(obj["seed"]),
                OrderSet(obj["orders"]),
                str(obj["method"]),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"test report: missing or malformed field {exc}") from exc


def _as_counts(c) -> CountVector:
    return c if isinstance(c, CountVector) else CountVector(c)


def _inference_orders(M) -> OrderSet:
    return OrderSet(DEFAULT_ORDERS) if M is None else _orders(M)


def _check_B(B):
    if int(B) != B or B < MIN_REPLICATES:
        raise ValidationError(f"B must be an integer >= {MIN_REPLICATES}")
    return int(B)


def _signatures(W, orders) -> np.ndarray:
    # rows are count vectors; zero categories are skipped by the kernel
    return batch_gse(np.ascontiguousarray(W, dtype=float), np.asarray(orders.orders, dtype=float))


def _draws(N, probs, B, key) -> np.ndarray:
    return np.stack([np.random.default_rng([*key, b]).multinomial(N, probs) for b in range(B)])


def _p_value(null, observed) -> float:
    return (1 + int(np.count_nonzero(null >= observed))) / (len(null) + 1)


def plugin_signature(c, M=None) -> GseSignature:
    """Signature of the empirical distribution (zero categories dropped)."""
    c = _as_counts(c)
    M = _inference_orders(M)
    # normalize first: a null distribution equal to the empirical one then
    # goes through identical arithmetic and the statistic is exactly zero
    return GseSignature(M, _signatures((c.sorted_positive() / c.N)[None, :], M)[0])


def gof_test(c, q, M=None, B: int = 999, seed: int = 42) -> TestReport:
    """Parametric-bootstrap test of ``H0: counts ~ multinomial(N, q)``.

    Statistic ``D = sum_m (H_hat(m) - H(m)(q))**2``. Only the sorted
    distributions enter, so ``q`` may be listed in any label order and on
    an alphabet of a different size than the counts.
    """
    c = _as_counts(c)
    M = _inference_orders(M)
    B = _check_B(B)
    qs = np.sort(_probs(q))[::-1]
    h_q = _signatures(qs[None, :], M)[0]
    stat = float(np.sum((plugin_signature(c, M).values - h_q) ** 2))
    null = np.sum((_signatures(_draws(c.N, qs, B, (seed,)), M) - h_q) ** 2, axis=1)
    return TestReport(stat, _p_value(null, stat), B, int(seed), M, PARAMETRIC)


def two_sample_test(a, b, M=None, B: int = 999, seed: int = 42) -> TestReport:
    """Recentered-bootstrap test of equal sorted distributions.

    Statistic ``||s_a - s_b||_2`` over plug-in signatures. Each side is
    resampled from its own empirical distribution and the replicate
    statistic is ``||(s*_a - s_a) - (s*_b - s_b)||_2``; the two sides use
    disjoint streams ``[seed, 0, b]`` and ``[seed, 1, b]``.
    """
    a, b = _as_counts(a), _as_counts(b)
    M = _inference_orders(M)
    B = _check_B(B)
    sa, sb = plugin_signature(a, M).values, plugin_signature(b, M).values
    stat = float(np.linalg.norm(sa - sb))
    pa = a.sorted_positive() / a.N
    pb = b.sorted_positive() / b.N
    da = _signatures(_draws(a.N, pa, B, (seed, 0)), M) - sa
    db = _signatures(_draws(b.N, pb, B, (seed, 1)), M) - sb
    null = np.linalg.norm(da - db, axis=1)
    return TestReport(stat, _p_value(null, stat), B, int(seed), M, RECENTERED)


def parse_counts_csv(text: str) -> CountVector:
    """One integer per line, or ``label,count`` rows (repeated labels are summed).

    A first row whose count field is not an integer is taken as a header.
    """
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(f.strip() for f in r)]
    if not rows:
        raise ValidationError("counts: empty CSV")

    def as_int(field):
        try:
            return int(field.strip())
        except ValueError:
            return None

    if as_int(rows[0][-1]) is None:
        rows = rows[1:]
    grouped: dict = {}
    for i, r in enumerate(rows):
        if len(r) == 1:
            label, field = i, r[0]
        elif len(r) == 2:
            label, field = r[0].strip(), r[1]
        else:
            raise ValidationError(f"counts: row {i + 1} has {len(r)} fields, expected 1 or 2")
        v = as_int(field)
        if v is None:
            raise ValidationError(f"counts: row {i + 1}: {field.strip()!r} is not an integer")
        grouped[label] = grouped.get(label, 0) + v
    return CountVector(tuple(grouped.values()))


def parse_counts_json(obj) -> CountVector:
    if isinstance(obj, dict):
        if "counts" not in obj:
            raise ValidationError("counts: missing field")
        obj = obj["counts"]
    if not isinstance(obj, list) or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in obj):
        raise ValidationError("counts: expected a list of integers")
    return CountVector(tuple(obj))


def read_counts(path) -> CountVector:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from exc
    if path.suffix.lower() == ".json" or text.lstrip().startswith(("{", "[")):
        try:
            return parse_counts_json(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc.msg})") from exc
    return parse_counts_csv(text)
