"""Chart Jacobian of the signature map and its determinant structure.

The chart is ``x = (p_2, ..., p_K)`` with ``p_1 = 1 - sum(x)``. Column k of
the Jacobian is ``dH/dp_k - dH/dp_1``, which factors as a positive row
prefactor times ``phi(m, u_k, alpha(m))`` with ``u_k = ln(p_k / p_1)``.

Minor checks use the *ascending-u* column orientation by default: columns
are taken from category K down to 2, so the log-ratios ``u_k`` increase
left to right. With that orientation the exponential kernel
``exp((m - 1) u)`` is totally positive and the full Jacobian determinant
is positive; in category order the sign picks up ``(-1)^(k(k-1)/2)``.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from ._backend import det_stack, principal_minors as _principal_minors_kernel
from .core import (
    OrderSet,
    SortedDistribution,
    ValidationError,
    _log_escort,
    _orders,
)

TOL_REL = 1e-10
MAX_PRINCIPAL_DIM = 14
MAX_ALL_MINORS_DIM = 8
MIN_SAMPLE_GAP = 1e-6
MAX_REJECTIONS = 10_000


class SamplingError(RuntimeError):
    pass


def signature_and_jacobian(probs: np.ndarray, orders) -> tuple[np.ndarray, np.ndarray]:
    """Signature values and chart Jacobian at a raw positive vector.

    No validation; ``probs[0]`` is the chart's eliminated coordinate. Used by
    the solvers, which evaluate at iterates that are not yet validated.
    """
    lp = np.log(probs)
    u = lp[1:] - lp[0]
    H = np.empty(len(orders))
    J = np.empty((len(orders), lp.size - 1))
    for j, m in enumerate(orders):
        d, log_s, w, L = _log_escort(lp, m)
        H[j] = log_s - w @ d
        y = L + log_s
        alpha = w @ lp - lp[0]
        pref = m * m * math.exp((m - 1.0) * lp[0] - y)
        # expm1 form keeps phi accurate as u -> 0
        J[j] = pref * (alpha * np.expm1((m - 1.0) * u) - u * np.exp((m - 1.0) * u))
    return H, J


@dataclass(frozen=True)
class JacobianMatrix:
    entries: np.ndarray
    row_orders: OrderSet
    at_point: SortedDistribution

    @property
    def col_categories(self) -> tuple:
        return tuple(range(2, self.at_point.K + 1))

    @property
    def shape(self):
        return self.entries.shape

    def oriented(self, orientation: str = "ascending_u") -> np.ndarray:
        if orientation == "ascending_u":
            return self.entries[:, ::-1]
        if orientation == "category":
            return self.entries
        raise ValueError(f"unknown orientation {orientation!r}")

    def to_json(self) -> dict:
        return {
            "entries": self.entries.tolist(),
            "row_orders": self.row_orders.tolist(),
            "col_categories": list(self.col_categories),
            "at_point": [float(x) for x in self.at_point.probs],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "JacobianMatrix":
        try:
            return cls(np.asarray(obj["entries"], dtype=float), OrderSet(obj["row_orders"]), SortedDistribution(obj["at_point"]))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"jacobian: missing or malformed field {exc}") from exc


def _as_strict_sorted(p) -> SortedDistribution:
    if not isinstance(p, SortedDistribution):
        p = SortedDistribution(p)
    if p.has_ties:
        raise ValidationError(
            f"point carries multiplicity {p.multiplicity}; chart Jacobian needs distinct values"
        )
    return p


def jacobian(p, M) -> JacobianMatrix:
    p = _as_strict_sorted(p)
    M = _orders(M)
    _, J = signature_and_jacobian(p.probs, M.orders)
    if not np.all(np.isfinite(J)):
        raise FloatingPointError("non-finite Jacobian entry")
    J.setflags(write=False)
    return JacobianMatrix(J, M, p)


def det(A) -> float:
    """Determinant with row maxima factored out before elimination."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError("det: need a square matrix")
    scale = np.abs(A).max(axis=1)
    scale[scale == 0] = 1.0
    return float(det_stack(np.ascontiguousarray(A / scale[:, None])[None])[0] * np.prod(scale))


def _strictly_increasing(v, name):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ValidationError(f"{name}: need a nonempty sequence")
    if np.any(np.diff(v) <= 0):
        raise ValidationError(f"{name}: must be strictly increasing")
    return v


def exp_kernel_det(xs, us) -> float:
    """``det[exp(x_i u_j)]``; positive whenever both sequences increase."""
    xs = _strictly_increasing(xs, "xs")
    us = _strictly_increasing(us, "us")
    if xs.size != us.size:
        raise ValidationError("xs and us differ in length")
    E = np.outer(xs, us)
    shift = E.max(axis=1)
    B = np.exp(E - shift[:, None])
    return float(det_stack(np.ascontiguousarray(B)[None])[0] * math.exp(shift.sum()))


def laplace_det(ms, ts) -> float:
    """``det[exp(-m_i t_j)]`` as written, i.e. without reorienting ``t``."""
    ms = np.asarray(ms, dtype=float)
    ts = np.asarray(ts, dtype=float)
    return det(np.exp(-np.outer(ms, ts)))


@dataclass(frozen=True)
class EctResult:
    value: float
    positive: bool
    threshold: float


def ect_eval_det(p, M_sub, cols, orientation: str = "ascending_u", tol_rel: float = TOL_REL) -> EctResult:
    """Evaluation determinant ``det[phi(m_a, u_{c_b})]``.

    ``cols`` are category labels in ``2..K``, strictly increasing.
    """
    p = _as_strict_sorted(p)
    M_sub = _orders(M_sub)
    cols = list(cols)
    k = len(cols)
    if k != len(M_sub):
        raise ValidationError("need as many columns as orders")
    if any(b <= a for a, b in zip(cols, cols[1:])):
        raise ValidationError("cols: duplicate or unsorted categories")
    if cols[0] < 2 or cols[-1] > p.K:
        raise ValidationError(f"cols: categories must lie in 2..{p.K}")
    lp = np.log(p.probs)
    u = lp[np.array(cols) - 1] - lp[0]
    if orientation == "ascending_u":
        u = u[::-1]
    elif orientation != "category":
        raise ValueError(f"unknown orientation {orientation!r}")
    F = np.empty((k, k))
    for a, m in enumerate(M_sub):
        _, _, w, _ = _log_escort(lp, m)
        alpha = w @ lp - lp[0]
        F[a] = alpha * np.expm1((m - 1.0) * u) - u * np.exp((m - 1.0) * u)
    value = det(F)
    thr = tol_rel * float(np.abs(F).max()) ** k
    return EctResult(value, value > thr, thr)


@dataclass
class MinorReport:
    """Minimum over a family of minors, scaled by ``(max|entry|)^k``.

    ``min_minor`` is the smallest scaled minor; a minor counts as positive
    when its scaled value exceeds ``tolerance``, negative when it is below
    ``-tolerance`` and indeterminate otherwise. Row and column indices refer
    to the matrix as checked (see ``orientation``).
    """

    dimension: int
    kind: str
    checked: int
    min_minor: float
    min_minor_raw: float
    argmin_rows: list
    argmin_cols: list
    negative: int
    indeterminate: int
    tolerance: float
    orientation: str = "ascending_u"
    samples: int = 1
    seed: int | None = None
    argmin_point: list | None = None
    argmin_orders: list | None = None

    @property
    def all_positive(self) -> bool:
        return self.min_minor > self.tolerance

    def to_json(self) -> dict:
        d = asdict(self)
        d["all_positive"] = self.all_positive
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "MinorReport":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in obj.items() if k in names})


def _matrix(J, orientation):
    if isinstance(J, JacobianMatrix):
        return np.ascontiguousarray(J.oriented(orientation)), orientation
    A = np.asarray(J, dtype=float)
    if A.ndim != 2:
        raise ValidationError("need a 2-d matrix")
    return np.ascontiguousarray(A), "as-given"


def _report(kind, n, values, rows, cols, scale_pow, tol, orientation) -> MinorReport:
    scaled = values / scale_pow
    i = int(np.argmin(scaled))
    return MinorReport(
        dimension=n,
        kind=kind,
        checked=int(values.size),
        min_minor=float(scaled[i]),
        min_minor_raw=float(values[i]),
        argmin_rows=[int(r) for r in rows[i]],
        argmin_cols=[int(c) for c in cols[i]],
        negative=int(np.sum(scaled < -tol)),
        indeterminate=int(np.sum(np.abs(scaled) <= tol)),
        tolerance=tol,
        orientation=orientation,
    )


def principal_minors(J, orientation: str = "ascending_u", tol_rel: float = TOL_REL) -> MinorReport:
    """All ``2^n - 1`` principal minors of a square matrix."""
    A, orientation = _matrix(J, orientation)
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValidationError(f"principal minors need a square matrix, got {A.shape}")
    if n > MAX_PRINCIPAL_DIM:
        raise ValidationError(f"dimension {n} exceeds the enumeration guard {MAX_PRINCIPAL_DIM}")
    rs = np.abs(A).max(axis=1)
    rs[rs == 0] = 1.0
    minors = _principal_minors_kernel(np.ascontiguousarray(A / rs[:, None]))[1:]
    masks = np.arange(1, 1 << n)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    minors = minors * np.array([np.prod(rs[b]) for b in bits])
    sizes = bits.sum(axis=1)
    scale = max(float(np.abs(A).max()), np.finfo(float).tiny)
    idx = [list(np.flatnonzero(b)) for b in bits]
    return _report("principal", n, minors, idx, idx, scale ** sizes, tol_rel, orientation)


def all_square_minors(J, orientation: str = "ascending_u", tol_rel: float = TOL_REL) -> MinorReport:
    """Every square minor (any row set, any column set) of an r x n matrix."""
    A, orientation = _matrix(J, orientation)
    r, n = A.shape
    if min(r, n) > MAX_ALL_MINORS_DIM:
        raise ValidationError(f"dimension exceeds the all-minors guard {MAX_ALL_MINORS_DIM}")
    scale = max(float(np.abs(A).max()), np.finfo(float).tiny)
    vals, rows, cols, pows = [], [], [], []
    for k in range(1, min(r, n) + 1):
        R = list(itertools.combinations(range(r), k))
        C = list(itertools.combinations(range(n), k))
        RR = np.array([a for a in R for _ in C])
        CC = np.array([b for _ in R for b in C])
        sub = np.ascontiguousarray(A[RR[:, :, None], CC[:, None, :]] / scale)
        vals.append(det_stack(sub) * scale**k)
        rows.extend(RR.tolist())
        cols.extend(CC.tolist())
        pows.append(np.full(len(RR), scale**k))
    return _report("all", n, np.concatenate(vals), rows, cols, np.concatenate(pows), tol_rel, orientation)


@dataclass
class FiedlerPtakResult:
    ok: bool
    trials: int
    witness: list | None = None

    def __bool__(self):
        return self.ok


def fiedler_ptak_check(J, trials: int = 1000, seed: int = 0, orientation: str = "ascending_u") -> FiedlerPtakResult:
    """Sample the necessary condition ``max_i w_i (J w)_i > 0``.

    Signed basis vectors are tried first, then ``trials`` Gaussian vectors.
    A violation disproves the P-property; passing proves nothing.
    """
    A, _ = _matrix(J, orientation)
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValidationError(f"Fiedler-Ptak check needs a square matrix, got {A.shape}")
    rng = np.random.default_rng(seed)
    eye = np.eye(n)
    W = np.vstack([eye, -eye, rng.standard_normal((trials, n))])
    vals = (W * (W @ A.T)).max(axis=1)
    bad = np.flatnonzero(vals <= 0)
    if bad.size:
        return FiedlerPtakResult(False, int(bad[0]) + 1, W[bad[0]].tolist())
    return FiedlerPtakResult(True, len(W))


def sample_sorted_point(rng: np.random.Generator, K: int, min_gap: float = MIN_SAMPLE_GAP) -> np.ndarray:
    """Sorted symmetric Dirichlet(1) draw with every gap at least ``min_gap``."""
    for _ in range(MAX_REJECTIONS):
        p = np.sort(rng.dirichlet(np.ones(K)))[::-1]
        if K == 1 or np.min(-np.diff(p)) >= min_gap and p[-1] >= min_gap:
            return p / p.sum()
    raise SamplingError(f"no admissible point after {MAX_REJECTIONS} draws")


def random_orders(rng: np.random.Generator, r: int, lo: float = 0.3, hi: float = 5.0) -> np.ndarray:
    while True:
        m = np.sort(rng.uniform(lo, hi, r))
        if r == 1 or np.min(np.diff(m)) > 1e-3:
            return m


def _sweep_point(args):
    K, orders, seed, i, tol_rel, all_minors = args
    rng = np.random.default_rng([seed, i])
    p = sample_sorted_point(rng, K)
    M = orders if orders is not None else random_orders(rng, K - 1)
    J = jacobian(SortedDistribution(p), M)
    pr = principal_minors(J, tol_rel=tol_rel)
    ar = all_square_minors(J, tol_rel=tol_rel) if all_minors else None
    return p, np.asarray(M), pr, ar


@dataclass
class SweepReport:
    principal: MinorReport
    all_minors: MinorReport | None
    points_with_negative: int
    points_with_indeterminate: int

    @property
    def all_positive(self) -> bool:
        return self.principal.negative == 0 and self.principal.indeterminate == 0

    def to_json(self) -> dict:
        return {
            "principal": self.principal.to_json(),
            "all_minors": None if self.all_minors is None else self.all_minors.to_json(),
            "points_with_negative": self.points_with_negative,
            "points_with_indeterminate": self.points_with_indeterminate,
            "all_positive": self.all_positive,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, obj: dict) -> "SweepReport":
        allm = obj.get("all_minors")
        return cls(
            principal=MinorReport.from_json(obj["principal"]),
            all_minors=None if allm is None else MinorReport.from_json(allm),
            points_with_negative=int(obj["points_with_negative"]),
            points_with_indeterminate=int(obj["points_with_indeterminate"]),
        )


def _aggregate(items, samples, seed):
    best = None
    neg = ind = checked = 0
    for p, M, rep in items:
        neg += rep.negative
        ind += rep.indeterminate
        checked += rep.checked
        if best is None or rep.min_minor < best[2].min_minor:
            best = (p, M, rep)
    p, M, rep = best
    return MinorReport(
        dimension=rep.dimension,
        kind=rep.kind,
        checked=checked,
        min_minor=rep.min_minor,
        min_minor_raw=rep.min_minor_raw,
        argmin_rows=rep.argmin_rows,
        argmin_cols=rep.argmin_cols,
        negative=neg,
        indeterminate=ind,
        tolerance=rep.tolerance,
        orientation=rep.orientation,
        samples=samples,
        seed=seed,
        argmin_point=[float(x) for x in p],
        argmin_orders=[float(x) for x in M],
    )


def sweep_pmatrix(
    K: int,
    M=None,
    samples: int = 1000,
    seed: int = 42,
    tol_rel: float = TOL_REL,
    all_minors: bool = True,
    workers: int = 1,
) -> SweepReport:
    """Check the principal minors of the Jacobian at random sorted points.

    Point ``i`` draws from the stream ``(seed, i)``, so the report does not
    depend on ``workers``. With ``M=None`` each point also draws its own
    ``K - 1`` orders from ``[0.3, 5]``.
    """
    if K < 2:
        raise ValidationError("K must be at least 2")
    orders = None
    if M is not None:
        orders = _orders(M).orders
        if orders.size != K - 1:
            raise ValidationError(f"need |M| = K - 1 = {K - 1} orders, got {orders.size}")
    if K - 1 > MAX_PRINCIPAL_DIM:
        raise ValidationError(f"K - 1 = {K - 1} exceeds the enumeration guard {MAX_PRINCIPAL_DIM}")
    all_minors = all_minors and K - 1 <= MAX_ALL_MINORS_DIM
    tasks = [(K, orders, seed, i, tol_rel, all_minors) for i in range(samples)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_sweep_point, tasks, chunksize=max(1, samples // (4 * workers))))
    else:
        results = [_sweep_point(t) for t in tasks]
    principal = _aggregate([(p, M_, pr) for p, M_, pr, _ in results], samples, seed)
    allm = _aggregate([(p, M_, ar) for p, M_, _, ar in results], samples, seed) if all_minors else None
    return SweepReport(
        principal=principal,
        all_minors=allm,
        points_with_negative=sum(pr.negative > 0 for _, _, pr, _ in results),
        points_with_indeterminate=sum(pr.indeterminate > 0 for _, _, pr, _ in results),
    )


__all__ = [
    "JacobianMatrix",
    "MinorReport",
    "SweepReport",
    "EctResult",
    "jacobian",
    "signature_and_jacobian",
    "det",
    "exp_kernel_det",
    "laplace_det",
    "ect_eval_det",
    "principal_minors",
    "all_square_minors",
    "fiedler_ptak_check",
    "sweep_pmatrix",
    "sample_sorted_point",
]
