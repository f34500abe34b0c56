"""Recover a distribution, up to permutation, from its GSE signature."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    TIE_TOL,
    GseSignature,
    OrderSet,
    SortedDistribution,
    ValidationError,
    _check_order,
    _orders,
    gse,
)
from ._backend import batch_gse
from .tp import signature_and_jacobian

BOUNDARY_GAP = 1e-14
FTOL = 1e-11
STEP_TOL = 1e-14
MAX_ITER = 200
ARMIJO_C = 1e-4


class UnderdeterminedError(ValidationError):
    """Fewer orders than identifiable dimensions; use a collision witness instead."""


class NoConvergenceError(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class MultiplicityStructure:
    counts: tuple
    values: tuple

    def __post_init__(self):
        n = tuple(int(c) for c in self.counts)
        a = tuple(float(v) for v in self.values)
        if not n or len(n) != len(a):
            raise ValidationError("multiplicity: counts and values must be nonempty and match")
        if any(c < 1 for c in n):
            raise ValidationError("multiplicity: counts must be positive")
        if any(v <= 0 for v in a) or any(x <= y for x, y in zip(a, a[1:])):
            raise ValidationError("multiplicity: values must be positive and strictly decreasing")
        if abs(sum(c * v for c, v in zip(n, a)) - 1.0) > 1e-12:
            raise ValidationError("multiplicity: sum n_j a_j must be 1")
        object.__setattr__(self, "counts", n)
        object.__setattr__(self, "values", a)

    @property
    def s(self) -> int:
        return len(self.counts)

    @property
    def K(self) -> int:
        return sum(self.counts)

    def expand(self) -> np.ndarray:
        return np.repeat(self.values, self.counts)

    def to_json(self) -> dict:
        return {"counts": list(self.counts), "values": [float(v) for v in self.values]}

    @classmethod
    def from_json(cls, obj: dict) -> "MultiplicityStructure":
        try:
            return cls(tuple(obj["counts"]), tuple(obj["values"]))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"multiplicity structure: missing or malformed field {exc}") from exc


@dataclass
class RecoveryResult:
    distribution: SortedDistribution
    residual_norm: float
    iterations: int
    restarts_used: int
    converged: bool
    multiplicity_flag: bool = False
    min_singular_value: float = float("nan")
    trace: list = field(default_factory=list)

    def to_json(self, trace: bool = False) -> dict:
        d = {
            "distribution": [float(x) for x in self.distribution.probs],
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "restarts_used": self.restarts_used,
            "converged": self.converged,
            "multiplicity_flag": self.multiplicity_flag,
            "multiplicity": list(self.distribution.multiplicity),
            "min_singular_value": None if math.isnan(self.min_singular_value) else self.min_singular_value,
        }
        if trace:
            d["trace"] = list(self.trace)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "RecoveryResult":
        try:
            sv = obj.get("min_singular_value")
            return cls(
                distribution=SortedDistribution(obj["distribution"]),
                residual_norm=float(obj["residual_norm"]),
                iterations=int(obj["iterations"]),
                restarts_used=int(obj["restarts_used"]),
                converged=bool(obj["converged"]),
                multiplicity_flag=bool(obj.get("multiplicity_flag", False)),
                min_singular_value=float("nan") if sv is None else float(sv),
                trace=list(obj.get("trace", [])),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"recovery result: missing or malformed field {exc}") from exc


def detect_multiplicity(p, tol: float = 1e-9) -> tuple[tuple, tuple]:
    """Group consecutive entries whose gaps are at most ``tol``.

    Returns ``(counts, values)`` with group means rescaled so that
    ``sum(counts * values) == 1``.
    """
    if tol < 0:
        raise ValidationError("tol must be nonnegative")
    probs = p.probs if isinstance(p, SortedDistribution) else np.asarray(p, dtype=float)
    groups = [[probs[0]]]
    for prev, cur in zip(probs, probs[1:]):
        if prev - cur <= tol:
            groups[-1].append(cur)
        else:
            groups.append([cur])
    counts = tuple(len(g) for g in groups)
    means = np.array([np.mean(g) for g in groups])
    means /= np.dot(counts, means)
    return counts, tuple(float(v) for v in means)


class _Chart:
    """Affine chart ``a = A x + a0`` on grouped values with sorting constraints.

    ``a`` holds the distinct values ``a_1 > ... > a_s``; the full vector
    repeats ``a_j`` ``n_j`` times. Constraint rows ``C a >= gap`` encode the
    ordering and positivity of ``a``.
    """

    def __init__(self, counts, fold: bool = False):
        self.n = np.asarray(counts, dtype=float)
        s = self.n.size
        self.A = np.zeros((s, s - 1))
        self.A[0] = -self.n[1:] / self.n[0]
        self.A[1:] = np.eye(s - 1)
        self.a0 = np.zeros(s)
        self.a0[0] = 1.0 / self.n[0]
        C = np.zeros((s, s))
        for i in range(s - 1):
            C[i, i], C[i, i + 1] = 1.0, -1.0
        C[s - 1, s - 1] = 1.0
        if fold:
            # the signature is symmetric, so with unit counts an iterate may cross
            # a tie wall and be re-sorted; only positivity constrains the step
            C = np.eye(s)
        self.fold = fold
        self.C = C
        self.CA = C @ self.A
        self.counts = tuple(int(c) for c in counts)

    def values(self, x):
        return self.A @ x + self.a0

    def to_x(self, a):
        return np.asarray(a, dtype=float)[1:]

    def canonical(self, x):
        if not self.fold:
            return x
        return self.to_x(np.sort(self.values(x))[::-1])

    def slack(self, x):
        return self.C @ self.values(x)

    def max_step(self, x, dx, gap):
        """Largest t with every constraint slack staying >= gap along x + t dx."""
        sl = self.slack(x)
        rate = self.CA @ dx
        neg = rate < 0
        if not np.any(neg):
            return np.inf
        return float(np.min((sl[neg] - gap) / -rate[neg]))

    def residual_jacobian(self, x, orders, target):
        a = self.values(x)
        full = np.repeat(a, self.counts)
        H, Jfull = signature_and_jacobian(full, orders)
        # derivative wrt a_j collects the n_j copies of that value
        starts = np.cumsum((0,) + self.counts[:-1])
        J = Jfull[:, starts[1:] - 1] * self.n[1:]
        return H - target, J


SPLIT_GAP = 1e-3
DIVERSITY = 0.02
REFINE_ROUNDS = 8
REFINE_ELITE = 32
REFINE_KIDS = 64
REFINE_SIGMA = 0.1
CONT_ITER = 25
CONT_MIN_STEP = 1e-4
SPLIT_STEPS = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2)


def _split_ties(chart, x, f, orders, target):
    """Try pulling near-equal neighbours apart.

    On a tie wall the two Jacobian columns coincide and the signature is even
    in the splitting direction, so Gauss-Newton cannot leave the wall by
    itself even when moving off it lowers the merit.
    """
    a = chart.values(x)
    best = None
    for i in np.flatnonzero(a[:-1] - a[1:] < SPLIT_GAP * a[0]):
        for d in SPLIT_STEPS:
            b = a.copy()
            b[i] += d * a[i + 1]
            b[i + 1] -= d * a[i + 1]
            xs = chart.canonical(chart.to_x(b))
            F, J = chart.residual_jacobian(xs, orders, target)
            fs = 0.5 * F @ F
            if fs < f * (1 - 1e-3) and (best is None or fs < best[3]):
                best = (xs, F, J, fs)
    return best


def _gauss_newton(chart, x0, orders, target, trace, max_iter=MAX_ITER):
    x = x0.copy()
    F, J = chart.residual_jacobian(x, orders, target)
    f = 0.5 * F @ F
    merits = [f]
    it = 0
    polish = 0
    for it in range(1, max_iter + 1):
        if np.max(np.abs(F)) <= FTOL:
            # a few extra full steps take the residual to rounding level
            polish += 1
            if polish > 3 or f == 0.0:
                break
        step, *_ = np.linalg.lstsq(J, -F, rcond=None)
        slope = F @ (J @ step)
        if not np.isfinite(slope) or slope >= 0:
            break
        t = min(1.0, 0.99 * chart.max_step(x, step, BOUNDARY_GAP))
        accepted = False
        while t * np.linalg.norm(step) > 1e-18:
            xn = x + t * step
            Fn, Jn = chart.residual_jacobian(xn, orders, target)
            fn = 0.5 * Fn @ Fn
            if np.isfinite(fn) and fn <= f + ARMIJO_C * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        moved = t * np.linalg.norm(step)
        xs = chart.canonical(xn)
        if xs is not xn:
            Fn, Jn = chart.residual_jacobian(xs, orders, target)
        fn = 0.5 * Fn @ Fn
        if chart.fold and fn > 0.9 * f:
            split = _split_ties(chart, xs, fn, orders, target)
            if split is not None:
                xs, Fn, Jn, fn = split
        x, F, J, f = xs, Fn, Jn, fn
        merits.append(f)
        if moved <= STEP_TOL:
            break
    return x, F, J, it, merits if trace else []


def _continuation(chart, x0, orders, target, trace):
    """Track ``H(x) = h0 + t (target - h0)`` from the start's own signature.

    Used when plain Gauss-Newton from the same start stalls: small target
    increments keep every corrector inside the basin of the moving root.
    """
    x = x0.copy()
    h0 = chart.residual_jacobian(x, orders, np.zeros(len(orders)))[0]
    t, dt = 0.0, 0.125
    iters = 0
    while t < 1.0:
        tn = min(1.0, t + dt)
        xn, F, _, it, _ = _gauss_newton(chart, x, orders, h0 + tn * (target - h0), False, CONT_ITER)
        iters += it
        if np.max(np.abs(F)) <= FTOL:
            x, t = xn, tn
            dt = min(2 * dt, 0.5)
        else:
            dt /= 2
            if dt < CONT_MIN_STEP:
                break
    x, F, J, it, merits = _gauss_newton(chart, x, orders, target, trace)
    return x, F, J, iters + it, merits


def _divided_differences(H, orders):
    """Top edge of the divided-difference table of each row of ``H`` over ``orders``.

    Nearly equal orders give nearly equal signature entries; their divided
    difference keeps the slope information that a plain distance drowns.
    """
    m = np.asarray(orders, dtype=float)
    T = np.array(H, dtype=float, copy=True)
    out = [T[:, 0].copy()]
    for k in range(1, m.size):
        T = (T[:, 1:] - T[:, :-1]) / (m[k:] - m[:-k])
        out.append(T[:, 0].copy())
    return np.stack(out, axis=1)


def _start_pool(chart, orders, target, seed, size):
    """Sorted Dirichlet draws, refined towards ``target`` and ranked by distance.

    Distance is measured on divided differences of the signature. A few
    rounds of elite selection with shrinking multiplicative noise then pull
    the best candidates close to the preimage; the signature map is
    injective on sorted points, so the only zero of that distance is the
    answer. Gauss-Newton from a near start avoids the tie-wall minima that
    trap it from far away.
    """
    rng = np.random.default_rng([seed, 0])
    orders = np.asarray(orders, dtype=float)
    ref = _divided_differences(np.atleast_2d(target), orders)

    def distance(a):
        H = batch_gse(np.ascontiguousarray(np.repeat(a, chart.counts, axis=1)), orders)
        return np.max(np.abs(_divided_differences(H, orders) - ref), axis=1)

    def normalise(a):
        a = np.maximum(-np.sort(-a, axis=1), 1e-300)
        return a / (a @ chart.n)[:, None]

    s = chart.n.size
    conc = np.repeat([1.0, 0.5, 0.25, 2.0], -(-size // 4))[:size]
    a = normalise(rng.gamma(conc[:, None], size=(size, s)))
    d = distance(a)
    order = np.argsort(d, kind="stable")
    a, d = a[order], d[order]
    best, bd = a[:REFINE_ELITE], d[:REFINE_ELITE]
    sigma = REFINE_SIGMA
    for _ in range(REFINE_ROUNDS):
        kids = np.repeat(best, REFINE_KIDS, axis=0)
        kids = normalise(kids * np.exp(sigma * rng.standard_normal(kids.shape)))
        cand = np.concatenate([best, kids])
        cd = np.concatenate([bd, distance(kids)])
        order = np.argsort(cd, kind="stable")[:REFINE_ELITE]
        best, bd = cand[order], cd[order]
        sigma *= 0.6
    return np.concatenate([best, a])


def _solve(counts, M: OrderSet, target: np.ndarray, tol, max_restarts, seed, trace, tie_tol, pool_size=4096):
    chart = _Chart(counts, fold=all(c == 1 for c in counts))
    pool = _start_pool(chart, M.orders, target, seed, pool_size)
    visited = []
    cursor = 0
    best = None
    for start in range(max_restarts + 1):
        # skip candidates near earlier starts or the points they stalled at:
        # those lead back into the same basin
        while cursor < len(pool) - 1 and any(np.max(np.abs(pool[cursor] - v)) < DIVERSITY for v in visited):
            cursor += 1
        a0 = pool[cursor]
        cursor += 1
        x, F, J, iters, merits = _gauss_newton(chart, chart.to_x(a0), M.orders, target, trace)
        if np.max(np.abs(F)) > FTOL:
            alt = _continuation(chart, chart.to_x(a0), M.orders, target, trace)
            if np.max(np.abs(alt[1])) < np.max(np.abs(F)):
                x, F, J, iters, merits = alt
        visited += [a0, chart.values(x)]
        res = float(np.max(np.abs(F)))
        key = (res > tol, res, start)
        if best is None or key < best[0]:
            best = (key, x, J, iters, start, merits)
        # a residual between FTOL and tol may be a near-root on a tie wall
        # reached through an ill-conditioned Jacobian; keep looking
        if res <= FTOL:
            break
    (failed, res, _), x, J, iters, start, merits = best
    a = chart.values(x)
    full = np.repeat(a, counts)
    full = full / full.sum()
    dist = SortedDistribution(np.sort(full)[::-1], tie_tol=tie_tol)
    sv = np.linalg.svd(J, compute_uv=False) if J.size else np.array([np.nan])
    return RecoveryResult(
        distribution=dist,
        residual_norm=res,
        iterations=iters,
        restarts_used=start,
        converged=not failed,
        multiplicity_flag=dist.has_ties,
        min_singular_value=float(sv.min()),
        trace=[float(v) for v in merits],
    ), a


def _target_values(M, target):
    if isinstance(target, GseSignature):
        if not np.array_equal(target.orders.orders, M.orders):
            raise ValidationError("target orders do not match M")
        return np.asarray(target.values, dtype=float)
    v = np.asarray(target, dtype=float)
    if v.shape != (len(M),):
        raise ValidationError("target length does not match M")
    return v


def recover(
    K: int,
    M=None,
    target=None,
    tol: float = 1e-9,
    max_restarts: int = 20,
    seed: int = 42,
    trace: bool = False,
    tie_tol: float = TIE_TOL,
) -> RecoveryResult:
    """Invert the signature map on the sorted simplex by damped Gauss-Newton.

    Needs ``|M| >= K - 1``. With more orders than that the residual is solved
    in the least-squares sense over all rows. Raises ``NoConvergenceError``
    (carrying the best attempt) when no start reaches ``tol``.
    """
    if K < 2:
        raise ValidationError("K must be at least 2")
    M = OrderSet.default_for(K) if M is None else _orders(M)
    if len(M) < K - 1:
        raise UnderdeterminedError(
            f"{len(M)} orders cannot identify a K={K} distribution (need {K - 1}); "
            "signatures are not injective here, see find_collision / the witness command"
        )
    h = _target_values(M, target)
    lnK = math.log(K)
    if np.any(h < -tol) or np.any(h > lnK + tol):
        raise ValidationError(f"values: outside [0, ln {K}]")
    if np.max(np.abs(h - lnK)) <= tol:
        dist = SortedDistribution(np.full(K, 1.0 / K), tie_tol=tie_tol)
        return RecoveryResult(dist, float(np.max(np.abs(h - lnK))), 0, 0, True, True)
    result, _ = _solve((1,) * K, M, h, tol, max_restarts, seed, trace, tie_tol)
    if not result.converged:
        raise NoConvergenceError(
            f"no preimage found within {tol:g} after {max_restarts} restarts "
            f"(best residual {result.residual_norm:.3g})",
            result,
        )
    return result


def recover_binary(m: float, h: float) -> SortedDistribution:
    """Bisection on the smaller mass ``q`` of ``(1 - q, q)``.

    ``q -> gse((1 - q, q), m)`` increases strictly on ``(0, 1/2)``, so the
    bracket always holds the unique preimage.
    """
    m = _check_order(m)
    ln2 = math.log(2.0)
    if h < 0 or h > ln2 + 1e-15:
        raise ValidationError(f"h must lie in [0, ln 2], got {h!r}")
    if h >= ln2:
        return SortedDistribution([0.5, 0.5])
    lo, hi = 0.0, 0.5
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if gse([1.0 - mid, mid], m) < h:
            lo = mid
        else:
            hi = mid
    q = hi if hi < 0.5 else lo
    return SortedDistribution([1.0 - q, q])


def recover_multiplicity(
    counts,
    M,
    target,
    tol: float = 1e-9,
    max_restarts: int = 20,
    seed: int = 42,
    trace: bool = False,
) -> MultiplicityStructure:
    """Recover the distinct values ``a_1 > ... > a_s`` of a known stratum."""
    counts = tuple(int(c) for c in counts)
    if not counts or any(c < 1 for c in counts):
        raise ValidationError("multiplicity: counts must be positive integers")
    s, K = len(counts), sum(counts)
    M = _orders(M)
    h = _target_values(M, target)
    if s == 1:
        if np.max(np.abs(h - math.log(K))) > tol:
            raise NoConvergenceError("a single group forces the uniform signature (ln K, ...)")
        return MultiplicityStructure(counts, (1.0 / K,))
    if len(M) < s - 1:
        raise UnderdeterminedError(f"{len(M)} orders cannot identify {s} distinct values (need {s - 1})")
    result, a = _solve(counts, M, h, tol, max_restarts, seed, trace, 0.0)
    if not result.converged:
        raise NoConvergenceError(
            f"no stratum point found within {tol:g} (best residual {result.residual_norm:.3g})", result
        )
    a = a / np.dot(counts, a)
    return MultiplicityStructure(counts, tuple(a))
