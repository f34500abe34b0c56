"""Collision witnesses: distinct sorted distributions sharing a GSE signature.

With fewer than ``K - 1`` orders the signature map has a positive-dimensional
fiber through a full-rank point. We start on a skew ray
``(1 - sum eps_k, eps_2, ..., eps_K)`` with a geometric ladder
``eps_k = eps * rho**(k - 2)`` and follow the fiber by predictor-corrector
continuation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import OrderSet, SortedDistribution, ValidationError, _orders, _sorted_probs, gse_signature
from .tp import sample_sorted_point, signature_and_jacobian

SKEW_EPS = 0.05
SKEW_RHO = 0.4
# the reachable separation along the fiber grows roughly linearly with eps,
# so the ladder climbs away from the vertex rather than towards it
EPS_LADDER = (0.05, 0.1, 0.2, 0.3, 0.4)
RHO_LADDER = (0.4, 0.6)
RANDOM_STARTS = 8
PREDICTOR_STEP = 1e-2
MIN_STEP = 1e-7
CORRECTOR_TOL = 1e-12
CORRECTOR_ITER = 30
GAP_TOL = 1e-10
RANK_RTOL = 1e-12
MAX_STEPS = 1_000
RANDOM_DIRECTIONS = 4


class WitnessError(RuntimeError):
    """Continuation could not produce the requested witness."""


class RankDeficientError(ValidationError):
    def __init__(self, message, singular_values):
        super().__init__(f"{message}; singular values {list(map(float, singular_values))}")
        self.singular_values = np.asarray(singular_values)


@dataclass(frozen=True)
class CollisionPair:
    p: SortedDistribution
    q: SortedDistribution
    orders: OrderSet
    signature_gap: float
    separation: float
    epsilon: float | None = None
    rho: float | None = None
    steps: int = 0

    def to_json(self) -> dict:
        return {
            "p": [float(v) for v in self.p.probs],
            "q": [float(v) for v in self.q.probs],
            "orders": self.orders.tolist(),
            "signature_p": [float(v) for v in gse_signature(self.p, self.orders).values],
            "signature_q": [float(v) for v in gse_signature(self.q, self.orders).values],
            "signature_gap": float(self.signature_gap),
            "separation": float(self.separation),
            "epsilon": None if self.epsilon is None else float(self.epsilon),
            "rho": None if self.rho is None else float(self.rho),
            "steps": int(self.steps),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CollisionPair":
        try:
            return cls(
                p=SortedDistribution(obj["p"]),
                q=SortedDistribution(obj["q"]),
                orders=OrderSet(obj["orders"]),
                signature_gap=float(obj["signature_gap"]),
                separation=float(obj["separation"]),
                epsilon=None if obj.get("epsilon") is None else float(obj["epsilon"]),
                rho=None if obj.get("rho") is None else float(obj["rho"]),
                steps=int(obj.get("steps", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"collision pair: missing or malformed field {exc}") from exc


def skew_ray(K: int, eps: float = SKEW_EPS, rho: float = SKEW_RHO) -> np.ndarray:
    """Point ``(1 - sum eps_k, eps_2, ..., eps_K)`` with ``eps_k = eps * rho**(k-2)``."""
    if K < 2:
        raise ValidationError("K must be at least 2")
    tail = eps * rho ** np.arange(K - 1)
    if tail.sum() >= 1 - eps:
        raise ValidationError("skew ray: eps too large for K")
    return np.concatenate([[1.0 - tail.sum()], tail])


def _full(x):
    return np.concatenate([[1.0 - x.sum()], x])


def _inside(x) -> bool:
    # the signature is symmetric, so the path may cross tie walls; points are
    # sorted on output and only positivity bounds the walk
    return bool(np.all(_full(x) > 0))


def _strict_sorted(p) -> bool:
    return bool(np.all(p > 0) and np.all(np.diff(p) < 0))


def _sorted_point(x) -> SortedDistribution:
    p = np.sort(_full(x))[::-1]
    return SortedDistribution(p / p.sum())


def _sign_fixed(v):
    nz = np.flatnonzero(np.abs(v) > 1e-14)
    return -v if nz.size and v[nz[0]] < 0 else v


def null_space(J, rtol: float = RANK_RTOL) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal null-space basis (rows) of ``J`` and its singular values.

    Singular values below ``rtol * sigma_max`` count as zero. Each basis
    vector has its first nonzero component positive.
    """
    _, sv, Vt = np.linalg.svd(J)
    rank = int(np.sum(sv > rtol * sv[0])) if sv.size else 0
    basis = np.array([_sign_fixed(v) for v in Vt[rank:]])
    return basis.reshape(-1, J.shape[1]), sv


def _correct(x, orders, y):
    for _ in range(CORRECTOR_ITER):
        H, J = signature_and_jacobian(_full(x), orders)
        F = H - y
        if np.max(np.abs(F)) <= CORRECTOR_TOL:
            return x
        # minimum-norm step: orthogonal to the local fiber
        dx, *_ = np.linalg.lstsq(J, -F, rcond=None)
        x = x + dx
        if not _inside(x):
            return None
    H, _ = signature_and_jacobian(_full(x), orders)
    return x if np.max(np.abs(H - y)) <= CORRECTOR_TOL else None


def _tangent(x, orders, prev):
    _, J = signature_and_jacobian(_full(x), orders)
    basis, sv = null_space(J)
    if basis.shape[0] == 0:
        raise RankDeficientError("no null direction at the current point", sv)
    if prev is None:
        return basis[0]
    # keep following the same branch: project the previous tangent
    t = basis.T @ (basis @ prev)
    n = np.linalg.norm(t)
    if n < 1e-8:
        return basis[0] if basis[0] @ prev >= 0 else -basis[0]
    return t / n


def _step(x, orders, y, direction, h, step_cap):
    """One predictor-corrector step; returns the new point or None."""
    # scale so the full vector (including p_1) moves by about h in sup norm
    full_dir = np.concatenate([[-direction.sum()], direction])
    unit = direction / np.max(np.abs(full_dir))
    while h >= MIN_STEP:
        xn = x + h * unit
        if _inside(xn):
            xn = _correct(xn, orders, y)
            if xn is not None and np.max(np.abs(_full(xn) - _full(x))) <= step_cap:
                return xn, h
        h /= 2
    return None, h


def _start_rank(p, orders):
    _, J = signature_and_jacobian(p, orders)
    sv = np.linalg.svd(J, compute_uv=False)
    if sv.size == 0 or np.sum(sv > RANK_RTOL * sv[0]) < len(orders):
        raise RankDeficientError("Jacobian at start is not of full row rank", sv)


def _check_regime(K, M):
    if K < 3:
        raise ValidationError("K must be at least 3 for a collision")
    if len(M) > K - 2:
        raise ValidationError(
            f"{len(M)} orders with K={K}: the signature is injective on sorted points (need |M| <= K-2)"
        )


def _walk(p0, orders, first, step_size, max_steps=MAX_STEPS, stop_on_loop=True):
    """Yield successive fiber points (chart coordinates) from ``p0``.

    ``first`` fixes the initial tangent; later tangents follow the same
    branch. Stops at the positivity boundary, after ``max_steps`` or, with
    ``stop_on_loop``, when the path closes up.
    """
    y, _ = signature_and_jacobian(p0, orders)
    x0 = p0[1:].copy()
    x, prev, h = x0, None, step_size
    for i in range(max_steps):
        d = first if prev is None else _tangent(x, orders, prev)
        xn, h = _step(x, orders, y, d, min(2 * h, step_size), step_size)
        if xn is None:
            return
        prev, x = d, xn
        yield x
        # the fiber can be a closed loop around the barycentre
        if stop_on_loop and i > 2 and np.max(np.abs(x - x0)) < 0.5 * step_size:
            return


def _first_tangent(p0, orders):
    _, J = signature_and_jacobian(p0, orders)
    basis, sv = null_space(J)
    if basis.shape[0] == 0:
        raise RankDeficientError("no null direction at start", sv)
    return basis


def level_set_trace(K: int, M, start, steps: int, step_size: float = PREDICTOR_STEP, reverse: bool = False):
    """Follow the fiber through ``start`` for ``steps`` predictor-corrector steps.

    Returns ``steps + 1`` sorted distributions whose signatures match the
    start within the corrector tolerance, consecutive points at most
    ``step_size`` apart in sup norm. The path follows the first null-space
    basis vector (negated when ``reverse``) and then continues along the
    same branch. Tie walls are crossed freely; every point is re-sorted.
    """
    M = _orders(M)
    _check_regime(K, M)
    p0 = _sorted_probs(start)
    if p0.size != K:
        raise ValidationError(f"start has {p0.size} entries, expected {K}")
    if steps < 0 or not step_size > 0:
        raise ValidationError("steps must be >= 0 and step_size > 0")
    if not _strict_sorted(p0):
        raise ValidationError("start must lie in the open sorted simplex")
    orders = M.orders
    _start_rank(p0, orders)
    path = [SortedDistribution(p0)]
    if steps == 0:
        return path
    d = _first_tangent(p0, orders)[0]
    # a closed fiber is simply traversed again
    for x in _walk(p0, orders, -d if reverse else d, step_size, steps, stop_on_loop=False):
        path.append(_sorted_point(x))
    if len(path) <= steps:
        raise WitnessError(f"continuation reached the simplex boundary after {len(path) - 1} steps")
    return path


def _separated(p0, orders, d, min_separation):
    n = 0
    for n, x in enumerate(_walk(p0, orders, d, PREDICTOR_STEP), 1):
        q = _sorted_point(x).probs
        if np.max(np.abs(q - p0)) >= min_separation:
            return q, n
    return None, n


def _candidate_starts(K, seed):
    for rho in RHO_LADDER:
        for eps in EPS_LADDER:
            try:
                yield (eps, rho), skew_ray(K, eps, rho)
            except ValidationError:
                continue
    # last resort: interior points; any full-rank point has a fiber through it
    rng = np.random.default_rng(seed)
    for _ in range(RANDOM_STARTS):
        yield (None, None), sample_sorted_point(rng, K, 1e-3)


def find_collision(K: int, M, min_separation: float = 0.02, seed: int = 42, start=None) -> CollisionPair:
    """Two distinct sorted distributions with equal signatures under ``M``.

    ``p`` is the given ``start`` or a skew-ray point; ``q`` is reached by
    continuation along the fiber until the sup-norm separation reaches
    ``min_separation``. Skew rays are tried over a ladder of ``(eps, rho)``,
    each in both orientations of the first null direction, followed by a
    few random null combinations and finally random interior starts, all
    drawn from ``seed``. The pair is re-verified by direct forward
    evaluation.
    """
    M = _orders(M)
    _check_regime(K, M)
    if not 0 < min_separation <= 0.2:
        raise ValidationError("min_separation must lie in (0, 0.2]")
    orders = M.orders
    if start is not None:
        p0 = _sorted_probs(start)
        if p0.size != K or not _strict_sorted(p0):
            raise ValidationError("start must be a point of the open sorted simplex with K entries")
        starts = [((None, None), p0)]
    else:
        starts = _candidate_starts(K, seed)
    rng = np.random.default_rng([seed, 1])
    last = None
    for (eps, rho), p0 in starts:
        try:
            _start_rank(p0, orders)
        except RankDeficientError as exc:
            last = exc
            continue
        basis = _first_tangent(p0, orders)
        dirs = [basis[0], -basis[0]]
        if basis.shape[0] > 1:
            dirs += [rng.standard_normal(basis.shape[0]) @ basis for _ in range(RANDOM_DIRECTIONS)]
        for d in dirs:
            q, n = _separated(p0, orders, d / np.linalg.norm(d), min_separation)
            if q is not None:
                pair = _verified_pair(p0, q, M, min_separation, eps, rho, n)
                if pair is not None:
                    return pair
    msg = f"no collision with separation >= {min_separation:g} found for K={K}, M={M.tolist()}"
    if last is not None:
        msg += f" ({last})"
    raise WitnessError(msg)


def _verified_pair(p0, q, M, min_separation, eps, rho, steps):
    # independent check through the public forward map
    p = SortedDistribution(p0 / p0.sum())
    qd = SortedDistribution(q / q.sum())
    gap = float(np.max(np.abs(gse_signature(p, M).values - gse_signature(qd, M).values)))
    sep = float(np.max(np.abs(p.probs - qd.probs)))
    if gap > GAP_TOL or sep < min_separation:
        return None
    return CollisionPair(p, qd, M, gap, sep, eps, rho, steps)
