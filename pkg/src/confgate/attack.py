"""Decision-based attacks driving a budgeted oracle.

Two attacks are provided, both simplified re-implementations rather than ports
of the original code:

* ``attack_hsja_like``: boundary bisection, Monte-Carlo gradient-direction
  estimate at the boundary, geometric step-size search. Against randomized
  oracles the bisection switches to repeated sampling with Wilson-interval
  decisions, which is how this package stands in for PopSkipJump.
* ``attack_surfree_like``: random orthogonal directions and angle trials on the
  circle through the current boundary point and the source, no gradient
  estimation.

All attacks are untargeted.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from statistics import NormalDist

import numpy as np

from .core import BudgetExhausted, QueryLedger, clamp, distance, oracle_query


class PreconditionViolated(ValueError):
    pass


class NoBracket(PreconditionViolated):
    """The segment endpoints are not on opposite sides of the boundary."""


class ZeroEstimate(RuntimeError):
    """Every probe around the boundary point returned the same decision."""


class InitFailure(RuntimeError):
    """No adversarial starting point was found."""


class Probe:
    """Attacker's view of an oracle: is ``x`` misclassified away from ``source``?

    Every call costs one query on ``ledger``. ``rng`` feeds the oracle's own
    randomness (defense draws), never the attacker's choices.
    """

    def __init__(self, oracle, source: int, ledger: QueryLedger,
                 rng: np.random.Generator | None = None):
        self.oracle = oracle
        self.source = int(source)
        self.ledger = ledger
        self.rng = rng

    @property
    def used(self) -> int:
        return self.ledger.used

    @property
    def remaining(self) -> int:
        return self.ledger.remaining

    @property
    def randomized(self) -> bool:
        return bool(getattr(self.oracle, "randomized", False))

    def is_adv(self, x: np.ndarray) -> bool:
        return oracle_query(self.oracle, x, self.ledger, self.rng).label != self.source


@dataclass(frozen=True)
class BisectionParams:
    tolerance: float = 1e-3
    max_steps: int = 64
    repeats: int = 1
    confidence: float = 0.95
    delta: float = 0.05
    check_endpoints: bool = True

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.repeats < 1:
            raise ValueError("need at least one repeat per probe")


@dataclass
class BoundaryResult:
    k: float
    x: np.ndarray
    queries: int
    p_hat: float | None = None


def interpolate(x_t: np.ndarray, x_0: np.ndarray, k: float) -> np.ndarray:
    """``(1 - k) x_t + k x_0``; exact at both endpoints."""
    if not 0.0 <= k <= 1.0:
        raise ValueError(f"k={k} outside [0, 1]")
    x_t = np.asarray(x_t, dtype=np.float64)
    x_0 = np.asarray(x_0, dtype=np.float64)
    if x_t.shape != x_0.shape:
        raise ValueError("endpoint shapes differ")
    if k == 0.0:
        return x_t.copy()
    if k == 1.0:
        return x_0.copy()
    return (1.0 - k) * x_t + k * x_0


def bisect_deterministic(probe: Probe, x_t: np.ndarray, x_0: np.ndarray,
                         params: BisectionParams = BisectionParams()) -> BoundaryResult:
    """Locate the boundary on ``[x_t, x_0]`` by halving.

    Keeps ``lo`` adversarial and ``hi`` genuine; returns the adversarial side
    ``k = lo``. Uses at most ``ceil(log2(1/tolerance)) + 2`` queries (two for the
    endpoint check).
    """
    start = probe.used
    if params.check_endpoints:
        if not probe.is_adv(interpolate(x_t, x_0, 0.0)):
            raise PreconditionViolated("x_t is not adversarial")
        if probe.is_adv(interpolate(x_t, x_0, 1.0)):
            raise PreconditionViolated("x_0 is already adversarial")
    lo, hi = 0.0, 1.0
    steps = 0
    while hi - lo > params.tolerance and steps < params.max_steps:
        mid = (lo + hi) / 2.0
        if probe.is_adv(interpolate(x_t, x_0, mid)):
            lo = mid
        else:
            hi = mid
        steps += 1
    return BoundaryResult(lo, interpolate(x_t, x_0, lo), probe.used - start)


def wilson_interval(hits: int, n: int, z: float) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = hits / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return centre - half, centre + half


def _probe_side(probe: Probe, x: np.ndarray, params: BisectionParams, z: float,
                budget_left: int | None) -> tuple[int, float, int]:
    """Repeat-query ``x``; return (side, p_hat, n) with side +1 adv, -1 genuine, 0 undecided."""
    hits = n = 0
    for _ in range(params.repeats):
        if budget_left is not None and n >= budget_left:
            break
        hits += probe.is_adv(x)
        n += 1
        lo, hi = wilson_interval(hits, n, z)
        if lo > 0.5:
            return 1, hits / n, n
        if hi < 0.5:
            return -1, hits / n, n
    if n == 0:
        raise BudgetExhausted("no queries left for noisy bisection")
    p_hat = hits / n
    if params.repeats == 1:
        return (1 if hits else -1), p_hat, n
    if abs(p_hat - 0.5) <= params.delta:
        return 0, p_hat, n
    return (1 if p_hat > 0.5 else -1), p_hat, n


def bisect_noisy(probe: Probe, x_t: np.ndarray, x_0: np.ndarray,
                 params: BisectionParams = BisectionParams(repeats=30, tolerance=1e-2),
                 max_queries: int | None = None) -> BoundaryResult:
    """Bisection against a randomized oracle.

    Each probe is queried up to ``params.repeats`` times and stops early once the
    Wilson interval for the adversarial rate excludes 1/2. A probe whose rate is
    still within ``params.delta`` of 1/2 after all repeats is taken as the
    boundary. ``max_queries`` caps the total spend on this call.
    """
    z = NormalDist().inv_cdf(0.5 + params.confidence / 2.0)
    start = probe.used

    def left():
        return None if max_queries is None else max_queries - (probe.used - start)

    if params.check_endpoints:
        side, _, _ = _probe_side(probe, interpolate(x_t, x_0, 0.0), params, z, left())
        if side < 0:
            raise NoBracket("x_t is not adversarial")
        side, _, _ = _probe_side(probe, interpolate(x_t, x_0, 1.0), params, z, left())
        if side > 0:
            raise NoBracket("x_0 is adversarial")
    lo, hi = 0.0, 1.0
    p_lo = None
    steps = 0
    while hi - lo > params.tolerance and steps < params.max_steps:
        remaining = left()
        if remaining is not None and remaining <= 0:
            break
        mid = (lo + hi) / 2.0
        side, p_hat, _ = _probe_side(probe, interpolate(x_t, x_0, mid), params, z, remaining)
        steps += 1
        if side == 0:
            return BoundaryResult(mid, interpolate(x_t, x_0, mid), probe.used - start, p_hat)
        if side > 0:
            lo, p_lo = mid, p_hat
        else:
            hi = mid
    return BoundaryResult(lo, interpolate(x_t, x_0, lo), probe.used - start, p_lo)


def random_directions(n: int, shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    u = rng.standard_normal((n, int(np.prod(shape))))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def estimate_gradient(probe: Probe, x_b: np.ndarray, n_samples: int, delta: float,
                      rng: np.random.Generator, directions: np.ndarray | None = None) -> np.ndarray:
    """Unit direction ``sum_b (phi_b - mean phi) u_b`` pointing into the adversarial side.

    ``phi_b`` is +1 when ``x_b + delta u_b`` is adversarial and -1 otherwise.
    Spends exactly ``n_samples`` queries.
    """
    if n_samples < 2:
        raise ValueError("need at least two samples")
    if not delta > 0:
        raise ValueError("delta must be positive")
    if probe.remaining < n_samples:
        raise BudgetExhausted(f"{n_samples} queries requested, {probe.remaining} left")
    x_b = np.asarray(x_b, dtype=np.float64)
    if directions is None:
        u = random_directions(n_samples, x_b.shape, rng)
    else:
        u = np.asarray(directions, dtype=np.float64).reshape(n_samples, -1)
    phi = np.array([1.0 if probe.is_adv(clamp(x_b + delta * ub.reshape(x_b.shape))) else -1.0
                    for ub in u])
    centred = phi - phi.mean()
    if not np.any(centred):
        raise ZeroEstimate("all probes agree")
    g = (centred[:, None] * u).mean(axis=0)
    norm = np.linalg.norm(g)
    if norm == 0:
        raise ZeroEstimate("directions cancel out")
    return (g / norm).reshape(x_b.shape)


# ---------------------------------------------------------------------------
# full attacks


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "hsja"
    budget: int = 2000
    epsilon: float = 3.0
    norm: int = 2
    target: int | None = None
    init_cap: int = 100
    bisection: BisectionParams = BisectionParams(tolerance=1e-3, check_endpoints=False)
    noisy_bisection: BisectionParams = BisectionParams(
        tolerance=1e-2, repeats=10, check_endpoints=False)
    noisy: bool | None = None
    # gradient-estimation attack
    grad_queries: int = 100
    max_grad_queries: int = 1000
    gamma: float = 1.0
    # geometric attack
    n_angles: int = 30
    theta_max: float = math.pi / 6
    arc_steps: int = 8

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be at least 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.kind not in ("hsja", "surfree"):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.target is not None:
            raise NotImplementedError("targeted attacks are not implemented")


@dataclass
class Milestone:
    queries: int
    distortion: float


@dataclass
class AttackTrace:
    """Best adversarial candidate so far, recorded at increasing query counts."""

    milestones: list[Milestone] = field(default_factory=list)
    x_adv: np.ndarray | None = None
    queries: int = 0
    success: bool | None = None

    @property
    def best_distortion(self) -> float:
        return self.milestones[-1].distortion if self.milestones else math.inf

    def offer(self, x: np.ndarray, x0: np.ndarray, queries: int) -> None:
        """Consider an adversarial candidate observed after ``queries`` queries."""
        d = distance(x, x0)
        if d < self.best_distortion:
            self.x_adv = np.array(x, dtype=np.float64)
            if self.milestones and self.milestones[-1].queries == queries:
                self.milestones[-1].distortion = d
            else:
                self.milestones.append(Milestone(queries, d))
        self.queries = max(self.queries, queries)

    def to_jsonl(self, **extra) -> str:
        lines = [json.dumps({**extra, **asdict(m)}, sort_keys=True) for m in self.milestones]
        return "\n".join(lines) + ("\n" if lines else "")


def init_adversarial(probe: Probe, x0: np.ndarray, rng: np.random.Generator,
                     init_cap: int = 100) -> np.ndarray:
    """Uniform random inputs until one is adversarial."""
    x0 = np.asarray(x0, dtype=np.float64)
    for _ in range(init_cap):
        x = rng.random(x0.shape)
        if probe.is_adv(x):
            return x
    raise InitFailure(f"no adversarial start within {init_cap} draws")


def _use_noisy(probe: Probe, cfg: AttackConfig) -> bool:
    return probe.randomized if cfg.noisy is None else cfg.noisy


def _to_boundary(probe: Probe, x_adv: np.ndarray, x0: np.ndarray, cfg: AttackConfig,
                 noisy: bool) -> np.ndarray:
    if noisy:
        return bisect_noisy(probe, x_adv, x0, cfg.noisy_bisection).x
    return bisect_deterministic(probe, x_adv, x0, cfg.bisection).x


def _start(probe: Probe, x0: np.ndarray, cfg: AttackConfig, rng: np.random.Generator,
           trace: AttackTrace) -> np.ndarray:
    try:
        x_init = init_adversarial(probe, x0, rng, cfg.init_cap)
    except BudgetExhausted as exc:
        raise InitFailure("budget exhausted during initialisation") from exc
    trace.offer(x_init, x0, probe.used)
    return x_init


def attack_hsja_like(probe: Probe, x0: np.ndarray, cfg: AttackConfig,
                     rng: np.random.Generator) -> AttackTrace:
    """Gradient-estimation attack (untargeted, l2).

    Iteration ``t``: estimate the boundary normal at the current boundary point
    with ``grad_queries * sqrt(t)`` probes, step ``||x_t - x0|| / sqrt(t)`` along
    it (halving until still adversarial), then bisect back towards ``x0``.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    trace = AttackTrace()
    noisy = _use_noisy(probe, cfg)
    x_t = _start(probe, x0, cfg, rng, trace)
    d = x0.size
    try:
        x_t = _to_boundary(probe, x_t, x0, cfg, noisy)
        trace.offer(x_t, x0, probe.used)
        t = 1
        delta_scale = 1.0
        while probe.remaining >= 2:
            dist = distance(x_t, x0)
            if dist == 0:
                break
            delta = delta_scale * cfg.gamma * dist / d
            n_samples = min(int(cfg.grad_queries * math.sqrt(t)), cfg.max_grad_queries, probe.remaining)
            try:
                v = estimate_gradient(probe, x_t, n_samples, delta, rng)
            except ZeroEstimate:
                delta_scale *= 2.0
                continue
            delta_scale = 1.0
            xi = dist / math.sqrt(t)
            cand = None
            while xi > 1e-6 * dist:
                trial = clamp(x_t + xi * v)
                if probe.is_adv(trial):
                    cand = trial
                    break
                xi /= 2.0
            t += 1
            if cand is None:
                continue
            x_t = _to_boundary(probe, cand, x0, cfg, noisy)
            trace.offer(x_t, x0, probe.used)
    except BudgetExhausted:
        pass
    trace.queries = probe.used
    return trace


def orthogonal_direction(diff: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random unit vector orthogonal to ``diff`` (one Gram-Schmidt step)."""
    v = np.ravel(diff) / np.linalg.norm(diff)
    u = rng.standard_normal(v.size)
    u -= np.dot(u, v) * v
    u -= np.dot(u, v) * v
    return (u / np.linalg.norm(u)).reshape(np.shape(diff))


def arc_point(x0: np.ndarray, v: np.ndarray, u: np.ndarray, dist: float, theta: float) -> np.ndarray:
    """Point at angle ``theta`` on the circle with diameter ``[x0, x0 + dist v]``.

    Its distance to ``x0`` is ``dist * cos(theta)``.
    """
    c = math.cos(theta)
    return x0 + dist * c * (c * v + math.sin(theta) * u)


def attack_surfree_like(probe: Probe, x0: np.ndarray, cfg: AttackConfig,
                        rng: np.random.Generator) -> AttackTrace:
    """Geometric attack without gradient estimation (untargeted, l2).

    Each round draws a direction orthogonal to ``x_t - x0`` and tries
    ``n_angles`` angles, largest magnitude first with alternating sign, on the
    circle through ``x0`` and ``x_t``. The first adversarial angle is refined by
    bisection along the arc and the result is bisected back onto the boundary.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    trace = AttackTrace()
    noisy = _use_noisy(probe, cfg)
    x_t = _start(probe, x0, cfg, rng, trace)
    n_mag = max(cfg.n_angles // 2, 1)
    theta_max = cfg.theta_max
    try:
        x_t = _to_boundary(probe, x_t, x0, cfg, noisy)
        trace.offer(x_t, x0, probe.used)
        while probe.remaining > 0:
            diff = x_t - x0
            dist = float(np.linalg.norm(diff))
            if dist == 0:
                break
            v = diff / dist
            u = orthogonal_direction(diff, rng)
            step = theta_max / n_mag
            spent = probe.used
            found = None
            for j in range(n_mag):
                mag = theta_max - j * step
                for sign in (1.0, -1.0):
                    cand = clamp(arc_point(x0, v, u, dist, sign * mag))
                    if distance(cand, x0) >= trace.best_distortion:
                        continue
                    if probe.is_adv(cand):
                        found = (sign, mag)
                        break
                if found:
                    break
            if found is None:
                if probe.used == spent and theta_max <= 1e-3:
                    break
                theta_max = max(theta_max * 0.7, 1e-3)
                continue
            sign, lo = found
            hi = min(lo + step, math.pi / 2)
            for _ in range(cfg.arc_steps):
                mid = (lo + hi) / 2.0
                if probe.is_adv(clamp(arc_point(x0, v, u, dist, sign * mid))):
                    lo = mid
                else:
                    hi = mid
            best = clamp(arc_point(x0, v, u, dist, sign * lo))
            trace.offer(best, x0, probe.used)
            x_t = _to_boundary(probe, best, x0, cfg, noisy)
            trace.offer(x_t, x0, probe.used)
            theta_max = min(theta_max * 1.2, math.pi / 2)
    except BudgetExhausted:
        pass
    trace.queries = probe.used
    return trace


def run_attack(probe: Probe, x0: np.ndarray, cfg: AttackConfig, rng: np.random.Generator) -> AttackTrace:
    if cfg.kind == "hsja":
        return attack_hsja_like(probe, x0, cfg, rng)
    return attack_surfree_like(probe, x0, cfg, rng)
