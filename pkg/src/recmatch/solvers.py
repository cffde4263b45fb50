"""Recommendation policies.

* :func:`solve_dap` -- direct assignment: maximize ``sum p u x`` (b-matching).
* :func:`solve_npp` -- nearby priority: maximize ``sum (M - d) x``.
* :func:`solve_homogeneous_exact` -- exact optimum for a common acceptance
  probability via ranked slots: demand ``i`` gets ``theta`` slots, slot ``r``
  pays ``p (1 - p)^(r-1) u_ij``; since slot weights decrease, an optimal slot
  assignment fills a demand's slots in descending utility order and its value
  is the exact expected utility.
* :func:`solve_surrogate` -- maximize the log-sum-exp surrogate by lazy
  greedy, local search, or enumeration.
* :func:`solve_saa` -- maximize the sample-average utility over a scenario set.
* :func:`brute_force_opt` -- enumerate every feasible recommendation.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .evaluation import (
    EMPTY_LOG_EPS,
    ScenarioSet,
    demand_expected_utility,
    demand_surrogate,
    exact_expected_utility,
    sample_scenarios,
    scenario_value,
    surrogate_logits,
    surrogate_value,
)
from .flow import max_weight_b_matching
from .instance import Instance, InstanceError, Recommendation, check_recommendation

ENUM_BUDGET = 10**7
STRATEGIES = ("greedy", "local_search", "exact_tiny")


class SolverError(RuntimeError):
    """Raised when a solver cannot be applied to an instance."""


@dataclass(frozen=True)
class SolverConfig:
    tau: float = 0.01
    strategy: str = "local_search"
    ls_max_iters: int = 100_000
    multistart_count: int = 2
    perturb_fraction: float = 0.2
    saa_samples: int = 1000
    seed: int = 0
    time_limit: float = 120.0
    enum_budget: int = ENUM_BUDGET
    fw_iters: int = 0
    log_eps: float = EMPTY_LOG_EPS

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if min(self.ls_max_iters, self.saa_samples, self.enum_budget) < 1:
            raise ValueError("budgets must be positive")
        if self.multistart_count < 0 or self.fw_iters < 0:
            raise ValueError("multistart_count and fw_iters must be >= 0")
        if not 0 <= self.perturb_fraction <= 1:
            raise ValueError("perturb_fraction must be in [0, 1]")


@dataclass
class SolveReport:
    rec: Recommendation
    solver_objective: float
    exact_value: float
    wall_time: float
    method: str
    iterations: int = 0
    upper_bound: Optional[float] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "rec": self.rec.to_dict(),
            "solver_objective": self.solver_objective,
            "exact_value": self.exact_value,
            "wall_time": self.wall_time,
            "iterations": self.iterations,
            "upper_bound": self.upper_bound,
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SolveReport":
        return cls(
            rec=Recommendation.from_dict(d["rec"]),
            solver_objective=d["solver_objective"],
            exact_value=d["exact_value"],
            wall_time=d["wall_time"],
            method=d["method"],
            iterations=d.get("iterations", 0),
            upper_bound=d.get("upper_bound"),
            extra=d.get("extra", {}),
        )


def _report(instance, rec, objective, t0, method, **kw) -> SolveReport:
    check_recommendation(instance, rec)
    exact = exact_expected_utility(instance, rec).total
    return SolveReport(rec, float(objective), exact, time.perf_counter() - t0, method, **kw)


# ---------------------------------------------------------------------------
# linear policies and the homogeneous exact solver
# ---------------------------------------------------------------------------

def _b_matching_rec(instance: Instance, weights: np.ndarray, only_positive=True):
    pairs, value = max_weight_b_matching(weights, instance.theta, 1, only_positive)
    owner = [-1] * instance.num_supplies
    for i, j in pairs:
        owner[j] = i
    return Recommendation.from_assignment(owner, instance.num_demands), value


def solve_dap(instance: Instance) -> SolveReport:
    """Direct assignment policy: exact maximizer of ``sum p_ij u_ij x_ij``."""
    t0 = time.perf_counter()
    w = instance.accept_prob * instance.utilities
    rec, value = _b_matching_rec(instance, w)
    return _report(instance, rec, value, t0, "dap")


def solve_npp(instance: Instance) -> SolveReport:
    """Nearby-priority policy: exact maximizer of ``sum (M - d_ij) x_ij``.

    ``M = max d + 1`` keeps every weight positive, so the recommendation uses
    ``min(theta * num_demands, num_supplies)`` pairs.
    """
    if instance.distances is None:
        raise SolverError("solve_npp needs an instance with distances")
    t0 = time.perf_counter()
    d = instance.distances
    w = (float(d.max()) + 1.0) - d
    rec, value = _b_matching_rec(instance, w)
    return _report(instance, rec, value, t0, "npp")


def solve_homogeneous_exact(instance: Instance, tol: float = 1e-12) -> SolveReport:
    """Exact optimum when every acceptance probability is the same.

    Builds the ranked-slot assignment problem and solves it by min-cost flow.
    Raises :class:`SolverError` on heterogeneous probabilities.
    """
    if not instance.is_homogeneous(tol):
        raise SolverError("solve_homogeneous_exact needs homogeneous acceptance probabilities")
    t0 = time.perf_counter()
    p = float(instance.accept_prob.flat[0])
    nd, theta = instance.num_demands, instance.theta
    slot_w = p * (1.0 - p) ** np.arange(theta)
    # row i * theta + r is slot r of demand i
    w = (instance.utilities[:, None, :] * slot_w[None, :, None]).reshape(nd * theta, -1)
    pairs, slot_value = max_weight_b_matching(w, 1, 1)
    owner = [-1] * instance.num_supplies
    for row, j in pairs:
        owner[j] = row // theta
    rec = Recommendation.from_assignment(owner, nd)
    rep = _report(instance, rec, 0.0, t0, "homog_exact")
    rep.solver_objective = rep.exact_value
    rep.extra["slot_value"] = slot_value
    return rep


# ---------------------------------------------------------------------------
# generic set-function search over feasible recommendations
# ---------------------------------------------------------------------------

DemandFn = Callable[[int, tuple], float]


class _Search:
    """Search state for ``sum_i f(i, L_i)`` under the cap/exclusivity rules.

    ``f`` must be monotone and submodular in ``L_i`` for the lazy greedy to be
    exact in its bookkeeping; local search only needs ``f`` to be a function.
    """

    def __init__(self, instance: Instance, fn: DemandFn, deadline: float = math.inf):
        self.nd = instance.num_demands
        self.ns = instance.num_supplies
        self.theta = instance.theta
        self._fn = fn
        self._memo: dict = {}
        self.deadline = deadline
        self.iterations = 0
        self.reset(Recommendation.empty(self.nd))

    def f(self, i: int, cols) -> float:
        key = (i, tuple(sorted(cols)))
        v = self._memo.get(key)
        if v is None:
            if len(self._memo) > 500_000:
                self._memo.clear()
            v = self._fn(i, key[1])
            self._memo[key] = v
        return v

    def reset(self, rec: Recommendation) -> None:
        self.lists = [list(row) for row in rec.lists]
        self.owner = [-1] * self.ns
        for i, row in enumerate(self.lists):
            for j in row:
                self.owner[j] = i
        self.vals = [self.f(i, row) for i, row in enumerate(self.lists)]

    @property
    def objective(self) -> float:
        return math.fsum(self.vals)

    def rec(self) -> Recommendation:
        return Recommendation(tuple(tuple(sorted(row)) for row in self.lists))

    def _tol(self) -> float:
        return 1e-12 * max(1.0, abs(self.objective))

    # -- greedy -----------------------------------------------------------
    def greedy_fill(self) -> None:
        """Lazy greedy insertion from the current state until no gain is left."""
        version = [0] * self.nd
        heap = []
        for i in range(self.nd):
            if len(self.lists[i]) >= self.theta:
                continue
            for j in range(self.ns):
                if self.owner[j] < 0:
                    g = self.f(i, self.lists[i] + [j]) - self.vals[i]
                    heap.append((-g, i, j, 0))
        heapq.heapify(heap)
        while heap:
            neg, i, j, ver = heapq.heappop(heap)
            if self.owner[j] >= 0 or len(self.lists[i]) >= self.theta:
                continue
            if ver != version[i]:
                g = self.f(i, self.lists[i] + [j]) - self.vals[i]
                heapq.heappush(heap, (-g, i, j, version[i]))
                continue
            if -neg <= 0.0:
                break
            self.lists[i].append(j)
            self.owner[j] = i
            self.vals[i] = self.f(i, self.lists[i])
            version[i] += 1
            self.iterations += 1

    # -- local search -----------------------------------------------------
    def _try_insert(self, tol) -> bool:
        for i in range(self.nd):
            if len(self.lists[i]) >= self.theta:
                continue
            for j in range(self.ns):
                if self.owner[j] >= 0:
                    continue
                nv = self.f(i, self.lists[i] + [j])
                if nv - self.vals[i] > tol:
                    self.lists[i].append(j)
                    self.owner[j] = i
                    self.vals[i] = nv
                    return True
        return False

    def _try_transfer(self, tol) -> bool:
        for j in range(self.ns):
            i = self.owner[j]
            if i < 0:
                continue
            rest = [x for x in self.lists[i] if x != j]
            vi = self.f(i, rest)
            for k in range(self.nd):
                if k == i or len(self.lists[k]) >= self.theta:
                    continue
                vk = self.f(k, self.lists[k] + [j])
                if vi + vk - self.vals[i] - self.vals[k] > tol:
                    self.lists[i] = rest
                    self.lists[k].append(j)
                    self.owner[j] = k
                    self.vals[i], self.vals[k] = vi, vk
                    return True
        return False

    def _try_swap(self, tol) -> bool:
        # j1 is assigned; j2 is assigned elsewhere or unassigned
        for j1 in range(self.ns):
            i = self.owner[j1]
            if i < 0:
                continue
            base_i = [x for x in self.lists[i] if x != j1]
            for j2 in range(self.ns):
                k = self.owner[j2]
                if j2 == j1 or k == i or (k >= 0 and j2 < j1):
                    continue
                vi = self.f(i, base_i + [j2])
                if k >= 0:
                    base_k = [x for x in self.lists[k] if x != j2]
                    vk = self.f(k, base_k + [j1])
                    delta = vi + vk - self.vals[i] - self.vals[k]
                else:
                    delta = vi - self.vals[i]
                if delta > tol:
                    self.lists[i] = base_i + [j2]
                    self.owner[j2] = i
                    self.vals[i] = vi
                    if k >= 0:
                        self.lists[k] = base_k + [j1]
                        self.owner[j1] = k
                        self.vals[k] = vk
                    else:
                        self.owner[j1] = -1
                    return True
        return False

    def _try_delete(self, tol) -> bool:
        for i in range(self.nd):
            for j in list(self.lists[i]):
                rest = [x for x in self.lists[i] if x != j]
                nv = self.f(i, rest)
                if nv - self.vals[i] > tol:
                    self.lists[i] = rest
                    self.owner[j] = -1
                    self.vals[i] = nv
                    return True
        return False

    def local_search(self, max_iters: int) -> bool:
        """First-improvement descent; returns False if stopped by a budget."""
        moves = (self._try_insert, self._try_transfer, self._try_swap, self._try_delete)
        steps = 0
        while steps < max_iters:
            if time.perf_counter() > self.deadline:
                return False
            tol = self._tol()
            if not any(m(tol) for m in moves):
                return True
            steps += 1
            self.iterations += 1
        return False

    def perturb(self, fraction: float, rng: np.random.Generator) -> None:
        assigned = [j for j in range(self.ns) if self.owner[j] >= 0]
        n_drop = int(round(fraction * len(assigned)))
        if n_drop == 0:
            return
        for j in sorted(rng.choice(assigned, size=n_drop, replace=False).tolist()):
            i = self.owner[j]
            self.lists[i].remove(j)
            self.owner[j] = -1
        for i in range(self.nd):
            self.vals[i] = self.f(i, self.lists[i])


def _enumeration_size_bound(instance: Instance) -> int:
    return (instance.num_demands + 1) ** instance.num_supplies


def enumerate_best(instance: Instance, fn: DemandFn, budget: int = ENUM_BUDGET):
    """Exhaustive maximization of ``sum_i fn(i, L_i)``.

    Supplies are visited in ascending order; each is left out first and then
    tried on demands in ascending order. The first maximizer found wins.
    Returns ``(rec, value, count)``.
    """
    nd, ns, theta = instance.num_demands, instance.num_supplies, instance.theta
    if _enumeration_size_bound(instance) > budget:
        raise SolverError(
            f"enumeration of up to {nd + 1}^{ns} recommendations exceeds budget {budget}")
    memo: dict = {}

    def val(i, cols):
        key = (i, cols)
        v = memo.get(key)
        if v is None:
            v = memo[key] = fn(i, cols)
        return v

    lists: list[list[int]] = [[] for _ in range(nd)]
    best_val = -math.inf
    best = None
    count = 0
    stack_owner = [-1] * ns

    def visit(j):
        nonlocal best_val, best, count
        if j == ns:
            count += 1
            total = 0.0
            for i in range(nd):
                total += val(i, tuple(lists[i]))
            if total > best_val:
                best_val = total
                best = list(stack_owner)
            return
        visit(j + 1)
        for i in range(nd):
            if len(lists[i]) < theta:
                lists[i].append(j)
                stack_owner[j] = i
                visit(j + 1)
                stack_owner[j] = -1
                lists[i].pop()

    visit(0)
    return Recommendation.from_assignment(best, nd), best_val, count


# ---------------------------------------------------------------------------
# surrogate
# ---------------------------------------------------------------------------

def _surrogate_fn(instance: Instance, tau: float, log_eps: float) -> DemandFn:
    logits = surrogate_logits(instance, tau)

    def fn(i, cols):
        return demand_surrogate(logits[i], cols, tau, log_eps)

    return fn


def assignment_start(instance: Instance, fn: DemandFn) -> Recommendation:
    """One supply per demand, by max-weight assignment on single-supply gains.

    Exact when ``theta == 1``; otherwise a starting point for greedy fill.
    """
    empty = [fn(i, ()) for i in range(instance.num_demands)]
    gain = np.array([[fn(i, (j,)) - empty[i] for j in range(instance.num_supplies)]
                     for i in range(instance.num_demands)])
    pairs, _ = max_weight_b_matching(gain, 1, 1)
    owner = [-1] * instance.num_supplies
    for i, j in pairs:
        owner[j] = i
    return Recommendation.from_assignment(owner, instance.num_demands)


def _run_search(instance, fn, cfg: SolverConfig):
    deadline = time.perf_counter() + cfg.time_limit
    search = _Search(instance, fn, deadline)
    search.greedy_fill()
    completed = True
    if cfg.strategy == "local_search":
        completed = search.local_search(cfg.ls_max_iters)
        best_rec, best_obj = search.rec(), search.objective
        search.reset(assignment_start(instance, fn))
        search.greedy_fill()
        completed = search.local_search(cfg.ls_max_iters) and completed
        if search.objective > best_obj + 1e-12 * max(1.0, abs(best_obj)):
            best_rec, best_obj = search.rec(), search.objective
        rng = np.random.default_rng(cfg.seed)
        for _ in range(cfg.multistart_count):
            if time.perf_counter() > deadline:
                completed = False
                break
            search.reset(best_rec)
            search.perturb(cfg.perturb_fraction, rng)
            search.greedy_fill()
            completed = search.local_search(cfg.ls_max_iters) and completed
            if search.objective > best_obj + 1e-12 * max(1.0, abs(best_obj)):
                best_rec, best_obj = search.rec(), search.objective
        search.reset(best_rec)
    return search, completed


def frank_wolfe_bound(instance: Instance, rec: Recommendation, tau: float,
                      iters: int = 50, log_eps: float = EMPTY_LOG_EPS) -> Optional[float]:
    """Upper bound on the surrogate optimum from its continuous relaxation.

    Runs Frank-Wolfe from ``rec``; every iterate ``x`` with linear maximizer
    ``s`` over the relaxed polytope certifies ``f(x) + grad f(x) . (s - x)``
    as an upper bound. Each linear step is a b-matching. Returns ``None`` if
    the gradient overflows (a demand uncovered by ``rec``).
    """
    logits = surrogate_logits(instance, tau)
    x = rec.to_matrix(instance.num_supplies).astype(float)
    best = math.inf
    for k in range(iters):
        with np.errstate(divide="ignore", over="ignore"):
            log_y = np.logaddexp(logsumexp(logits, b=x, axis=1), log_eps)
            fval = tau * float(log_y.sum())
            grad = tau * np.exp(logits - log_y[:, None])
        if not np.all(np.isfinite(grad)):
            return None
        pairs, _ = max_weight_b_matching(grad, instance.theta, 1)
        s = np.zeros_like(x)
        for i, j in pairs:
            s[i, j] = 1.0
        bound = fval + float(np.sum(grad * (s - x)))
        best = min(best, bound)
        # step < 1 keeps weight on the start, so covered demands stay covered
        step = 2.0 / (k + 3.0)
        x = x + step * (s - x)
    return best if math.isfinite(best) else None


def solve_surrogate(instance: Instance, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Maximize the log-sum-exp surrogate over feasible recommendations."""
    t0 = time.perf_counter()
    fn = _surrogate_fn(instance, cfg.tau, cfg.log_eps)
    extra = {"tau": cfg.tau, "strategy": cfg.strategy}
    if cfg.strategy == "exact_tiny":
        rec, _, count = enumerate_best(instance, fn, cfg.enum_budget)
        iterations = count
        extra["enumerated"] = count
    else:
        search, completed = _run_search(instance, fn, cfg)
        rec, iterations = search.rec(), search.iterations
        extra["completed"] = completed
    obj = surrogate_value(instance, rec, cfg.tau, cfg.log_eps)
    ub = None
    if cfg.fw_iters > 0:
        ub = frank_wolfe_bound(instance, rec, cfg.tau, cfg.fw_iters, cfg.log_eps)
        if ub is not None:
            ub = max(ub, obj)
    return _report(instance, rec, obj, t0, "surrogate", iterations=iterations,
                   upper_bound=ub, extra=extra)


# ---------------------------------------------------------------------------
# sample average approximation
# ---------------------------------------------------------------------------

def _saa_fn(instance: Instance, scenarios: ScenarioSet) -> DemandFn:
    # values[i][j] = per-sample utility of supply j for demand i if accepted
    xi = scenarios.realizations
    values = np.ascontiguousarray(
        np.where(xi, instance.utilities[None, :, :], 0.0).transpose(1, 2, 0))

    def fn(i, cols):
        if not cols:
            return 0.0
        return float(values[i, list(cols)].max(axis=0).mean())

    return fn


def solve_saa(instance: Instance, scenarios: Optional[ScenarioSet] = None,
              cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Maximize the in-sample average utility.

    ``scenarios`` defaults to ``cfg.saa_samples`` independent scenarios drawn
    with ``cfg.seed``. ``solver_objective`` is the in-sample average;
    ``exact_value`` uses the true probabilities.
    """
    t0 = time.perf_counter()
    if scenarios is None:
        scenarios = sample_scenarios(instance, cfg.saa_samples, cfg.seed)
    if scenarios.shape != instance.shape:
        raise InstanceError(f"scenario shape {scenarios.shape} != instance shape {instance.shape}")
    fn = _saa_fn(instance, scenarios)
    extra = {"samples": scenarios.sample_count, "strategy": cfg.strategy}
    if cfg.strategy == "exact_tiny":
        rec, _, count = enumerate_best(instance, fn, cfg.enum_budget)
        iterations = count
        extra["enumerated"] = count
    else:
        search, completed = _run_search(instance, fn, cfg)
        rec, iterations = search.rec(), search.iterations
        extra["completed"] = completed
    obj = scenario_value(instance, rec, scenarios).total
    return _report(instance, rec, obj, t0, "saa", iterations=iterations, extra=extra)


# ---------------------------------------------------------------------------
# exact oracle
# ---------------------------------------------------------------------------

def brute_force_opt(instance: Instance, budget: int = ENUM_BUDGET) -> SolveReport:
    """Certified maximizer of the expected utility by full enumeration."""
    t0 = time.perf_counter()
    u, p = instance.utilities, instance.accept_prob

    def fn(i, cols):
        return demand_expected_utility(u[i], p[i], cols)

    rec, value, count = enumerate_best(instance, fn, budget)
    rep = _report(instance, rec, value, t0, "brute_force", iterations=count)
    rep.solver_objective = rep.exact_value
    rep.upper_bound = rep.exact_value
    return rep


METHODS = ("dap", "npp", "homog_exact", "surrogate", "saa", "brute_force")


def solve(instance: Instance, method: str, cfg: SolverConfig = SolverConfig(),
          scenarios: Optional[ScenarioSet] = None) -> SolveReport:
    """Run ``method`` (one of :data:`METHODS`) on ``instance``."""
    if method == "dap":
        return solve_dap(instance)
    if method == "npp":
        return solve_npp(instance)
    if method == "homog_exact":
        return solve_homogeneous_exact(instance)
    if method == "surrogate":
        return solve_surrogate(instance, cfg)
    if method == "saa":
        return solve_saa(instance, scenarios, cfg)
    if method == "brute_force":
        return brute_force_opt(instance, cfg.enum_budget)
    raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
