"""Objective evaluation for a fixed recommendation.

Exact expected utility (closed form under independent acceptance), a
brute-force outcome enumeration used as its oracle, scenario sampling and
sample-average evaluation, the log-sum-exp surrogate and its upper envelope,
and the out-of-sample probability perturbations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .instance import Instance, InstanceError, Recommendation, check_recommendation

#: log of the constant added inside the surrogate's logarithm so that a demand
#: without recommendations contributes ``tau * EMPTY_LOG_EPS`` instead of -inf.
EMPTY_LOG_EPS = -1000.0

MAX_ENUM_LIST = 20
MC_CHUNK_CELLS = 4_000_000


@dataclass(frozen=True)
class Evaluation:
    total: float
    per_demand: np.ndarray
    method: str
    stderr: Optional[float] = None
    samples: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "per_demand": self.per_demand.tolist(),
            "method": self.method,
            "stderr": self.stderr,
            "samples": self.samples,
        }


def _sorted_desc(u_row, p_row, supplies):
    js = sorted(supplies, key=lambda j: (-u_row[j], j))
    return [u_row[j] for j in js], [p_row[j] for j in js]


def demand_expected_utility(u_row, p_row, supplies) -> float:
    """Expected best accepted utility of one demand.

    Sort the recommended supplies by utility, descending; the r-th one is used
    exactly when it accepts and every better one rejects.
    """
    us, ps = _sorted_desc(u_row, p_row, supplies)
    total = 0.0
    none_yet = 1.0
    for u, p in zip(us, ps):
        total += u * p * none_yet
        none_yet *= 1.0 - p
    return total


def exact_expected_utility(instance: Instance, rec: Recommendation) -> Evaluation:
    check_recommendation(instance, rec)
    u, p = instance.utilities, instance.accept_prob
    per = np.array([demand_expected_utility(u[i], p[i], row)
                    for i, row in enumerate(rec.lists)])
    return Evaluation(float(math.fsum(per)), per, "exact")


def enumerate_outcomes_value(instance: Instance, rec: Recommendation) -> Evaluation:
    """Expected value by summing over all 2^k acceptance outcomes per demand."""
    check_recommendation(instance, rec)
    u, p = instance.utilities, instance.accept_prob
    per = np.zeros(instance.num_demands)
    for i, row in enumerate(rec.lists):
        k = len(row)
        if k == 0:
            continue
        if k > MAX_ENUM_LIST:
            raise InstanceError(f"demand {i}: list of {k} supplies exceeds enumeration limit {MAX_ENUM_LIST}")
        cols = list(row)
        bits = ((np.arange(2 ** k)[:, None] >> np.arange(k)[None, :]) & 1).astype(bool)
        prob = np.prod(np.where(bits, p[i, cols], 1.0 - p[i, cols]), axis=1)
        best = np.max(np.where(bits, u[i, cols], 0.0), axis=1)
        per[i] = math.fsum(prob * best)
    return Evaluation(float(math.fsum(per)), per, "enumeration")


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """Sampled acceptance realizations, ``realizations[s, i, j]``."""

    realizations: np.ndarray
    seed: int
    correlation: float = 0.0  # weight of the supplier-level common factor

    def __post_init__(self):
        r = np.asarray(self.realizations, dtype=bool)
        r.setflags(write=False)
        object.__setattr__(self, "realizations", r)
        if r.ndim != 3 or r.shape[0] < 1:
            raise InstanceError("realizations must have shape (samples, demands, supplies)")

    @property
    def sample_count(self) -> int:
        return self.realizations.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.realizations.shape[1:]


def _draw_acceptance(p: np.ndarray, n: int, rng: np.random.Generator, rho: float) -> np.ndarray:
    nd, ns = p.shape
    cell = rng.random((n, nd, ns))
    if rho > 0:
        common = rng.random((n, 1, ns))
        use_common = rng.random((n, nd, ns)) < rho
        cell = np.where(use_common, common, cell)
    return cell < p[None, :, :]


def sample_scenarios(instance: Instance, sample_count: int, seed: int,
                     correlation: float = 0.0) -> ScenarioSet:
    """Draw Bernoulli acceptance scenarios.

    With ``correlation = rho > 0`` each cell's uniform is, with probability
    ``rho``, replaced by a uniform shared by every demand of the same supplier
    in that sample. Cells stay marginally Bernoulli(p_ij) and distinct
    suppliers stay independent. ``rho = 0`` reproduces independent sampling
    draw for draw.
    """
    if sample_count < 1:
        raise InstanceError("sample_count must be >= 1")
    if not 0.0 <= correlation <= 1.0:
        raise InstanceError(f"correlation {correlation} outside [0, 1]")
    rng = np.random.default_rng(seed)
    xi = _draw_acceptance(instance.accept_prob, sample_count, rng, correlation)
    return ScenarioSet(xi, seed, correlation)


def _per_sample_values(u: np.ndarray, xi: np.ndarray, rec: Recommendation) -> np.ndarray:
    """(samples, demands) best accepted utility of each demand."""
    n = xi.shape[0]
    out = np.zeros((n, len(rec.lists)))
    for i, row in enumerate(rec.lists):
        if row:
            cols = list(row)
            out[:, i] = np.max(np.where(xi[:, i, cols], u[i, cols], 0.0), axis=1)
    return out


def scenario_value(instance: Instance, rec: Recommendation, scenarios: ScenarioSet) -> Evaluation:
    """Sample-average utility when each demand takes its best accepting supply."""
    if scenarios.shape != instance.shape:
        raise InstanceError(f"scenario shape {scenarios.shape} != instance shape {instance.shape}")
    check_recommendation(instance, rec)
    vals = _per_sample_values(instance.utilities, scenarios.realizations, rec)
    per = vals.mean(axis=0)
    return Evaluation(float(per.sum()), per, "scenario_set", samples=scenarios.sample_count)


def monte_carlo_value(instance: Instance, rec: Recommendation, sample_count: int,
                      seed: int, correlation: float = 0.0) -> Evaluation:
    """Monte Carlo estimate with standard error ``std(totals) / sqrt(n)``.

    Scenarios are drawn in chunks so memory stays bounded; for a given seed
    the result does not depend on the chunk size of a previous call.
    """
    if sample_count < 1:
        raise InstanceError("sample_count must be >= 1")
    if not 0.0 <= correlation <= 1.0:
        raise InstanceError(f"correlation {correlation} outside [0, 1]")
    check_recommendation(instance, rec)
    cells = instance.num_demands * instance.num_supplies
    chunk = max(1, MC_CHUNK_CELLS // cells)
    seeds = np.random.SeedSequence(seed).spawn(-(-sample_count // chunk))
    per_sum = np.zeros(instance.num_demands)
    totals = np.empty(sample_count)
    done = 0
    for ss in seeds:
        n = min(chunk, sample_count - done)
        xi = _draw_acceptance(instance.accept_prob, n, np.random.default_rng(ss), correlation)
        vals = _per_sample_values(instance.utilities, xi, rec)
        per_sum += vals.sum(axis=0)
        totals[done:done + n] = vals.sum(axis=1)
        done += n
    per = per_sum / sample_count
    if sample_count > 1 and np.ptp(totals) > 0:
        stderr = float(totals.std(ddof=1) / math.sqrt(sample_count))
    else:
        stderr = 0.0
    return Evaluation(float(per.sum()), per, "monte_carlo", stderr=stderr, samples=sample_count)


# ---------------------------------------------------------------------------
# surrogate objective
# ---------------------------------------------------------------------------

def surrogate_logits(instance: Instance, tau: float) -> np.ndarray:
    """``u / tau + log p`` (``-inf`` where ``p = 0``)."""
    if not tau > 0:
        raise InstanceError(f"tau must be > 0, got {tau}")
    with np.errstate(divide="ignore"):
        return instance.utilities / tau + np.log(instance.accept_prob)


def demand_surrogate(logits_row, supplies, tau: float, log_eps: float = EMPTY_LOG_EPS) -> float:
    """``tau * log(sum_j p_j exp(u_j / tau) + eps)`` evaluated in log space."""
    vals = [log_eps]
    vals.extend(logits_row[j] for j in supplies)
    m = max(vals)
    s = math.fsum(math.exp(v - m) for v in vals)
    return tau * (m + math.log(s))


def surrogate_per_demand(instance: Instance, rec: Recommendation, tau: float,
                         log_eps: float = EMPTY_LOG_EPS) -> np.ndarray:
    check_recommendation(instance, rec)
    lg = surrogate_logits(instance, tau)
    return np.array([demand_surrogate(lg[i], row, tau, log_eps)
                     for i, row in enumerate(rec.lists)])


def surrogate_value(instance: Instance, rec: Recommendation, tau: float,
                    log_eps: float = EMPTY_LOG_EPS) -> float:
    """Log-sum-exp surrogate ``tau * sum_i log sum_j exp(u_ij/tau) p_ij x_ij``.

    A demand with no recommendation contributes ``tau * log_eps``; with the
    default that is -1000 tau, far below any covered demand.
    """
    return float(math.fsum(surrogate_per_demand(instance, rec, tau, log_eps)))


def corollary1_upper(instance: Instance, rec: Recommendation, tau: float) -> float:
    """Upper bound ``tau * sum_i log sum_j ((exp(u_ij/tau) - 1) p_ij + 1) x_ij``.

    Each summand is ``exp(u/tau) p + (1 - p)``, combined in log space. Demands
    with no recommendation contribute 0 (their expected utility is 0).
    """
    check_recommendation(instance, rec)
    lg = surrogate_logits(instance, tau)
    p = instance.accept_prob
    total = []
    for i, row in enumerate(rec.lists):
        if not row:
            continue
        cols = list(row)
        with np.errstate(divide="ignore"):
            terms = np.logaddexp(lg[i, cols], np.log1p(-p[i, cols]))
        total.append(tau * float(logsumexp(terms)))
    return float(math.fsum(total))


def lse_smooth_max(z, tau: float) -> float:
    """``tau * log(sum exp(z / tau))``; lies in ``[max z, max z + tau log n]``."""
    z = np.asarray(z, dtype=float)
    return tau * float(logsumexp(z / tau))


# ---------------------------------------------------------------------------
# out-of-sample perturbations
# ---------------------------------------------------------------------------

PERTURB_KINDS = {
    # kind: (down, up) half-widths of the redraw interval around p
    "OutL": (0.05, 0.0),
    "OutH": (0.0, 0.05),
    "OutNS": (0.025, 0.025),
    "OutNL": (0.1, 0.1),
}


@dataclass(frozen=True)
class PerturbSpec:
    kind: str
    seed: int = 0
    widths: Optional[tuple[float, float]] = None  # overrides the kind's (down, up)

    def __post_init__(self):
        if self.widths is None and self.kind not in PERTURB_KINDS:
            raise InstanceError(f"unknown perturbation kind {self.kind!r}")
        if self.widths is not None:
            object.__setattr__(self, "widths", tuple(float(w) for w in self.widths))
            if min(self.widths) < 0:
                raise InstanceError("perturbation widths must be >= 0")

    @property
    def interval(self) -> tuple[float, float]:
        return self.widths if self.widths is not None else PERTURB_KINDS[self.kind]


def perturb_probabilities(instance: Instance, spec: PerturbSpec) -> Instance:
    """Copy of ``instance`` with each p_ij redrawn uniformly in its interval."""
    down, up = spec.interval
    p = instance.accept_prob
    lo = np.maximum(0.0, p - down)
    hi = np.minimum(1.0, p + up)
    rng = np.random.default_rng(spec.seed)
    new_p = lo + (hi - lo) * rng.random(p.shape)
    new_p = np.clip(new_p, lo, hi)
    return instance.replace(accept_prob=new_p)
