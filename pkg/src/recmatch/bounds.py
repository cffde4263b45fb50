"""Parametric approximation-gap guarantees for the surrogate policy.

All quantities are closed-form arithmetic on a :class:`BoundInputs`:
``q = 1 - (1 - p)^theta`` for a common probability ``p``, ``qbar`` the same
at ``p_hi``, and the "extra" demand set of size
``(num_supplies - floor(gamma) * num_demands)^+`` made of the demands with
the largest utility lower bounds ``a_i`` (ties broken by lower index).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .instance import Instance
from .solvers import SolverError, brute_force_opt, solve_dap, solve_homogeneous_exact


class BoundError(ValueError):
    """Raised when a bound's hypotheses or inputs are violated."""


@dataclass(frozen=True)
class BoundInputs:
    theta: int
    tau: float
    num_demands: int
    a: tuple
    p_lo: float
    p_hi: float
    gamma: Fraction
    b: Optional[tuple] = None

    def __post_init__(self):
        a = np.broadcast_to(np.asarray(self.a, float), (self.num_demands,))
        object.__setattr__(self, "a", tuple(a.tolist()))
        if self.b is not None:
            b = np.broadcast_to(np.asarray(self.b, float), (self.num_demands,))
            object.__setattr__(self, "b", tuple(b.tolist()))
            if np.any(np.asarray(self.b) < np.asarray(self.a)):
                raise BoundError("need a_i <= b_i")
        object.__setattr__(self, "gamma", Fraction(self.gamma).limit_denominator(10**9))
        if self.theta < 1 or self.num_demands < 1:
            raise BoundError("theta and num_demands must be positive")
        if not self.tau > 0:
            raise BoundError("tau must be > 0")
        if not 0 < self.p_lo <= self.p_hi <= 1:
            raise BoundError(f"need 0 < p_lo <= p_hi <= 1, got {self.p_lo}, {self.p_hi}")
        if self.gamma <= 0:
            raise BoundError("gamma must be positive")

    @classmethod
    def from_instance(cls, instance: Instance, tau: float, a=None, b=None) -> "BoundInputs":
        """Inputs read off an instance; ``a``/``b`` default to row min/max utility."""
        u = instance.utilities
        return cls(
            theta=instance.theta,
            tau=tau,
            num_demands=instance.num_demands,
            a=u.min(axis=1) if a is None else a,
            b=u.max(axis=1) if b is None else b,
            p_lo=float(instance.accept_prob.min()),
            p_hi=float(instance.accept_prob.max()),
            gamma=Fraction(instance.num_supplies, instance.num_demands),
        )

    @property
    def num_supplies(self) -> int:
        return int(self.gamma * self.num_demands)

    @property
    def gamma_floor(self) -> int:
        return math.floor(self.gamma)

    @property
    def gamma_ceil(self) -> int:
        return math.ceil(self.gamma)

    @property
    def q(self) -> float:
        return 1.0 - (1.0 - self.p_lo) ** self.theta

    @property
    def q_bar(self) -> float:
        return 1.0 - (1.0 - self.p_hi) ** self.theta

    @property
    def extra_count(self) -> int:
        return max(0, self.num_supplies - self.gamma_floor * self.num_demands)

    def extra_demands(self) -> list[int]:
        order = sorted(range(self.num_demands), key=lambda i: (-self.a[i], i))
        return sorted(order[: self.extra_count])


@dataclass(frozen=True)
class BoundReport:
    gap_bound: float
    numerator: float
    denominator: float
    components: dict = field(default_factory=dict)
    guaranteed: bool = True

    def to_dict(self) -> dict:
        return {
            "gap_bound": self.gap_bound,
            "numerator": self.numerator,
            "denominator": self.denominator,
            "components": dict(self.components),
            "guaranteed": self.guaranteed,
        }


def theorem1_bound(inputs: BoundInputs, allow_off_hypothesis: bool = False) -> BoundReport:
    """Expected-gap bound for common ``p`` and uniform utilities on ``[a_i, b_i]``.

    ``[tau n log(theta) + (1 - p/q) S] / [sum a + (theta/q - 1/p + 1)/(theta+1) S]``
    with ``S = sum (b_i - a_i)``. The guarantee needs ``gamma == theta``;
    ``allow_off_hypothesis`` evaluates the formula anyway and marks the
    report as not guaranteed.
    """
    if inputs.p_lo != inputs.p_hi:
        raise BoundError("theorem1_bound needs a homogeneous probability (p_lo == p_hi)")
    if inputs.b is None:
        raise BoundError("theorem1_bound needs upper bounds b")
    guaranteed = inputs.gamma == inputs.theta
    if not guaranteed:
        if not allow_off_hypothesis:
            raise BoundError(f"theorem1_bound requires gamma == theta (got {inputs.gamma} vs {inputs.theta})")
        warnings.warn("theorem1_bound evaluated off its gamma == theta hypothesis", stacklevel=2)
    p, q, theta, n = inputs.p_lo, inputs.q, inputs.theta, inputs.num_demands
    spread = math.fsum(b - a for a, b in zip(inputs.a, inputs.b))
    tau_term = inputs.tau * n * math.log(theta)
    prob_term = (1.0 - p / q) * spread
    base = math.fsum(inputs.a)
    spread_coef = (theta / q - 1.0 / p + 1.0) / (theta + 1)
    num = tau_term + prob_term
    den = base + spread_coef * spread
    return BoundReport(
        num / den, num, den,
        {"tau_term": tau_term, "probability_term": prob_term,
         "base_value": base, "spread_value": spread_coef * spread, "q": q},
        guaranteed,
    )


def _theorem2_denominator(inputs: BoundInputs) -> float:
    pl, g = inputs.p_lo, inputs.gamma_floor
    extra = set(inputs.extra_demands())
    hit_extra = 1.0 - (1.0 - pl) ** (g + 1)
    hit_rest = 1.0 - (1.0 - pl) ** g
    return math.fsum(
        (hit_extra if i in extra else hit_rest) * a for i, a in enumerate(inputs.a))


def theorem2_bound(inputs: BoundInputs) -> BoundReport:
    """Per-instance gap bound for heterogeneous ``p`` and utilities ``>= a_i``.

    ``1 - p_lo/qbar + tau p_lo n log(theta p_hi / p_lo) / D`` where ``D``
    credits each extra demand ``(1 - (1-p_lo)^(floor(gamma)+1)) a_i`` and every
    other demand ``(1 - (1-p_lo)^floor(gamma)) a_i``. A zero denominator gives
    an infinite (vacuous) bound.
    """
    pl, ph, n = inputs.p_lo, inputs.p_hi, inputs.num_demands
    prob_term = 1.0 - pl / inputs.q_bar
    num = inputs.tau * pl * n * math.log(inputs.theta * ph / pl)
    den = _theorem2_denominator(inputs)
    tau_frac = num / den if den > 0 else math.inf
    return BoundReport(
        prob_term + tau_frac, num, den,
        {"probability_term": prob_term, "tau_term": tau_frac, "q_bar": inputs.q_bar,
         "extra_demands": inputs.extra_demands()},
    )


def correlated_bound(inputs: BoundInputs) -> BoundReport:
    """Gap bound when a supplier's acceptances are correlated across demands.

    ``1 - p_lo + tau n log(theta p_hi / p_lo) / sum_{i in A} a_i`` with ``A``
    the extra demands when ``floor(gamma) == 0`` and all demands otherwise.
    """
    pl, ph, n = inputs.p_lo, inputs.p_hi, inputs.num_demands
    if inputs.gamma_floor == 0:
        members = inputs.extra_demands()
    else:
        members = list(range(n))
    den = math.fsum(inputs.a[i] for i in members)
    num = inputs.tau * n * math.log(inputs.theta * ph / pl)
    tau_frac = num / den if den > 0 else math.inf
    prob_term = 1.0 - pl
    return BoundReport(
        prob_term + tau_frac, num, den,
        {"probability_term": prob_term, "tau_term": tau_frac,
         "theorem2_probability_term": 1.0 - pl / inputs.q_bar, "members": members},
    )


def uniform_baseline_value(theta: int, p: float, a: float, b: float) -> float:
    """Expected best accepted utility of ``theta`` i.i.d. uniform[a, b] offers.

    Each offer is accepted independently with probability ``p``:
    ``a (1 - (1-p)^theta) + (b - a)(1 - (1 - (1-p)^(theta+1)) / ((theta+1) p))``.
    ``p = 0`` returns 0.
    """
    if not 0 <= p <= 1:
        raise BoundError(f"p={p} outside [0, 1]")
    if a > b:
        raise BoundError("need a <= b")
    if p == 0:
        return 0.0
    q = 1.0 - (1.0 - p) ** theta
    return a * q + (b - a) * (1.0 - (1.0 - (1.0 - p) ** (theta + 1)) / ((theta + 1) * p))


def dap_gap_certificate(instance: Instance, enum_budget: int = 200_000) -> float:
    """Realized relative shortfall of the direct-assignment policy.

    The exact reference comes from the ranked-slot solver when probabilities
    are homogeneous, otherwise from enumeration if the instance is small.
    """
    if instance.is_homogeneous():
        best = solve_homogeneous_exact(instance).exact_value
    else:
        try:
            best = brute_force_opt(instance, enum_budget).exact_value
        except SolverError as exc:
            raise BoundError(f"no exact reference available: {exc}") from None
    dap = solve_dap(instance).exact_value
    if best <= 0:
        return 0.0
    return max(0.0, (best - dap) / best)


def dap_gap_lower_bound(num_demands: int, theta: int, gamma: float, a: float, b: float,
                        p: float) -> float:
    """Lower bound on the DAP gap for the adversarial family."""
    n_high = math.ceil(gamma * num_demands / theta - 1e-12)
    return 1.0 - n_high * b / (min(num_demands, gamma * num_demands) * p * a)
