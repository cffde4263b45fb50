"""Problem data model, feasibility checks, instance generators and JSON I/O.

An :class:`Instance` holds the utility matrix ``u[i, j]`` (demand ``i``,
supply ``j``), the acceptance-probability matrix ``p[i, j]``, the
recommendation cap ``theta`` and, optionally, a distance matrix used by the
nearby-priority baseline.

All generators draw from a single ``numpy.random.Generator`` (PCG64) seeded
with the config seed. Draw order is fixed: utility components first (demand
terms, then supply terms, then pair terms, each row-major), probabilities
after, so two builds from the same config are bit-identical.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

SCHEMA_VERSION = 1

UTILITY_MODELS = ("synthetic_3part", "uniform_range", "case_like", "adversarial")
PROB_MODELS = ("homogeneous", "uniform_range", "case_like")

# (quantile level, acceptance rate) knots for historical driver acceptance.
HISTORICAL_RATE_KNOTS = (
    (0.0, 0.0),
    (0.005, 0.05),
    (0.25, 0.45),
    (0.50, 0.64),
    (0.75, 0.76),
    (0.969, 0.95),
    (1.0, 1.0),
)


class InstanceError(ValueError):
    """Raised when instance data violates the model invariants."""


class InstanceFormatError(InstanceError):
    """Raised when an instance file cannot be parsed."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Instance:
    num_demands: int
    num_supplies: int
    theta: int
    utilities: np.ndarray
    accept_prob: np.ndarray
    distances: Optional[np.ndarray] = None
    label: str = ""
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "utilities", _frozen(self.utilities))
        object.__setattr__(self, "accept_prob", _frozen(self.accept_prob))
        if self.distances is not None:
            object.__setattr__(self, "distances", _frozen(self.distances))
        self.check()

    def check(self) -> None:
        nd, ns = self.num_demands, self.num_supplies
        if int(nd) != nd or nd < 1:
            raise InstanceError(f"num_demands must be a positive integer, got {nd}")
        if int(ns) != ns or ns < 1:
            raise InstanceError(f"num_supplies must be a positive integer, got {ns}")
        if int(self.theta) != self.theta or self.theta < 1:
            raise InstanceError(f"theta must be >= 1, got {self.theta}")
        shape = (nd, ns)
        for name in ("utilities", "accept_prob", "distances"):
            m = getattr(self, name)
            if m is not None and m.shape != shape:
                raise InstanceError(f"{name} has shape {m.shape}, expected {shape}")
        u, p = self.utilities, self.accept_prob
        bad = np.argwhere(~np.isfinite(u) | (u < 0))
        if bad.size:
            i, j = bad[0]
            raise InstanceError(f"utility u[{i},{j}]={u[i, j]!r} must be finite and >= 0")
        bad = np.argwhere(~((p >= 0) & (p <= 1)))
        if bad.size:
            i, j = bad[0]
            raise InstanceError(f"acceptance probability p[{i},{j}]={p[i, j]!r} outside [0, 1]")
        if self.distances is not None:
            d = self.distances
            bad = np.argwhere(~np.isfinite(d) | (d < 0))
            if bad.size:
                i, j = bad[0]
                raise InstanceError(f"distance d[{i},{j}]={d[i, j]!r} must be finite and >= 0")

    @property
    def gamma(self) -> float:
        """Supply-to-demand ratio ``num_supplies / num_demands``."""
        return self.num_supplies / self.num_demands

    @property
    def shape(self) -> tuple[int, int]:
        return (self.num_demands, self.num_supplies)

    def is_homogeneous(self, tol: float = 1e-12) -> bool:
        p = self.accept_prob
        return bool(np.ptp(p) <= tol)

    def replace(self, **changes) -> "Instance":
        kw = dict(
            num_demands=self.num_demands,
            num_supplies=self.num_supplies,
            theta=self.theta,
            utilities=self.utilities,
            accept_prob=self.accept_prob,
            distances=self.distances,
            label=self.label,
            seed=self.seed,
        )
        kw.update(changes)
        return Instance(**kw)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return a.shape == b.shape and np.array_equal(a, b)

        return (
            self.num_demands == other.num_demands
            and self.num_supplies == other.num_supplies
            and self.theta == other.theta
            and self.label == other.label
            and self.seed == other.seed
            and same(self.utilities, other.utilities)
            and same(self.accept_prob, other.accept_prob)
            and same(self.distances, other.distances)
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class Recommendation:
    """Per-demand recommended supply lists (the rows of ``x``)."""

    lists: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "lists", tuple(tuple(int(j) for j in row) for row in self.lists)
        )

    @classmethod
    def empty(cls, num_demands: int) -> "Recommendation":
        return cls(tuple(() for _ in range(num_demands)))

    @classmethod
    def from_matrix(cls, x) -> "Recommendation":
        x = np.asarray(x)
        return cls(tuple(tuple(np.flatnonzero(row).tolist()) for row in x))

    @classmethod
    def from_assignment(cls, owner: Sequence[int], num_demands: int) -> "Recommendation":
        """Build from ``owner[j]`` = demand of supply ``j`` (or -1 for none)."""
        lists = [[] for _ in range(num_demands)]
        for j, i in enumerate(owner):
            if i >= 0:
                lists[i].append(j)
        return cls(tuple(tuple(row) for row in lists))

    def to_matrix(self, num_supplies: int) -> np.ndarray:
        x = np.zeros((len(self.lists), num_supplies), dtype=np.int8)
        for i, row in enumerate(self.lists):
            x[i, list(row)] = 1
        return x

    def canonical(self) -> "Recommendation":
        return Recommendation(tuple(tuple(sorted(row)) for row in self.lists))

    @property
    def size(self) -> int:
        return sum(len(row) for row in self.lists)

    def to_dict(self) -> dict:
        return {"lists": [list(row) for row in self.lists]}

    @classmethod
    def from_dict(cls, d: dict) -> "Recommendation":
        return cls(tuple(tuple(row) for row in d["lists"]))


@dataclass(frozen=True)
class Verdict:
    valid: bool
    constraint: Optional[str] = None  # "shape" | "cap" | "exclusive" | "index" | "distinct"
    index: Optional[int] = None
    message: str = ""

    def __bool__(self) -> bool:
        return self.valid


def validate_recommendation(instance: Instance, rec: Recommendation) -> Verdict:
    """Check the cap, exclusivity and index-range constraints.

    Returns a :class:`Verdict`; never raises. On failure ``constraint`` names
    the violated rule and ``index`` the offending demand (for ``cap``,
    ``distinct`` and ``shape``) or supply (for ``exclusive`` and ``index``).
    """
    if len(rec.lists) != instance.num_demands:
        return Verdict(False, "shape", len(rec.lists),
                       f"expected {instance.num_demands} demand lists, got {len(rec.lists)}")
    owner: dict[int, int] = {}
    for i, row in enumerate(rec.lists):
        if len(row) > instance.theta:
            return Verdict(False, "cap", i,
                           f"demand {i} has {len(row)} recommendations > theta={instance.theta}")
        if len(set(row)) != len(row):
            return Verdict(False, "distinct", i, f"demand {i} lists a supply twice")
        for j in row:
            if not 0 <= j < instance.num_supplies:
                return Verdict(False, "index", j, f"supply index {j} out of range")
            if j in owner:
                return Verdict(False, "exclusive", j,
                               f"supply {j} recommended to demands {owner[j]} and {i}")
            owner[j] = i
    return Verdict(True)


def check_recommendation(instance: Instance, rec: Recommendation) -> None:
    v = validate_recommendation(instance, rec)
    if not v.valid:
        raise InstanceError(f"invalid recommendation: {v.message}")


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

Scalar_or_seq = Union[float, Sequence[float]]


@dataclass(frozen=True)
class GenConfig:
    """Instance-generation recipe.

    ``utility_low``/``utility_high`` are the per-demand bounds ``a_i``/``b_i``
    for ``uniform_range`` (scalar or one value per demand) and ``a``/``b``
    for ``adversarial``. ``p`` is used by ``homogeneous``; ``p_low``/``p_high``
    by ``uniform_range``.
    """

    num_demands: int
    num_supplies: int
    theta: int
    utility_model: str = "synthetic_3part"
    prob_model: str = "homogeneous"
    utility_low: Scalar_or_seq = 0.4
    utility_high: Scalar_or_seq = 1.0
    p: float = 0.8
    p_low: float = 0.7
    p_high: float = 0.9
    seed: int = 0
    label: str = ""

    def __post_init__(self):
        if isinstance(self.utility_low, (list, np.ndarray)):
            object.__setattr__(self, "utility_low", tuple(float(v) for v in self.utility_low))
        if isinstance(self.utility_high, (list, np.ndarray)):
            object.__setattr__(self, "utility_high", tuple(float(v) for v in self.utility_high))
        self.check()

    def check(self) -> None:
        if self.num_demands < 1 or self.num_supplies < 1 or self.theta < 1:
            raise InstanceError("num_demands, num_supplies and theta must be positive")
        if self.utility_model not in UTILITY_MODELS:
            raise InstanceError(f"unknown utility_model {self.utility_model!r}")
        if self.prob_model not in PROB_MODELS:
            raise InstanceError(f"unknown prob_model {self.prob_model!r}")
        lo = np.broadcast_to(np.asarray(self.utility_low, float), (self.num_demands,))
        hi = np.broadcast_to(np.asarray(self.utility_high, float), (self.num_demands,))
        if np.any(lo > hi) or np.any(lo < 0):
            raise InstanceError("utility range must satisfy 0 <= low <= high")
        if not 0 <= self.p <= 1:
            raise InstanceError(f"p={self.p} outside [0, 1]")
        if not 0 <= self.p_low <= self.p_high <= 1:
            raise InstanceError("probability range must satisfy 0 <= p_low <= p_high <= 1")

    @property
    def default_label(self) -> str:
        return self.label or f"D{self.num_demands}-S{self.num_supplies}-T{self.theta}"

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        for k in ("utility_low", "utility_high"):
            if isinstance(d[k], tuple):
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenConfig":
        return cls(**d)


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _draw_probabilities(cfg: GenConfig, rng: np.random.Generator) -> np.ndarray:
    shape = (cfg.num_demands, cfg.num_supplies)
    if cfg.prob_model == "homogeneous":
        return np.full(shape, float(cfg.p))
    if cfg.prob_model == "uniform_range":
        return rng.uniform(cfg.p_low, cfg.p_high, size=shape)
    raise InstanceError("case_like probabilities are produced by generate_case_like")


def generate_synthetic(cfg: GenConfig) -> Instance:
    """Random instance with ``synthetic_3part`` or ``uniform_range`` utilities.

    ``synthetic_3part``: ``u = 0.4 + 0.2 uD_i + 0.2 uS_j + 0.2 uR_ij`` with
    every component uniform on [0, 1], so ``u`` lies in [0.4, 1.0].
    ``uniform_range``: ``u_ij`` uniform on ``[a_i, b_i]``.
    """
    if cfg.utility_model not in ("synthetic_3part", "uniform_range"):
        raise InstanceError(f"generate_synthetic does not handle {cfg.utility_model!r}")
    if cfg.prob_model == "case_like":
        raise InstanceError("case_like probabilities need generate_case_like")
    nd, ns = cfg.num_demands, cfg.num_supplies
    rng = _rng(cfg.seed)
    if cfg.utility_model == "synthetic_3part":
        ud = rng.random(nd)
        us = rng.random(ns)
        ur = rng.random((nd, ns))
        u = 0.4 + 0.2 * ud[:, None] + 0.2 * us[None, :] + 0.2 * ur
    else:
        lo = np.broadcast_to(np.asarray(cfg.utility_low, float), (nd,))
        hi = np.broadcast_to(np.asarray(cfg.utility_high, float), (nd,))
        u = lo[:, None] + (hi - lo)[:, None] * rng.random((nd, ns))
    p = _draw_probabilities(cfg, rng)
    return Instance(nd, ns, cfg.theta, u, p, label=cfg.default_label, seed=cfg.seed)


def generate_adversarial_dap(num_demands: int, theta: int, gamma: float, a: float,
                             b: float, p: float, seed: int = 0) -> Instance:
    """Instance on which the direct-assignment policy performs poorly.

    The first ``ceil(gamma * num_demands / theta)`` demands value every supply
    at ``b``; every other pair is worth ``a``. All acceptance probabilities
    equal ``p``. The construction is deterministic; ``seed`` is only recorded.
    """
    if not 0 < a <= b:
        raise InstanceError(f"need 0 < a <= b, got a={a}, b={b}")
    if not 0 < p <= 1:
        raise InstanceError(f"need 0 < p <= 1, got p={p}")
    if num_demands < 1 or theta < 1 or gamma <= 0:
        raise InstanceError("num_demands, theta and gamma must be positive")
    ns_float = gamma * num_demands
    ns = int(round(ns_float))
    if abs(ns - ns_float) > 1e-9 or ns < 1:
        raise InstanceError(f"gamma * num_demands = {ns_float} is not a positive integer")
    n_high = min(num_demands, math.ceil(ns / theta - 1e-12))
    u = np.full((num_demands, ns), float(a))
    u[:n_high, :] = float(b)
    prob = np.full((num_demands, ns), float(p))
    label = f"ADV-D{num_demands}-S{ns}-T{theta}"
    return Instance(num_demands, ns, theta, u, prob, label=label, seed=seed)


def historical_rate_quantile(levels) -> np.ndarray:
    """Piecewise-linear quantile function of driver historical acceptance."""
    xs, ys = zip(*HISTORICAL_RATE_KNOTS)
    return np.interp(levels, xs, ys)


def sample_historical_rates(n: int, rng: np.random.Generator) -> np.ndarray:
    return historical_rate_quantile(rng.random(n))


def _minmax_columns(m: np.ndarray, lo: float, hi: float) -> np.ndarray:
    cmin = m.min(axis=0, keepdims=True)
    span = m.max(axis=0, keepdims=True) - cmin
    out = np.full_like(m, (lo + hi) / 2.0)
    ok = np.broadcast_to(span > 0, m.shape)
    scaled = lo + (hi - lo) * (m - cmin) / np.where(span > 0, span, 1.0)
    out[ok] = scaled[ok]
    return out


def generate_case_like(cfg: GenConfig, seed: Optional[int] = None) -> Instance:
    """Freight-platform-like instance.

    Utility ``0.1 eD_j + 0.1 eO_i + 0.2 rO_i + 0.3 dbar_ij + 0.3 f_ij`` with
    evaluation scores, revenue and familiarity uniform on [0, 1], distances
    uniform on [0, 1] and ``dbar = (max d - d) / (max d - min d)``.

    Acceptance ``p_ij = pH_j + 0.025 dR_ij + 0.025 fR_ij`` when the driver's
    historical rate ``pH_j`` is in [0.05, 0.95], else ``pH_j``. ``dR`` and
    ``fR`` rescale ``dbar`` and ``f`` per driver (column) to [-1, 1].
    """
    seed = cfg.seed if seed is None else seed
    nd, ns = cfg.num_demands, cfg.num_supplies
    rng = _rng(seed)
    e_order = rng.random(nd)
    r_order = rng.random(nd)
    e_driver = rng.random(ns)
    dist = rng.random((nd, ns))
    fam = rng.random((nd, ns))
    p_hist = sample_historical_rates(ns, rng)

    dmin, dmax = dist.min(), dist.max()
    dbar = (dmax - dist) / (dmax - dmin) if dmax > dmin else np.zeros_like(dist)
    u = (0.1 * e_driver[None, :] + 0.1 * e_order[:, None] + 0.2 * r_order[:, None]
         + 0.3 * dbar + 0.3 * fam)

    d_rel = _minmax_columns(dbar, -1.0, 1.0)
    f_rel = _minmax_columns(fam, -1.0, 1.0)
    adjust = (p_hist >= 0.05) & (p_hist <= 0.95)
    p = np.broadcast_to(p_hist[None, :], (nd, ns)).copy()
    p += np.where(adjust[None, :], 0.025 * d_rel + 0.025 * f_rel, 0.0)
    label = cfg.label or f"CASE-D{nd}-S{ns}-T{cfg.theta}"
    return Instance(nd, ns, cfg.theta, u, p, distances=dist, label=label, seed=seed)


def generate_instance(cfg: GenConfig) -> Instance:
    """Dispatch on ``cfg.utility_model``."""
    if cfg.utility_model == "case_like":
        return generate_case_like(cfg)
    if cfg.utility_model == "adversarial":
        gamma = cfg.num_supplies / cfg.num_demands
        a = float(np.min(cfg.utility_low))
        b = float(np.max(cfg.utility_high))
        inst = generate_adversarial_dap(cfg.num_demands, cfg.theta, gamma, a, b, cfg.p, cfg.seed)
        return inst.replace(label=cfg.label or inst.label)
    return generate_synthetic(cfg)


# ---------------------------------------------------------------------------
# JSON I/O
# ---------------------------------------------------------------------------

def instance_to_dict(instance: Instance) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "recmatch.instance",
        "num_demands": instance.num_demands,
        "num_supplies": instance.num_supplies,
        "theta": instance.theta,
        "label": instance.label,
        "seed": instance.seed,
        "utilities": instance.utilities.tolist(),
        "accept_prob": instance.accept_prob.tolist(),
        "distances": None if instance.distances is None else instance.distances.tolist(),
    }


def instance_from_dict(d: dict) -> Instance:
    if not isinstance(d, dict):
        raise InstanceFormatError("instance document must be a JSON object")
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise InstanceFormatError(
            f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    try:
        return Instance(
            num_demands=int(d["num_demands"]),
            num_supplies=int(d["num_supplies"]),
            theta=int(d["theta"]),
            utilities=np.asarray(d["utilities"], dtype=float),
            accept_prob=np.asarray(d["accept_prob"], dtype=float),
            distances=None if d.get("distances") is None
            else np.asarray(d["distances"], dtype=float),
            label=str(d.get("label", "")),
            seed=None if d.get("seed") is None else int(d["seed"]),
        )
    except KeyError as exc:
        raise InstanceFormatError(f"missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InstanceError):
            raise
        raise InstanceFormatError(f"malformed instance data: {exc}") from None


def save_instance(instance: Instance, path) -> None:
    """Write ``instance`` as JSON; the file is replaced atomically."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(instance_to_dict(instance), fh, ensure_ascii=False)
    os.replace(tmp, path)


def load_instance(path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: not valid JSON ({exc.msg} at char {exc.pos})") from None
    return instance_from_dict(doc)
