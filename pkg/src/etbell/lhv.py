"""Local hidden-variable strategies with time tags, and what postselection lets them do.

A local deterministic strategy answers each of its two settings with a
(time tag, outcome) pair: 4 choices per setting, 16 strategies per party,
256 joint strategies. Local index ``i`` encodes setting ``x`` in bits
``2x`` (outcome, 0 -> +1, 1 -> -1) and ``2x + 1`` (tag, 0 = early,
1 = late). Joint index is ``16 * i_a + i_b``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Literal, Mapping

import numpy as np

from .errors import DegeneratePostselectionError, DomainError, SolverError
from .quantum import CHSH_SIGNS, SETTING_LABELS, MeasurementSettings, coincidence_probabilities, werner_like
from .simplex import linprog_simplex

N_LOCAL = 16
N_JOINT = N_LOCAL * N_LOCAL
RATE_GRID = (0.25, 0.5, 0.75, 1.0)
# (x, y) setting indices per CHSH label
PAIR_INDEX = {"A0B0": (0, 0), "A1B0": (1, 0), "A0B1": (0, 1), "A1B1": (1, 1)}
OUTCOME_PAIRS = ((1, 1), (1, -1), (-1, 1), (-1, -1))  # port (1,1), (1,2), (2,1), (2,2)


@dataclass(frozen=True)
class LocalStrategy:
    """One party's response table: setting -> (tag, outcome)."""

    tags: tuple[int, int]
    outcomes: tuple[int, int]

    @classmethod
    def from_index(cls, i: int) -> "LocalStrategy":
        if not 0 <= i < N_LOCAL:
            raise DomainError(f"local strategy index must be in [0, 16), got {i}")
        tags = tuple((i >> (2 * x + 1)) & 1 for x in (0, 1))
        outs = tuple(1 - 2 * ((i >> (2 * x)) & 1) for x in (0, 1))
        return cls(tags, outs)

    @property
    def index(self) -> int:
        i = 0
        for x in (0, 1):
            i |= (self.tags[x] & 1) << (2 * x + 1)
            i |= (0 if self.outcomes[x] == 1 else 1) << (2 * x)
        return i

    def respond(self, setting: int) -> tuple[str, int]:
        return ("early", "late")[self.tags[setting]], self.outcomes[setting]


def enumerate_joint_strategies() -> list[tuple[LocalStrategy, LocalStrategy]]:
    """All 256 joint deterministic strategies, ordered by joint index."""
    return [(LocalStrategy.from_index(ia), LocalStrategy.from_index(ib))
            for ia, ib in itertools.product(range(N_LOCAL), repeat=2)]


def _tables() -> tuple[np.ndarray, np.ndarray]:
    tags = np.zeros((N_JOINT, 2, 2), dtype=np.int64)  # [lambda, party, setting]
    outs = np.zeros((N_JOINT, 2, 2), dtype=np.int64)
    for lam, (sa, sb) in enumerate(enumerate_joint_strategies()):
        tags[lam, 0], outs[lam, 0] = sa.tags, sa.outcomes
        tags[lam, 1], outs[lam, 1] = sb.tags, sb.outcomes
    return tags, outs


TAGS, OUTCOMES = _tables()


@dataclass(frozen=True)
class PostselectionRule:
    """Which joint events survive selection.

    ``tag_match`` keeps an event when both time tags agree (Franson). For
    ``setting_independent`` acceptance depends on the strategy only; by
    default a strategy is kept when all four of its tags coincide, so no
    tag can react to a setting.
    """

    kind: Literal["none", "tag_match", "setting_independent"] = "none"
    acceptance: tuple[bool, ...] | None = None

    def __post_init__(self):
        aliases = {"franson": "tag_match", "hug": "setting_independent"}
        kind = aliases.get(self.kind, self.kind)
        if kind not in ("none", "tag_match", "setting_independent"):
            raise DomainError(f"unknown postselection rule {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.acceptance is not None:
            if kind != "setting_independent":
                raise DomainError("a custom acceptance vector only applies to setting_independent")
            if len(self.acceptance) != N_JOINT:
                raise DomainError(f"acceptance vector must have {N_JOINT} entries")
            object.__setattr__(self, "acceptance", tuple(bool(a) for a in self.acceptance))

    def accept(self) -> np.ndarray:
        """Boolean array [lambda, x, y]."""
        if self.kind == "none":
            return np.ones((N_JOINT, 2, 2), dtype=bool)
        if self.kind == "tag_match":
            return TAGS[:, 0, :, None] == TAGS[:, 1, None, :]
        if self.acceptance is not None:
            per = np.array(self.acceptance, dtype=bool)
        else:
            per = np.all(TAGS.reshape(N_JOINT, 4) == TAGS[:, :1, 0], axis=1)
        return np.broadcast_to(per[:, None, None], (N_JOINT, 2, 2)).copy()


def products() -> np.ndarray:
    """Outcome product out_A(x) * out_B(y) as [lambda, x, y]."""
    return OUTCOMES[:, 0, :, None] * OUTCOMES[:, 1, None, :]


@dataclass(frozen=True)
class StrategyMixture:
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.size != N_JOINT:
            raise DomainError(f"mixture needs {N_JOINT} weights, got {w.size}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("mixture weights must be finite and nonnegative")
        total = w.sum()
        if total <= 0:
            raise DomainError("mixture weights sum to zero")
        w = w / total
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def pure(cls, index: int) -> "StrategyMixture":
        w = np.zeros(N_JOINT)
        w[index] = 1.0
        return cls(w)

    @classmethod
    def of(cls, entries: Mapping[int, float]) -> "StrategyMixture":
        w = np.zeros(N_JOINT)
        for k, v in entries.items():
            w[k] += v
        return cls(w)

    def support(self, tol: float = 0.0) -> list[tuple[int, float]]:
        return [(int(k), float(self.weights[k])) for k in np.flatnonzero(self.weights > tol)]

    def to_json_list(self) -> list[dict]:
        return [{"strategy_index": k, "weight": w} for k, w in self.support()]

    @classmethod
    def from_json_list(cls, items) -> "StrategyMixture":
        return cls.of({int(d["strategy_index"]): float(d["weight"]) for d in items})


def postselected_correlators(mixture: StrategyMixture, rule: PostselectionRule) -> dict[str, tuple[float, float]]:
    """(E, selection rate) per setting pair label."""
    w = mixture.weights
    acc = rule.accept()
    prod = products()
    out = {}
    for label, (x, y) in PAIR_INDEX.items():
        rate = float(w @ acc[:, x, y])
        if rate <= 0:
            raise DegeneratePostselectionError(f"no events selected at setting pair {label}")
        out[label] = (float(w @ (acc[:, x, y] * prod[:, x, y])) / rate, rate)
    return out


def postselected_chsh(mixture: StrategyMixture, rule: PostselectionRule) -> float:
    cors = postselected_correlators(mixture, rule)
    return sum(CHSH_SIGNS[k] * cors[k][0] for k in SETTING_LABELS)


def partial_chsh(mixture: StrategyMixture, rule: PostselectionRule) -> float:
    """CHSH sum over the setting pairs that have any selected events at all."""
    w = mixture.weights
    acc = rule.accept()
    prod = products()
    s = 0.0
    for label, (x, y) in PAIR_INDEX.items():
        rate = float(w @ acc[:, x, y])
        if rate > 0:
            s += CHSH_SIGNS[label] * float(w @ (acc[:, x, y] * prod[:, x, y])) / rate
    return s


def deterministic_chsh_values(rule: PostselectionRule) -> dict[int, int]:
    """Integer S of every strategy selected at all four setting pairs."""
    acc = rule.accept()
    prod = products()
    signs = {PAIR_INDEX[k]: int(CHSH_SIGNS[k]) for k in SETTING_LABELS}
    vals = {}
    for lam in range(N_JOINT):
        if acc[lam].all():
            vals[lam] = sum(sgn * int(prod[lam, x, y]) for (x, y), sgn in signs.items())
    return vals


@dataclass
class AdversaryResult:
    rule: str
    s_star: float
    witness: StrategyMixture
    selection_rates: dict[str, float]
    pure_max: int | None
    rate: float | None

    def to_dict(self) -> dict:
        return {
            "rule": self.rule,
            "s_star": self.s_star,
            "pure_max": self.pure_max,
            "selection_rate_target": self.rate,
            "selection_rates": self.selection_rates,
            "witness": self.witness.to_json_list(),
        }


def _chsh_objective(acc: np.ndarray, rate: float) -> np.ndarray:
    prod = products()
    obj = np.zeros(N_JOINT)
    for label, (x, y) in PAIR_INDEX.items():
        obj += CHSH_SIGNS[label] * acc[:, x, y] * prod[:, x, y]
    return obj / rate


def max_postselected_chsh(rule: PostselectionRule, rates=RATE_GRID) -> AdversaryResult:
    """Largest postselected S reachable by local strategies under ``rule``.

    Deterministic strategies are scanned exhaustively; mixtures are handled by
    fixing a common selection rate r at every setting pair, which turns the
    ratio objective into a linear one, and solving one LP per r in ``rates``.
    """
    acc = rule.accept().astype(float)
    pure = deterministic_chsh_values(rule)
    best_s = -math.inf
    best_w = None
    best_rate = None
    pure_max = None
    if pure:
        lam, pure_max = max(pure.items(), key=lambda kv: (kv[1], -kv[0]))
        best_s, best_w, best_rate = float(pure_max), StrategyMixture.pure(lam), float(acc[lam, 0, 0])
    for r in rates:
        a_eq = [np.ones(N_JOINT)] + [acc[:, x, y] for x, y in PAIR_INDEX.values()]
        b_eq = [1.0] + [r] * 4
        res = linprog_simplex(-_chsh_objective(acc, r), np.array(a_eq), np.array(b_eq))
        if not res.success:
            continue
        s = -float(res.objective)
        if s > best_s + 1e-9:
            best_s, best_w, best_rate = s, StrategyMixture(res.x), r
    if best_w is None:
        raise DegeneratePostselectionError("no mixture selects events at all four setting pairs")
    rates_out = {k: v[1] for k, v in postselected_correlators(best_w, rule).items()}
    return AdversaryResult(rule.kind, best_s, best_w, rates_out, pure_max, best_rate)


def quantum_targets(settings: MeasurementSettings, visibility: float) -> dict[str, np.ndarray]:
    """Conditional joint outcome distribution (p11, p12, p21, p22) per setting pair."""
    rho = werner_like(visibility)
    return {label: coincidence_probabilities(rho, a, b).as_array() for label, (a, b) in settings.pairs().items()}


@dataclass
class ReproductionResult:
    feasible: bool
    rule: str
    visibility: float
    rate: float
    mixture: StrategyMixture | None
    max_deviation: float | None
    phase1_residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "rule": self.rule,
            "visibility": self.visibility,
            "selection_rate_target": self.rate,
            "max_deviation": self.max_deviation,
            "witness": self.mixture.to_json_list() if self.mixture is not None else None,
        }


def reproduce_quantum_statistics(settings: MeasurementSettings, visibility: float,
                                 rule: PostselectionRule, rate: float = 0.5,
                                 tol: float = 1e-7) -> ReproductionResult:
    """Search for a mixture whose selected events match the quantum statistics.

    The unconditional probability of (setting pair, accepted, outcomes a, b)
    must equal ``rate * p_ab`` for all 16 combinations, where p_ab are the
    conditional coincidence probabilities at visibility ``visibility``.
    """
    if not 0.0 <= visibility <= 1.0:
        raise DomainError(f"visibility must lie in [0, 1], got {visibility}")
    acc = rule.accept()
    targets = quantum_targets(settings, visibility)
    rows = [np.ones(N_JOINT)]
    rhs = [1.0]
    for label, (x, y) in PAIR_INDEX.items():
        for k, (a, b) in enumerate(OUTCOME_PAIRS):
            hit = acc[:, x, y] & (OUTCOMES[:, 0, x] == a) & (OUTCOMES[:, 1, y] == b)
            rows.append(hit.astype(float))
            rhs.append(rate * targets[label][k])
    res = linprog_simplex(np.zeros(N_JOINT), np.array(rows), np.array(rhs))
    if not res.success:
        return ReproductionResult(False, rule.kind, visibility, rate, None, None, res.residual)
    mix = StrategyMixture(res.x)
    dev = check_joint_probabilities(mix, rule, settings, visibility, rate)
    if dev > tol:
        raise SolverError(f"LP solution misses the targets by {dev:.3g}", residual=dev)
    return ReproductionResult(True, rule.kind, visibility, rate, mix, dev)


def check_joint_probabilities(mixture: StrategyMixture, rule: PostselectionRule,
                              settings: MeasurementSettings, visibility: float, rate: float = 0.5) -> float:
    """Largest deviation between the mixture's 16 selected joint probabilities and
    the targets, recomputed strategy by strategy from the raw weights."""
    targets = quantum_targets(settings, visibility)
    custom = rule.acceptance
    got = {label: np.zeros(4) for label in SETTING_LABELS}
    for lam, w in enumerate(mixture.weights):
        if w == 0:
            continue
        sa = LocalStrategy.from_index(lam // N_LOCAL)
        sb = LocalStrategy.from_index(lam % N_LOCAL)
        for label, (x, y) in PAIR_INDEX.items():
            tag_a, out_a = sa.respond(x)
            tag_b, out_b = sb.respond(y)
            if rule.kind == "none":
                ok = True
            elif rule.kind == "tag_match":
                ok = tag_a == tag_b
            elif custom is not None:
                ok = custom[lam]
            else:
                ok = len({sa.respond(0)[0], sa.respond(1)[0], sb.respond(0)[0], sb.respond(1)[0]}) == 1
            if ok:
                got[label][OUTCOME_PAIRS.index((out_a, out_b))] += w
    return max(float(np.max(np.abs(got[k] - rate * targets[k]))) for k in SETTING_LABELS)


def adversary_json(result: AdversaryResult, reproduction: ReproductionResult | None = None) -> str:
    d = result.to_dict()
    if reproduction is not None:
        d["reproduction"] = reproduction.to_dict()
    return json.dumps(d, indent=2) + "\n"
