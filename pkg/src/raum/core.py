"""Domain types for stochastic choice with limited consideration.

Alternatives are integers ``0..n-1`` (positions in the sorted label list).
Menus and consideration sets are bitmasks, bit ``i`` set iff alternative
``i`` is present.  Preference orders are permutations listed best-to-worst
and identified by their lexicographic (Lehmer) rank.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import permutations
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_ALTERNATIVES = 8
DATA_TOL = 1e-9
RULE_TOL = 1e-8


# ---------------------------------------------------------------------------
# bitmask helpers

def popcount(mask: int) -> int:
    return bin(mask).count("1")


def members(mask: int) -> list[int]:
    """Alternatives present in ``mask``, ascending."""
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def mask_of(indices: Iterable[int]) -> int:
    mask = 0
    for i in indices:
        mask |= 1 << i
    return mask


def is_subset(a: int, b: int) -> bool:
    return a & ~b == 0


def submasks(mask: int) -> list[int]:
    """Nonempty submasks of ``mask`` in increasing order."""
    subs = []
    s = mask
    while s:
        subs.append(s)
        s = (s - 1) & mask
    subs.reverse()
    return subs


# ---------------------------------------------------------------------------
# universe and orders

@dataclass(frozen=True)
class Universe:
    """The grand choice set.  Labels must be distinct and sorted."""

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if not 2 <= len(labels) <= MAX_ALTERNATIVES:
            raise ValueError(
                f"number of alternatives must be in [2, {MAX_ALTERNATIVES}], got {len(labels)}"
            )
        if len(set(labels)) != len(labels):
            raise ValueError("alternative labels must be distinct")
        if list(labels) != sorted(labels):
            raise ValueError("alternative labels must be sorted")

    @classmethod
    def of(cls, labels: Iterable[str]) -> "Universe":
        return cls(tuple(sorted(str(x) for x in labels)))

    @classmethod
    def letters(cls, n: int) -> "Universe":
        return cls(tuple("abcdefgh"[:n]))

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def grand(self) -> int:
        return (1 << self.n) - 1

    @property
    def n_orders(self) -> int:
        return math.factorial(self.n)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown alternative {label!r}") from None

    def mask(self, labels: Iterable[str]) -> int:
        return mask_of(self.index(x) for x in labels)

    def names(self, mask: int) -> list[str]:
        return [self.labels[i] for i in members(mask)]

    def format_set(self, mask: int) -> str:
        return "{" + ",".join(self.names(mask)) + "}"


def rank_permutation(ranking: Sequence[int]) -> int:
    """Lexicographic rank of a permutation of ``0..n-1``."""
    n = len(ranking)
    rank = 0
    for i, x in enumerate(ranking):
        smaller_after = sum(1 for y in ranking[i + 1:] if y < x)
        rank += smaller_after * math.factorial(n - 1 - i)
    return rank


def unrank_permutation(rank: int, n: int) -> tuple[int, ...]:
    if not 0 <= rank < math.factorial(n):
        raise ValueError(f"rank {rank} out of range for n={n}")
    pool = list(range(n))
    out = []
    for i in range(n - 1, -1, -1):
        q, rank = divmod(rank, math.factorial(i))
        out.append(pool.pop(q))
    return tuple(out)


@dataclass(frozen=True, order=True)
class PreferenceOrder:
    """A strict linear order stored best-to-worst."""

    rank: int
    ranking: tuple[int, ...] = field(compare=False)

    def __post_init__(self):
        ranking = tuple(int(x) for x in self.ranking)
        object.__setattr__(self, "ranking", ranking)
        if sorted(ranking) != list(range(len(ranking))):
            raise ValueError(f"ranking {ranking} is not a permutation")
        if rank_permutation(ranking) != self.rank:
            raise ValueError(f"rank {self.rank} does not match ranking {ranking}")

    @classmethod
    def from_ranking(cls, ranking: Sequence[int]) -> "PreferenceOrder":
        return cls(rank_permutation(ranking), tuple(ranking))

    @classmethod
    def from_rank(cls, rank: int, n: int) -> "PreferenceOrder":
        return cls(rank, unrank_permutation(rank, n))

    @classmethod
    def parse(cls, text: str, universe: Universe) -> "PreferenceOrder":
        """Parse ``"a>b>c"``; whitespace is ignored."""
        parts = [p.strip() for p in "".join(text.split()).split(">")]
        if any(not p for p in parts):
            raise ValueError(f"malformed order string {text!r}")
        idx = [universe.index(p) for p in parts]
        if sorted(idx) != list(range(universe.n)):
            raise ValueError(f"order {text!r} must rank every alternative exactly once")
        return cls.from_ranking(idx)

    @property
    def n(self) -> int:
        return len(self.ranking)

    def position(self, alt: int) -> int:
        return self.ranking.index(alt)

    def prefers(self, x: int, y: int) -> bool:
        return self.position(x) < self.position(y)

    def format(self, universe: Universe) -> str:
        return ">".join(universe.labels[i] for i in self.ranking)


def best(order: PreferenceOrder, mask: int) -> int:
    """The order-maximal alternative of a nonempty set."""
    if mask == 0:
        raise ValueError("empty consideration set")
    for alt in order.ranking:
        if mask >> alt & 1:
            return alt
    raise ValueError(f"set {mask:#b} has alternatives outside the order")


def enumerate_orders(universe: Universe) -> list[PreferenceOrder]:
    return [PreferenceOrder(r, p) for r, p in enumerate(permutations(range(universe.n)))]


def enumerate_sets(universe: Universe) -> list[int]:
    return list(range(1, universe.grand + 1))


@lru_cache(maxsize=None)
def order_table(n: int) -> np.ndarray:
    """Array ``(n!, n)`` of rankings indexed by rank."""
    return np.array(list(permutations(range(n))), dtype=np.int8).reshape(-1, n)


@lru_cache(maxsize=None)
def best_table(n: int) -> np.ndarray:
    """``best_table(n)[rank, mask]`` is the best alternative in ``mask``; -1 at mask 0."""
    perms = order_table(n).astype(np.int64)
    n_orders = perms.shape[0]
    pos = np.empty_like(perms)
    pos[np.arange(n_orders)[:, None], perms] = np.arange(n)[None, :]
    table = np.full((n_orders, 1 << n), -1, dtype=np.int8)
    rows = np.arange(n_orders)
    for m in range(1, 1 << n):
        low = (m & -m).bit_length() - 1
        rest = m & (m - 1)
        if rest == 0:
            table[:, m] = low
            continue
        other = table[:, rest].astype(np.int64)
        table[:, m] = np.where(pos[:, low] < pos[rows, other], low, other)
    return table


def ranks_from_utilities(u: np.ndarray) -> np.ndarray:
    """Lexicographic rank of the order induced by each utility row.

    Higher utility is better; exact ties go to the lower alternative index.
    """
    u = np.asarray(u, dtype=float)
    n = u.shape[1]
    perm = np.argsort(-u, axis=1, kind="stable")
    rank = np.zeros(u.shape[0], dtype=np.int64)
    for i in range(n - 1):
        smaller_after = (perm[:, i + 1:] < perm[:, i:i + 1]).sum(axis=1)
        rank += smaller_after * math.factorial(n - 1 - i)
    return rank


# ---------------------------------------------------------------------------
# data

@dataclass(frozen=True)
class ChoiceDataset:
    """Observed menus with their choice probability vectors.

    ``probs[k]`` maps every alternative of ``menus[k]`` to its choice
    probability; alternatives absent from the input map are filled with 0.
    """

    universe: Universe
    menus: tuple[int, ...]
    probs: tuple[Mapping[int, float], ...]

    def __post_init__(self):
        menus = tuple(int(m) for m in self.menus)
        if len(menus) != len(self.probs):
            raise ValueError("menus and probs must have the same length")
        if not menus:
            raise ValueError("dataset needs at least one menu")
        if len(set(menus)) != len(menus):
            raise ValueError("duplicate menus")
        filled = []
        for menu, p in zip(menus, self.probs):
            if not 1 <= menu <= self.universe.grand:
                raise ValueError(f"menu mask {menu} outside the universe")
            name = self.universe.format_set(menu)
            row = {}
            for alt, val in p.items():
                val = float(val)
                if not np.isfinite(val) or val < 0:
                    raise ValueError(f"menu {name}: invalid probability {val}")
                if not menu >> int(alt) & 1:
                    if val > 0:
                        raise ValueError(
                            f"menu {name}: alternative {self.universe.labels[int(alt)]} "
                            "has positive probability but is not in the menu"
                        )
                    continue
                row[int(alt)] = val
            for alt in members(menu):
                row.setdefault(alt, 0.0)
            total = sum(row.values())
            if abs(total - 1.0) > DATA_TOL:
                raise ValueError(f"menu {name}: probabilities sum to {total!r}, not 1")
            filled.append(dict(sorted(row.items())))
        object.__setattr__(self, "menus", menus)
        object.__setattr__(self, "probs", tuple(filled))

    @classmethod
    def from_labels(
        cls,
        labels: Iterable[str],
        data: Mapping[Iterable[str], Mapping[str, float]] | Iterable[tuple[Iterable[str], Mapping[str, float]]],
    ) -> "ChoiceDataset":
        """Build from labelled menus, e.g. ``{("a", "b"): {"a": 0.5, "b": 0.5}}``."""
        universe = Universe.of(labels)
        items = data.items() if isinstance(data, Mapping) else data
        menus, probs = [], []
        for menu, p in items:
            menus.append(universe.mask(menu))
            probs.append({universe.index(k): v for k, v in p.items()})
        return cls(universe, tuple(menus), tuple(probs))

    @property
    def n(self) -> int:
        return self.universe.n

    @property
    def is_complete(self) -> bool:
        return len(self.menus) == self.universe.grand

    def menu_position(self, menu: int) -> int:
        try:
            return self.menus.index(menu)
        except ValueError:
            raise KeyError(f"menu {self.universe.format_set(menu)} not observed") from None

    def rho(self, menu: int, alt: int) -> float:
        return self.probs[self.menu_position(menu)][alt]

    def pairs(self) -> list[tuple[int, int]]:
        """Observed ``(alternative, menu)`` pairs in row order."""
        return [(a, m) for m in self.menus for a in members(m)]

    def restrict(self, menus: Iterable[int]) -> "ChoiceDataset":
        keep = set(menus)
        idx = [k for k, m in enumerate(self.menus) if m in keep]
        return ChoiceDataset(
            self.universe,
            tuple(self.menus[k] for k in idx),
            tuple(self.probs[k] for k in idx),
        )


@dataclass(frozen=True)
class RaumRule:
    """Joint probabilities ``values[A-1, rank, D-1]`` over all nonempty menus.

    Construction only checks the shape; use :func:`validate_rule` for the
    probabilistic invariants.
    """

    universe: Universe
    values: np.ndarray

    def __post_init__(self):
        n_sets = self.universe.grand
        values = np.asarray(self.values, dtype=float)
        expected = (n_sets, self.universe.n_orders, n_sets)
        if values.shape != expected:
            raise ValueError(f"rule array has shape {values.shape}, expected {expected}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, universe: Universe) -> np.ndarray:
        """A writable zero array of the right shape, for building rules."""
        n_sets = universe.grand
        return np.zeros((n_sets, universe.n_orders, n_sets))

    def joint(self, menu: int, order: PreferenceOrder | int, cset: int) -> float:
        rank = order if isinstance(order, int) else order.rank
        return float(self.values[menu - 1, rank, cset - 1])

    def marginal(self, menu: int) -> np.ndarray:
        """Preference marginal at ``menu`` (sum over consideration sets)."""
        return self.values[menu - 1].sum(axis=1)

    def conditional(self, menu: int) -> np.ndarray:
        """Consideration probabilities given each order; rows with zero mass stay 0."""
        block = self.values[menu - 1]
        mass = block.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(mass > 0, block / np.where(mass > 0, mass, 1.0), 0.0)

    def choice_probs(self, menu: int) -> dict[int, float]:
        """Choice probability of every alternative in ``menu``."""
        subs = np.array(submasks(menu))
        mass = self.values[menu - 1][:, subs - 1]
        winners = best_table(self.universe.n)[:, subs]
        return {a: float(mass[winners == a].sum()) for a in members(menu)}

    def induced_dataset(self, menus: Iterable[int] | None = None) -> ChoiceDataset:
        """The dataset this rule generates, on ``menus`` (default: all menus).

        Tiny negative rounding residue is clipped and each menu renormalized.
        """
        if menus is None:
            menus = range(1, self.universe.grand + 1)
        menus = tuple(menus)
        probs = []
        for m in menus:
            p = {a: max(v, 0.0) for a, v in self.choice_probs(m).items()}
            total = sum(p.values())
            probs.append({a: v / total for a, v in p.items()})
        return ChoiceDataset(self.universe, menus, tuple(probs))


def choice_prob(rule: RaumRule, menu: int, alt: int) -> float:
    """Probability that ``alt`` is chosen from ``menu`` under ``rule``."""
    if not menu >> alt & 1:
        raise ValueError(
            f"alternative {rule.universe.labels[alt]} not in menu {rule.universe.format_set(menu)}"
        )
    return rule.choice_probs(menu)[alt]


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Violation:
    kind: str  # fit | range | normalization | feasibility | stability | monotonicity
    where: tuple
    magnitude: float

    def describe(self, universe: Universe) -> str:
        parts = []
        for item in self.where:
            if isinstance(item, PreferenceOrder):
                parts.append(item.format(universe))
            elif isinstance(item, tuple) and item and item[0] == "set":
                parts.append(universe.format_set(item[1]))
            else:
                parts.append(str(item))
        return f"{self.kind} {' '.join(parts)}: {self.magnitude:.3g}"


@dataclass
class ViolationReport:
    violations: list[Violation] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    @property
    def ok(self) -> bool:
        return not self.violations

    def of_kind(self, kind: str) -> list[Violation]:
        return [v for v in self.violations if v.kind == kind]

    def max_magnitude(self, kind: str | None = None) -> float:
        vals = [v.magnitude for v in self.violations if kind is None or v.kind == kind]
        return max(vals, default=0.0)


def _s(mask: int) -> tuple:
    return ("set", mask)


def validate_rule(
    rule: RaumRule,
    dataset: ChoiceDataset,
    check_stability: bool = True,
    check_monotonicity: bool = True,
    tol: float = RULE_TOL,
) -> ViolationReport:
    """List every constraint ``rule`` violates by more than ``tol``.

    Monotonicity is checked in joint form, ``pi_A(o, D) >= pi_B(o, D)`` for
    every ``A`` strictly inside ``B`` and nonempty ``D`` inside ``A``; this is
    the form the linear system encodes and is equivalent to the conditional
    form whenever the rule is stable.
    """
    if rule.universe != dataset.universe:
        raise ValueError("rule and dataset are defined on different universes")
    u = rule.universe
    vals = rule.values
    n_sets = u.grand
    report = ViolationReport()
    add = report.violations.append

    for k, menu in enumerate(dataset.menus):
        fitted = rule.choice_probs(menu)
        for a, target in dataset.probs[k].items():
            gap = abs(fitted[a] - target)
            if gap > tol:
                add(Violation("fit", (u.labels[a], _s(menu)), gap))

    low = np.argwhere((vals < -tol) | (vals > 1 + tol))
    for A, r, D in low:
        v = vals[A, r, D]
        add(Violation("range", (_s(A + 1), PreferenceOrder.from_rank(int(r), u.n), _s(D + 1)),
                      float(-v if v < 0 else v - 1)))

    for A in range(1, n_sets + 1):
        gap = abs(vals[A - 1].sum() - 1.0)
        if gap > tol:
            add(Violation("normalization", (_s(A),), float(gap)))

    feasible = np.array([[is_subset(D, A) for D in range(1, n_sets + 1)]
                         for A in range(1, n_sets + 1)])
    bad = np.argwhere((np.abs(vals) > tol) & ~feasible[:, None, :])
    for A, r, D in bad:
        add(Violation("feasibility", (_s(A + 1), PreferenceOrder.from_rank(int(r), u.n), _s(D + 1)),
                      float(abs(vals[A, r, D]))))

    if check_stability:
        marg = vals.sum(axis=2)  # (menus, orders)
        for A in range(n_sets):
            diff = np.abs(marg[A + 1:] - marg[A])
            for B, r in np.argwhere(diff > tol):
                add(Violation("stability",
                              (_s(A + 1), _s(A + 1 + B + 1), PreferenceOrder.from_rank(int(r), u.n)),
                              float(diff[B, r])))

    if check_monotonicity:
        for A in range(1, n_sets + 1):
            subs = np.array(submasks(A)) - 1
            small = vals[A - 1][:, subs]
            for B in range(A + 1, n_sets + 1):
                if B == A or not is_subset(A, B):
                    continue
                gap = vals[B - 1][:, subs] - small
                for r, j in np.argwhere(gap > tol):
                    add(Violation("monotonicity",
                                  (_s(A), _s(B), PreferenceOrder.from_rank(int(r), u.n), _s(int(subs[j]) + 1)),
                                  float(gap[r, j])))
    return report
