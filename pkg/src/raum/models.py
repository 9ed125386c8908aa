"""Generators for parametric consideration models.

Each generator returns either a :class:`~raum.core.RaumRule` or the dataset
it induces.  They double as constructive oracles: a rule built here is a
feasible point of the linear system for its own dataset.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import (
    ChoiceDataset,
    PreferenceOrder,
    RaumRule,
    Universe,
    enumerate_orders,
    is_subset,
    members,
    order_table,
    popcount,
    ranks_from_utilities,
    submasks,
)

G_MODES = ("grand", "menu", "custom")


class AttentionRuleError(ValueError):
    """A conditional attention rule breaks a RAM constraint."""


# ---------------------------------------------------------------------------
# attention index


@dataclass(frozen=True)
class AttentionIndex:
    """Per-order set weights ``eta[rank, mask]`` and the menu map ``g``.

    ``eta[:, 0]`` is ignored (the empty set has weight 0); every other entry
    must be positive.  Entries may be ints or Fractions (object array) for
    exact evaluation.  ``g_map`` is only read in ``custom`` mode and maps a
    menu mask to a mask (index 0 unused).
    """

    universe: Universe
    eta: np.ndarray
    g_mode: str = "grand"
    g_map: tuple[int, ...] | None = None

    def __post_init__(self):
        u = self.universe
        eta = np.asarray(self.eta)
        if eta.shape != (u.n_orders, 1 << u.n):
            raise ValueError(f"eta has shape {eta.shape}, expected {(u.n_orders, 1 << u.n)}")
        if not all(x > 0 for x in eta[:, 1:].ravel()):
            raise ValueError("attention index must be positive on every nonempty set")
        if self.g_mode not in G_MODES:
            raise ValueError(f"g_mode must be one of {G_MODES}")
        if self.g_mode == "custom":
            if self.g_map is None or len(self.g_map) != 1 << u.n:
                raise ValueError("custom mode needs g_map with one entry per mask")
            object.__setattr__(self, "g_map", tuple(int(x) & u.grand for x in self.g_map))
        object.__setattr__(self, "eta", eta)

    def g(self, menu: int) -> int:
        if self.g_mode == "grand":
            return self.universe.grand
        if self.g_mode == "menu":
            return menu
        return self.g_map[menu]

    def consideration(self, rank: int, menu: int) -> dict[int, object]:
        """Consideration probabilities ``{D: p}`` over nonempty ``D`` inside ``menu``.

        Arithmetic follows the entry type of ``eta``: integer or Fraction
        tables give exact Fractions.
        """
        row = self.eta[rank]
        outside = self.universe.grand & ~self.g(menu)
        pads = [0] + submasks(outside)
        weight = {D: sum(row[D | B] for B in pads) for D in submasks(menu)}
        total = sum(weight.values())
        exact = all(isinstance(x, (int, np.integer, Fraction)) for x in weight.values())
        if exact:
            total = Fraction(int(total)) if not isinstance(total, Fraction) else total
            return {D: Fraction(w) / total for D, w in weight.items()}
        return {D: float(w) / float(total) for D, w in weight.items()}


def logit_attention_prob(eta_row: Sequence, menu: int, cset: int):
    """Weight of ``cset`` relative to all nonempty subsets of ``menu``."""
    total = sum(eta_row[C] for C in submasks(menu))
    return _ratio(eta_row[cset], total)


def eba_prob(eta_row: Sequence, menu: int, cset: int, grand: int):
    """Elimination-by-aspects: mass of aspects meeting ``menu`` exactly in ``cset``."""
    num = sum(eta_row[C] for C in range(1, grand + 1) if C & menu == cset)
    den = sum(eta_row[K] for K in range(1, grand + 1) if K & menu)
    return _ratio(num, den)


def _ratio(num, den):
    if isinstance(num, (int, np.integer, Fraction)) and isinstance(den, (int, np.integer, Fraction)):
        return Fraction(num) / Fraction(den)
    return float(num) / float(den)


def gen_attention_index(idx: AttentionIndex, marginal: Sequence[float]) -> RaumRule:
    """Rule with ``pi_A(o, D) = m_{o,A}(D) * marginal[o]`` (floating point)."""
    u = idx.universe
    pstar = _check_marginal(marginal, u)
    values = RaumRule.zeros(u)
    for r in range(u.n_orders):
        for A in range(1, u.grand + 1):
            for D, p in idx.consideration(r, A).items():
                values[A - 1, r, D - 1] = float(p) * pstar[r]
    return RaumRule(u, values)


def random_eta(universe: Universe, rng: np.random.Generator, high: int = 20) -> np.ndarray:
    """Integer table with entries in ``1..high`` (object dtype, exact)."""
    eta = rng.integers(1, high + 1, size=(universe.n_orders, 1 << universe.n))
    eta[:, 0] = 0
    return eta.astype(object)


def g_map_excluding(universe: Universe, excluded: Sequence[str], base: str) -> tuple[int, ...]:
    """``g(A) = A - E`` (``base="menu"``) or ``X - E`` (``base="grand"``)."""
    E = universe.mask(excluded)
    if base == "menu":
        return tuple(A & ~E for A in range(1 << universe.n))
    if base == "grand":
        return tuple(universe.grand & ~E for _ in range(1 << universe.n))
    raise ValueError("base must be 'menu' or 'grand'")


def check_g_monotone(g_map: Sequence[int] | Callable[[int], int], universe: Universe):
    """Check ``g(A) <= g(B)`` and ``g(B) - g(A) <= B - A`` on every cover pair.

    Returns ``(True, None)`` or ``(False, (A, B))`` for the first failing pair
    in increasing mask order.  Cover pairs suffice: both conditions compose
    along chains.
    """
    g = g_map if callable(g_map) else (lambda A: g_map[A])
    for A in range(1, universe.grand + 1):
        for x in range(universe.n):
            if A >> x & 1:
                continue
            B = A | 1 << x
            gA, gB = g(A), g(B)
            if not is_subset(gA, gB) or not is_subset(gB & ~gA, B & ~A):
                return False, (A, B)
    return True, None


def sample_attention_index(
    universe: Universe,
    draws: int,
    kappa: float,
    seed: int = 0,
    mean_utility: Sequence[float] | None = None,
    salience_scale: float = 1.0,
    correlation: float = 0.0,
) -> tuple[AttentionIndex, np.ndarray]:
    """Monte Carlo attention index from utility plus salience.

    Draws ``u ~ N(w, 1)`` and ``xi = correlation * (u - w) + salience_scale *
    N(0, 1)``; ``eta_o(D)`` is the mean of ``1{u ranks o} * #{y in D : u_y +
    xi_y >= kappa}``.  Also returns the order frequencies as the marginal.
    Raises if some entry ends up non-positive.
    """
    n = universe.n
    rng = np.random.default_rng(seed)
    w = np.zeros(n) if mean_utility is None else np.asarray(mean_utility, dtype=float)
    noise = rng.standard_normal((draws, n))
    u = w + noise
    xi = correlation * noise + salience_scale * rng.standard_normal((draws, n))
    rank = ranks_from_utilities(u)
    salient = ((u + xi) >= kappa) @ (1 << np.arange(n))
    counts = np.bincount(rank * (1 << n) + salient, minlength=universe.n_orders << n)
    counts = counts.reshape(universe.n_orders, 1 << n).astype(float)
    overlap = np.array([[popcount(s & D) for D in range(1 << n)] for s in range(1 << n)], dtype=float)
    eta = counts @ overlap / draws
    if (eta[:, 1:] <= 0).any():
        raise ValueError("sampled attention index is not positive on every set; "
                         "increase draws or move kappa")
    marginal = np.bincount(rank, minlength=universe.n_orders) / draws
    return AttentionIndex(universe, eta), marginal


# ---------------------------------------------------------------------------
# RAM mixtures


def _check_marginal(marginal: Sequence[float], universe: Universe) -> np.ndarray:
    p = np.asarray(marginal, dtype=float)
    if p.shape != (universe.n_orders,):
        raise ValueError(f"marginal must have {universe.n_orders} entries")
    if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("marginal must be a probability vector")
    return p


def check_attention(attention: np.ndarray, universe: Universe, tol: float = 1e-12) -> None:
    """Raise :class:`AttentionRuleError` unless every per-order rule is a RAM rule.

    ``attention[rank, A-1, D-1]`` is the probability of considering ``D`` at
    menu ``A`` given the order.
    """
    lam = np.asarray(attention, dtype=float)
    n_sets = universe.grand
    if lam.shape != (universe.n_orders, n_sets, n_sets):
        raise AttentionRuleError(f"attention has shape {lam.shape}")
    if (lam < -tol).any():
        r, A, D = np.argwhere(lam < -tol)[0]
        raise AttentionRuleError(f"negative probability at order {r}, menu {A + 1}, set {D + 1}")
    sums = lam.sum(axis=2)
    if (np.abs(sums - 1.0) > 1e-9).any():
        r, A = np.argwhere(np.abs(sums - 1.0) > 1e-9)[0]
        raise AttentionRuleError(f"normalization fails at order {r}, menu {A + 1}: sums to {sums[r, A]}")
    for A in range(1, n_sets + 1):
        for D in range(1, n_sets + 1):
            if not is_subset(D, A) and (np.abs(lam[:, A - 1, D - 1]) > tol).any():
                raise AttentionRuleError(f"feasibility fails: set {D} is not inside menu {A}")
    for A in range(1, n_sets + 1):
        subs = np.array(submasks(A)) - 1
        for x in range(universe.n):
            if A >> x & 1:
                continue
            B = A | 1 << x
            gap = lam[:, B - 1, subs] - lam[:, A - 1, subs]
            if (gap > tol).any():
                r, j = np.argwhere(gap > tol)[0]
                raise AttentionRuleError(
                    f"set-monotonicity fails at order {r}: set {subs[j] + 1} gains "
                    f"{gap[r, j]:.3g} from menu {A} to menu {B}"
                )


def gen_ram_mixture(universe: Universe, marginal: Sequence[float], attention: np.ndarray) -> RaumRule:
    """``pi_A(o, D) = attention[o, A, D] * marginal[o]`` after checking the attention rules."""
    p = _check_marginal(marginal, universe)
    check_attention(attention, universe)
    lam = np.clip(np.asarray(attention, dtype=float), 0.0, None)
    return RaumRule(universe, np.transpose(lam * p[:, None, None], (1, 0, 2)))


def full_attention(universe: Universe) -> np.ndarray:
    n_sets = universe.grand
    lam = np.zeros((universe.n_orders, n_sets, n_sets))
    idx = np.arange(n_sets)
    lam[:, idx, idx] = 1.0
    return lam


def gen_rum(universe: Universe, marginal: Sequence[float]) -> RaumRule:
    """Full-attention rule: every menu is considered whole."""
    return gen_ram_mixture(universe, marginal, full_attention(universe))


def logit_marginal(weights: Sequence[float]) -> np.ndarray:
    """Plackett-Luce probabilities of every order (rank order) for utility weights."""
    w = np.exp(np.asarray(weights, dtype=float))
    perms = order_table(len(w)).astype(np.int64)
    probs = np.ones(len(perms))
    for i in range(len(w) - 1):
        probs *= w[perms[:, i]] / w[perms[:, i:]].sum(axis=1)
    return probs


def random_marginal(universe: Universe, rng: np.random.Generator, sparsity: float = 0.0) -> np.ndarray:
    """Dirichlet draw over orders; ``sparsity`` zeroes a random share of orders."""
    p = rng.dirichlet(np.ones(universe.n_orders))
    if sparsity > 0:
        keep = rng.random(universe.n_orders) >= sparsity
        keep[rng.integers(universe.n_orders)] = True
        p = np.where(keep, p, 0.0)
        p /= p.sum()
    return p


def random_monotone_attention(universe: Universe, rng: np.random.Generator, zero_share: float = 0.2) -> np.ndarray:
    """Random set-monotone attention rules, one per order.

    Menus are filled in increasing size.  Each proper subset ``D`` of ``B``
    is capped by its probability in every cover sub-menu ``B - {x}`` that
    contains it and drawn uniformly below the cap (zeroed with probability
    ``zero_share``).  If the draws exceed 1 they are scaled down, and the
    remainder goes to ``D = B``.
    """
    n_sets = universe.grand
    lam = np.zeros((universe.n_orders, n_sets, n_sets))
    by_size = sorted(range(1, n_sets + 1), key=lambda m: (popcount(m), m))
    for B in by_size:
        inner = [D for D in submasks(B) if D != B]
        if not inner:
            lam[:, B - 1, B - 1] = 1.0
            continue
        cap = np.ones((universe.n_orders, len(inner)))
        for x in members(B):
            A = B & ~(1 << x)
            for j, D in enumerate(inner):
                if is_subset(D, A):
                    cap[:, j] = np.minimum(cap[:, j], lam[:, A - 1, D - 1])
        draw = cap * rng.random(cap.shape)
        draw[rng.random(cap.shape) < zero_share] = 0.0
        total = draw.sum(axis=1, keepdims=True)
        scale = np.where(total > 1.0, rng.random(total.shape) / np.where(total > 0, total, 1.0), 1.0)
        draw *= scale
        lam[:, B - 1, np.array(inner) - 1] = draw
        lam[:, B - 1, B - 1] = 1.0 - draw.sum(axis=1)
    return lam


def dependent_attention_rule() -> RaumRule:
    """Two alternatives, two orders, two singleton filters, correlated with preferences."""
    u = Universe.letters(2)
    a, b, ab = 1, 2, 3
    v = RaumRule.zeros(u)
    v[ab - 1, 0, a - 1], v[ab - 1, 0, b - 1] = 1 / 3, 1 / 6
    v[ab - 1, 1, a - 1], v[ab - 1, 1, b - 1] = 1 / 6, 1 / 3
    v[a - 1, 0, a - 1] = v[a - 1, 1, a - 1] = 0.5
    v[b - 1, 0, b - 1] = v[b - 1, 1, b - 1] = 0.5
    return RaumRule(u, v)


# ---------------------------------------------------------------------------
# search and satisficing


def _uniform_sampler(rng: np.random.Generator, size: int, n: int):
    return rng.random((size, n)), rng.random((size, n))


@dataclass(frozen=True)
class SatisficingParams:
    """Search index and utility sampler with a satisficing threshold.

    ``sampler(rng, draws, n)`` returns arrays ``(s, u)`` of shape
    ``(draws, n)``; the default draws both independently uniform.  When
    ``threshold_sampler`` is given, each draw gets its own threshold from
    ``threshold_sampler(rng, draws)`` and ``tau`` is ignored.
    """

    tau: float = 0.5
    draws: int = 100_000
    seed: int = 0
    sampler: Callable = _uniform_sampler
    threshold_sampler: Callable | None = None

    def __post_init__(self):
        if self.draws < 1:
            raise ValueError("draws must be at least 1")


def gen_satisficing(params: SatisficingParams, universe: Universe) -> RaumRule:
    """Empirical rule of search-and-satisficing with common random numbers.

    In each menu the items are searched by decreasing search index and the
    search stops at the first item whose utility clears the threshold; the
    consideration set is everything searched so far (the whole menu if
    nothing clears).  The same draws serve every menu, so the preference
    marginal is identical across menus and each draw's consideration set
    shrinks weakly as the menu grows, making the rule exactly monotone.
    """
    n = universe.n
    rng = np.random.default_rng(params.seed)
    s, u = params.sampler(rng, params.draws, n)
    s, u = np.asarray(s, dtype=float), np.asarray(u, dtype=float)
    if s.shape != (params.draws, n) or u.shape != (params.draws, n):
        raise ValueError("sampler returned arrays of the wrong shape")
    if params.threshold_sampler is not None:
        tau = np.asarray(params.threshold_sampler(rng, params.draws), dtype=float)[:, None]
    else:
        tau = params.tau
    rank = ranks_from_utilities(u)
    good = u >= tau
    bits = 1 << np.arange(n)
    values = RaumRule.zeros(universe)
    n_sets = universe.grand
    for A in range(1, n_sets + 1):
        inside = (A & bits) > 0
        stop = np.where(good & inside, s, -np.inf).max(axis=1)
        searched = inside & (s >= stop[:, None])
        D = searched @ bits
        counts = np.bincount(rank * (n_sets + 1) + D, minlength=universe.n_orders * (n_sets + 1))
        values[A - 1] = counts.reshape(universe.n_orders, n_sets + 1)[:, 1:] / params.draws
    return RaumRule(universe, values)


# ---------------------------------------------------------------------------
# rational inattention on three alternatives


@dataclass(frozen=True)
class RiParams:
    """Prior ``mu`` over ``(a, b, c)`` and net payoff ``delta``.

    Requires ``mu[0] >= mu[1] >= mu[2] > 0`` summing to 1 and ``delta > 0``
    away from every regime threshold.
    """

    mu: tuple[float, float, float]
    delta: float
    boundary_tol: float = 1e-12

    def __post_init__(self):
        mu = tuple(float(x) for x in self.mu)
        if len(mu) != 3:
            raise ValueError("mu needs exactly three entries")
        if abs(sum(mu) - 1.0) > 1e-9:
            raise ValueError("mu must sum to 1")
        if not mu[0] >= mu[1] >= mu[2] > 0:
            raise ValueError("mu must satisfy mu(a) >= mu(b) >= mu(c) > 0")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        object.__setattr__(self, "mu", mu)
        for i, t in enumerate(self.thresholds, start=1):
            if abs(self.delta - t) <= self.boundary_tol * max(1.0, abs(t)):
                raise ValueError(f"delta sits on threshold {i} ({t}); regimes are not defined there")

    @property
    def thresholds(self) -> tuple[float, float, float, float]:
        a, b, c = self.mu
        return (-3 + 1 / c, -1 + a / c, -1 + b / c, -1 + a / b)

    def consideration_set(self, menu: str) -> str:
        """Deterministic consideration set for a menu given as letters."""
        d1, d2, d3, d4 = self.thresholds
        d = self.delta
        menu = "".join(sorted(menu))
        if len(menu) == 1:
            return menu
        if menu == "abc":
            return "abc" if d > d1 else "ab" if d > d4 else "a"
        if menu == "ab":
            return "ab" if d > d4 else "a"
        if menu == "bc":
            return "bc" if d > d3 else "b"
        if menu == "ac":
            return "ac" if d > d2 else "a"
        raise ValueError(f"unknown menu {menu!r}")

    def choice_in(self, cset: str) -> dict[str, float]:
        """Choice probabilities inside a considered set."""
        weights = {y: self.mu["abc".index(y)] for y in cset}
        total = sum(weights.values())
        k = len(cset)
        # (m (k + delta) - 1) / delta, rearranged to avoid cancellation at small delta
        return {y: w / total + (k * w / total - 1) / self.delta for y, w in weights.items()}


def gen_rational_inattention(params: RiParams) -> ChoiceDataset:
    """Choice probabilities on all seven menus of ``{a, b, c}``."""
    data = []
    for size in (1, 2, 3):
        for menu in ("a", "b", "c", "ab", "ac", "bc", "abc"):
            if len(menu) != size:
                continue
            probs = params.choice_in(params.consideration_set(menu))
            data.append((menu, {y: max(p, 0.0) for y, p in probs.items()}))
    return ChoiceDataset.from_labels("abc", data)


def ri_stable_marginal(params: RiParams) -> np.ndarray:
    """Closed-form order distribution (rank order abc, acb, bac, bca, cab, cba)
    that rationalizes the full-consideration regime with full attention."""
    d1 = params.thresholds[0]
    d = params.delta
    if not d > d1:
        raise ValueError("the closed form needs delta above the full-consideration threshold")
    a, b, c = params.mu
    k_ac = 1 / c - 1 / a
    k_bc = 1 / c - 1 / b
    return np.array([
        (d - d1 + k_ac) / (b + c) * a * b / d,
        (d - d1 + k_ac) / (b + c) * a * c / d,
        (d - d1 + k_bc) / (a + c) * a * b / d,
        (d - d1 + k_bc) / (a + c) * b * c / d,
        (d - d1) / (a + b) * a * c / d,
        (d - d1) / (a + b) * b * c / d,
    ])


def ri_regime(params: RiParams) -> int:
    """Index 0..4 of the delta interval, from smallest to the full-consideration one."""
    d1, d2, d3, d4 = params.thresholds
    cuts = sorted([d4, d3]) + [d2, d1]
    return int(sum(params.delta > t for t in cuts))


def orders_by_label(universe: Universe) -> Mapping[str, PreferenceOrder]:
    return {"".join(universe.labels[i] for i in o.ranking): o for o in enumerate_orders(universe)}


__all__ = [
    "AttentionIndex",
    "AttentionRuleError",
    "RiParams",
    "SatisficingParams",
    "check_attention",
    "check_g_monotone",
    "eba_prob",
    "dependent_attention_rule",
    "full_attention",
    "g_map_excluding",
    "gen_attention_index",
    "gen_ram_mixture",
    "gen_rational_inattention",
    "gen_rum",
    "gen_satisficing",
    "logit_attention_prob",
    "logit_marginal",
    "random_eta",
    "random_marginal",
    "random_monotone_attention",
    "ri_regime",
    "ri_stable_marginal",
    "sample_attention_index",
]
