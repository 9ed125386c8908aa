"""The RAUM test, preference identification and counterfactual bounds.

Every procedure here is a linear program over the polytope
``{v >= 0 : G v = g}`` assembled by :mod:`raum.constraints`: feasibility
decides whether a dataset has a stable, set-monotone representation, and
linear objectives over the same polytope give sharp bounds on preference
marginals, out-of-sample choice probabilities and welfare losses.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import lp
from .constraints import ConstraintSystem, build_system, resolve_orders
from .core import (
    ChoiceDataset,
    PreferenceOrder,
    RaumRule,
    best_table,
    is_subset,
    members,
)

BOUND_PAD = 1e-8
REGULARITY_TOL = 1e-9


class NoRepresentation(ValueError):
    """The dataset has no RAUM representation under the requested assumptions."""


@dataclass
class Verdict:
    """Outcome of the RAUM test under one set of assumptions."""

    admits: bool
    stability: bool
    monotonicity: bool
    certificate: RaumRule | None = None
    distance: float | None = None
    farkas: np.ndarray | None = None
    result: lp.LpResult | None = field(default=None, repr=False)
    system: ConstraintSystem | None = field(default=None, repr=False)

    @property
    def relaxation(self) -> dict:
        return {"stability": self.stability, "monotonicity": self.monotonicity}


@dataclass
class Bound:
    """Sharp interval for a linear functional of the representation.

    ``lo`` and ``hi`` are padded outward by the LP optimality tolerance and
    clipped to the functional's natural range; ``raw_lo`` and ``raw_hi`` are
    the solver's optima.
    """

    lo: float
    hi: float
    attained_lo: RaumRule | None = field(default=None, repr=False)
    attained_hi: RaumRule | None = field(default=None, repr=False)
    raw_lo: float | None = None
    raw_hi: float | None = None

    def as_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "raw_lo": self.raw_lo, "raw_hi": self.raw_hi}


# ---------------------------------------------------------------------------
# regularity

def irregular_triples(dataset: ChoiceDataset, tol: float = REGULARITY_TOL) -> list[tuple[int, int, int]]:
    """All ``(a, A, B)`` with ``A`` inside ``B``, both observed, ``a`` in ``A``
    and ``rho_B(a) > rho_A(a) + tol``."""
    out = []
    for A in dataset.menus:
        for B in dataset.menus:
            if A == B or not is_subset(A, B):
                continue
            for a in members(A):
                if dataset.rho(B, a) > dataset.rho(A, a) + tol:
                    out.append((a, A, B))
    return sorted(out)


def flagged_alternatives(dataset: ChoiceDataset, tol: float = REGULARITY_TOL) -> list[int]:
    """Alternatives whose choice probability rises somewhere as the menu grows."""
    return sorted({a for a, _, _ in irregular_triples(dataset, tol)})


# ---------------------------------------------------------------------------
# the problem object

class RaumProblem:
    """A dataset together with its assembled system, reused across solves.

    ``orders`` restricts the preference domain; columns for other orders are
    never created.  The base system (both assumptions on) is built lazily and
    shared read-only by all bound computations.
    """

    def __init__(
        self,
        dataset: ChoiceDataset,
        orders: Iterable[PreferenceOrder] | None = None,
        mode: str = "reduced",
        backend=None,
        stability_form: str = "chain",
    ):
        self.dataset = dataset
        self.universe = dataset.universe
        self.orders = resolve_orders(self.universe, orders)
        self.mode = mode
        self.backend = backend
        self.stability_form = stability_form
        self._systems: dict[tuple[bool, bool], ConstraintSystem] = {}
        self._verdict: Verdict | None = None

    # -- systems ------------------------------------------------------------

    def system(self, stability: bool = True, monotonicity: bool = True) -> ConstraintSystem:
        key = (stability, monotonicity)
        if key not in self._systems:
            self._systems[key] = build_system(
                self.dataset, mode=self.mode, stability=stability, monotonicity=monotonicity,
                orders=self.orders, stability_form=self.stability_form,
            )
        return self._systems[key]

    # -- test ---------------------------------------------------------------

    def test(self, stability: bool = True, monotonicity: bool = True,
             compute_distance: bool = True) -> Verdict:
        system = self.system(stability, monotonicity)
        res = lp.solve_feasibility(system, self.backend)
        if res.status == lp.NUMERICAL_FAILURE:
            raise lp.NumericalFailure(f"feasibility solve failed: {res.message}")
        distance = lp.projection_distance(system, self.backend).distance if compute_distance else None
        verdict = Verdict(
            admits=res.feasible,
            stability=stability,
            monotonicity=monotonicity,
            certificate=system.vector_to_rule(res.v) if res.feasible else None,
            distance=distance,
            farkas=res.farkas,
            result=res,
            system=system,
        )
        if stability and monotonicity:
            self._verdict = verdict
        return verdict

    def _require_feasible(self) -> None:
        if self._verdict is None:
            self.test(compute_distance=False)
        if not self._verdict.admits:
            raise NoRepresentation("no RAUM representation: the dataset is rejected")

    # -- generic bound ------------------------------------------------------

    def bound(self, coefs: dict[int, float], upper: float = 1.0, jobs: int = 1) -> Bound:
        """Min and max of ``sum coefs[j] v[j]`` over the base polytope."""
        self._require_feasible()
        system = self.system()

        def solve(sense):
            res = lp.solve_linear(system, coefs, sense, self.backend)
            if res.status != lp.FEASIBLE:
                raise lp.NumericalFailure(f"{sense} solve ended with status {res.status}: {res.message}")
            return res

        if jobs > 1:
            with ThreadPoolExecutor(2) as pool:
                lo_res, hi_res = pool.map(solve, ("min", "max"))
        else:
            lo_res, hi_res = solve("min"), solve("max")
        return Bound(
            lo=float(np.clip(lo_res.objective - BOUND_PAD, 0.0, upper)),
            hi=float(np.clip(hi_res.objective + BOUND_PAD, 0.0, upper)),
            attained_lo=system.vector_to_rule(lo_res.v),
            attained_hi=system.vector_to_rule(hi_res.v),
            raw_lo=lo_res.objective,
            raw_hi=hi_res.objective,
        )

    # -- objectives ---------------------------------------------------------

    def marginal_objective(self, order: PreferenceOrder, menu: int | None = None) -> dict[int, float]:
        layout = self.system().layout
        menu = self.universe.grand if menu is None else menu
        try:
            pos = layout.order_position(order)
        except (KeyError, ValueError):
            raise ValueError(f"order {order.format(self.universe)} is outside the preference domain") from None
        return {int(j): 1.0 for j in layout.block(menu, pos)}

    def _check_menu(self, menu: int) -> None:
        if not 1 <= menu <= self.universe.grand:
            raise ValueError(f"menu mask {menu} is outside the universe of {self.universe.n} alternatives")

    def prediction_objective(self, menu: int, alt: int) -> dict[int, float]:
        self._check_menu(menu)
        if not menu >> alt & 1:
            raise ValueError(
                f"alternative {self.universe.labels[alt]} not in menu {self.universe.format_set(menu)}"
            )
        A, rank, D = self.system().layout.decoded()
        winners = best_table(self.universe.n)[rank, D]
        cols = np.flatnonzero((A == menu) & (winners == alt))
        return {int(j): 1.0 for j in cols}

    def welfare_objective(self, menus: Sequence[int], literal: bool = False) -> dict[int, float]:
        """Coefficients of the inattention loss summed over ``menus``.

        The default counts mass whose considered best differs from the
        menu-wide best.  ``literal=True`` evaluates the two-indicator
        difference summed over every alternative, which cancels to zero.
        """
        A, rank, D = self.system().layout.decoded()
        table = best_table(self.universe.n)
        coefs: dict[int, float] = {}
        for menu in menus:
            cols = np.flatnonzero(A == menu)
            top = table[rank[cols], menu]
            chosen = table[rank[cols], D[cols]]
            if literal:
                w = np.zeros(len(cols))
                for a in members(menu):
                    w += (top == a).astype(float) - (chosen == a).astype(float)
            else:
                w = (top != chosen).astype(float)
            for j, x in zip(cols.tolist(), w.tolist()):
                if x != 0.0:
                    coefs[j] = coefs.get(j, 0.0) + x
        return coefs

    # -- procedures ---------------------------------------------------------

    def preference_bounds(self, order: PreferenceOrder, menu: int | None = None, jobs: int = 1) -> Bound:
        return self.bound(self.marginal_objective(order, menu), jobs=jobs)

    def all_preference_bounds(self, jobs: int = 1, menu: int | None = None) -> list[tuple[PreferenceOrder, Bound]]:
        self._require_feasible()
        self.system().layout.decoded()  # warm shared caches before threading
        if jobs > 1:
            with ThreadPoolExecutor(jobs) as pool:
                bounds = list(pool.map(lambda o: self.preference_bounds(o, menu), self.orders))
        else:
            bounds = [self.preference_bounds(o, menu) for o in self.orders]
        return list(zip(self.orders, bounds))

    def predict_bounds(self, menu: int, alt: int) -> Bound:
        return self.bound(self.prediction_objective(menu, alt))

    def welfare_bounds(self, menu: int | None = None, total: bool = False, literal: bool = False) -> Bound:
        if total:
            menus = list(self.dataset.menus)
        else:
            if menu is not None:
                self._check_menu(menu)
            if menu is None or menu not in self.dataset.menus:
                name = "none" if menu is None else self.universe.format_set(menu)
                raise ValueError(f"menu {name} is not observed; use the total flag for all menus")
            menus = [menu]
        coefs = self.welfare_objective(menus, literal)
        if not coefs:
            zero = RaumRule(self.universe, RaumRule.zeros(self.universe))
            self._require_feasible()
            cert = self._verdict.certificate or zero
            return Bound(0.0, 0.0, cert, cert, 0.0, 0.0)
        return self.bound(coefs, upper=float(len(menus)))

    def check_prop2(self, tol: float = REGULARITY_TOL) -> list[tuple[int, float]]:
        """For each flagged alternative, the largest upper bound on the
        probability of any order that ranks it last."""
        out = []
        for a in flagged_alternatives(self.dataset, tol):
            worst = [o for o in self.orders if o.ranking[-1] == a]
            his = [self.preference_bounds(o).hi for o in worst]
            out.append((a, max(his) if his else 0.0))
        return out


# ---------------------------------------------------------------------------
# functional front end

def test_raum(
    dataset: ChoiceDataset,
    stability: bool = True,
    monotonicity: bool = True,
    mode: str = "reduced",
    orders: Iterable[PreferenceOrder] | None = None,
    compute_distance: bool = True,
    backend=None,
) -> Verdict:
    """Decide whether ``dataset`` admits a RAUM with the chosen assumptions."""
    return RaumProblem(dataset, orders, mode, backend).test(stability, monotonicity, compute_distance)


test_raum.__test__ = False  # keep pytest from collecting it


def preference_bounds(dataset: ChoiceDataset, order: PreferenceOrder, menu: int | None = None,
                      orders=None, backend=None) -> Bound:
    """Sharp bounds on the probability of ``order`` (marginal at ``menu``, default X)."""
    return RaumProblem(dataset, orders, backend=backend).preference_bounds(order, menu)


def check_prop2(dataset: ChoiceDataset, orders=None, backend=None) -> list[tuple[int, float]]:
    return RaumProblem(dataset, orders, backend=backend).check_prop2()


def predict_bounds(dataset: ChoiceDataset, menu: int, alt: int, orders=None, backend=None) -> Bound:
    """Sharp bounds on the probability of choosing ``alt`` from ``menu``."""
    return RaumProblem(dataset, orders, backend=backend).predict_bounds(menu, alt)


def welfare_bounds(dataset: ChoiceDataset, menu: int | None = None, total: bool = False,
                   literal: bool = False, orders=None, backend=None) -> Bound:
    """Sharp bounds on the share of decision makers hurt by limited consideration."""
    return RaumProblem(dataset, orders, backend=backend).welfare_bounds(menu, total, literal)


def welfare_of_rule(rule: RaumRule, menu: int, literal: bool = False) -> float:
    """Mass at ``menu`` whose considered best differs from the menu-wide best."""
    u = rule.universe
    table = best_table(u.n)
    block = rule.values[menu - 1]
    total = 0.0
    for D in range(1, u.grand + 1):
        if not is_subset(D, menu):
            continue
        top = table[:, menu]
        chosen = table[:, D]
        if literal:
            w = sum((top == a).astype(float) - (chosen == a).astype(float) for a in members(menu))
        else:
            w = (top != chosen).astype(float)
        total += float(block[:, D - 1] @ w)
    return total


def restrict_orders(dataset: ChoiceDataset, whitelist: Iterable[PreferenceOrder], **kwargs) -> RaumProblem:
    """A problem whose preference domain is ``whitelist``."""
    whitelist = list(whitelist)
    if not whitelist:
        raise ValueError("order whitelist is empty")
    return RaumProblem(dataset, whitelist, **kwargs)
