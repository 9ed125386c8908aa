"""Sparse assembly of the linear system ``G v = g`` with ``v >= 0``.

Columns are the joint probabilities ``pi_A(o, D)`` followed by one slack
per monotonicity row.  Rows come in five blocks, always in this order:

* ``B`` data fit, one row per observed ``(a, A)``;
* ``O`` normalization, one row per nonempty menu;
* ``F`` feasibility (full mode only), one row per column with ``D`` not in ``A``;
* ``S`` stability, one row per menu ``A != X`` and order;
* ``M`` monotonicity, one row per cover pair ``A < B = A + {x}``, order, and
  nonempty ``D`` inside ``A``.

In reduced mode the infeasible columns are never created, so ``F`` is empty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .core import (
    ChoiceDataset,
    PreferenceOrder,
    RaumRule,
    Universe,
    best_table,
    enumerate_orders,
    members,
    popcount,
    submasks,
)

MODES = ("full", "reduced")
STABILITY_FORMS = ("chain", "reference")
BLOCKS = ("B", "O", "F", "S", "M")


@dataclass(frozen=True)
class Block:
    name: str
    start: int
    stop: int
    payload: dict  # field name -> int array, one entry per row

    def __len__(self) -> int:
        return self.stop - self.start


def stability_parent(menu: int, grand: int, form: str) -> int:
    """Menu whose marginal ``menu`` is tied to by its stability rows."""
    if form == "reference":
        return grand
    missing = grand & ~menu
    return menu | (missing & -missing)


class ColumnLayout:
    """Bijection between ``(menu, order position, set)`` and column ids.

    Menu blocks are laid out by increasing mask; inside a block, order
    position is major and the consideration set minor.  In full mode every
    nonempty set gets a slot, so the column of ``(A, o, D)`` is
    ``((A - 1) * K + o) * (2**n - 1) + (D - 1)`` with ``K`` orders.  In
    reduced mode only the nonempty subsets of ``A`` get slots, in increasing
    mask order.
    """

    def __init__(self, universe: Universe, orders: Sequence[PreferenceOrder], mode: str):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        self.universe = universe
        self.orders = tuple(orders)
        self.mode = mode
        n_sets = universe.grand
        self.n_orders = len(self.orders)
        self.sets = [None] + [
            np.arange(1, n_sets + 1) if mode == "full" else np.array(submasks(A))
            for A in range(1, n_sets + 1)
        ]
        self.stride = np.zeros(n_sets + 1, dtype=np.int64)
        self.offset = np.zeros(n_sets + 2, dtype=np.int64)
        # slot[A, D] = position of D inside the set list of A, -1 if absent
        self.slot = np.full((n_sets + 1, n_sets + 1), -1, dtype=np.int64)
        for A in range(1, n_sets + 1):
            self.stride[A] = len(self.sets[A])
            self.slot[A, self.sets[A]] = np.arange(len(self.sets[A]))
            self.offset[A + 1] = self.offset[A] + self.n_orders * self.stride[A]
        self.n_pi = int(self.offset[n_sets + 1])
        self._rank_pos = {o.rank: k for k, o in enumerate(self.orders)}
        self._decoded = None

    def order_position(self, order: PreferenceOrder | int) -> int:
        rank = order if isinstance(order, int) else order.rank
        try:
            return self._rank_pos[rank]
        except KeyError:
            raise KeyError(f"order with rank {rank} is not in the order set") from None

    def index(self, menu: int, order: PreferenceOrder | int, cset: int) -> int:
        k = self.order_position(order)
        s = self.slot[menu, cset]
        if s < 0:
            raise KeyError(f"no column for set {cset} in menu {menu} ({self.mode} mode)")
        return int(self.offset[menu] + k * self.stride[menu] + s)

    def indices(self, menu: int, order_pos: np.ndarray, csets: np.ndarray) -> np.ndarray:
        """Vectorized :meth:`index` with order positions instead of orders."""
        return self.offset[menu] + order_pos * self.stride[menu] + self.slot[menu, csets]

    def block(self, menu: int, order_pos: int | None = None) -> np.ndarray:
        """Columns of one menu, optionally restricted to one order."""
        if order_pos is None:
            return np.arange(self.offset[menu], self.offset[menu + 1])
        start = self.offset[menu] + order_pos * self.stride[menu]
        return np.arange(start, start + self.stride[menu])

    def decoded(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Arrays ``(menu, order rank, set)`` for every pi column."""
        if self._decoded is None:
            menu = np.empty(self.n_pi, dtype=np.int64)
            rank = np.empty(self.n_pi, dtype=np.int64)
            cset = np.empty(self.n_pi, dtype=np.int64)
            ranks = np.array([o.rank for o in self.orders], dtype=np.int64)
            for A in range(1, self.universe.grand + 1):
                lo, hi = self.offset[A], self.offset[A + 1]
                menu[lo:hi] = A
                rank[lo:hi] = np.repeat(ranks, self.stride[A])
                cset[lo:hi] = np.tile(self.sets[A], self.n_orders)
            self._decoded = (menu, rank, cset)
        return self._decoded

    def label(self, j: int) -> tuple[int, PreferenceOrder, int]:
        if not 0 <= j < self.n_pi:
            raise IndexError(j)
        A = int(np.searchsorted(self.offset, j, side="right") - 1)
        k, s = divmod(j - int(self.offset[A]), int(self.stride[A]))
        return A, self.orders[k], int(self.sets[A][s])


class ConstraintSystem:
    """Triplet-form ``G`` with right-hand side ``g`` and row/column maps.

    Triplets are sorted by ``(row, col)`` so the system is bit-identical
    across builds.
    """

    def __init__(self, layout, blocks, rows, cols, vals, g, options):
        self.layout = layout
        self.universe = layout.universe
        self.orders = layout.orders
        self.mode = layout.mode
        self.options = options
        self.blocks = {b.name: b for b in blocks}
        self.rows, self.cols, self.vals = rows, cols, vals
        self.g = g
        self.n_rows = int(len(g))
        self.n_pi = layout.n_pi
        self.n_slack = len(self.blocks["M"])
        self.n_cols = self.n_pi + self.n_slack
        self._matrix = None
        self._row_lookup = None

    @property
    def nnz(self) -> int:
        return int(len(self.vals))

    def triplets(self):
        return zip(self.rows.tolist(), self.cols.tolist(), self.vals.tolist())

    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            m = sp.csr_matrix(
                (self.vals.astype(float), (self.rows, self.cols)),
                shape=(self.n_rows, self.n_cols),
            )
            m.sort_indices()
            self._matrix = m
        return self._matrix

    def dense(self) -> np.ndarray:
        return self.matrix().toarray()

    # -- row labels ---------------------------------------------------------

    def row_block(self, i: int) -> str:
        for b in self.blocks.values():
            if b.start <= i < b.stop:
                return b.name
        raise IndexError(i)

    def row_label(self, i: int) -> tuple:
        """``(block, payload)`` for row ``i``; orders are PreferenceOrder objects."""
        name = self.row_block(i)
        b = self.blocks[name]
        k = i - b.start
        p = {key: int(arr[k]) for key, arr in b.payload.items()}
        if name == "B":
            return name, (p["alt"], p["menu"])
        if name == "O":
            return name, (p["menu"],)
        if name == "F":
            return name, (p["menu"], self.orders[p["order"]], p["set"])
        if name == "S":
            return name, (p["menu"], p["other"], self.orders[p["order"]])
        return name, (p["menu"], p["bigger"], self.orders[p["order"]], p["set"])

    def row_index(self, block: str, *payload) -> int:
        """Inverse of :meth:`row_label`."""
        if self._row_lookup is None:
            self._row_lookup = {}
            for i in range(self.n_rows):
                name, pl = self.row_label(i)
                key = tuple(x.rank if isinstance(x, PreferenceOrder) else x for x in pl)
                self._row_lookup[(name,) + key] = i
        key = tuple(x.rank if isinstance(x, PreferenceOrder) else x for x in payload)
        try:
            return self._row_lookup[(block,) + key]
        except KeyError:
            raise KeyError(f"no {block} row for {payload}") from None

    # -- column labels ------------------------------------------------------

    def col_index(self, menu: int, order: PreferenceOrder | int, cset: int) -> int:
        return self.layout.index(menu, order, cset)

    def slack_index(self, m_row: int) -> int:
        b = self.blocks["M"]
        if not b.start <= m_row < b.stop:
            raise IndexError(f"row {m_row} is not a monotonicity row")
        return self.n_pi + m_row - b.start

    def col_label(self, j: int) -> tuple:
        if j < self.n_pi:
            return ("pi",) + self.layout.label(j)
        if j < self.n_cols:
            m_row = self.blocks["M"].start + j - self.n_pi
            return ("slack",) + self.row_label(m_row)[1]
        raise IndexError(j)

    # -- vectors <-> rules --------------------------------------------------

    def rule_to_vector(self, rule: RaumRule) -> np.ndarray:
        """``(pi, slack)`` for a rule; slacks are the monotonicity gaps."""
        if rule.universe != self.universe:
            raise ValueError("rule lives on a different universe")
        menu, rank, cset = self.layout.decoded()
        pi = rule.values[menu - 1, rank, cset - 1]
        m = self.blocks["M"].payload
        k = m["order"]
        ranks = np.array([o.rank for o in self.orders], dtype=np.int64)
        slack = (rule.values[m["menu"] - 1, ranks[k], m["set"] - 1]
                 - rule.values[m["bigger"] - 1, ranks[k], m["set"] - 1])
        return np.concatenate([pi, slack])

    def vector_to_rule(self, v: np.ndarray, clip: bool = True) -> RaumRule:
        """Scatter the pi part of ``v`` into a dense rule."""
        menu, rank, cset = self.layout.decoded()
        values = RaumRule.zeros(self.universe)
        pi = np.asarray(v[: self.n_pi], dtype=float)
        if clip:
            pi = np.maximum(pi, 0.0)
        values[menu - 1, rank, cset - 1] = pi
        return RaumRule(self.universe, values)

    def objective(self, coefs: dict[int, float]) -> np.ndarray:
        c = np.zeros(self.n_cols)
        for j, w in coefs.items():
            c[j] += w
        return c

    # -- reporting ----------------------------------------------------------

    def residual(self, v: np.ndarray) -> float:
        if self.n_rows == 0:
            return 0.0
        return float(np.max(np.abs(self.matrix() @ v - self.g)))

    def export(self, path) -> None:
        """Write ``rows cols nnz``, then 0-based triplets, then ``g``."""
        with open(path, "w") as fh:
            fh.write(f"{self.n_rows} {self.n_cols} {self.nnz}\n")
            for r, c, v in self.triplets():
                fh.write(f"{r} {c} {v}\n")
            for x in self.g.tolist():
                fh.write(f"{x!r}\n")


def load_exported(path) -> tuple[sp.csr_matrix, np.ndarray]:
    """Read a system written by :meth:`ConstraintSystem.export`."""
    with open(path) as fh:
        n_rows, n_cols, nnz = (int(x) for x in fh.readline().split())
        trip = np.loadtxt(fh, max_rows=nnz, dtype=np.int64, ndmin=2) if nnz else np.zeros((0, 3), np.int64)
        g = np.array([float(fh.readline()) for _ in range(n_rows)])
    G = sp.csr_matrix((trip[:, 2].astype(float), (trip[:, 0], trip[:, 1])), shape=(n_rows, n_cols))
    return G, g


def resolve_orders(universe: Universe, orders: Iterable[PreferenceOrder] | None) -> tuple[PreferenceOrder, ...]:
    if orders is None:
        return tuple(enumerate_orders(universe))
    out = sorted({o.rank: o for o in orders}.values())
    if not out:
        raise ValueError("order whitelist is empty")
    for o in out:
        if o.n != universe.n:
            raise ValueError(f"order {o.ranking} has the wrong number of alternatives")
    return tuple(out)


def build_system(
    dataset: ChoiceDataset,
    mode: str = "reduced",
    stability: bool = True,
    monotonicity: bool = True,
    orders: Iterable[PreferenceOrder] | None = None,
    stability_form: str = "chain",
) -> ConstraintSystem:
    """Assemble ``G`` and ``g`` for ``dataset``.

    ``orders`` restricts the preference domain (columns for other orders are
    never created).  ``stability_form`` picks how the per-order marginals are
    tied together: ``"chain"`` links each menu to ``A + {lowest missing}``,
    ``"reference"`` links every menu to the grand set.  Both encode the same
    equalities.
    """
    if stability_form not in STABILITY_FORMS:
        raise ValueError(f"stability_form must be one of {STABILITY_FORMS}")
    u = dataset.universe
    n_sets = u.grand
    layout = ColumnLayout(u, resolve_orders(u, orders), mode)
    K = layout.n_orders
    ranks = np.array([o.rank for o in layout.orders], dtype=np.int64)
    bt = best_table(u.n)[ranks].astype(np.int64)  # (K, 2^n)
    korder = np.arange(K, dtype=np.int64)

    R, C, V = [], [], []
    g_parts = []
    blocks = []
    row = 0

    def emit(r, c, v):
        R.append(np.asarray(r, dtype=np.int64).ravel())
        C.append(np.asarray(c, dtype=np.int64).ravel())
        V.append(np.broadcast_to(np.asarray(v, dtype=np.int8), np.shape(r)).ravel())

    # B: data fit
    start = row
    b_alt, b_menu = [], []
    for k, A in enumerate(dataset.menus):
        alts = members(A)
        local = np.full(u.n, -1, dtype=np.int64)
        local[alts] = np.arange(len(alts))
        subs = np.array(submasks(A))
        winners = bt[:, subs]  # (K, s)
        r = row + local[winners]
        c = layout.indices(A, korder[:, None], subs[None, :])
        emit(r, c, 1)
        g_parts.append(np.array([dataset.probs[k][a] for a in alts]))
        b_alt += alts
        b_menu += [A] * len(alts)
        row += len(alts)
    blocks.append(Block("B", start, row, {"alt": np.array(b_alt, dtype=np.int64),
                                          "menu": np.array(b_menu, dtype=np.int64)}))

    # O: normalization over all menus
    start = row
    for A in range(1, n_sets + 1):
        cols = layout.block(A)
        emit(np.full(len(cols), row), cols, 1)
        row += 1
    g_parts.append(np.ones(n_sets))
    blocks.append(Block("O", start, row, {"menu": np.arange(1, n_sets + 1)}))

    # F: feasibility (full mode only)
    start = row
    f_pay = {"menu": [], "order": [], "set": []}
    if mode == "full":
        for A in range(1, n_sets + 1):
            bad = np.array([D for D in range(1, n_sets + 1) if D & ~A])
            if len(bad) == 0:
                continue
            cols = layout.indices(A, korder[:, None], bad[None, :]).ravel()
            emit(row + np.arange(len(cols)), cols, 1)
            f_pay["menu"].append(np.full(len(cols), A))
            f_pay["order"].append(np.repeat(korder, len(bad)))
            f_pay["set"].append(np.tile(bad, K))
            row += len(cols)
    g_parts.append(np.zeros(row - start))
    blocks.append(Block("F", start, row, _cat(f_pay)))

    # S: stability
    start = row
    s_pay = {"menu": [], "other": [], "order": []}
    if stability:
        for A in range(1, n_sets):
            P = stability_parent(A, n_sets, stability_form)
            sa, sb = layout.stride[A], layout.stride[P]
            rr = row + korder
            ca = layout.offset[A] + korder[:, None] * sa + np.arange(sa)[None, :]
            cb = layout.offset[P] + korder[:, None] * sb + np.arange(sb)[None, :]
            emit(np.repeat(rr, sa), ca, 1)
            emit(np.repeat(rr, sb), cb, -1)
            s_pay["menu"].append(np.full(K, A))
            s_pay["other"].append(np.full(K, P))
            s_pay["order"].append(korder)
            row += K
    g_parts.append(np.zeros(row - start))
    blocks.append(Block("S", start, row, _cat(s_pay)))

    # M: monotonicity on cover pairs, with slack columns
    start = row
    m_pay = {"menu": [], "bigger": [], "order": [], "set": []}
    if monotonicity:
        for A in range(1, n_sets + 1):
            subs = np.array(submasks(A))
            for x in range(u.n):
                if A >> x & 1:
                    continue
                B = A | (1 << x)
                count = K * len(subs)
                rr = row + np.arange(count)
                emit(rr, layout.indices(A, korder[:, None], subs[None, :]), 1)
                emit(rr, layout.indices(B, korder[:, None], subs[None, :]), -1)
                emit(rr, layout.n_pi + (rr - start), -1)
                m_pay["menu"].append(np.full(count, A))
                m_pay["bigger"].append(np.full(count, B))
                m_pay["order"].append(np.repeat(korder, len(subs)))
                m_pay["set"].append(np.tile(subs, K))
                row += count
    g_parts.append(np.zeros(row - start))
    blocks.append(Block("M", start, row, _cat(m_pay)))

    rows = np.concatenate(R) if R else np.zeros(0, np.int64)
    cols = np.concatenate(C) if C else np.zeros(0, np.int64)
    vals = np.concatenate(V) if V else np.zeros(0, np.int8)
    order = np.lexsort((cols, rows))
    idx_t = np.int32 if u.n <= 6 else np.int64
    options = {"mode": mode, "stability": stability, "monotonicity": monotonicity,
               "stability_form": stability_form, "n_orders": K}
    return ConstraintSystem(
        layout, blocks,
        rows[order].astype(idx_t), cols[order].astype(idx_t), vals[order],
        np.concatenate(g_parts).astype(float), options,
    )


def _cat(payload: dict) -> dict:
    return {k: (np.concatenate(v).astype(np.int64) if v else np.zeros(0, np.int64))
            for k, v in payload.items()}


def system_stats(system: ConstraintSystem) -> dict:
    rows, cols, nnz = system.n_rows, system.n_cols, system.nnz
    return {
        "rows": rows,
        "cols": cols,
        "nnz": nnz,
        "sparsity": nnz / (rows * cols) if rows and cols else 0.0,
        "blocks": {name: len(b) for name, b in system.blocks.items()},
        "pi_cols": system.n_pi,
        "slack_cols": system.n_slack,
    }


def count_system(
    n: int,
    menu_sizes: Iterable[int] | None = None,
    mode: str = "reduced",
    stability: bool = True,
    monotonicity: bool = True,
    n_orders: int | None = None,
    stability_form: str = "chain",
) -> dict:
    """Dimensions of the system without building it.

    ``menu_sizes`` lists the cardinalities of the observed menus (default:
    complete data).  Agrees with :func:`system_stats` on built systems.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    K = math.factorial(n) if n_orders is None else n_orders
    n_sets = (1 << n) - 1
    if menu_sizes is None:
        menu_sizes = [popcount(A) for A in range(1, n_sets + 1)]
    menu_sizes = list(menu_sizes)

    def stride(size):
        return n_sets if mode == "full" else (1 << size) - 1

    sizes = [popcount(A) for A in range(1, n_sets + 1)]
    n_pi = K * sum(stride(s) for s in sizes)
    blocks = {"B": sum(menu_sizes), "O": n_sets, "F": 0, "S": 0, "M": 0}
    nnz = K * sum((1 << s) - 1 for s in menu_sizes) + n_pi
    if mode == "full":
        f = K * sum(n_sets - ((1 << s) - 1) for s in sizes)
        blocks["F"] = f
        nnz += f
    if stability:
        blocks["S"] = K * (n_sets - 1)
        for A in range(1, n_sets):
            P = stability_parent(A, n_sets, stability_form)
            nnz += K * (stride(popcount(A)) + stride(popcount(P)))
    if monotonicity:
        m = K * sum(math.comb(n, k) * (n - k) * ((1 << k) - 1) for k in range(1, n))
        blocks["M"] = m
        nnz += 3 * m
    rows = sum(blocks.values())
    cols = n_pi + blocks["M"]
    return {
        "rows": rows,
        "cols": cols,
        "nnz": nnz,
        "sparsity": nnz / (rows * cols),
        "blocks": blocks,
        "pi_cols": n_pi,
        "slack_cols": blocks["M"],
    }
