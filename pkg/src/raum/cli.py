"""Command-line front end.

Datasets are JSON files::

    {"alternatives": ["a", "b", "c"],
     "menus": [{"menu": ["a", "b"], "probs": {"a": 0.7, "b": 0.3}}, ...]}

Exit codes: 0 success (dataset admits a representation), 2 input error,
3 dataset rejected, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, analysis, constraints, lp, models
from .core import ChoiceDataset, PreferenceOrder, RaumRule, Universe, members

SCHEMA_VERSION = 1
EXIT_OK, EXIT_INPUT, EXIT_REJECT, EXIT_NUMERICAL = 0, 2, 3, 4
FIXTURES = ("appendix_a1", "example1", "ri_mu532_delta3", "irregular_restricted")


class InputError(Exception):
    """Bad user input; reported with exit code 2."""


# ---------------------------------------------------------------------------
# dataset files


def fixture_path(name: str) -> Path:
    """Path of a bundled dataset (name with or without ``.json``)."""
    stem = name[:-5] if name.endswith(".json") else name
    path = Path(str(resources.files("raum") / "data" / f"{stem}.json"))
    if not path.exists():
        raise FileNotFoundError(f"no bundled dataset named {name!r}")
    return path


def parse_dataset(text: str) -> ChoiceDataset:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict) or "alternatives" not in doc or "menus" not in doc:
        raise InputError('dataset must be an object with "alternatives" and "menus"')
    labels = doc["alternatives"]
    if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
        raise InputError('"alternatives" must be a list of strings')
    items = []
    for k, entry in enumerate(doc["menus"]):
        if not isinstance(entry, dict) or not isinstance(entry.get("menu"), list) \
                or not isinstance(entry.get("probs"), dict):
            raise InputError(f'menu entry {k} needs a "menu" list and a "probs" object')
        unknown = [x for x in list(entry["menu"]) + list(entry["probs"]) if x not in labels]
        if unknown:
            raise InputError(f"menu entry {k} uses unknown alternatives {unknown}")
        if len(set(entry["menu"])) != len(entry["menu"]):
            raise InputError(f"menu entry {k} lists an alternative twice")
        items.append((entry["menu"], entry["probs"]))
    try:
        return ChoiceDataset.from_labels(labels, items)
    except (ValueError, KeyError) as exc:
        raise InputError(f"invalid dataset: {exc}") from None


def load_dataset(path) -> tuple[ChoiceDataset, str]:
    """Dataset and the sha256 of the file contents."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    return parse_dataset(raw.decode("utf-8")), hashlib.sha256(raw).hexdigest()


def dataset_to_json(dataset: ChoiceDataset) -> dict:
    u = dataset.universe
    return {
        "alternatives": list(u.labels),
        "menus": [
            {"menu": u.names(m), "probs": {u.labels[a]: float(p) for a, p in probs.items()}}
            for m, probs in zip(dataset.menus, dataset.probs)
        ],
    }


def rule_to_json(rule: RaumRule, tol: float = 1e-12) -> list[dict]:
    """Nonzero entries of a rule as labelled records."""
    u = rule.universe
    out = []
    for A, r, D in np.argwhere(np.abs(rule.values) > tol):
        out.append({
            "menu": u.names(int(A) + 1),
            "order": PreferenceOrder.from_rank(int(r), u.n).format(u),
            "set": u.names(int(D) + 1),
            "prob": float(rule.values[A, r, D]),
        })
    return out


def load_orders(path, universe: Universe) -> list[PreferenceOrder]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        items = json.loads(text)
        if not isinstance(items, list):
            raise InputError("orders file must hold a JSON list of order strings")
    except json.JSONDecodeError:
        items = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    orders = [parse_order(s, universe) for s in items]
    if not orders:
        raise InputError("orders file lists no orders")
    return orders


def parse_order(text: str, universe: Universe) -> PreferenceOrder:
    try:
        return PreferenceOrder.parse(str(text), universe)
    except (ValueError, KeyError) as exc:
        raise InputError(f"cannot parse order {text!r}: {exc}") from None


def parse_menu(text: str, universe: Universe) -> int:
    labels = [x for x in text.replace(",", " ").split()] if ("," in text or " " in text) else list(text)
    try:
        mask = universe.mask(labels)
    except KeyError as exc:
        raise InputError(f"menu {text!r}: {exc}") from None
    if not mask:
        raise InputError("menu must be nonempty")
    return mask


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise InputError(f"expected comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------------------
# reports


def farkas_to_json(system, y: np.ndarray, tol: float = 1e-12) -> list[dict]:
    u = system.universe
    out = []
    for i in np.flatnonzero(np.abs(y) > tol):
        block, payload = system.row_label(int(i))
        out.append({"row": int(i), "block": block, "label": _label(payload, u), "y": float(y[i])})
    return out


def _label(payload, u: Universe) -> list:
    out = []
    for x in payload:
        out.append(x.format(u) if isinstance(x, PreferenceOrder) else x)
    return out


def _bound_json(b: analysis.Bound) -> dict:
    return b.as_dict()


def make_report(command: str, args: dict, payload: dict, diagnostics: dict, sha: str | None,
                started: float) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": "raum",
        "version": __version__,
        "command": {"name": command, "args": args},
        "input_sha256": sha,
        "payload": payload,
        "diagnostics": diagnostics,
        "wall_time_seconds": round(time.perf_counter() - started, 6),
    }


def _echo(ns: argparse.Namespace) -> dict:
    skip = {"func", "report"}
    return {k: v for k, v in sorted(vars(ns).items()) if k not in skip}


# ---------------------------------------------------------------------------
# commands


def _problem(ns, dataset):
    orders = load_orders(ns.orders_file, dataset.universe) if getattr(ns, "orders_file", None) else None
    return analysis.RaumProblem(dataset, orders, mode=getattr(ns, "mode", "reduced"), backend=ns.solver)


def cmd_test(ns):
    dataset, sha = load_dataset(ns.dataset)
    problem = _problem(ns, dataset)
    verdict = problem.test(not ns.no_stability, not ns.no_monotonicity, not ns.no_distance)
    payload = {
        "admits": verdict.admits,
        "relaxation": verdict.relaxation,
        "distance": verdict.distance,
        "irregular_triples": [
            [dataset.universe.labels[a], dataset.universe.names(A), dataset.universe.names(B)]
            for a, A, B in analysis.irregular_triples(dataset)
        ],
    }
    if verdict.admits:
        payload["certificate"] = rule_to_json(verdict.certificate)
    else:
        payload["farkas"] = farkas_to_json(verdict.system, verdict.farkas)
    diag = verdict.result.diagnostics()
    diag.update(constraints.system_stats(verdict.system))
    text = "admits" if verdict.admits else "rejects"
    flags = ", ".join(f"{k}={'on' if v else 'off'}" for k, v in verdict.relaxation.items())
    lines = [f"{text} a RAUM representation ({flags})"]
    if verdict.distance is not None:
        lines.append(f"projection distance: {verdict.distance:.3e}")
    code = EXIT_OK if verdict.admits else EXIT_REJECT
    return code, payload, diag, sha, lines


def cmd_bounds(ns):
    dataset, sha = load_dataset(ns.dataset)
    problem = _problem(ns, dataset)
    u = dataset.universe
    menu = parse_menu(ns.menu, u) if ns.menu else None
    if ns.all_orders:
        rows = problem.all_preference_bounds(jobs=ns.jobs, menu=menu)
    else:
        order = parse_order(ns.order, u)
        rows = [(order, problem.preference_bounds(order, menu))]
    payload = {"bounds": [{"order": o.format(u), **_bound_json(b)} for o, b in rows]}
    lines = [f"{o.format(u)}: [{b.lo:.6f}, {b.hi:.6f}]" for o, b in rows]
    return EXIT_OK, payload, {"orders": len(rows)}, sha, lines


def cmd_predict(ns):
    dataset, sha = load_dataset(ns.dataset)
    problem = _problem(ns, dataset)
    u = dataset.universe
    menu = parse_menu(ns.menu, u)
    try:
        alt = u.index(ns.alt)
    except KeyError as exc:
        raise InputError(str(exc)) from None
    if not menu >> alt & 1:
        raise InputError(f"alternative {ns.alt} is not in menu {u.format_set(menu)}")
    b = problem.predict_bounds(menu, alt)
    payload = {"menu": u.names(menu), "alternative": ns.alt, "observed": menu in dataset.menus,
               **_bound_json(b)}
    return EXIT_OK, payload, {}, sha, [f"P({ns.alt} | {u.format_set(menu)}) in [{b.lo:.6f}, {b.hi:.6f}]"]


def cmd_welfare(ns):
    dataset, sha = load_dataset(ns.dataset)
    problem = _problem(ns, dataset)
    u = dataset.universe
    menu = None if ns.total else parse_menu(ns.menu, u)
    if menu is not None and menu not in dataset.menus:
        raise InputError(f"menu {u.format_set(menu)} is not observed; use --total for all menus")
    b = problem.welfare_bounds(menu, total=ns.total, literal=ns.literal)
    where = "all observed menus" if ns.total else u.format_set(menu)
    payload = {"menu": None if ns.total else u.names(menu), "total": ns.total, "literal": ns.literal,
               **_bound_json(b)}
    return EXIT_OK, payload, {}, sha, [f"welfare loss at {where} in [{b.lo:.6f}, {b.hi:.6f}]"]


def cmd_simulate(ns):
    rule = None
    if ns.model == "ri":
        mu = _floats(ns.mu)
        if len(mu) != 3:
            raise InputError("--mu needs three values")
        try:
            params = models.RiParams(tuple(mu), ns.delta)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        dataset = models.gen_rational_inattention(params)
        extra = {"thresholds": list(params.thresholds)}
        if params.delta > params.thresholds[0]:
            extra["stable_marginal"] = models.ri_stable_marginal(params).tolist()
    else:
        u = Universe.of(ns.alternatives.split(",")) if ns.alternatives else Universe.letters(3)
        rng = np.random.default_rng(ns.seed)
        if ns.weights:
            w = _floats(ns.weights)
            if len(w) != u.n:
                raise InputError(f"--weights needs {u.n} values")
            marginal = models.logit_marginal(w)
        else:
            marginal = np.full(u.n_orders, 1.0 / u.n_orders)
        extra = {"marginal": marginal.tolist()}
        if ns.model == "rum":
            rule = models.gen_rum(u, marginal)
        elif ns.model == "attention":
            idx = models.AttentionIndex(u, models.random_eta(u, rng), ns.g)
            rule = models.gen_attention_index(idx, marginal)
        elif ns.model == "satisficing":
            params = models.SatisficingParams(tau=ns.tau, draws=ns.draws, seed=ns.seed)
            rule = models.gen_satisficing(params, u)
        elif ns.model == "ram":
            rule = models.gen_ram_mixture(u, marginal, models.random_monotone_attention(u, rng))
        else:  # dependent
            rule = models.dependent_attention_rule()
        dataset = rule.induced_dataset()
    doc = dataset_to_json(dataset)
    if ns.out:
        Path(ns.out).write_text(json.dumps(doc, indent=2) + "\n")
    if ns.rule_out and rule is not None:
        Path(ns.rule_out).write_text(json.dumps(rule_to_json(rule), indent=2) + "\n")
    payload = {"dataset": doc, **extra}
    lines = [json.dumps(doc, indent=2)] if not ns.out else [f"wrote {ns.out}"]
    return EXIT_OK, payload, {}, None, lines


def cmd_matrix(ns):
    if ns.dataset:
        dataset, sha = load_dataset(ns.dataset)
        n = dataset.n
    elif ns.n:
        if not 2 <= ns.n <= 8:
            raise InputError("--n must be between 2 and 8")
        n, sha = ns.n, None
        dataset = None
    else:
        raise InputError("give a dataset file or --n")
    if ns.closed_form:
        if ns.export:
            raise InputError("--export needs an assembled system; drop --closed-form")
        menu_sizes = None if dataset is None else [len(members(m)) for m in dataset.menus]
        stats = constraints.count_system(n, menu_sizes, mode=ns.mode, stability=not ns.no_stability,
                                         monotonicity=not ns.no_monotonicity)
        seconds = 0.0
    else:
        if dataset is None:
            u = Universe.letters(n)
            dataset = models.gen_rum(u, np.full(u.n_orders, 1.0 / u.n_orders)).induced_dataset()
        t0 = time.perf_counter()
        system = constraints.build_system(dataset, mode=ns.mode, stability=not ns.no_stability,
                                          monotonicity=not ns.no_monotonicity)
        seconds = time.perf_counter() - t0
        stats = constraints.system_stats(system)
        if ns.export:
            system.export(ns.export)
    payload = {"n": n, "mode": ns.mode, **stats}
    lines = [f"rows {stats['rows']}  cols {stats['cols']}  nnz {stats['nnz']}  "
             f"sparsity {stats['sparsity']:.3e}"]
    if ns.stats:
        lines += [f"  block {k}: {v} rows" for k, v in stats["blocks"].items()]
    return EXIT_OK, payload, {"build_seconds": round(seconds, 6)}, sha, lines


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="raum", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"raum {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, dataset=True, solver=True):
        if dataset:
            sp.add_argument("dataset", help="dataset JSON file")
            sp.add_argument("--orders-file", help="restrict preferences to the orders listed in this file")
            sp.add_argument("--mode", choices=constraints.MODES, default="reduced")
        if solver:
            sp.add_argument("--solver", choices=sorted(lp.BACKENDS), default=None,
                            help="LP backend (default: $RAUM_SOLVER or highs)")
        sp.add_argument("--report", help="write a JSON report to this path")

    t = sub.add_parser("test", help="decide whether a dataset admits a RAUM representation")
    common(t)
    t.add_argument("--no-stability", action="store_true")
    t.add_argument("--no-monotonicity", action="store_true")
    t.add_argument("--no-distance", action="store_true", help="skip the projection distance")
    t.set_defaults(func=cmd_test)

    b = sub.add_parser("bounds", help="bounds on preference probabilities")
    common(b)
    g = b.add_mutually_exclusive_group(required=True)
    g.add_argument("--order", help='order such as "a>b>c"')
    g.add_argument("--all-orders", action="store_true")
    b.add_argument("--menu", help="menu at which the marginal is read (default: all alternatives)")
    b.add_argument("--jobs", type=int, default=1)
    b.set_defaults(func=cmd_bounds)

    pr = sub.add_parser("predict", help="bounds on a choice probability in any menu")
    common(pr)
    pr.add_argument("--menu", required=True, help='target menu, e.g. "abc" or "a,b,c"')
    pr.add_argument("--alt", required=True)
    pr.set_defaults(func=cmd_predict)

    w = sub.add_parser("welfare", help="bounds on the share hurt by limited consideration")
    common(w)
    g = w.add_mutually_exclusive_group(required=True)
    g.add_argument("--menu")
    g.add_argument("--total", action="store_true", help="sum over all observed menus")
    w.add_argument("--literal", action="store_true",
                   help="use the two-indicator difference summed over alternatives (always 0)")
    w.set_defaults(func=cmd_welfare)

    s = sub.add_parser("simulate", help="generate a dataset from a model")
    common(s, dataset=False, solver=False)
    s.add_argument("--model", required=True,
                   choices=["ri", "rum", "attention", "satisficing", "ram", "dependent"])
    s.add_argument("--mu", default="0.5,0.3,0.2")
    s.add_argument("--delta", type=float, default=3.0)
    s.add_argument("--alternatives", help="comma-separated labels (default a,b,c)")
    s.add_argument("--weights", help="logit utility weights for the preference marginal")
    s.add_argument("--g", choices=["grand", "menu"], default="grand")
    s.add_argument("--tau", type=float, default=0.5)
    s.add_argument("--draws", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="write the dataset JSON here")
    s.add_argument("--rule-out", help="also write the full rule")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("matrix", help="assemble the constraint system and report its size")
    common(m, dataset=False, solver=False)
    m.add_argument("dataset", nargs="?")
    m.add_argument("--n", type=int, help="use a complete dataset on n alternatives")
    m.add_argument("--mode", choices=constraints.MODES, default="reduced")
    m.add_argument("--no-stability", action="store_true")
    m.add_argument("--no-monotonicity", action="store_true")
    m.add_argument("--stats", action="store_true", help="print per-block row counts")
    m.add_argument("--closed-form", action="store_true", help="count without assembling")
    m.add_argument("--export", help="write the system in triplet text format")
    m.set_defaults(func=cmd_matrix)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        code, payload, diag, sha, lines = ns.func(ns)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except analysis.NoRepresentation as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return EXIT_REJECT
    except lp.NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for line in lines:
        print(line)
    if ns.report:
        report = make_report(ns.command, _echo(ns), payload, diag, sha, started)
        Path(ns.report).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
