"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 external-predictor error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import metrics as M
from . import render, retrieval, search, synth
from . import transforms as T
from .physics import PhysicsConfig
from .predictors import ExternalPredictorError, MpcConfig, Predictor, PredictorHandle, ProtocolError
from .predictors.bridge import parse_response
from .scene_model import (
    ScenarioError,
    Trajectory,
    dumps_canonical,
    load_scenario,
    load_scenarios,
    load_scene,
    save_scenario,
    scene_to_dict,
)

log = logging.getLogger("scenewarp")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_EXTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


FAMILY_ALIASES = {"smooth": T.SMOOTH_TURN, "double": T.DOUBLE_TURN, "ripple": T.RIPPLE_ROAD}


def _family(name: str) -> str:
    name = FAMILY_ALIASES.get(name, name)
    if name not in T.FAMILIES:
        raise UsageError(f"unknown transform family {name!r}")
    return name


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _axis(text: str) -> tuple:
    name, sep, values = text.partition("=")
    if not sep or not name:
        raise UsageError(f"axis must look like name=v1,v2,..., got {text!r}")
    vals = _floats(values)
    if not vals:
        raise UsageError(f"axis {name!r} has no values")
    return name, vals


def _handle(args) -> PredictorHandle:
    if args.predictor == "external" and not args.external_cmd:
        raise UsageError("--predictor external needs --external-cmd")
    return PredictorHandle(args.predictor, args.external_cmd, MpcConfig(), args.timeout)


def _search_cfg(args) -> search.SearchConfig:
    families = tuple(_family(f) for f in args.families.split(",")) if args.families else T.FAMILIES
    return search.SearchConfig(
        k_max=args.kmax,
        border=args.border,
        families=families,
        sampler=args.sampler,
        physics=PhysicsConfig(args.mu, args.gravity),
        enforce_physics=not args.no_physics,
        seed=args.seed,
        powers=tuple(_floats(args.power)) if args.power else None,
    )


def _write(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text, encoding="utf-8")


def _summary(rep: M.DatasetReport) -> str:
    return f"SOR {rep.sor_percent}  HOR {rep.hor_percent}  n {rep.n}  errors {rep.errors}"


def _finish(errors: dict, handle: PredictorHandle) -> int:
    # per-scenario messages were already logged by the search drivers
    if errors and handle.kind == "external":
        return EXIT_EXTERNAL
    return EXIT_OK


# ---------------------------------------------------------------------------
# subcommands


def cmd_attack(args) -> int:
    handle, cfg = _handle(args), _search_cfg(args)
    scenarios = load_scenarios(args.scenarios)
    with Predictor(handle) as pred:
        results, errors = search.attack_dataset(scenarios, pred, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for res in results:
        search.save_result(res, out / f"{res.scenario_id}.result.json")
    code = _finish(errors, handle)
    if not results:
        return code or EXIT_DATA
    rep = M.dataset_report([r.record() for r in results], errors=len(errors))
    _write(out / "report.json", dumps_canonical(rep.to_dict()))
    print(_summary(rep))
    return code


def cmd_evaluate(args) -> int:
    handle, cfg = _handle(args), _search_cfg(args)
    scenarios = load_scenarios(args.scenarios)
    if args.filter_trivial is not None:
        scenarios = search.filter_trivial(scenarios, args.filter_trivial)
    with Predictor(handle) as pred:
        if args.attacked:
            results, errors = search.attack_dataset(scenarios, pred, cfg)
            records = [r.record() for r in results]
        else:
            records, errors = search.evaluate_original(scenarios, pred)
    code = _finish(errors, handle)
    if not records:
        return code or EXIT_DATA
    rep = M.dataset_report(records, errors=len(errors))
    if args.out:
        _write(args.out, dumps_canonical(rep.to_dict()))
    print(_summary(rep))
    return code


def cmd_heatmap(args) -> int:
    handle, cfg = _handle(args), _search_cfg(args)
    family = _family(args.family)
    rows, cols = _axis(args.rows), _axis(args.cols)
    scenarios = load_scenarios(args.scenarios)
    with Predictor(handle) as pred:
        grid = search.heatmap(scenarios, pred, family, rows, cols, cfg)
    doc = {"family": family, "predictor": handle.name, "rows": {"name": rows[0], "values": rows[1]},
           "cols": {"name": cols[0], "values": cols[1]}, "hor": grid}
    _write(args.out, dumps_canonical(doc))
    return EXIT_OK


def cmd_filter(args) -> int:
    scenarios = load_scenarios(args.scenarios)
    kept = search.filter_trivial(scenarios, args.v_min)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for scn in kept:
            save_scenario(scn, out / f"{scn.id}.json")
    for scn in kept:
        print(scn.id)
    print(f"kept {len(kept)} of {len(scenarios)}", file=sys.stderr)
    return EXIT_OK


def cmd_transfer(args) -> int:
    handle = _handle(args)
    stored = search.load_results(args.results)
    with Predictor(handle) as pred:
        rep = search.transfer_eval(stored, pred)
    if args.out:
        _write(args.out, dumps_canonical(rep.to_dict()))
    print(_summary(rep))
    return EXIT_EXTERNAL if rep.errors and handle.kind == "external" else EXIT_OK


def cmd_export(args) -> int:
    results = search.load_results(args.results)
    if args.successes_only:
        results = [r for r in results if r.best_offroad > 0]
    for p in search.export_augmented(results, args.out):
        print(p)
    return EXIT_OK


def cmd_index_build(args) -> int:
    corpus = retrieval.load_corpus(args.corpus)
    tree = retrieval.build_vocab_tree(corpus, args.branching, args.depth, args.seed)
    retrieval.save_index(tree, args.out)
    print(f"indexed {len(corpus)} tiles into {len(tree.leaves())} leaves", file=sys.stderr)
    return EXIT_OK


def cmd_index_query(args) -> int:
    tree = retrieval.load_index(args.index)
    hits = retrieval.query(tree, load_scene(args.scene), args.k)
    for rank, (entry, dist) in enumerate(hits, 1):
        print(f"{rank}\t{entry.id}\t{dist:.6f}\t{entry.source}")
    return EXIT_OK


def _load_prediction(path, dt: float):
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if "modes" in doc:
        n = len(doc["modes"][0]) if doc["modes"] else 0
        try:
            return parse_response(doc, doc.get("id"), dt, n)
        except ProtocolError as exc:
            raise ScenarioError(f"{path}: {exc}") from None
    if doc.get("prediction") is not None:  # attack result file
        return M.PredictionSet((Trajectory(doc["prediction"], dt),), (1.0,))
    raise ScenarioError(f"{path}: no 'modes' or 'prediction' in prediction file")


def cmd_render(args) -> int:
    style = render.load_style(args.style) if args.style else render.RenderStyle()
    src = Path(args.scenario)
    doc = json.loads(src.read_text(encoding="utf-8"))
    scn = search.AttackResult.from_dict(doc).warped if "warped" in doc else load_scenario(src)
    preds = _load_prediction(args.pred, scn.dt) if args.pred else None
    render.render_scene(scn, preds, style, args.out)
    return EXIT_OK


def cmd_heatmap_render(args) -> int:
    doc = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    if isinstance(doc, list):
        grid, axes, title = doc, None, ""
    else:
        grid = doc["hor"]
        axes = ((doc["rows"]["name"], doc["rows"]["values"]), (doc["cols"]["name"], doc["cols"]["values"]))
        title = f"HOR  {doc.get('family', '')}  {doc.get('predictor', '')}".strip()
    render.render_heatmap(grid, axes, args.out, title)
    return EXIT_OK


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "tiles":
        for i, tile in enumerate(synth.tile_corpus(args.n, args.seed)):
            _write(out / f"tile{i:05d}.json", dumps_canonical(scene_to_dict(tile)))
        return EXIT_OK
    if args.kind == "scenarios":
        scenarios = synth.scenario_corpus(args.n, args.seed)
    else:
        scenarios = synth.straight_corpus(args.n, args.seed)
    for scn in scenarios:
        save_scenario(scn, out / f"{scn.id}.json")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _predictor_flags(p):
    p.add_argument("--predictor", choices=["cv", "mpc", "external"], default="cv")
    p.add_argument("--external-cmd", help="command line of an external predictor process")
    p.add_argument("--timeout", type=float, default=30.0, help="seconds to wait for an external answer")


def _search_flags(p):
    p.add_argument("--kmax", type=int, help="number of candidates (default: the whole grid, 60)")
    p.add_argument("--border", type=float, default=T.DEFAULT_BORDER)
    p.add_argument("--families", help="comma-separated subset of smooth,double,ripple")
    p.add_argument("--power", help="keep only candidates with these powers, e.g. 4,8")
    p.add_argument("--sampler", choices=list(search.SAMPLERS), default=search.BRUTE_FORCE)
    p.add_argument("--mu", type=float, default=0.7)
    p.add_argument("--gravity", type=float, default=9.81)
    p.add_argument("--no-physics", action="store_true", help="skip the history slow-down")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scenewarp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("attack", help="search the warp grid for every scenario")
    p.add_argument("scenarios", nargs="+", help="scenario files or directories")
    _predictor_flags(p)
    _search_flags(p)
    p.add_argument("--out", required=True, help="directory for result files and report.json")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("evaluate", help="SOR/HOR on original or attacked scenes")
    p.add_argument("scenarios", nargs="+")
    p.add_argument("--attacked", action="store_true")
    p.add_argument("--filter-trivial", type=float, metavar="V_MIN", help="drop scenarios slower than V_MIN first")
    _predictor_flags(p)
    _search_flags(p)
    p.add_argument("--out", help="report file")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("heatmap", help="HOR over a two-parameter sweep")
    p.add_argument("scenarios", nargs="+")
    p.add_argument("--family", required=True)
    p.add_argument("--rows", required=True, help="name=v1,v2,...")
    p.add_argument("--cols", required=True, help="name=v1,v2,...")
    _predictor_flags(p)
    _search_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("filter-trivial", help="drop scenarios whose history stays below v_min")
    p.add_argument("scenarios", nargs="+")
    p.add_argument("--v-min", type=float, default=1.0)
    p.add_argument("--out", help="directory to copy the kept scenarios to")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("transfer", help="evaluate a predictor on stored successful attacks")
    p.add_argument("results", nargs="+", help="result files or directories")
    _predictor_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("export-aug", help="write winning scenes as scenario files")
    p.add_argument("results", nargs="+")
    p.add_argument("--successes-only", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("index-build", help="build a vocabulary tree over map tiles")
    p.add_argument("--corpus", required=True)
    p.add_argument("--branching", type=int, default=10)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index_build)

    p = sub.add_parser("index-query", help="nearest tiles to a scene")
    p.add_argument("--index", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("-k", type=int, default=10)
    p.set_defaults(func=cmd_index_query)

    p = sub.add_parser("render", help="draw a scenario as SVG")
    p.add_argument("--scenario", required=True, help="scenario or attack result file")
    p.add_argument("--pred", help="prediction file (wire response format or attack result)")
    p.add_argument("--style", help="JSON style overrides")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("heatmap-render", help="draw a heatmap grid as SVG")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_heatmap_render)

    p = sub.add_parser("synth", help="write a synthetic corpus")
    p.add_argument("kind", choices=["scenarios", "straights", "tiles"])
    p.add_argument("-n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"scenewarp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ExternalPredictorError as exc:
        print(f"scenewarp: external predictor: {exc}", file=sys.stderr)
        return EXIT_EXTERNAL
    except search.AttackError as exc:
        print(f"scenewarp: {exc}", file=sys.stderr)
        return EXIT_EXTERNAL
    except (ScenarioError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"scenewarp: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
