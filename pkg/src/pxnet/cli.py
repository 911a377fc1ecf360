"""Command-line front end: ``pxnet fit | predict | simulate | cv | oracle | study``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
Every run writes ``manifest.json`` next to its outputs. Wall-clock timings
live only in the manifest, so the primary outputs are byte-identical for a
repeated command and seed.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import os
import platform
import sys
import time
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bcem import BcemConfig, PxFit, fit
from .evalcv import ESTIMATORS, cv_run
from .netdata import (
    NetworkData,
    NetworkDataError,
    build_design_custom,
    build_design_polbooks,
    build_design_sim,
    check_full_rank,
    impute_missing_X,
    load_network,
    write_network,
)
from .oracle import run_mle_comparison
from .predict import predict_marginal
from .relindex import pair_to_index
from .simgen import BETA_SIM, EigenGenConfig, StudyConfig, run_mse_study, simulate_dataset

__all__ = ["main", "build_parser", "load_data"]

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
_CLASS_COLUMNS = ("class", "value", "leaning", "label")


class CliError(ValueError):
    """Invalid command-line input."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # one diagnostic line instead of usage plus message
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _threads(value) -> int:
    if value is None:
        value = os.environ.get("PXNET_THREADS", "1")
    try:
        t = int(value)
    except ValueError:
        raise CliError(f"threads must be an integer, got {value!r}") from None
    if t < 1:
        raise CliError("threads must be at least 1")
    return t


def _float_list(s: str) -> list[float]:
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def _int_list(s: str) -> list[int]:
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _existing(path: str | None, what: str) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    if not p.exists():
        raise CliError(f"{what} not found: {path}")
    return p


def _bcem_config(args) -> BcemConfig:
    """Merge ``--config`` JSON and ``--set key=value`` pairs over the defaults."""
    over: dict = {}
    if getattr(args, "config", None):
        p = _existing(args.config, "config file")
        try:
            over.update(json.loads(p.read_text()))
        except json.JSONDecodeError as e:
            raise CliError(f"config file is not valid JSON: {e}") from None
    types = {f.name: f.type for f in fields(BcemConfig)}
    for item in getattr(args, "set", None) or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise CliError(f"--set expects key=value, got {item!r}")
        over[key.strip()] = val.strip()
    unknown = set(over) - set(types)
    if unknown:
        raise CliError(f"unknown BC-EM option(s): {', '.join(sorted(unknown))}")
    clean = {}
    for k, v in over.items():
        default = getattr(BcemConfig, k)
        try:
            if isinstance(default, bool):
                clean[k] = v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes", "on")
            elif isinstance(default, int):
                clean[k] = int(v)
            elif isinstance(default, float):
                clean[k] = float(v)
            else:
                clean[k] = str(v)
        except (TypeError, ValueError):
            raise CliError(f"bad value for {k}: {v!r}") from None
    if getattr(args, "seed", None) is not None:
        clean["seed"] = args.seed
    return BcemConfig(**clean)


def load_data(args) -> NetworkData:
    """Build a :class:`NetworkData` from ``--data`` or ``--edges/--nodes`` and ``--formula``."""
    if args.data:
        d = _existing(args.data, "data directory")
        edges, nodes = d / "edges.csv", d / "nodes.csv"
        formula = args.formula or _dir_formula(d)
        if not nodes.exists():
            nodes = None
    else:
        if not args.edges:
            raise CliError("give --data DIR or --edges FILE")
        edges = _existing(args.edges, "edge file")
        nodes = _existing(args.nodes, "node file")
        formula = args.formula or "custom"
    raw = load_network(edges, nodes)

    if formula == "polbooks":
        col = args.class_column or next((c for c in _CLASS_COLUMNS if c in raw.node_attrs), None)
        if col is None or col not in raw.node_attrs:
            raise CliError("polbooks formula needs a node class column (use --class-column)")
        X, cols = build_design_polbooks(raw.node_attrs[col])
    elif formula == "sim":
        for c in ("x1", "x2"):
            if c not in raw.node_attrs:
                raise CliError(f"sim formula needs node column {c}")
        if "x3" not in raw.edge_attrs:
            raise CliError("sim formula needs dyadic column x3")
        x1 = np.array([float(v) for v in raw.node_attrs["x1"]])
        x2 = np.array([float(v) for v in raw.node_attrs["x2"]])
        X, cols = build_design_sim(x1, x2, raw.edge_attrs["x3"])
    elif formula == "custom":
        columns = args.columns.split(",") if args.columns else None
        X, cols, cell_missing = build_design_custom(raw, columns, intercept=not args.no_intercept)
        X = impute_missing_X(X, cell_missing)
    else:
        raise CliError(f"unknown formula {formula!r}")
    miss = raw.missing
    check_full_rank(X, ~miss)
    return NetworkData(raw.n, np.nan_to_num(raw.y), X, cols, miss, tuple(raw.ids))


def _dir_formula(d: Path) -> str:
    meta = d / "columns.json"
    if meta.exists():
        try:
            return json.loads(meta.read_text()).get("formula", "custom")
        except json.JSONDecodeError:
            pass
    return "custom"


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _jsonable(v):
    if isinstance(v, Path):
        return str(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def _write_manifest(out: Path, args, argv, extra: dict) -> None:
    config = {k: _jsonable(v) for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "config": config,
        "seed": getattr(args, "seed", None),
        "versions": {
            "pxnet": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        **extra,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n")


# ----------------------------------------------------------------------------
# subcommands


def cmd_fit(args, argv) -> int:
    cfg = _bcem_config(args)
    data = load_data(args)
    out = _out_dir(args)
    t0 = time.perf_counter()
    res = fit(data, cfg)
    secs = time.perf_counter() - t0
    d = res.to_dict()
    d.pop("runtime_seconds")
    d["n"] = data.n
    d["config"] = asdict(cfg)
    _dump(out / "fit.json", d)
    _write_manifest(out, args, argv, {"outputs": ["fit.json"], "runtime_seconds": secs})
    print(f"beta = {np.array2string(res.beta, precision=4)}  rho = {res.rho:.4f}  "
          f"converged = {res.converged} ({res.iterations} iterations)")
    return EXIT_OK


def _read_targets(path: Path, data: NetworkData) -> np.ndarray:
    pos = {str(a): k for k, a in enumerate(data.actor_ids)}
    idx = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or "i" not in reader.fieldnames or "j" not in reader.fieldnames:
            raise CliError("targets file needs columns i and j")
        for line, r in enumerate(reader, start=2):
            a, b = r["i"].strip(), r["j"].strip()
            if a not in pos or b not in pos or a == b:
                raise CliError(f"targets line {line}: invalid pair ({a}, {b})")
            i, j = sorted((pos[a], pos[b]))
            idx.append(pair_to_index(i, j, data.n))
    if not idx:
        raise CliError("targets file is empty")
    return np.asarray(idx, dtype=np.int64)


def cmd_predict(args, argv) -> int:
    data = load_data(args)
    fit_path = _existing(args.fit, "fit file")
    try:
        res = PxFit.from_json(fit_path.read_text())
    except (json.JSONDecodeError, KeyError) as e:
        raise CliError(f"cannot read fit file: {e}") from None
    if len(res.beta) != data.X.shape[1]:
        raise CliError(f"fit has {len(res.beta)} coefficients but the design has {data.X.shape[1]} columns")
    targets = _read_targets(_existing(args.targets, "targets file"), data) if args.targets else None
    if targets is None and not data.has_missing:
        raise CliError("no missing relations to predict; supply --targets")
    cfg = _bcem_config(args)
    pred = predict_marginal(res, data, targets, cfg)
    out = _out_dir(args)
    pred.write_csv(out / "scores.csv", data.n, data.actor_ids)
    _write_manifest(out, args, argv, {"outputs": ["scores.csv"], "imputed_value": pred.imputed})
    print(f"wrote {len(pred.index)} predictions to {out / 'scores.csv'}")
    return EXIT_OK


def cmd_simulate(args, argv) -> int:
    beta = BETA_SIM if args.beta is None else np.asarray(args.beta, dtype=float)
    if len(beta) != 4:
        raise CliError("the simulation design has four coefficients")
    eigen = EigenGenConfig(K=args.K) if args.model == "eigen" else None
    data, x1, x2, _ = simulate_dataset(args.model, args.n, args.seed, rho=args.rho, beta=beta, eigen=eigen)
    out = _out_dir(args)
    # keep x3 as the only dyadic column; x1 and x2 go to the node file
    sim = NetworkData(data.n, data.y, data.X[:, 3:], ("x3",), data.missing, data.actor_ids)
    write_network(sim, out)
    with open(out / "nodes.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "x1", "x2"])
        for a, u, v in zip(data.actor_ids, x1, x2):
            w.writerow([a, "%.17g" % u, "%.17g" % v])
    meta = {"n": data.n, "columns": ["x3"], "formula": "sim", "model": args.model,
            "rho": args.rho if args.model == "px" else None, "beta": [float(b) for b in beta], "seed": args.seed}
    _dump(out / "columns.json", meta)
    _write_manifest(out, args, argv, {"outputs": ["edges.csv", "nodes.csv", "columns.json"]})
    print(f"wrote {data.n}-actor network ({int(data.y.sum())} ties) to {out}")
    return EXIT_OK


def cmd_cv(args, argv) -> int:
    cfg = _bcem_config(args)
    data = load_data(args)
    ests = tuple(e.strip() for e in args.estimators.split(",") if e.strip())
    bad = set(ests) - set(ESTIMATORS)
    if bad or not ests:
        raise CliError(f"estimators must be drawn from {', '.join(ESTIMATORS)}")
    report = cv_run(data, ests, args.k, args.seed, cfg, threads=_threads(args.threads))
    out = _out_dir(args)
    d = report.to_dict()
    timings = {e: m.pop("mean_fold_seconds") for e, m in d["metrics"].items()}
    fold_secs = [f.pop("seconds") for f in d["folds"]]
    _dump(out / "cv_report.json", d)
    report.write_scores_csv(out / "cv_scores.csv", data.actor_ids)
    _write_manifest(out, args, argv, {"outputs": ["cv_report.json", "cv_scores.csv"],
                                      "mean_fold_seconds": timings, "fold_seconds": fold_secs})
    for e in ests:
        m = report.metrics[e]
        pr = "nan" if m["prauc"] is None else f"{m['prauc']:.4f}"
        auc = "nan" if m["roc_auc"] is None else f"{m['roc_auc']:.4f}"
        print(f"{e:8s} PRAUC {pr}  ROC AUC {auc}  mean fold {m['mean_fold_seconds']:.2f}s")
    return EXIT_OK


def cmd_oracle(args, argv) -> int:
    if args.n > 16:
        raise CliError("the simulated-likelihood oracle supports n <= 16")
    cfg = _bcem_config(args)
    res = run_mle_comparison(n=args.n, rhos=tuple(args.rhos), reps=args.reps, draws=args.draws,
                             beta=args.beta_true, seed=args.seed, bcem_config=cfg)
    out = _out_dir(args)
    res.write_csv(out / "mle_comparison.csv")
    res.write_summary_csv(out / "mle_summary.csv")
    _write_manifest(out, args, argv, {"outputs": ["mle_comparison.csv", "mle_summary.csv"]})
    for r in res.summary:
        print(f"rho={r['rho']:.2f}  MSE(bcem-mle)={r['mse_bcem_vs_mle']:.5f}  "
              f"MSE(mle-truth)={r['mse_mle_vs_truth']:.5f}  MSE(probit0-mle)={r['mse_probit0_vs_mle']:.5f}")
    return EXIT_OK


def cmd_study(args, argv) -> int:
    cfg = _bcem_config(args)
    bc = asdict(cfg)
    bc.pop("seed")
    study = StudyConfig(generator=args.generator, rho=args.rho, ns=tuple(args.ns), designs=args.designs,
                        reps=args.reps, seed=args.seed, threads=_threads(args.threads), bcem=bc)
    res = run_mse_study(study)
    out = _out_dir(args)
    res.write_csv(out / "study_cells.csv")
    summary = res.summary()
    with open(out / "study_summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(summary[0]) if summary else ["estimator"])
        w.writeheader()
        w.writerows(summary)
    _write_manifest(out, args, argv, {"outputs": ["study_cells.csv", "study_summary.csv"]})
    for r in summary:
        print(f"{r['estimator']:8s} n={r['n']:<4d} {r['coef']:6s} median MSE {r['median_mse']:.5f}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# parser


def _data_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("input network")
    g.add_argument("--data", metavar="DIR", help="directory with edges.csv, nodes.csv and columns.json")
    g.add_argument("--edges", metavar="CSV", help="edge file: i,j[,y][,dyadic columns...]")
    g.add_argument("--nodes", metavar="CSV", help="node file: id[,node columns...]")
    g.add_argument("--formula", choices=("polbooks", "sim", "custom"),
                   help="design: polbooks (same class, either neutral), sim (x1, x2, x3), "
                        "custom (dyadic edge columns); default from columns.json or custom")
    g.add_argument("--columns", help="custom formula: comma-separated dyadic columns (default all)")
    g.add_argument("--no-intercept", action="store_true", help="custom formula: omit the intercept")
    g.add_argument("--class-column", help="polbooks formula: node column holding the class label")


def _bcem_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("estimator settings")
    g.add_argument("--config", metavar="JSON", help="JSON file of BC-EM settings")
    g.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one BC-EM setting (repeatable), e.g. --set tol=1e-5")


def _common(p: argparse.ArgumentParser, seed_required: bool) -> None:
    p.add_argument("--seed", type=int, required=seed_required, help="random seed" + (" (required)" if seed_required else ""))
    p.add_argument("--out", default=".", metavar="DIR", help="output directory (default: current)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="pxnet",
        description="Probit exchangeable regression for undirected binary networks.",
        epilog="Exit codes: 0 success, 2 invalid input, 3 numerical failure.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("fit", help="estimate beta and rho by BC-EM; writes fit.json")
    _data_args(p)
    _bcem_args(p)
    _common(p, True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="marginal predictions for held-out relations; writes scores.csv")
    _data_args(p)
    _bcem_args(p)
    p.add_argument("--fit", required=True, metavar="JSON", help="fit.json from the fit command")
    p.add_argument("--targets", metavar="CSV", help="pairs to predict (columns i,j); default all missing")
    p.add_argument("--seed", type=int, help="unused; accepted for symmetry")
    p.add_argument("--out", default=".", metavar="DIR", help="output directory (default: current)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="simulate a network; writes edges.csv, nodes.csv, columns.json")
    p.add_argument("--model", choices=("px", "eigen"), default="px", help="generator (default px)")
    p.add_argument("--n", type=int, required=True, help="number of actors")
    p.add_argument("--rho", type=float, default=0.25, help="shared-actor correlation for px (default 0.25)")
    p.add_argument("--beta", type=_float_list, help="four comma-separated coefficients (default -.5,.5,.5,.5)")
    p.add_argument("--K", type=int, default=2, help="latent dimension for the eigen generator (default 2)")
    _common(p, True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cv", help="K-fold cross-validation; writes cv_report.json and cv_scores.csv")
    _data_args(p)
    _bcem_args(p)
    p.add_argument("--k", type=int, default=10, help="number of folds (default 10)")
    p.add_argument("--estimators", default="bcem,probit0", help="comma-separated subset of bcem,probit0")
    p.add_argument("--threads", help="worker processes (default $PXNET_THREADS or 1)")
    _common(p, True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("oracle", help="compare BC-EM with the simulated-likelihood MLE at small n")
    _bcem_args(p)
    p.add_argument("--n", type=int, default=8, help="number of actors, at most 16 (default 8)")
    p.add_argument("--rhos", type=_float_list, default=[0.1, 0.2, 0.3], help="comma-separated rho values")
    p.add_argument("--reps", type=int, default=20, help="replicates per rho (default 20)")
    p.add_argument("--draws", type=int, default=2000, help="GHK draws per likelihood (default 2000)")
    p.add_argument("--beta-true", type=float, default=0.5, help="true coefficient (default 0.5)")
    _common(p, True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("study", help="coefficient-recovery study over n; writes study CSVs")
    _bcem_args(p)
    p.add_argument("--generator", choices=("px", "eigen"), default="px", help="data generator (default px)")
    p.add_argument("--rho", type=float, default=0.25, help="px correlation (default 0.25)")
    p.add_argument("--ns", type=_int_list, default=[20, 40, 80], help="actor counts (default 20,40,80)")
    p.add_argument("--designs", type=int, default=5, help="covariate designs per n (default 5)")
    p.add_argument("--reps", type=int, default=20, help="replicates per design (default 20)")
    p.add_argument("--threads", help="worker processes (default $PXNET_THREADS or 1)")
    _common(p, True)
    p.set_defaults(func=cmd_study)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    try:
        return args.func(args, argv)
    except (np.linalg.LinAlgError, ArithmeticError) as e:
        print(f"pxnet: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CliError, NetworkDataError, ValueError, KeyError, OSError) as e:
        msg = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"pxnet: error: {msg}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
