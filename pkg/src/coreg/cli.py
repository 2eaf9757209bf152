"""Command-line entry point: ``coreg <command> [options]``.

Every command writes its artifacts into ``--out`` (CSV tables prefixed by a
``#`` header block, plus a JSON summary). Failures exit nonzero, print a JSON
error object on stderr and remove any partial outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CoreError, ParseError
from .inference import gof_curve, permutation_test, rmpe, split_panel
from .io import fmt, load_panel, payload_header, save_panel, write_header_block
from .kernels import FAMILIES, KernelSpec
from .regression import Estimator, fit_global_batch, fit_local_batch
from .selection import cv_select_global, cv_select_local
from .simulation import SimConfig, generate_panel, run_monte_carlo

log = logging.getLogger("coreg")

# keys excluded from the config hash so reruns into other directories match
_UNHASHED = {"out", "config", "func", "verbose"}


class Outputs:
    """Tracks files written by a command so a failure can remove them."""

    def __init__(self, outdir, meta: dict):
        self.dir = Path(outdir)
        self.meta = meta
        self.written: list[Path] = []
        self._created_dir = not self.dir.exists()

    def _path(self, name):
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        self.written.append(p)
        return p

    def table(self, name, header, rows):
        with open(self._path(name), "w", newline="") as fh:
            write_header_block(fh, self.meta)
            fh.write(",".join(header) + "\n")
            for r in rows:
                fh.write(",".join(_cell(v) for v in r) + "\n")

    def json(self, name, obj):
        payload = {"meta": self.meta, **obj}
        with open(self._path(name), "w") as fh:
            json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def panel(self, name, panel):
        save_panel(panel, self._path(name), self.meta)

    def cleanup(self):
        for p in self.written:
            p.unlink(missing_ok=True)
        if self._created_dir and self.dir.is_dir() and not any(self.dir.iterdir()):
            self.dir.rmdir()


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return fmt(v) if math.isfinite(v) else ("nan" if math.isnan(v) else "inf")
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


# ---------------------------------------------------------------------------
# argument helpers


def _grid_spec(text: str) -> np.ndarray:
    """``lo:hi:k`` -> k evenly spaced points (inclusive); or comma list."""
    if ":" in text:
        lo, hi, k = text.split(":")
        return np.linspace(float(lo), float(hi), int(k))
    return np.array([float(v) for v in text.split(",") if v.strip()])


def _range(text: str) -> tuple[float, float]:
    lo, hi = (float(v) for v in text.split(":"))
    if not hi > lo:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return lo, hi


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return v


def _estimator(args) -> Estimator:
    kernel = KernelSpec(args.kernel)
    if args.estimator == "local":
        if args.h1 is None or args.h2 is None:
            raise ParseError("--h1 and --h2 are required for the local estimator")
        return Estimator("local", h1=args.h1, h2=args.h2, kernel=kernel)
    if args.h is None:
        raise ParseError("--h is required for the global estimator")
    return Estimator("global", h=args.h, kernel=kernel)


def _read_queries(path, p: int):
    import csv

    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#")) if r]
    header = [h.strip() for h in rows[0]]
    want = (["x"] if p == 1 else [f"x{k}" for k in range(1, p + 1)]) + ["t"]
    if header != want:
        raise ParseError(f"query header must be {','.join(want)}", row=1)
    vals = []
    for k, r in enumerate(rows[1:], start=2):
        try:
            vals.append([float(v) for v in r])
        except ValueError:
            raise ParseError("non-numeric query", row=k) from None
        if len(r) != len(want):
            raise ParseError(f"expected {len(want)} fields", row=k)
    q = np.array(vals, dtype=float).reshape(-1, len(want))
    return q[:, :-1], q[:, -1]


def _queries(args, p: int):
    if args.queries:
        return _read_queries(args.queries, p)
    if args.x_grid is None or args.t_grid is None:
        raise ParseError("give --queries FILE or both --x-grid and --t-grid")
    if p != 1:
        raise ParseError("--x-grid needs a scalar covariate; use --queries for p > 1")
    X, T = np.meshgrid(_grid_spec(args.x_grid), _grid_spec(args.t_grid), indexing="ij")
    return X.reshape(-1, 1), T.ravel()


# ---------------------------------------------------------------------------
# commands


def _write_fits(out: Outputs, panel, xq, tq, results):
    xcols = ["x"] if panel.p == 1 else [f"x{k}" for k in range(1, panel.p + 1)]
    payload = payload_header(panel.space)
    rows = []
    for k, r in enumerate(results):
        if r.singular:
            vals = [None] * len(payload)
        else:
            vals = panel.space.unwrap(r.fitted).reshape(-1).tolist()
        rows.append([*xq[k].tolist(), tq[k], "singular" if r.singular else "ok",
                     r.objective if r.ok else None, *vals])
    out.table("fits.csv", [*xcols, "t", "status", "objective", *payload], rows)
    n_sing = sum(r.singular for r in results)
    out.json("summary.json", {"queries": len(results), "singular": n_sing,
                              "bandwidths": list(results[0].bandwidths) if results else []})


def cmd_fit_local(args, out: Outputs):
    panel = load_panel(args.input, args.space)
    xq, tq = _queries(args, panel.p)
    q = np.column_stack([xq[:, 0], tq])
    res = fit_local_batch(panel, q, args.h1, args.h2, KernelSpec(args.kernel), on_singular="skip")
    _write_fits(out, panel, xq, tq, res)


def cmd_fit_global(args, out: Outputs):
    panel = load_panel(args.input, args.space)
    xq, tq = _queries(args, panel.p)
    res = fit_global_batch(panel, xq, tq, args.h, KernelSpec(args.kernel), on_singular="skip")
    _write_fits(out, panel, xq, tq, res)


def cmd_cv(args, out: Outputs):
    panel = load_panel(args.input, args.space)
    kernel = KernelSpec(args.kernel)
    if args.estimator == "local":
        g1 = _floats(args.grid_h1 or args.grid)
        g2 = _floats(args.grid_h2 or args.grid)
        grid = [(a, b) for a in g1 for b in g2]
        h1, h2, cv = cv_select_local(panel, grid, kernel)
        header = ["h1", "h2", "score", "skipped_folds", "folds"]
        selected = {"h1": h1, "h2": h2}
    else:
        h, cv = cv_select_global(panel, _floats(args.grid), kernel)
        header = ["h", "score", "skipped_folds", "folds"]
        selected = {"h": h}
    rows = [[*c.bandwidths, c.score, c.skipped_folds, c.folds] for c in cv.candidates]
    out.table("cv.csv", header, rows)
    out.json("summary.json", {"estimator": args.estimator, "selected": selected,
                              "score": cv.best.score, "candidates": len(rows)})


def cmd_simulate(args, out: Outputs):
    cfg = SimConfig(setting=args.setting, n=args.n, n_i=args.ni, n_i_max=args.ni_max,
                    seed=args.seed, m=args.m)
    kernel = KernelSpec(args.kernel)
    kinds = ["local", "global"] if args.estimator == "both" else [args.estimator]
    ests = {}
    for kind in kinds:
        if kind == "local":
            if args.h1 is None or args.h2 is None:
                raise ParseError("--h1 and --h2 are required for the local estimator")
            ests[kind] = Estimator("local", h1=args.h1, h2=args.h2, kernel=kernel)
        else:
            if args.h is None:
                raise ParseError("--h is required for the global estimator")
            ests[kind] = Estimator("global", h=args.h, kernel=kernel)
    if args.emit_panel:
        out.panel("panel.csv", generate_panel(cfg).panel)
    mc = run_monte_carlo(cfg, args.reps, ests, args.x_range, args.t_range, args.quad)
    rows = [[r, *(mc.ise[k][r] for k in kinds)] for r in range(args.reps)]
    out.table("ise.csv", ["rep", *kinds], rows)
    out.json("summary.json", {"setting": cfg.setting, "n": cfg.n, "n_i": cfg.n_i,
                              "reps": args.reps, "ise": mc.summary()})


def cmd_gof(args, out: Outputs):
    panel = load_panel(args.input, args.space)
    curve = gof_curve(panel, _estimator(args), _grid_spec(args.t_grid))
    out.table("gof.csv", ["t", "mse", "count"], curve.rows())
    out.json("summary.json", {"integrated_deviance": curve.integrated,
                              "skipped_nodes": curve.skipped_nodes,
                              "singular_observations": curve.singular_obs})


def cmd_rmpe(args, out: Outputs):
    panel = load_panel(args.input, args.space)
    est = _estimator(args)
    seed = args.seed if args.split_seed is None else args.split_seed
    rows = []
    for k in range(args.splits):
        train, test = split_panel(panel, args.train_frac, seed, k)
        r = rmpe(train, test, est)
        rows.append([k, train.n, test.n, r.value, r.excluded])
    out.table("rmpe.csv", ["split", "n_train", "n_test", "rmpe", "excluded"], rows)
    vals = np.array([r[3] for r in rows])
    out.json("summary.json", {"estimator": est.kind, "splits": args.splits,
                              "mean_rmpe": float(vals.mean()), "median_rmpe": float(np.median(vals))})


def cmd_permtest(args, out: Outputs):
    a = load_panel(args.input_a, args.space)
    b = load_panel(args.input_b, args.space)
    res = permutation_test(a, b, _estimator(args), args.x_range, args.t_range, args.quad,
                           args.B, args.seed)
    out.table("permtest.csv", ["perm", "statistic", "count_drift"],
              [[k, s, d] for k, (s, d) in enumerate(zip(res.permuted, res.count_drift))])
    out.json("summary.json", {"observed": res.observed, "p_value": res.p_value, "B": res.B,
                              "skipped_nodes": res.skipped_nodes})


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser):
    p.add_argument("--out", default="coreg-out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kernel", choices=FAMILIES, default="gaussian")
    p.add_argument("--space", choices=("euclidean", "wasserstein", "correlation"), default=None,
                   help="expected response space (inferred from the header if omitted)")
    p.add_argument("--config", help="key=value file; command-line flags take precedence")
    p.add_argument("-v", "--verbose", action="store_true")


def _bandwidth_flags(p, estimator_choice=True):
    if estimator_choice:
        p.add_argument("--estimator", choices=("local", "global"), default="local")
    p.add_argument("--h1", type=_positive, help="covariate bandwidth (local)")
    p.add_argument("--h2", type=_positive, help="time bandwidth (local)")
    p.add_argument("--h", type=_positive, help="time bandwidth (global)")


class _Parser(argparse.ArgumentParser):
    """Reports usage errors as :class:`ParseError` so they reach stderr as JSON."""

    def error(self, message):
        raise ParseError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"coreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, func, helptext in (
        ("fit-local", cmd_fit_local, "nonparametric CORE fits at query points"),
        ("fit-global", cmd_fit_global, "partially global CORE fits at query points"),
    ):
        p = sub.add_parser(name, help=helptext)
        _common(p)
        p.add_argument("--input", required=True)
        if name == "fit-local":
            p.add_argument("--h1", type=_positive, required=True)
            p.add_argument("--h2", type=_positive, required=True)
        else:
            p.add_argument("--h", type=_positive, required=True)
        p.add_argument("--queries", help="CSV with columns x,t (or x1..xp,t)")
        p.add_argument("--x-grid", help="lo:hi:k")
        p.add_argument("--t-grid", help="lo:hi:k")
        p.set_defaults(func=func)

    p = sub.add_parser("cv", help="leave-one-subject-out bandwidth selection")
    _common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--estimator", choices=("local", "global"), default="local")
    p.add_argument("--grid", default="0.05,0.1,0.2,0.4", help="comma-separated bandwidths")
    p.add_argument("--grid-h1", help="covariate bandwidths (local); defaults to --grid")
    p.add_argument("--grid-h2", help="time bandwidths (local); defaults to --grid")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("simulate", help="Monte Carlo ISE study on synthetic panels")
    _common(p)
    p.add_argument("--setting", choices=("I", "II"), default="I")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--ni", type=int, default=10)
    p.add_argument("--ni-max", type=int, default=None,
                   help="draw n_i uniformly from [ni, ni-max] per subject")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--m", type=int, default=100, help="quantile grid size")
    p.add_argument("--estimator", choices=("local", "global", "both"), default="both")
    _bandwidth_flags(p, estimator_choice=False)
    p.add_argument("--quad", type=int, default=25, help="midpoint nodes per axis")
    p.add_argument("--x-range", type=_range, default=(0.0, 1.0))
    p.add_argument("--t-range", type=_range, default=(0.0, 1.0))
    p.add_argument("--emit-panel", action="store_true", help="also write the seed's panel.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gof", help="goodness-of-fit curve and integrated deviance")
    _common(p)
    p.add_argument("--input", required=True)
    _bandwidth_flags(p)
    p.add_argument("--t-grid", required=True, help="lo:hi:k")
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("rmpe", help="out-of-sample root mean squared prediction error")
    _common(p)
    p.add_argument("--input", required=True)
    _bandwidth_flags(p)
    p.add_argument("--train-frac", type=float, default=2 / 3)
    p.add_argument("--split-seed", type=int, default=None, help="defaults to --seed")
    p.add_argument("--splits", type=int, default=1)
    p.set_defaults(func=cmd_rmpe)

    p = sub.add_parser("permtest", help="two-group permutation test")
    _common(p)
    p.add_argument("--input-a", required=True)
    p.add_argument("--input-b", required=True)
    _bandwidth_flags(p)
    p.add_argument("--x-range", type=_range, required=True)
    p.add_argument("--t-range", type=_range, required=True)
    p.add_argument("--quad", type=int, default=10)
    p.add_argument("--B", type=int, default=199)
    p.set_defaults(func=cmd_permtest)
    return parser


def _read_config(path) -> dict:
    cfg = {}
    for k, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key=value", row=k)
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = value
    return cfg


def _parse(argv):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    config_path = pre.parse_known_args(argv)[0].config
    choices = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in choices), None)
    if config_path and command:
        cfg = _read_config(config_path)
        subparser = choices[command]
        known = {a.dest: a for a in subparser._actions}
        unknown = sorted(set(cfg) - set(known))
        if unknown:
            raise ParseError(f"unknown config keys: {', '.join(unknown)}")
        for key, value in cfg.items():
            action = known[key]
            if isinstance(action, argparse._StoreTrueAction):
                cfg[key] = value.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                try:
                    cfg[key] = action.type(value)
                except (ValueError, argparse.ArgumentTypeError) as exc:
                    raise ParseError(f"config key {key}: {exc}") from None
            if action.choices is not None and cfg[key] not in action.choices:
                raise ParseError(f"config key {key}: invalid choice {value!r}")
            action.required = False
        subparser.set_defaults(**cfg)
    return parser.parse_args(argv)


def _meta(args) -> dict:
    conf = {k: v for k, v in sorted(vars(args).items()) if k not in _UNHASHED}
    digest = hashlib.sha256(json.dumps(_jsonable(conf), sort_keys=True, default=str).encode())
    return {
        "coreg_version": __version__,
        "command": args.command,
        "seed": args.seed,
        "config_hash": digest.hexdigest()[:16],
    }


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except CoreError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Outputs(args.out, _meta(args))
    try:
        args.func(args, out)
    except CoreError as exc:
        out.cleanup()
        print(json.dumps(_jsonable(exc.to_dict())), file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        out.cleanup()
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
