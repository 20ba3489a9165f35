"""Command-line interface: simulate, run, bench and order-curve.

Settings resolve as flags > config file > built-in defaults. The resolved
settings (minus --out, --config, --threads, --verbose) are written into
every output so a result file can be fed back through ``--config`` to
reproduce it. Exit codes: 0 success, 1 usage/input error, 2 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .dataset import DataError, Dataset, center, load_csv, load_matrix, write_csv
from .experiments import (
    ReplicationError,
    bench,
    nan_to_none,
    order_curve,
    regime_defaults,
    run_methods,
    scenario_replication,
    semisynthetic_replication,
    simulate,
    third,
)
from .metrics import TABLE_COLUMNS
from .randgen import GENERATOR_INFO, SCENARIOS, ScenarioSpec, scenario
from .solvers import ConvergenceError, DegenerateGridError, lasso_path
from .solvers.lasso import OBJECTIVE_INFO
from .solvers.stepwise import STEPWISE_INFO
from .stabsel import StabSelConfig, pfer_bound, save_members

log = logging.getLogger("stabprune")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2
MODES = ("stabsel", "pruned", "lasso-baseline")
NUMERIC_ERRORS = (ConvergenceError, DegenerateGridError, ReplicationError, np.linalg.LinAlgError, FloatingPointError)
# settings that change how a command runs but never what it computes
PLUMBING = ("out", "config", "threads", "verbose")


class UsageError(Exception):
    pass


# --- settings ---------------------------------------------------------------------

def _int_list(v) -> list[int]:
    if isinstance(v, str):
        v = [s for s in v.split(",") if s.strip()]
    return [int(x) for x in v]


def _str_list(v) -> list[str]:
    if isinstance(v, str):
        v = [s.strip() for s in v.split(",") if s.strip()]
    return [str(x) for x in v]


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _opt(kind: Callable) -> Callable:
    # values that may legitimately be absent (null in JSON, "none" in text)
    def parse(v):
        if v is None or (isinstance(v, str) and v.strip().lower() in ("", "none", "null")):
            return None
        return kind(v)

    return parse


@dataclass(frozen=True)
class Setting:
    kind: Callable
    default: Any
    help: str


SCENARIO_KEYS = {
    "scenario": Setting(_opt(str), None, f"scenario key ({', '.join(SCENARIOS)})"),
    "n": Setting(_opt(int), None, "override the scenario sample size"),
    "p": Setting(_opt(int), None, "override the scenario dimension"),
    "rho": Setting(_opt(float), None, "override the scenario correlation"),
    "sigma": Setting(_opt(float), None, "override the scenario noise level"),
}
ENSEMBLE_KEYS = {
    "B": Setting(int, 100, "ensemble size"),
    "K": Setting(int, 100, "lambda grid size"),
    "pi_thr": Setting(_opt(float), None, "selection threshold (default: 0.7, or 0.6 for scenario 1)"),
    "q_target": Setting(_opt(int), None, "variables per base learner (default: ceil(sqrt(1.6p)), or ceil(0.8p) for scenario 1)"),
}
COMMANDS: dict[str, dict[str, Setting]] = {
    "simulate": {
        "seed": Setting(int, 0, "master seed"),
        **SCENARIO_KEYS,
    },
    "run": {
        "seed": Setting(int, 0, "master seed"),
        "data": Setting(_opt(str), None, "input CSV (alternative to --scenario)"),
        "response": Setting(str, "-1", "response column name or index"),
        "family": Setting(str, "gaussian", "gaussian or binomial (CSV input)"),
        "scale": Setting(_bool, False, "scale columns to unit variance after centering"),
        **SCENARIO_KEYS,
        "mode": Setting(str, "pruned", f"one of {', '.join(MODES)}"),
        **ENSEMBLE_KEYS,
        "fraction": Setting(float, 1 / 3, "fraction of ordered members kept"),
        "save_members": Setting(_bool, False, "write the member archive members.npz"),
        "dump_path": Setting(_bool, False, "write the full-data lasso path to path.csv"),
    },
    "bench": {
        "seed": Setting(int, 0, "master seed"),
        **SCENARIO_KEYS,
        "design": Setting(_opt(str), None, "design CSV for the semi-synthetic protocol"),
        "s": Setting(_opt(int), None, "semi-synthetic: number of nonzero coefficients"),
        "snr": Setting(_opt(float), None, "semi-synthetic: signal-to-noise ratio (gaussian)"),
        "family": Setting(str, "gaussian", "semi-synthetic response family"),
        "train_fraction": Setting(float, 0.9, "semi-synthetic: training share of each split"),
        "scale": Setting(_bool, False, "semi-synthetic: scale design columns"),
        "M": Setting(int, 50, "number of replications"),
        "methods": Setting(_str_list, ["stabsel", "pruned"], "comma-separated subset of stabsel,pruned,lasso"),
        "n_test": Setting(int, 10_000, "scenario test-set size"),
        **ENSEMBLE_KEYS,
        "fraction": Setting(float, 1 / 3, "fraction of ordered members kept"),
    },
    "order-curve": {
        "seed": Setting(int, 0, "master seed"),
        **SCENARIO_KEYS,
        "M": Setting(int, 50, "number of replications"),
        **ENSEMBLE_KEYS,
        "pools": Setting(_opt(_int_list), None, "initial pool sizes, e.g. 300,500,1000 (largest sets B)"),
    },
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stabprune", description="Stability selection with ordering-based ensemble pruning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, keys in COMMANDS.items():
        sp = sub.add_parser(name, argument_default=argparse.SUPPRESS)
        sp.add_argument("--out", help="output directory (default: results)")
        sp.add_argument("--config", help="config file: key = value lines, or a JSON result/sidecar file")
        sp.add_argument("--threads", type=int, help="worker threads (default: 1); never changes results")
        sp.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
        for key, s in keys.items():
            flag = "--" + key.replace("_", "-")
            if s.kind is _bool:
                sp.add_argument(flag, dest=key, action="store_true", help=s.help)
            else:
                sp.add_argument(flag, dest=key, type=_cli_type(s.kind), help=s.help)
    return parser


def _cli_type(kind):
    def parse(v):
        try:
            return kind(v)
        except (TypeError, ValueError) as e:
            raise argparse.ArgumentTypeError(str(e)) from None

    parse.__name__ = getattr(kind, "__name__", "value")
    return parse


def read_config(path: str | Path) -> dict:
    """Settings from a ``key = value`` text file or a JSON file.

    A JSON output of this tool carries its settings under ``"config"``;
    that block is used when present.
    """
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise UsageError(f"{path}: invalid JSON: {e}") from None
        if not isinstance(obj, dict):
            raise UsageError(f"{path}: expected a JSON object")
        obj = obj.get("config", obj)
        return {str(k).replace("-", "_"): v for k, v in obj.items()}
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def resolve(command: str, flags: dict) -> dict:
    """Merge defaults, config file and flags into one typed settings dict."""
    keys = COMMANDS[command]
    cfg = {k: s.default for k, s in keys.items()}
    if flags.get("config"):
        for k, v in read_config(flags["config"]).items():
            if k in PLUMBING or k == "command":
                continue
            if k not in keys:
                raise UsageError(f"unknown setting {k!r} for {command}; valid: {', '.join(keys)}")
            try:
                cfg[k] = keys[k].kind(v)
            except (TypeError, ValueError) as e:
                raise UsageError(f"config setting {k}: {e}") from None
    for k, v in flags.items():
        if k in keys:
            cfg[k] = v
    return cfg


# --- output helpers ---------------------------------------------------------------

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        return nan_to_none(float(x))
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _csv_cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def write_rows(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_csv_cell(v) for v in r])


def _meta(command: str, cfg: dict) -> dict:
    return {"command": command, "config": cfg, "version": __version__, "generator": GENERATOR_INFO}


# --- validation -------------------------------------------------------------------

def _scenario_spec(cfg: dict) -> ScenarioSpec:
    overrides = {k: cfg[k] for k in ("n", "p", "rho", "sigma")}
    try:
        return scenario(cfg["scenario"], **overrides)
    except KeyError as e:
        raise UsageError(e.args[0]) from None
    except ValueError as e:
        raise UsageError(str(e)) from None


def _ensemble(cfg: dict, spec: ScenarioSpec | None, p: int) -> StabSelConfig:
    """Fill regime defaults into ``cfg`` and build the ensemble config."""
    q, pi = regime_defaults(spec, p)
    if cfg["q_target"] is None:
        cfg["q_target"] = q
    if cfg["pi_thr"] is None:
        cfg["pi_thr"] = pi
    return StabSelConfig(B=cfg["B"], K=cfg["K"], pi_thr=cfg["pi_thr"], q_target=cfg["q_target"],
                         master_seed=cfg["seed"])


def _check_fraction(f: float) -> None:
    if not 0.0 < f <= 1.0:
        raise UsageError(f"fraction must lie in (0, 1], got {f}")


def _check_positive(cfg: dict, *keys: str) -> None:
    for k in keys:
        if cfg[k] < 1:
            raise UsageError(f"{k} must be >= 1, got {cfg[k]}")


# --- commands ------------------------------------------------------------------------

def cmd_simulate(cfg: dict, out: Path, threads: int) -> int:
    if cfg["scenario"] is None:
        raise UsageError("simulate needs --scenario")
    spec = _scenario_spec(cfg)
    data, beta = simulate(spec, cfg["seed"])
    out.mkdir(parents=True, exist_ok=True)
    write_csv(data, out / "data.csv")
    write_json(out / "data.json", {
        **_meta("simulate", cfg),
        "beta_true": beta,
        "sigma": spec.sigma,
        "family": spec.family,
        "scenario": spec.as_dict(),
        "seed": cfg["seed"],
        "shape": [data.n, data.p],
    })
    log.info("wrote %s (%d x %d)", out / "data.csv", data.n, data.p + 1)
    return EXIT_OK


def _load_run_data(cfg: dict) -> tuple[Dataset, ScenarioSpec | None]:
    if (cfg["data"] is None) == (cfg["scenario"] is None):
        raise UsageError("run needs exactly one of --data or --scenario")
    if cfg["scenario"] is not None:
        spec = _scenario_spec(cfg)
        return simulate(spec, cfg["seed"])[0], spec
    try:
        d = load_csv(cfg["data"], cfg["response"], cfg["family"])
    except (DataError, FileNotFoundError) as e:
        raise UsageError(str(e)) from None
    return d, None


def cmd_run(cfg: dict, out: Path, threads: int) -> int:
    if cfg["mode"] not in MODES:
        raise UsageError(f"unknown mode {cfg['mode']!r}; choose from {', '.join(MODES)}")
    _check_fraction(cfg["fraction"])
    d, spec = _load_run_data(cfg)
    if cfg["scale"]:
        try:
            d = center(d, scale=True)
        except DataError as e:
            raise UsageError(str(e)) from None
    try:
        ens = _ensemble(cfg, spec, d.p)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if cfg["q_target"] > min(d.n - 1, d.p):
        raise UsageError(f"q_target={cfg['q_target']} exceeds min(n-1, p) = {min(d.n - 1, d.p)}")
    method = {"stabsel": "stabsel", "pruned": "pruned", "lasso-baseline": "lasso"}[cfg["mode"]]

    res = run_methods(d, ens, [method], cfg["fraction"], threads=threads)
    out.mkdir(parents=True, exist_ok=True)
    selected = res.selected[method]
    report = {
        **_meta("run", cfg),
        "mode": cfg["mode"],
        "n": d.n,
        "p": d.p,
        "family": d.family,
        "variables": list(d.names),
        "selected": selected,
        "selected_names": [d.names[j] for j in selected],
        "grid": {"K": res.grid.K, "lambda_max": res.grid.lambda_max, "lambda_min": res.grid.lambda_min,
                 "q_target": res.q_target, "attained": res.grid.attained},
        "objective": OBJECTIVE_INFO,
    }
    if method in ("stabsel", "pruned"):
        pi = res.pi_hat[method]
        report["pi_hat"] = pi
        report["pi_thr"] = ens.pi_thr
        report["pfer_bound"] = pfer_bound(res.q_target, d.p, ens.pi_thr)
        report["B"] = len(res.members)
        chosen = set(selected.tolist())
        write_rows(out / "frequencies.csv", ["variable", "name", "pi_hat", "selected"],
                   [(j, d.names[j], float(pi[j]), int(j in chosen)) for j in range(d.p)])
    if method == "pruned":
        report["U"] = res.ordering.cut
        report["reference"] = {**res.reference_info, "r_ref": res.r_ref,
                               "stepwise": STEPWISE_INFO if d.family == "gaussian" else None}
        report["ordering"] = res.ordering.S[: res.ordering.cut]
        res.ordering.to_csv(out / "ordering.csv", [m.member_index for m in res.members])
    if method == "lasso":
        report["lambda_index"] = res.lasso_index
        report["lambda"] = float(res.grid.values[res.lasso_index])
        report["selection_rule"] = "minimum of deviance + 2 df over the grid"
    if cfg["save_members"] and res.members:
        save_members(out / "members.npz", res.members, res.grid)
    if cfg["dump_path"]:
        dc = center(d)
        lasso_path(dc.X, dc.y, res.grid, dc.family).to_csv(out / "path.csv")
    write_json(out / "result.json", report)
    print(f"{cfg['mode']}: selected {len(selected)} of {d.p} variables: "
          + (", ".join(d.names[j] for j in selected) or "(none)"))
    return EXIT_OK


def cmd_bench(cfg: dict, out: Path, threads: int) -> int:
    _check_positive(cfg, "M", "n_test")
    _check_fraction(cfg["fraction"])
    bad = set(cfg["methods"]) - {"stabsel", "pruned", "lasso"}
    if bad or not cfg["methods"]:
        raise UsageError(f"methods must be a nonempty subset of stabsel,pruned,lasso; got {cfg['methods']}")
    if (cfg["design"] is None) == (cfg["scenario"] is None):
        raise UsageError("bench needs exactly one of --scenario or --design")
    if cfg["scenario"] is not None:
        spec = _scenario_spec(cfg)
        p = spec.p
        draw = scenario_replication(spec, cfg["seed"], cfg["n_test"])
    else:
        spec = None
        if cfg["s"] is None:
            raise UsageError("--design needs --s")
        if cfg["family"] == "gaussian" and cfg["snr"] is None:
            raise UsageError("--design with a gaussian response needs --snr")
        try:
            X, names = load_matrix(cfg["design"])
        except (DataError, FileNotFoundError) as e:
            raise UsageError(str(e)) from None
        p = cfg["p"] or X.shape[1]
        if not 1 <= cfg["s"] < p:
            raise UsageError(f"s must lie in 1..{p - 1}, got {cfg['s']}")
        draw = semisynthetic_replication(X, cfg["s"], cfg["snr"], cfg["family"], cfg["seed"], cfg["p"],
                                         cfg["train_fraction"], names, cfg["scale"])
    try:
        ens = _ensemble(cfg, spec, p)
    except ValueError as e:
        raise UsageError(str(e)) from None

    t0 = time.perf_counter()
    result = bench(draw, cfg["M"], ens, cfg["methods"], cfg["seed"], cfg["fraction"], threads)
    elapsed = time.perf_counter() - t0

    out.mkdir(parents=True, exist_ok=True)
    rows = [result.summaries[m].row(m) for m in cfg["methods"]]
    write_rows(out / "bench.csv", list(TABLE_COLUMNS), [[r[c] for c in TABLE_COLUMNS] for r in rows])
    write_json(out / "bench.json", {
        **_meta("bench", cfg),
        "d0": result.d0,
        "p": result.p,
        "pfer_bound": pfer_bound(ens.q_for(p), p, ens.pi_thr),
        "table": rows,
        "replications": [
            {
                "replication": o.replication,
                "member_seed": o.seed,
                "lambda_min": o.lambda_min,
                "attained": o.attained,
                "selected": {m: sorted(o.records[m].selected) for m in cfg["methods"]},
                "perr": {m: o.records[m].perr for m in cfg["methods"]},
            }
            for o in result.outcomes
        ],
    })
    write_json(out / "timing.json", {"wall_clock_seconds": elapsed, "threads": threads, "seed": cfg["seed"]})
    metric = "PErr" if (spec.family if spec else cfg["family"]) == "gaussian" else "MisCl"
    print(f"{'method':<8} {'p0':>7} {'p1':>7} {'acc':>7} {'FDR':>7}  {metric}(std)")
    for r in rows:
        print(f"{r['method']:<8} {r['p0']:7.3f} {r['p1']:7.3f} {r['acc']:7.3f} {r['fdr']:7.3f}  "
              f"{r['perr_mean']:.3f}({r['perr_std']:.3f})")
    print(f"M={cfg['M']} seed={cfg['seed']} wall-clock {elapsed:.1f}s")
    return EXIT_OK


def cmd_order_curve(cfg: dict, out: Path, threads: int) -> int:
    if cfg["scenario"] is None:
        raise UsageError("order-curve needs --scenario")
    _check_positive(cfg, "M")
    spec = _scenario_spec(cfg)
    if cfg["pools"] is not None:
        if not cfg["pools"] or min(cfg["pools"]) < 2:
            raise UsageError(f"pool sizes must be >= 2, got {cfg['pools']}")
        cfg["pools"] = sorted(set(cfg["pools"]))
        cfg["B"] = cfg["pools"][-1]
    else:
        cfg["pools"] = [cfg["B"]]
    try:
        ens = _ensemble(cfg, spec, spec.p)
    except ValueError as e:
        raise UsageError(str(e)) from None
    if spec.family != "gaussian":
        raise UsageError("order-curve supports gaussian scenarios only")

    curve = order_curve(spec, cfg["M"], ens, cfg["seed"], cfg["pools"], threads)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for b in curve.pool_sizes:
        for u in range(1, b + 1):
            rows.append((b, u, float(curve.ordered[b][u - 1]), float(curve.unordered[u - 1])))
    write_rows(out / "curve.csv", ["pool_size", "U", "ordered_acc", "unordered_acc"], rows)
    summary = {}
    for b in curve.pool_sizes:
        o = curve.ordered[b]
        U3 = third(b)
        summary[str(b)] = {
            "U_third": U3,
            "ordered_acc_at_third": float(o[U3 - 1]),
            "full_acc": float(curve.unordered[b - 1]),
            "ordered_max": float(o.max()),
            "ordered_argmax_U": int(np.argmax(o)) + 1,
            "share_max_before_end": curve.max_before_end(b),
        }
    write_json(out / "curve.json", {**_meta("order-curve", cfg), "scenario": spec.as_dict(), "summary": summary})
    for b, s in summary.items():
        print(f"pool {b}: ordered acc at U={s['U_third']} {s['ordered_acc_at_third']:.3f}, "
              f"full ensemble {s['full_acc']:.3f}, ordered max {s['ordered_max']:.3f} at U={s['ordered_argmax_U']}")
    return EXIT_OK


HANDLERS = {"simulate": cmd_simulate, "run": cmd_run, "bench": cmd_bench, "order-curve": cmd_order_curve}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = vars(parser.parse_args(argv))
    command = ns.pop("command")
    logging.basicConfig(level=logging.INFO if ns.get("verbose") else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    threads = ns.get("threads", 1)
    out = Path(ns.get("out", "results"))
    try:
        if threads < 1:
            raise UsageError(f"--threads must be >= 1, got {threads}")
        cfg = resolve(command, ns)
        return HANDLERS[command](cfg, out, threads)
    except UsageError as e:
        print(f"stabprune {command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as e:
        log.error("numerical failure: %s", e)
        print(f"stabprune {command}: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
