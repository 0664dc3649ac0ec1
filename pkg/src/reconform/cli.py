"""Command-line front end: ``simulate``, ``reproduce-table`` and ``check``.

Exit codes: 0 success, 1 acceptance failure, 2 configuration error, 3 I/O
error. Options can also come from a plain ``key=value`` file passed with
``--config``; flags given on the command line win over the file.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from dataclasses import dataclass

from . import acceptance
from .simlab import (MethodSpec, SupDesign, UnsupDesign, pathological_design,
                     run_experiment, shrinkage_experiment)

log = logging.getLogger("reconform")

CSV_HEADER = ("method", "variant", "k", "n_per_group", "alpha", "delta", "epsilon",
              "N", "trials", "coverage", "incorrect_coverage", "mean_size",
              "full_coverage_flag", "failures", "seed", "design", "mc_se",
              "unbounded_rate")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


class ConfigError(Exception):
    """Invalid configuration; ``field`` names the offending option."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# --------------------------------------------------------------------------
# configuration

KEYS = {
    # key: (parser, default)
    "design": (str, "unsup"),
    "method": (str, "naive"),
    "variant": (str, "mean"),
    "k": ("ints", None),
    "n": ("ints", (500,)),
    "alpha": ("floats", (0.1,)),
    "delta": (float, None),
    "epsilon": (float, None),
    "N": ("ints", (1,)),
    "beta": (float, 0.05),
    "gamma": (float, 0.05),
    "mu": (float, 0.0),
    "tau": (float, 1.0),
    "sigma": (float, 1.0),
    "convention": (str, "sd"),
    "setup": (int, 2),
    "trials": (int, None),
    "seed": (int, None),
    "threads": (int, 1),
    "out": (str, "-"),
    "format": (str, "csv"),
}


def _parse_value(key: str, raw):
    kind = KEYS[key][0]
    if raw is None or not isinstance(raw, str):
        return raw
    try:
        if kind == "ints":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if kind == "floats":
            return tuple(float(v) for v in raw.split(",") if v.strip())
        return kind(raw)
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r}") from None


def read_config_file(path: str) -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("config", f"line {lineno} is not key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in KEYS:
                raise ConfigError(key, f"unknown key in {path}")
            out[key] = value
    return out


@dataclass
class RunConfig:
    command: str
    values: dict
    explicit: frozenset = frozenset()

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None


def build_config(args: argparse.Namespace) -> RunConfig:
    merged = {}
    if getattr(args, "config", None):
        merged.update(read_config_file(args.config))
    for key in KEYS:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    values = {}
    for key, (_, default) in KEYS.items():
        values[key] = _parse_value(key, merged[key]) if key in merged else default
    cfg = RunConfig(args.command, values, frozenset(merged))
    validate(cfg)
    return cfg


def _rate(name: str, v):
    if v is None:
        return
    for x in (v if isinstance(v, tuple) else (v,)):
        if not 0.0 < x < 1.0:
            raise ConfigError(name, f"must be in (0, 1), got {x}")


def validate(cfg: RunConfig) -> None:
    v = cfg.values
    for name in ("alpha", "delta", "epsilon", "beta", "gamma"):
        _rate(name, v[name])
    for name in ("k", "n", "N", "alpha"):
        if v[name] is not None and len(v[name]) == 0:
            raise ConfigError(name, "grid must be nonempty")
    for name in ("k", "n", "N"):
        if v[name] is not None and any(x < 1 for x in v[name]):
            raise ConfigError(name, "values must be positive")
    if v["trials"] is not None and v["trials"] < 1:
        raise ConfigError("trials", "must be positive")
    if v["threads"] < 1:
        raise ConfigError("threads", "must be positive")
    if v["seed"] is not None and not 0 <= v["seed"] < 2 ** 64:
        raise ConfigError("seed", "must be a 64-bit unsigned integer")
    if v["format"] not in ("csv", "json"):
        raise ConfigError("format", f"must be csv or json, got {v['format']!r}")
    if v["design"] not in ("unsup", "sup", "pathological", "shrinkage"):
        raise ConfigError("design", "must be unsup, sup, pathological or shrinkage")
    if v["method"] not in ("naive", "subsample", "randomset", "cdfband", "within"):
        raise ConfigError("method", f"unknown method {v['method']!r}")
    if v["variant"] not in ("mean", "kde"):
        raise ConfigError("variant", "must be mean or kde")
    if v["convention"] not in ("sd", "variance"):
        raise ConfigError("convention", "must be sd or variance")
    if v["setup"] not in (1, 2):
        raise ConfigError("setup", "must be 1 or 2")
    if not (v["tau"] > 0 and v["sigma"] > 0):
        raise ConfigError("tau" if not v["tau"] > 0 else "sigma", "must be positive")
    if cfg.command in ("simulate", "reproduce-table") and v["seed"] is None:
        raise ConfigError("seed", "is required (there is no clock-based default)")
    if cfg.command == "simulate":
        if v["k"] is None:
            raise ConfigError("k", "is required for simulate")
        if (v["method"] == "within") != (v["design"] == "shrinkage"):
            raise ConfigError("method", "'within' goes with design=shrinkage and only with it")
        if v["design"] == "sup" and v["method"] == "cdfband":
            raise ConfigError("method", "cdfband needs an unsupervised design")


# --------------------------------------------------------------------------
# output

def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        if math.isnan(v):
            return "nan"
        return repr(v)
    return str(v)


def summary_row(s) -> dict:
    p = s.params
    if "estimator" in p:
        method, variant = "within", p["estimator"]
        alpha, delta, eps, n_sub = p["alpha"], None, None, None
    else:
        method = p["name"]
        variant = p["variant"] if method == "randomset" else ""
        alpha = p["alpha"] if method in ("naive", "subsample") else None
        delta = p["delta"] if method == "randomset" else None
        eps = p["epsilon"] if method == "randomset" else None
        n_sub = p["n_subsamples"] if method == "subsample" else None
        if method == "cdfband":
            alpha, delta = p["beta"], p["gamma"]
    n = p["n_j"] if not isinstance(p["n_j"], list) else "ragged"
    return {"method": method, "variant": variant, "k": p["k"], "n_per_group": n,
            "alpha": alpha, "delta": delta, "epsilon": eps, "N": n_sub,
            "trials": s.n_trials, "coverage": s.coverage,
            "incorrect_coverage": s.incorrect_coverage, "mean_size": s.mean_size,
            "full_coverage_flag": s.full_coverage_flag, "failures": s.failures,
            "seed": s.seed, "design": s.design_id, "mc_se": s.mc_se,
            "unbounded_rate": s.unbounded_rate}


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return _num(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def render(summaries, fmt: str) -> str:
    if fmt == "json":
        return json.dumps([_json_safe(s.to_dict()) for s in summaries], indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in summaries:
        row = summary_row(s)
        w.writerow([_num(row[c]) for c in CSV_HEADER])
    return buf.getvalue()


def write_output(text: str, path: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


# --------------------------------------------------------------------------
# commands

def _run_points(points, trials, seed, threads):
    out = []
    for design, method in points:
        log.info("running %s / %s", design.design_id, method.method_id)
        out.append(run_experiment(design, method, trials, seed, threads))
    return out


def _design(cfg: RunConfig, k: int, n: int):
    if cfg.design == "sup":
        return SupDesign(k, n, cfg.mu, cfg.tau)
    if cfg.design == "pathological":
        return pathological_design(cfg.convention)
    return UnsupDesign(k, n, cfg.mu, cfg.tau, cfg.sigma)


def _method(cfg: RunConfig, alpha: float, n_sub: int) -> MethodSpec:
    delta = cfg.delta if cfg.delta is not None else alpha / 2
    eps = cfg.epsilon if cfg.epsilon is not None else alpha / 2
    return MethodSpec(cfg.method, alpha, n_sub, delta, eps, cfg.variant,
                      cfg.beta, cfg.gamma)


def cmd_simulate(cfg: RunConfig):
    trials = cfg.trials or 1000
    if cfg.design == "shrinkage":
        out = []
        for alpha in cfg.alpha:
            for n in cfg.n:
                for pair in shrinkage_experiment(cfg.setup, cfg.k, trials, cfg.seed,
                                                 alpha, n, cfg.threads):
                    out.extend(pair)
        return out
    points = []
    ks = cfg.k if cfg.design != "pathological" else (20,)
    ns = cfg.n if cfg.design != "pathological" else (1000,)
    for alpha in cfg.alpha:
        for n_sub in (cfg.N if cfg.method == "subsample" else (1,)):
            for n in ns:
                for k in ks:
                    points.append((_design(cfg, k, n), _method(cfg, alpha, n_sub)))
    return _run_points(points, trials, cfg.seed, cfg.threads)


K_GRID = acceptance.K_GRID
N_GRID = acceptance.N_GRID
ALPHAS = acceptance.ALPHA_GRID


def _table_spec(table_id: str):
    """Map a table id to (kind, alpha, extra). Raises ConfigError when unknown."""
    named = {
        "unsup-naive": ("unsup-naive", 0.1),
        "unsup-subsample": ("unsup-subsample", 0.1),
        "alpha-over-N": ("alpha-over-N", None),
        "unsup-randomset-mean": ("unsup-randomset-mean", 0.1),
        "unsup-randomset-kde": ("unsup-randomset-kde", 0.1),
        "sup-naive-mu0": ("sup-naive-mu0", 0.1),
        "sup-naive-mu1": ("sup-naive-mu1", 0.1),
        "sup-subsample-mu0": ("sup-subsample-mu0", 0.1),
        "sup-subsample-mu1": ("sup-subsample-mu1", 0.1),
        "sup-randomset-mean-mu0": ("sup-randomset-mean-mu0", 0.1),
        "sup-randomset-mean-mu1": ("sup-randomset-mean-mu1", 0.1),
        "sup-randomset-kde-mu0": ("sup-randomset-kde-mu0", 0.1),
        "sup-randomset-kde-mu1": ("sup-randomset-kde-mu1", 0.1),
        "pathological": ("pathological", 0.1),
        "shrinkage-setup1": ("shrinkage-setup1", 0.1),
        "shrinkage-setup2": ("shrinkage-setup2", 0.1),
    }
    if table_id in named:
        return named[table_id]
    numbered = ["unsup-naive"] * 3 + ["unsup-subsample"] * 3 + ["alpha-over-N"]
    numbered += ["unsup-randomset-mean"] * 3 + ["unsup-randomset-kde"] * 3
    for kind in ("sup-naive", "sup-subsample", "sup-randomset-mean", "sup-randomset-kde"):
        numbered += [f"{kind}-mu0"] * 3 + [f"{kind}-mu1"] * 3
    try:
        num = int(table_id)
    except ValueError:
        raise ConfigError("table", f"unknown table id {table_id!r}") from None
    if not 1 <= num <= len(numbered):
        raise ConfigError("table", f"table number must be in 1..{len(numbered)}")
    kind = numbered[num - 1]
    if kind == "alpha-over-N":
        return kind, None
    first = numbered.index(kind) + 1
    return kind, ALPHAS[num - first]


def alpha_over_n_rows() -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("alpha", "N", "level"))
    for alpha in ALPHAS:
        for n_sub in N_GRID:
            w.writerow((repr(alpha), n_sub, repr(1 - alpha / n_sub)))
    return buf.getvalue()


def cmd_reproduce(cfg: RunConfig, table_id: str):
    kind, alpha = _table_spec(table_id)
    if kind == "alpha-over-N":
        return None
    if "alpha" in cfg.explicit:
        alpha = cfg.alpha[0]
    trials = cfg.trials or 1000
    ks = cfg.k or K_GRID
    n = cfg.n[0]
    if kind.startswith("shrinkage"):
        setup = int(kind[-1])
        ks = cfg.k or tuple(range(5, 1001, 5))
        out = []
        for pair in shrinkage_experiment(setup, ks, trials, cfg.seed, alpha, 10, cfg.threads):
            out.extend(pair)
        return out
    if kind == "pathological":
        d = pathological_design(cfg.convention)
        return _run_points([(d, MethodSpec("naive", alpha)),
                            (d, MethodSpec("subsample", alpha, 1))],
                           trials, cfg.seed, cfg.threads)
    sup = kind.startswith("sup")
    mu, tau = ((1.0, 0.1) if kind.endswith("mu1") else (0.0, 1.0)) if sup else (0.0, 1.0)
    points = []
    for k in ks:
        design = SupDesign(k, n, mu, tau) if sup else UnsupDesign(k, n)
        if "naive" in kind:
            points.append((design, MethodSpec("naive", alpha)))
        elif "subsample" in kind:
            n_grid = cfg.values["N"] if "N" in cfg.explicit else N_GRID
            points.extend((design, MethodSpec("subsample", alpha, N)) for N in n_grid)
        else:
            variant = "kde" if "kde" in kind else "mean"
            points.append((design, MethodSpec("randomset", alpha, 1, alpha / 2, alpha / 2,
                                              variant)))
    return _run_points(points, trials, cfg.seed, cfg.threads)


def cmd_check(names, trials, seed, threads) -> int:
    unknown = [n for n in names if n not in acceptance.CRITERIA]
    if unknown:
        raise ConfigError("criterion", f"unknown criterion {', '.join(unknown)}; "
                          f"choose from {', '.join(acceptance.CRITERIA)}")
    results = acceptance.run_criteria(names, trials, seed, threads)
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    return EXIT_OK if passed == len(results) else EXIT_CHECK


# --------------------------------------------------------------------------
# argument parsing

def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value file; command-line flags override it")
    p.add_argument("--design", help="unsup, sup, pathological or shrinkage")
    p.add_argument("--method", help="naive, subsample, randomset, cdfband or within")
    p.add_argument("--variant", help="mean or kde (randomset)")
    p.add_argument("--k", help="number of groups, comma separated grid")
    p.add_argument("--n", help="observations per group, comma separated grid")
    p.add_argument("--alpha", help="miscoverage level(s), comma separated")
    p.add_argument("--delta", help="level-set miscoverage (randomset)")
    p.add_argument("--epsilon", help="region miscoverage (randomset)")
    p.add_argument("--N", help="number of subsamples, comma separated grid")
    p.add_argument("--beta", help="cdf band quantile level")
    p.add_argument("--gamma", help="cdf band calibration level")
    p.add_argument("--mu", help="mean of the group effects")
    p.add_argument("--tau", help="sd of the group effects")
    p.add_argument("--sigma", help="within-group sd (unsupervised)")
    p.add_argument("--convention", help="sd or variance for the pathological design")
    p.add_argument("--setup", help="shrinkage set-up, 1 or 2")
    p.add_argument("--trials", help="replicates per design point")
    p.add_argument("--seed", help="master seed (required)")
    p.add_argument("--threads", help="worker threads")
    p.add_argument("--out", help="output path, '-' for stdout")
    p.add_argument("--format", help="csv or json")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reconform",
        description="Conformal prediction for grouped data: simulations and checks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log each design point")
    sub = parser.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", help="run one method over a design grid")
    _add_common(sim)
    rep = sub.add_parser("reproduce-table", help="rerun one of the standard result grids")
    rep.add_argument("table", help="grid number (1-37) or name such as unsup-naive")
    _add_common(rep)
    chk = sub.add_parser("check", help="run the acceptance criteria")
    chk.add_argument("--criterion", action="append", default=[],
                     help="run only this criterion (repeatable)")
    chk.add_argument("--trials", type=int, default=acceptance.DEFAULT_TRIALS)
    chk.add_argument("--seed", type=int, default=acceptance.DEFAULT_SEED)
    chk.add_argument("--threads", type=int, default=1)
    chk.add_argument("--list", action="store_true", help="list criterion names and exit")
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    try:
        if args.command == "check":
            if args.list:
                print("\n".join(acceptance.CRITERIA))
                return EXIT_OK
            if args.trials < 1:
                raise ConfigError("trials", "must be positive")
            return cmd_check(args.criterion, args.trials, args.seed, args.threads)
        cfg = build_config(args)
        if args.command == "simulate":
            text = render(cmd_simulate(cfg), cfg.format)
        else:
            result = cmd_reproduce(cfg, args.table)
            text = alpha_over_n_rows() if result is None else render(result, cfg.format)
        write_output(text, cfg.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
