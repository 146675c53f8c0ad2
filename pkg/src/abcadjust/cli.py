"""Command-line interface: ``abcadjust {simulate,estimate,select,replicate,theory}``.

Settings come from built-in defaults, then an optional ``--config`` JSON
file, then command-line flags.  Every JSON artifact records the hash of the
resolved configuration and the seed.  Exit status is 0 on success, 2 for
configuration errors and 3 for numerical failures.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys

import numpy as np

from .errors import AbcError, ConfigError, NumericalError, TransformNotApplicable
from .estimators import DEFAULT_PROBS
from .models import MODELS, exact_gaussian_posterior, get_model, reference_table
from .pipeline import abc_posterior
from .reference import ReferenceTable
from .regression import n_columns
from .selection import select
from .theory import constants, get_analytic_model, sweep, sweep_to_csv
from .transforms import ParamTransform, StatTransform

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

DEFAULTS = {
    "model": None,
    "model_options": {},
    "table": None,
    "obs": None,
    "n": 20000,
    "accept_q": 0.025,
    "kernel": "epanechnikov",
    "ktilde": "epanechnikov",
    "transform": "auto",
    "degree": "auto",
    "param": None,
    "param_transform": "auto",
    "seed": None,
    "out": None,
    "workers": 1,
    "replicates": 100,
    "cv_subsample": 1000,
    "cv_folds": "all",
    "max_drop": 0.1,
    "n_grid": 512,
    "b_prime": None,
    "rel_tol": 0.07,
    # theory
    "s_obs": None,
    "theta": None,
    "scale": None,
    "bandwidth_matrix": None,
    "sweep": False,
    "n_values": [10000, 20000],
    "b_values": [0.2, 0.4],
    "degrees": [0, 1, 2],
}

# settings that do not change any output
_HASH_EXCLUDE = ("out", "workers")


def config_hash(cfg):
    """Short SHA-256 of the canonical JSON form of the result-relevant settings."""
    relevant = {k: v for k, v in cfg.items() if k not in _HASH_EXCLUDE}
    blob = json.dumps(relevant, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _json_arg(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}") from None


def _common(p, *, data=True):
    p.add_argument("--config", help="JSON file with settings; flags override it")
    p.add_argument("--seed", type=int, help="master seed (required)")
    p.add_argument("--out", help="output directory")
    if not data:
        return
    p.add_argument("--model", help=f"simulator: {', '.join(sorted(MODELS))}")
    p.add_argument("--n", type=int, help="number of simulations")
    p.add_argument("--workers", type=int, help="simulation worker processes")


def _analysis(p):
    p.add_argument("--table", help="reference table CSV (instead of --model)")
    p.add_argument("--obs", type=_json_arg, help="observed statistics as a JSON list or object")
    p.add_argument("--accept-q", dest="accept_q", type=float, help="acceptance fraction q")
    p.add_argument("--transform", help="'auto' or 'fixed:<tags>', e.g. fixed:id,log")
    p.add_argument("--degree", help="0, 1, 2 or auto")
    p.add_argument("--param", help="parameter column (default: all)")
    p.add_argument("--param-transform", dest="param_transform", help="auto, identity, log or logit(a,b)")
    p.add_argument("--kernel", help="smoothing kernel in statistic space")
    p.add_argument("--ktilde", help="kernel for the posterior density")
    p.add_argument("--cv-folds", dest="cv_folds", choices=("all", "accepted"))


def build_parser():
    parser = argparse.ArgumentParser(
        prog="abcadjust", description="ABC with local regression adjustment"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a reference table")
    _common(p)

    for name, text in (("estimate", "posterior density and summaries"), ("select", "transform and degree choice")):
        p = sub.add_parser(name, help=text)
        _common(p)
        _analysis(p)

    p = sub.add_parser("replicate", help="repeat simulate + estimate with derived seeds")
    _common(p)
    _analysis(p)
    p.add_argument("--replicates", "-R", type=int, help="number of replicates")
    p.add_argument("--rel-tol", dest="rel_tol", type=float, help="oracle tolerance (Gaussian model)")

    p = sub.add_parser("theory", help="asymptotic constants and Monte Carlo sweeps")
    _common(p, data=False)
    p.add_argument("--model", help="analytic model: toy, linear, quadratic, heteroscedastic")
    p.add_argument("--s-obs", dest="s_obs", type=_json_arg, help="JSON list")
    p.add_argument("--theta", type=float)
    p.add_argument("--scale", type=_json_arg, help="diagonal of D as a JSON list")
    p.add_argument("--kernel")
    p.add_argument("--ktilde")
    p.add_argument("--sweep", action="store_true", default=None, help="run the bias/variance harness")
    p.add_argument("--n-values", dest="n_values", type=_json_arg)
    p.add_argument("--b-values", dest="b_values", type=_json_arg)
    p.add_argument("--b-prime", dest="b_prime", type=float)
    p.add_argument("--degrees", type=_json_arg)
    p.add_argument("--replicates", "-R", type=int)
    return parser


def resolve_config(args):
    """Merge defaults, the ``--config`` file and explicit flags, then validate."""
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            cfg[key] = value
    cfg["command"] = args.command
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg["seed"] is None:
        raise ConfigError("--seed is required")
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    q = cfg["accept_q"]
    if not (isinstance(q, (int, float)) and 0 < q < 1):
        raise ConfigError(f"acceptance fraction must lie in (0, 1), got {q}")
    if not isinstance(cfg["n"], int) or cfg["n"] < 1:
        raise ConfigError("n must be a positive integer")
    deg = str(cfg["degree"])
    if deg not in ("auto", "0", "1", "2"):
        raise ConfigError(f"degree must be 0, 1, 2 or auto, got {cfg['degree']!r}")
    cfg["degree"] = deg if deg == "auto" else int(deg)
    tr = str(cfg["transform"])
    if tr != "auto":
        choice = tr[len("fixed:"):] if tr.startswith("fixed:") else tr
        cfg["transform"] = "fixed:" + str(StatTransform.parse(choice))
    if cfg["command"] == "replicate" and (not isinstance(cfg["replicates"], int) or cfg["replicates"] < 1):
        raise ConfigError("replicates must be >= 1")
    if cfg["command"] in ("simulate", "replicate") and cfg["model"] is None:
        raise ConfigError("--model is required")
    if cfg["command"] in ("estimate", "select") and cfg["model"] is None and cfg["table"] is None:
        raise ConfigError("give --model or --table")


def _out_dir(cfg):
    out = cfg["out"] or "."
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    return out


def _write(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None


def _write_json(path, obj):
    _write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _model(cfg):
    opts = cfg["model_options"] or {}
    if not isinstance(opts, dict):
        raise ConfigError("model_options must be a JSON object")
    try:
        return get_model(cfg["model"], **opts)
    except TypeError as exc:
        raise ConfigError(f"bad model options: {exc}") from None


def _table(cfg, seed=None):
    if cfg["table"]:
        try:
            return ReferenceTable.load(cfg["table"])
        except OSError as exc:
            raise ConfigError(f"cannot read table: {exc}") from None
        except ValueError as exc:
            raise ConfigError(f"malformed table {cfg['table']}: {exc}") from None
    model = _model(cfg)
    seed = cfg["seed"] if seed is None else seed
    return reference_table(model, cfg["n"], seed, workers=cfg["workers"])


def _observed(cfg, table):
    obs = cfg["obs"]
    if obs is None:
        name = cfg["model"] or table.meta.get("model")
        if name is None or name not in MODELS:
            raise ConfigError("observed statistics are required (--obs)")
        obs = MODELS[name].observed
    if isinstance(obs, dict):
        missing = [s for s in table.stat_names if s not in obs]
        if missing:
            raise ConfigError(f"--obs lacks statistics {missing}")
        obs = [obs[s] for s in table.stat_names]
    obs = np.asarray(obs, dtype=float).ravel()
    if obs.size != table.dim:
        raise ConfigError(
            f"observed statistics have dimension {obs.size}, table has {table.dim}"
        )
    return obs


def _param_transform(cfg, table, name):
    choice = cfg["param_transform"]
    if isinstance(choice, dict):
        choice = choice.get(name, "auto")
    if choice != "auto":
        return ParamTransform.parse(choice)
    supports = table.meta.get("supports") or {}
    if name in supports:
        lo, hi = supports[name]
        return ParamTransform.from_support(lo, hi)
    return ParamTransform()


def _params(cfg, table):
    if cfg["param"] is None:
        return list(table.theta_names)
    table.param(cfg["param"])  # validates the name
    return [cfg["param"]]


def _check_size(cfg, table):
    deg = 2 if cfg["degree"] == "auto" else cfg["degree"]
    need = n_columns(deg, table.dim) + 1
    if math.ceil(cfg["accept_q"] * table.n) < need:
        raise ConfigError(
            f"q * n = {cfg['accept_q'] * table.n:g} accepted points cannot support degree {deg} "
            f"(needs {need})"
        )


def _select(cfg, table, obs, name, pt, seed):
    transform = "auto" if cfg["transform"] == "auto" else cfg["transform"][len("fixed:"):]
    return select(
        table.param(name),
        table.stats,
        obs,
        q=cfg["accept_q"],
        param_transform=pt,
        transform=transform,
        degree=cfg["degree"],
        kernel=cfg["kernel"],
        stat_names=table.stat_names,
        param_name=name,
        cv_subsample=cfg["cv_subsample"],
        seed=seed,
        max_drop=cfg["max_drop"],
        folds=cfg["cv_folds"],
    )


def _estimate(cfg, table, obs, name, pt, transform, degree):
    return abc_posterior(
        table.param(name),
        table.stats,
        obs,
        degree=degree,
        stat_transform=transform,
        param_transform=pt,
        q=cfg["accept_q"],
        kernel=cfg["kernel"],
        ktilde=cfg["ktilde"],
        b_prime=cfg["b_prime"],
        n_grid=cfg["n_grid"],
        max_drop=cfg["max_drop"],
    )


def _stamp(cfg):
    return {"config_hash": config_hash(cfg), "seed": cfg["seed"]}


def cmd_simulate(cfg):
    out = _out_dir(cfg)
    table = _table(cfg)
    path = os.path.join(out, "table.csv")
    try:
        table.save(path, sidecar=_stamp(cfg))
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None
    print(f"wrote {table.n} rows to {path}")
    return EXIT_OK


def cmd_estimate(cfg, report_only=False):
    out = _out_dir(cfg)
    table = _table(cfg)
    obs = _observed(cfg, table)
    _check_size(cfg, table)
    stamp = _stamp(cfg)
    model_name = cfg["model"] or table.meta.get("model")
    for name in _params(cfg, table):
        pt = _param_transform(cfg, table, name)
        report = _select(cfg, table, obs, name, pt, cfg["seed"])
        print(report.render())
        _write_json(os.path.join(out, f"{name}_report.json"), {**report.to_dict(), **stamp})
        if report_only:
            continue
        res = _estimate(cfg, table, obs, name, pt, report.chosen_transform, report.chosen_degree)
        est = res.estimate
        summary = est.summary()
        summary.update(
            {
                "model": model_name,
                "param": name,
                "transform": str(report.chosen_transform),
                "degree": report.chosen_degree,
                "n": table.n,
                "q": cfg["accept_q"],
                "n_accepted": int(res.accepted.n_positive),
                "n_dropped": res.n_dropped,
                **stamp,
            }
        )
        _write(os.path.join(out, f"{name}_density.csv"), est.to_csv_text())
        _write_json(os.path.join(out, f"{name}_summary.json"), summary)
        lo, hi = summary["ci95"]
        print(f"{name}: mode {summary['mode']:.6g}, 95% CI ({lo:.6g}, {hi:.6g})")
    return EXIT_OK


def cmd_select(cfg):
    return cmd_estimate(cfg, report_only=True)


def replicate_seed(seed, r):
    """Seed of replicate ``r`` derived from the master seed."""
    return int(np.random.SeedSequence(int(seed), spawn_key=(int(r),)).generate_state(1)[0])


def cmd_replicate(cfg):
    out = _out_dir(cfg)
    model = _model(cfg)
    probs = DEFAULT_PROBS
    rows = []
    transform_counts, degree_counts = {}, {}
    oracle = None
    within = {j: 0 for j in (0, 1, 2)}
    name = cfg["param"] or model.theta_names[0]
    for r in range(cfg["replicates"]):
        seed_r = replicate_seed(cfg["seed"], r)
        table = reference_table(model, cfg["n"], seed_r, workers=cfg["workers"])
        obs = _observed(cfg, table)
        if r == 0:
            _check_size(cfg, table)
            if model.name == "gaussian":
                post = exact_gaussian_posterior(obs[0], obs[1], model.N)
                oracle = post.quantiles(probs)
        pt = _param_transform(cfg, table, name)
        report = _select(cfg, table, obs, name, pt, seed_r)
        key = str(report.chosen_transform)
        transform_counts[key] = transform_counts.get(key, 0) + 1
        degree_counts[str(report.chosen_degree)] = degree_counts.get(str(report.chosen_degree), 0) + 1
        for j in (0, 1, 2):
            est = _estimate(cfg, table, obs, name, pt, report.chosen_transform, j).estimate
            qs = est.quantiles(probs)
            ok = None
            if oracle is not None:
                ok = bool(np.all(np.abs(qs / oracle - 1) <= cfg["rel_tol"]))
                within[j] += ok
            rows.append([r, seed_r, j, int(j == report.chosen_degree), key, *qs, ok])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["replicate", "seed", "degree", "selected", "transform", *[f"q{p:g}" for p in probs], "within_tol"]
    )
    for row in rows:
        writer.writerow([*row[:5], *(repr(float(v)) for v in row[5:-1]), "" if row[-1] is None else int(row[-1])])
    _write(os.path.join(out, "quantiles.csv"), buf.getvalue())
    tally = {
        "model": model.name,
        "param": name,
        "replicates": cfg["replicates"],
        "transform_counts": dict(sorted(transform_counts.items())),
        "degree_counts": {str(j): degree_counts.get(str(j), 0) for j in (0, 1, 2)},
        **_stamp(cfg),
    }
    if oracle is not None:
        tally["oracle"] = {
            "probs": list(probs),
            "quantiles": [float(v) for v in oracle],
            "rel_tol": cfg["rel_tol"],
            "within_tol": {str(j): within[j] for j in (0, 1, 2)},
        }
    _write_json(os.path.join(out, "tally.json"), tally)
    print(json.dumps(tally, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_theory(cfg):
    out = _out_dir(cfg)
    model = get_analytic_model(cfg["model"] or "toy", **(cfg["model_options"] or {}))
    s_obs = cfg["s_obs"] if cfg["s_obs"] is not None else [0.5] * model.dim
    theta = cfg["theta"] if cfg["theta"] is not None else 1.0
    consts = constants(
        model, s_obs, theta, D=cfg["scale"], kernel=cfg["kernel"], ktilde=cfg["ktilde"],
        B=cfg["bandwidth_matrix"],
    )
    payload = {"model": model.name, "s_obs": list(np.atleast_1d(s_obs)), "theta": theta, **consts.to_dict(), **_stamp(cfg)}
    _write_json(os.path.join(out, "constants.json"), payload)
    for key in ("C1", "C2_0", "C2_1", "C2_2", "C3"):
        print(f"{key} = {payload[key]:.10g}")
    if cfg["sweep"]:
        b_prime = cfg["b_prime"] if cfg["b_prime"] is not None else 0.2
        cells = [(n, b, b_prime, j) for n in cfg["n_values"] for b in cfg["b_values"] for j in cfg["degrees"]]
        results = sweep(
            model, cells, cfg["replicates"], cfg["seed"], s_obs, theta,
            D=cfg["scale"], kernel=cfg["kernel"], ktilde=cfg["ktilde"],
        )
        _write(os.path.join(out, "sweep.csv"), sweep_to_csv(results))
        print(f"wrote {len(results)} harness cells")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "select": cmd_select,
    "replicate": cmd_replicate,
    "theory": cmd_theory,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, TransformNotApplicable) as exc:
        print(f"abcadjust: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"abcadjust: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except AbcError as exc:
        print(f"abcadjust: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
