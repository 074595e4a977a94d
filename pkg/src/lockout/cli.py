"""Batch command-line surface: data synthesis, training, constrained paths,
oracle verification, and report generation.

Exit codes: 0 success, 2 usage error, 3 invalid configuration, 4 malformed
data, 5 numeric failure or divergence, 6 I/O failure.  Errors are emitted as
one JSON object on stderr.  The environment variable LOCKOUT_SEED provides
the default seed.  A config file (INI, sections listed in --help) supplies
defaults; command-line flags override it; the merged effective config is
written next to the outputs.
"""
from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import datasets, oracles, pathlog
from .network import NetworkParams, NetworkSpec, NumericError, ShapeError, forward
from .optim import (
    ConvergenceRule,
    OptimizerKind,
    TrainingDivergedError,
    train_to_convergence,
    train_with_early_stopping,
)
from .penalties import ConfigError, PenaltySpec, RegularizedSelection
from .planner import LockoutConfig, run_path

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_NUMERIC = 5
EXIT_IO = 6

# argparse dest -> (config section, key); used both for config-file defaults
# and for writing the effective config back out.
CONFIG_MAP = {
    "seed": ("run", "seed"),
    "out": ("run", "out"),
    "kind": ("data", "kind"),
    "n": ("data", "n"),
    "p": ("data", "p"),
    "activation": ("data", "activation"),
    "snr": ("data", "snr"),
    "fractions": ("data", "fractions"),
    "linear_terms": ("data", "linear_terms"),
    "data": ("data", "file"),
    "target": ("data", "target"),
    "split_column": ("data", "split_column"),
    "task": ("data", "task"),
    "layers": ("network", "layers"),
    "activations": ("network", "activations"),
    "loss": ("network", "loss"),
    "no_bias": ("network", "no_bias"),
    "optimizer": ("optimizer", "kind"),
    "lr": ("optimizer", "learning_rate"),
    "max_iter": ("optimizer", "max_iterations"),
    "tolerance": ("optimizer", "tolerance"),
    "patience": ("optimizer", "patience"),
    "mode": ("optimizer", "mode"),
    "penalty": ("lockout", "penalty"),
    "beta": ("lockout", "beta"),
    "init": ("lockout", "init"),
    "delta_t": ("lockout", "delta_t"),
    "t_floor": ("lockout", "t_floor"),
    "inner_steps": ("lockout", "inner_steps"),
    "path_lr": ("lockout", "learning_rate"),
    "path_max_iter": ("lockout", "max_iterations"),
    "phase1_max_iter": ("lockout", "phase1_max_iterations"),
    "epsilon": ("lockout", "epsilon"),
}


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _default_seed():
    env = os.environ.get("LOCKOUT_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise CliError(f"LOCKOUT_SEED must be an integer, got {env!r}", EXIT_CONFIG)


def _int_list(text):
    return [int(x) for x in str(text).split(",") if x.strip() != ""]


def _float_list(text):
    return [float(x) for x in str(text).split(",") if x.strip() != ""]


def _str_list(text):
    return [x.strip() for x in str(text).split(",") if x.strip() != ""]


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lockout",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            "config file sections/keys (INI): "
            + ", ".join(sorted({f"{s}.{k}" for s, k in CONFIG_MAP.values()}))
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = {}

    original_add = sub.add_parser

    def add_parser(name, **kw):
        sp = original_add(name, **kw)
        parser.subcommands[name] = sp
        return sp

    sub.add_parser = add_parser

    def common(sp):
        sp.add_argument("--config", help="INI config file with defaults")
        sp.add_argument("--seed", type=int, help="global RNG seed "
                        "(default: LOCKOUT_SEED env var, else 0)")
        sp.add_argument("-o", "--out", default=".", help="output directory")

    sp = sub.add_parser("synth", help="generate a synthetic dataset CSV")
    common(sp)
    sp.add_argument("--kind", choices=["one_node", "friedman"])
    sp.add_argument("--n", type=int, help="number of rows")
    sp.add_argument("--p", type=int, help="number of features")
    sp.add_argument("--activation", default="linear",
                    choices=["linear", "relu", "tanh", "sigmoid"],
                    help="target activation (one_node only)")
    sp.add_argument("--snr", type=float, help="signal-to-noise ratio "
                    "(variance ratio); default 1 for one_node, 0.5 for friedman")
    sp.add_argument("--fractions", default="0.6,0.2,0.2",
                    help="train,validation,test fractions")
    sp.add_argument("--no-linear-terms", dest="linear_terms",
                    action="store_false", help="omit the friedman linear terms")

    def data_opts(sp):
        sp.add_argument("--data", help="input CSV file")
        sp.add_argument("--target", default="y", help="target column name")
        sp.add_argument("--split-column", default=None,
                        help="column with train/validation/test tags")
        sp.add_argument("--task", default="regression",
                        choices=["regression", "classification"])
        sp.add_argument("--fractions", default="0.6,0.2,0.2",
                        help="split fractions when no split column is given")

    def net_opts(sp):
        sp.add_argument("--layers", help="comma-separated layer sizes "
                        "(input width first); default: n_features,1")
        sp.add_argument("--activations",
                        help="comma-separated activations per non-input layer")
        sp.add_argument("--loss", default="mean_squared_error",
                        choices=["mean_squared_error", "mse", "cross_entropy"])
        sp.add_argument("--no-bias", action="store_true",
                        help="build all layers without bias terms")

    sp = sub.add_parser("train", help="unconstrained training")
    common(sp)
    data_opts(sp)
    net_opts(sp)
    sp.add_argument("--mode", choices=["converge", "early_stop"],
                    default="converge")
    sp.add_argument("--optimizer", choices=["gd", "adam"], default="gd")
    sp.add_argument("--lr", type=float, default=5e-3)
    sp.add_argument("--max-iter", type=int, default=20000)
    sp.add_argument("--tolerance", type=float, default=1e-5)
    sp.add_argument("--patience", type=int, default=20)

    sp = sub.add_parser("path", help="run the full constrained-path pipeline")
    common(sp)
    data_opts(sp)
    net_opts(sp)
    sp.add_argument("--params", help="starting parameters JSON "
                    "(skips the forward training phase)")
    sp.add_argument("--init", dest="init",
                    choices=["from_unconstrained", "from_early_stopping"],
                    default="from_unconstrained")
    sp.add_argument("--penalty", choices=["l1", "l2", "log"], default="l1")
    sp.add_argument("--beta", type=float, default=0.5,
                    help="log penalty shape parameter in (0,1)")
    sp.add_argument("--optimizer", choices=["gd", "adam"], default="gd",
                    help="forward-phase optimizer")
    sp.add_argument("--lr", type=float, default=5e-3,
                    help="forward-phase learning rate")
    sp.add_argument("--max-iter", type=int, default=20000,
                    help="forward-phase iteration cap")
    sp.add_argument("--tolerance", type=float, default=1e-5)
    sp.add_argument("--patience", type=int, default=20)
    sp.add_argument("--path-lr", type=float, default=1e-2,
                    help="constrained-phase learning rate")
    sp.add_argument("--path-max-iter", type=int, default=2000,
                    help="descending-phase iteration cap")
    sp.add_argument("--delta-t", type=float, default=None,
                    help="budget decrement per point (default: t*/10M)")
    sp.add_argument("--t-floor", type=float, default=0.0)
    sp.add_argument("--inner-steps", type=int, default=1)
    sp.add_argument("--phase1-max-iter", type=int, default=500)
    sp.add_argument("--epsilon", type=float, default=1e-8)
    sp.add_argument("--run-id", default="run", help="output file name stem")

    sp = sub.add_parser("verify", help="run an oracle verification suite")
    common(sp)
    sp.add_argument("--suite", choices=["lp", "lasso", "grad"])
    sp.add_argument("--instances", type=int, default=100)

    sp = sub.add_parser("report", help="summarize an exported path log")
    common(sp)
    sp.add_argument("--log", help="path log JSON file")
    sp.add_argument("--tolerance", type=float, default=0.01,
                    help="validation-loss slack for the sparse pick")
    return parser


def _coerce(raw):
    low = raw.strip().lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


def _config_defaults(path):
    """Config-file values as argparse defaults (flags still override them)."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise CliError(f"config file not found: {path}", EXIT_CONFIG)
    defaults = {}
    for dest, (section, key) in CONFIG_MAP.items():
        if cp.has_option(section, key):
            defaults[dest] = _coerce(cp.get(section, key))
    return defaults


def _require(args, dest, flag):
    if getattr(args, dest, None) is None:
        raise CliError(f"missing required option {flag} "
                       f"(flag or config file)", EXIT_CONFIG)


def _write_effective_config(args, out_dir):
    cp = configparser.ConfigParser()
    for dest, (section, key) in CONFIG_MAP.items():
        if not hasattr(args, dest):
            continue
        value = getattr(args, dest)
        if value is None:
            continue
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, str(value))
    with open(Path(out_dir) / "config.ini", "w", encoding="utf-8") as fh:
        cp.write(fh)


def _load_dataset(args):
    _require(args, "data", "--data")
    ds = datasets.load_csv(args.data, args.target, task=args.task,
                           split_column=args.split_column)
    if args.split_column is None:
        ds = datasets.split_dataset(ds, _float_list(args.fractions), args.seed)
    return ds


def _network_spec(args, n_features):
    layers = _int_list(args.layers) if args.layers else [n_features, 1]
    acts = _str_list(args.activations) if args.activations else \
        ["linear"] * (len(layers) - 1)
    loss = "mean_squared_error" if args.loss == "mse" else args.loss
    biases = None if not args.no_bias else [False] * (len(layers) - 1)
    return NetworkSpec(tuple(layers), tuple(acts), loss=loss, biases=biases)


def _optimizer(kind_flag, lr):
    kind = "gradient_descent" if kind_flag == "gd" else "adaptive_moments"
    return OptimizerKind(kind, lr)


def _save_params(path, spec, values):
    doc = {
        "layer_sizes": list(spec.layer_sizes),
        "activations": list(spec.activations),
        "loss": spec.loss,
        "biases": list(spec.biases),
        "values": [float(v) for v in values],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def _load_params(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    spec = NetworkSpec(tuple(doc["layer_sizes"]), tuple(doc["activations"]),
                       loss=doc["loss"], biases=tuple(doc["biases"]))
    return spec, np.asarray(doc["values"], dtype=np.float64)


def cmd_synth(args):
    _require(args, "kind", "--kind")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fractions = _float_list(args.fractions)
    if args.kind == "one_node":
        ds = datasets.gen_synthetic_one_node(
            n=args.n or 500, p=args.p or 100, activation=args.activation,
            seed=args.seed, snr=args.snr if args.snr is not None else 1.0,
            fractions=fractions)
    else:
        ds = datasets.gen_friedman(
            n=args.n or 1000, p=args.p or 200,
            include_linear_terms=args.linear_terms, seed=args.seed,
            snr=args.snr if args.snr is not None else 0.5,
            fractions=fractions)
    csv_path = out / f"{args.kind}.csv"
    header = [f"x{i}" for i in range(ds.n_features)] + ["y", "split"]
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(ds.n_rows):
            cells = [repr(float(v)) for v in ds.X[i]] + [repr(float(ds.y[i])),
                                                         str(ds.split[i])]
            fh.write(",".join(cells) + "\n")
    with open(out / f"{args.kind}.meta.json", "w", encoding="utf-8") as fh:
        json.dump(ds.provenance, fh, indent=1)
    _write_effective_config(args, out)
    print(f"wrote {csv_path} ({ds.n_rows} rows, {ds.n_features} features)")
    return EXIT_OK


def cmd_train(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = _load_dataset(args)
    spec = _network_spec(args, ds.n_features)
    init = NetworkParams.init_random(spec, seed=args.seed)
    kind = _optimizer(args.optimizer, args.lr)
    if args.mode == "converge":
        rule = ConvergenceRule(args.tolerance, args.patience, args.max_iter)
        result = train_to_convergence(spec, init, ds, kind, rule, seed=args.seed)
        final = result.params
    else:
        result = train_with_early_stopping(spec, init, ds, kind,
                                           args.max_iter, seed=args.seed)
        final = result.best_val_params
    _save_params(out / "params.json", spec, final)
    summary = {
        "mode": args.mode,
        "iterations": result.iterations,
        "stop_reason": result.stop_reason,
        "final_train_loss": float(result.train_losses[-1])
        if result.train_losses.size else None,
        "best_val_index": result.best_val_index,
        "best_val_loss": float(result.val_losses[result.best_val_index])
        if result.best_val_index >= 0 else None,
        "train_losses": [float(x) for x in result.train_losses],
        "val_losses": [float(x) for x in result.val_losses],
    }
    with open(out / "train_result.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=1)
    _write_effective_config(args, out)
    print(f"trained {result.iterations} iterations ({result.stop_reason})")
    return EXIT_OK


def cmd_path(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = _load_dataset(args)
    if args.params:
        spec, start = _load_params(args.params)
    else:
        spec = _network_spec(args, ds.n_features)
        init = NetworkParams.init_random(spec, seed=args.seed)
        kind = _optimizer(args.optimizer, args.lr)
        if args.init == "from_unconstrained":
            rule = ConvergenceRule(args.tolerance, args.patience, args.max_iter)
            result = train_to_convergence(spec, init, ds, kind, rule,
                                          seed=args.seed)
            start = result.params
        else:
            result = train_with_early_stopping(spec, init, ds, kind,
                                               args.max_iter, seed=args.seed)
            start = result.best_val_params
    penalty_kind = "log_beta" if args.penalty == "log" else args.penalty
    cfg = LockoutConfig(
        penalty=PenaltySpec(penalty_kind, beta=args.beta),
        selection=RegularizedSelection.first_layer_weights(spec),
        optimizer=OptimizerKind("gradient_descent", args.path_lr),
        epsilon=args.epsilon,
        delta_t=args.delta_t,
        max_iterations=args.path_max_iter,
        init_mode=args.init,
        t_floor=args.t_floor,
        inner_steps=args.inner_steps,
        phase1_max_iterations=args.phase1_max_iter,
    )
    log = run_path(spec, start, ds, cfg)
    stem = args.run_id
    pathlog.export_log(log, out / f"{stem}.path.csv", format="csv")
    pathlog.export_log(log, out / f"{stem}.path.json", format="json")
    picked = log.annotations.get("val_min_index")
    if picked is not None and log.points[picked].snapshot is not None:
        chosen = log.points[picked].snapshot
        _save_params(out / f"{stem}.selected.json", spec, chosen)
        mode = "single_node" if spec.layer_sizes[1] == 1 else "multi_node"
        imp = pathlog.feature_importance(spec, chosen, mode=mode)
        with open(out / f"{stem}.importance.csv", "w", encoding="utf-8") as fh:
            fh.write("feature,importance\n")
            for i, v in enumerate(imp):
                fh.write(f"{i},{repr(float(v))}\n")
    _write_effective_config(args, out)
    print(f"path: {len(log.points)} points, {log.total_crossings} zero "
          f"crossings, validation minimum at index {picked}")
    return EXIT_OK


def _verify_lp(instances, seed):
    from .planner import plan_linear_step

    rng = np.random.default_rng(seed)
    kinds = ["l1", "l2", "log_beta"]
    passed = 0
    for i in range(instances):
        n = rng.integers(1, 7)
        kind = kinds[i % 3]
        w = np.where(rng.random(n) < 0.3, 0.0, rng.normal(size=n))
        g = rng.normal(size=n)
        s = np.abs(rng.normal(size=n)) * 0.3
        beta = rng.uniform(0.2, 0.8)
        absw = np.abs(w)
        if kind == "l1":
            p = np.ones(n)
        elif kind == "l2":
            p = 2.0 * absw
        else:
            p = (1 - beta) / ((1 - beta) * absw + beta)
        slack = rng.normal() * 0.2
        inst = oracles.LinStepInstance(w, g, p, s, slack)
        dw, obj = oracles.lp_step_oracle(inst)
        dw_plan, _ = plan_linear_step(w, g, p, s, slack, eps=1e-12)
        obj_plan = float(np.sum(g * dw_plan))
        if abs(obj_plan - obj) <= 1e-10 * max(1.0, abs(obj)):
            passed += 1
    return passed


def _verify_lasso(instances, seed):
    rng = np.random.default_rng(seed)
    passed = 0
    for _ in range(instances):
        n, d = 60, 6
        X = rng.normal(size=(n, d))
        w_true = np.where(rng.random(d) < 0.5, 0.0, rng.normal(size=d))
        y = X @ w_true + 0.1 * rng.normal(size=n)
        t = 0.5 * np.abs(w_true).sum() + 0.1
        (w,) = oracles.lasso_path_oracle(X, y, [t])
        budget_ok = np.abs(w).sum() <= t + 1e-6
        # KKT: |X'r|/n <= lam on zeros, equality with sign match on support
        r = y - X @ w
        corr = X.T @ r / n
        support = w != 0
        lam = np.max(np.abs(corr[support])) if support.any() else 0.0
        kkt_ok = np.all(np.abs(corr[~support]) <= lam + 1e-6)
        if budget_ok and kkt_ok:
            passed += 1
    return passed


def _verify_grad(instances, seed):
    from .network import backward

    rng = np.random.default_rng(seed)
    passed = 0
    for i in range(instances):
        sizes = [int(rng.integers(1, 5)) for _ in range(int(rng.integers(1, 3)))]
        sizes.append(1)  # scalar regression head to match the drawn targets
        acts = [str(rng.choice(["linear", "relu", "tanh", "sigmoid"]))
                for _ in sizes]
        spec = NetworkSpec(tuple([int(rng.integers(1, 5))] + sizes),
                           tuple(acts))
        params = NetworkParams.init_random(spec, seed=int(rng.integers(2**31)))
        X = rng.normal(size=(8, spec.input_width))
        y = rng.normal(size=8)
        _, grad = backward(spec, params, X, y)
        fd = oracles.finite_diff_gradient(spec, params, X, y, h=1e-6)
        scale = max(1.0, np.abs(fd).max())
        if np.abs(grad - fd).max() / scale < 1e-5:
            passed += 1
    return passed


def cmd_verify(args):
    _require(args, "suite", "--suite")
    runners = {"lp": _verify_lp, "lasso": _verify_lasso, "grad": _verify_grad}
    passed = runners[args.suite](args.instances, args.seed)
    print(f"{passed}/{args.instances} pass")
    return EXIT_OK if passed == args.instances else EXIT_NUMERIC


def cmd_report(args):
    _require(args, "log", "--log")
    log = pathlog.load_log(args.log)
    vmin = pathlog.select_min_validation(log)
    sparse = pathlog.select_sparsest_within(log, args.tolerance)
    for label, idx in (("validation-minimum", vmin), ("sparse-pick", sparse)):
        pt = log.points[idx]
        print(f"{label}: index {idx}, iteration {pt.iteration}, t={pt.t:.6g}, "
              f"train={pt.train_loss:.6g}, val={pt.val_loss:.6g}, "
              f"nonzero={pt.nonzero_count}")
    return EXIT_OK


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        cfg_path = None
        for i, token in enumerate(argv):
            if token == "--config" and i + 1 < len(argv):
                cfg_path = argv[i + 1]
            elif token.startswith("--config="):
                cfg_path = token.split("=", 1)[1]
        if cfg_path:
            defaults = _config_defaults(cfg_path)
            parser.set_defaults(**defaults)
            # subcommands parse into their own namespace, so the defaults
            # must be installed on each of them as well
            for sp in parser.subcommands.values():
                sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
        if getattr(args, "seed", None) is None:
            args.seed = _default_seed()
        handlers = {
            "synth": cmd_synth, "train": cmd_train, "path": cmd_path,
            "verify": cmd_verify, "report": cmd_report,
        }
        return handlers[args.command](args)
    except CliError as exc:
        _emit_error(exc, exc.code)
        return exc.code
    except ConfigError as exc:
        _emit_error(exc, EXIT_CONFIG)
        return EXIT_CONFIG
    except (datasets.FormatError,) as exc:
        _emit_error(exc, EXIT_DATA)
        return EXIT_DATA
    except (TrainingDivergedError, NumericError, oracles.OracleError) as exc:
        _emit_error(exc, EXIT_NUMERIC)
        return EXIT_NUMERIC
    except (ShapeError, ValueError) as exc:
        _emit_error(exc, EXIT_CONFIG)
        return EXIT_CONFIG
    except OSError as exc:
        _emit_error(exc, EXIT_IO)
        return EXIT_IO


def _emit_error(exc, code):
    doc = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(doc), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
