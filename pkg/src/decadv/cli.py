"""
Command-line entry point: ``decadv {graph,train,eval,sweep}``.

Exit codes: 0 success, 1 runtime or I/O failure (including graph generation
that runs out of retries), 2 configuration or validation error, 3 divergence.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, dump_config, load_config, resolve
from .experiment import build_data, build_experiment, build_graph, build_model
from .graph import GraphGenerationError, NotPrimitiveError, save_graph
from .metrics import ATTACKS, default_norm, robustness_curve, tail_mean, write_csv, write_jsonl
from .perturb import norm_name, parse_norm
from .svg import line_chart
from .train import DivergenceError, run_training

log = logging.getLogger("decadv")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2, 3

SWEEP_PARAMS = {
    "mu": ("train", "mu"),
    "B": ("train", "batch_size"),
    "epsilon": ("attack", "epsilon"),
    "strategy": ("train", "strategy"),
}

SUMMARY_FIELDS = ["param", "value", "status", "steady_disagreement", "steady_msd",
                  "final_excess_risk", "final_moreau_grad_sq"]


class _Console:
    def __init__(self, quiet):
        self.quiet = quiet

    def __call__(self, *args):
        if not self.quiet:
            print(*args)


def _write_manifest(cfg, out: Path, command):
    text = dump_config(cfg, {"manifest": {"version": __version__, "command": command}})
    (out / "manifest.ini").write_text(text)


def _write_models(path, cfg, model, comb, state, strategy, divergence=None):
    doc = {
        "version": __version__,
        "model": {**cfg["model"], "dim": model.dim},
        "strategy": strategy,
        "K": comb.K,
        "n": state.n,
        "pi": comb.pi.tolist(),
        "models": state.W.tolist(),
    }
    if divergence is not None:
        doc["divergence"] = divergence
    Path(path).write_text(json.dumps(doc) + "\n")


def _plot_metrics(records, plots: Path):
    plots.mkdir(exist_ok=True)
    n = [r.n for r in records]
    for name in ("disagreement", "msd", "excess_risk", "adv_error", "moreau_grad_sq", "noise_var"):
        ys = [getattr(r, name) for r in records]
        if any(v is not None for v in ys):
            line_chart({name: (n, ys)}, plots / f"{name}.svg", title=name, xlabel="iteration",
                       ylabel=name, logy=name != "adv_error")


# -- verbs ------------------------------------------------------------------

def cmd_graph(cfg, out: Path, say):
    adj, comb = build_graph(cfg)
    out.mkdir(parents=True, exist_ok=True)
    save_graph(out / "graph.json", adj, comb)
    say(f"K={adj.K} edges={len(adj.edges())} lambda2={comb.lambda2:.6f} -> {out / 'graph.json'}")
    return EXIT_OK


def train_once(cfg, out: Path, say):
    """Run one training experiment and write its output tree.

    Returns ``(exit_code, records)``.
    """
    out.mkdir(parents=True, exist_ok=True)
    _write_manifest(cfg, out, "train")
    exp = build_experiment(cfg)
    save_graph(out / "graph.json", exp.adj, exp.comb)
    status, divergence = EXIT_OK, None
    try:
        result = run_training(exp.train, exp.comb, exp.model, exp.sources, exp.evaluator)
    except DivergenceError as err:
        result = err.result
        status = EXIT_DIVERGED
        divergence = {"n": err.n, "agent": err.agent, "message": str(err)}
        say(f"diverged: {err}")
    write_jsonl(result.records, out / "metrics.jsonl")
    write_csv(result.records, out / "metrics.csv")
    _write_models(out / "final_models.json", cfg, exp.model, exp.comb, result.state,
                  exp.train.strategy, divergence)
    if cfg["output"]["plots"] and result.records:
        _plot_metrics(result.records, out / "plots")
    if result.records:
        last = result.records[-1]
        say(f"n={last.n} disagreement={last.disagreement:.4g}"
            + (f" msd={last.msd:.4g}" if last.msd is not None else "")
            + (f" excess_risk={last.excess_risk:.4g}" if last.excess_risk is not None else ""))
    say(f"outputs written to {out}")
    return status, result.records


def cmd_train(cfg, out: Path, say):
    return train_once(cfg, out, say)[0]


def _eval_norm(attack, cfg):
    if attack in ("closed_form", "pgd"):
        return parse_norm(cfg["attack"]["norm"])
    return default_norm(attack)


def cmd_eval(cfg, out: Path, say, models_path=None):
    models_path = Path(models_path) if models_path else out / "final_models.json"
    if not models_path.is_file():
        raise FileNotFoundError(f"models file not found: {models_path}")
    doc = json.loads(models_path.read_text())
    mcfg = copy.deepcopy(cfg)
    mcfg["model"].update({k: v for k, v in doc["model"].items() if k != "dim"})
    model = build_model(mcfg, doc["model"]["dim"])
    e = cfg["eval"]
    for attack in e["attacks"]:
        if attack not in ATTACKS:
            raise ConfigError(f"[eval] unknown attack {attack!r}; expected one of {ATTACKS}")
        if attack in ("closed_form", "deepfool_linear") and not model.is_linear:
            raise ConfigError(f"attack {attack!r} is incompatible with model kind {model.kind!r}")
    W = np.asarray(doc["models"], dtype=float)
    _, testset = build_data(mcfg, W.shape[0])
    if len(testset) == 0:
        raise ConfigError("the test set is empty")
    testset = testset.subset(np.arange(min(e["test_size"], len(testset))))
    out.mkdir(parents=True, exist_ok=True)
    rows, series = [], {}
    for attack in e["attacks"]:
        p = _eval_norm(attack, cfg)
        curve = robustness_curve(W, model, testset, attack, e["epsilons"], p=p, seed=e["seed"],
                                 overshoot=e["overshoot"], pgd_steps=e["pgd_steps"],
                                 pgd_random_init=e["pgd_random_init"])
        for pt in curve:
            rows.append([attack, norm_name(p), repr(pt["epsilon"]), repr(pt["mean_error"])]
                        + [repr(v) for v in pt["per_agent"]])
            say(f"{attack:16s} eps={pt['epsilon']:<8g} mean_error={pt['mean_error']:.4f}")
        series[f"{attack} ({norm_name(p)})"] = ([pt["epsilon"] for pt in curve],
                                                [pt["mean_error"] for pt in curve])
    with open(out / "robustness.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["attack", "norm", "epsilon", "mean_error"] + [f"agent_{k}" for k in range(W.shape[0])])
        w.writerows(rows)
    if cfg["output"]["plots"]:
        (out / "plots").mkdir(exist_ok=True)
        line_chart(series, out / "plots" / "robustness.svg", title="error versus perturbation size",
                   xlabel="epsilon", ylabel="mean error")
    say(f"robustness curve written to {out / 'robustness.csv'}")
    return EXIT_OK


def _fmt(v):
    return "" if v is None else repr(v)


def cmd_sweep(cfg, out: Path, say, param, values):
    """Train once per value; every run keeps the configured seeds."""
    if param not in SWEEP_PARAMS:
        raise ConfigError(f"sweep parameter must be one of {sorted(SWEEP_PARAMS)}, got {param!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    section, key = SWEEP_PARAMS[param]
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        sub = copy.deepcopy(cfg)
        sub[section][key] = value
        tag = f"{param}={value}"
        row = {"param": param, "value": value}
        try:
            sub = resolve(sub, f"sweep {tag}")
            code, records = train_once(sub, out / "sweep" / tag, _Console(True))
            row["status"] = "ok" if code == EXIT_OK else "diverged"
        except (ConfigError, ValueError, GraphGenerationError, NotPrimitiveError, OSError) as err:
            log.warning("sweep %s failed: %s", tag, err)
            row["status"] = f"error: {err}"
            records = []
        row["steady_disagreement"] = tail_mean(records, "disagreement")
        row["steady_msd"] = tail_mean(records, "msd")
        row["final_excess_risk"] = records[-1].excess_risk if records else None
        row["final_moreau_grad_sq"] = records[-1].moreau_grad_sq if records else None
        say(f"{tag}: {row['status']} steady_disagreement={_fmt(row['steady_disagreement'])}")
        rows.append(row)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_FIELDS)
        for row in rows:
            w.writerow([row["param"], row["value"], row["status"]] + [_fmt(row[k]) for k in SUMMARY_FIELDS[3:]])
    say(f"summary written to {out / 'summary.csv'}")
    return EXIT_OK


# -- argument handling --------------------------------------------------------

def _parse_values(text):
    vals = []
    for item in text.split(","):
        item = item.strip()
        try:
            vals.append(json.loads(item))
        except json.JSONDecodeError:
            vals.append(item)
    return vals


def build_parser():
    parser = argparse.ArgumentParser(prog="decadv", description="Decentralized adversarial training over graphs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="experiment config (INI)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides [output] dir)")
    common.add_argument("--seed", type=int, help="override [train] seed")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    sub = parser.add_subparsers(dest="verb", required=True)
    sub.add_parser("graph", parents=[common], help="generate and save a graph")
    sub.add_parser("train", parents=[common], help="run training and write metrics and models")
    ev = sub.add_parser("eval", parents=[common], help="robustness curves for a models file")
    ev.add_argument("--models", metavar="PATH", help="models file (default: OUT/final_models.json)")
    sw = sub.add_parser("sweep", parents=[common], help="train once per parameter value")
    sw.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMS))
    sw.add_argument("--values", required=True, type=_parse_values, help="comma-separated values")
    return parser


def _load(args):
    if args.config:
        cfg = load_config(args.config)
    elif args.verb == "eval":
        base = Path(args.models).parent if args.models else Path(args.out or "out")
        manifest = base / "manifest.ini"
        if not manifest.is_file():
            raise ConfigError(f"no --config given and no manifest at {manifest}")
        cfg = load_config(manifest)
    else:
        raise ConfigError("--config is required")
    if args.seed is not None:
        cfg["train"]["seed"] = args.seed
    if args.out:
        cfg["output"]["dir"] = args.out
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    say = _Console(args.quiet)
    try:
        cfg = _load(args)
        out = Path(cfg["output"]["dir"])
        if args.verb == "graph":
            return cmd_graph(cfg, out, say)
        if args.verb == "train":
            return cmd_train(cfg, out, say)
        if args.verb == "eval":
            return cmd_eval(cfg, out, say, args.models)
        return cmd_sweep(cfg, out, say, args.param, args.values)
    except (ConfigError, NotPrimitiveError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except GraphGenerationError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
