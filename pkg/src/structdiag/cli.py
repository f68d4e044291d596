"""Command-line entry point.

Each subcommand runs one procedure; ``run`` executes every procedure named
in a config file. Flags override the config. Exit codes: 0 success,
2 configuration or usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .classifiers import ClassifierSpec
from .config import PROCEDURES, RunConfig, load_config
from .errors import ConfigError, StructDiagError
from .runner import run, write_bundle
from .synthetic import importance_example_spec, reference_spec, small_sample_example_spec

PRESETS = {
    "reference": reference_spec,
    "importance": importance_example_spec,
    "small-sample": small_sample_example_spec,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _floats(text):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _names(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _feature_def(text):
    name, sep, cols = text.partition("=")
    if not sep or not name or not cols:
        raise argparse.ArgumentTypeError(f"expected NAME=col1,col2,..., got {text!r}")
    return name, _names(cols)


def _common(p, with_data=True):
    g = p.add_argument_group("run")
    g.add_argument("--config", help="JSON run configuration")
    g.add_argument("--seed", type=int, help="master seed (overrides the config)")
    g.add_argument("--out", help="output directory (overrides the config)")
    g.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    if not with_data:
        return
    g = p.add_argument_group("data")
    g.add_argument("--input", help="training CSV (or the whole data set when no test file is given)")
    g.add_argument("--test-input", help="test CSV")
    g.add_argument("--test-fraction", type=float, help="holdout fraction when no test file is given")
    g.add_argument("--label-column", help="name of the label column")
    g.add_argument("--feature-set", action="append", type=_feature_def, metavar="NAME=COLS",
                   help="define a feature set; repeatable")
    g.add_argument("--mixture", help="JSON file describing a Gaussian mixture")
    g.add_argument("--preset", choices=sorted(PRESETS), help="built-in Gaussian mixture")
    g.add_argument("--n-train", type=int, help="mixture training rows")
    g.add_argument("--n-test", type=int, help="mixture test rows")
    g = p.add_argument_group("classifier")
    g.add_argument("--classifier", choices=["random-forest", "l1-logistic"])
    g.add_argument("--n-trees", type=int)
    g.add_argument("--mtry", type=int)
    g.add_argument("--min-leaf", type=int)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--max-iters", type=int)
    g.add_argument("--tol", type=float)


# procedure flags: (flag, dest/param, argparse kwargs)
_PROC_FLAGS = {
    "separation": [("--use", "feature_sets", {"type": _names, "help": "feature sets to evaluate"})],
    "learning-curve": [("--sizes", "sizes", {"type": _ints}), ("--repeats", "repeats", {"type": int}),
                       ("--use", "feature_set", {})],
    "noise-curve": [("--epsilons", "epsilons", {"type": _floats}), ("--repeats", "repeats", {"type": int}),
                    ("--use", "feature_set", {})],
    "small-sample": [("--sizes", "sizes", {"type": _ints}), ("--repeats", "repeats", {"type": int}),
                     ("--use", "feature_sets", {"type": _names})],
    "importance": [("--repeats", "repeats", {"type": int}), ("--use", "feature_set", {})],
    "confusion": [("--predictions", "predictions", {"help": "CSV with true and predicted labels"}),
                  ("--true-column", "true_column", {}), ("--predicted-column", "predicted_column", {}),
                  ("--classes", "class_names", {"type": _names}), ("--use", "feature_set", {})],
    "downsample-sweep": [("--target-class", "target_class", {}), ("--ratios", "ratios", {"type": _floats}),
                         ("--repeats", "repeats", {"type": int}), ("--use", "feature_set", {})],
    "compare-features": [("--sizes", "sizes", {"type": _ints}), ("--repeats", "repeats", {"type": int}),
                         ("--use", "feature_sets", {"type": _names})],
    "corr-heatmap": [("--signed", "signed", {"action": "store_true", "default": None}),
                     ("--kind", "kind", {"choices": ["total", "pooled"]}), ("--use", "feature_set", {})],
    "synth": [("--n", "n", {"type": int, "help": "rows to draw"})],
    "verify-theory": [("--n-specs", "n_specs", {"type": int}), ("--n-draws", "n_draws", {"type": int}),
                      ("--n-instances", "n_instances", {"type": int}),
                      ("--cross-norms", "cross_norms", {"type": _floats}),
                      ("--p-range", "p_range", {"type": _ints})],
    "bayes-curve": [("--d-values", "d_values", {"type": _floats}), ("--d-min", "d_min", {"type": float}),
                    ("--d-max", "d_max", {"type": float}), ("--d-step", "d_step", {"type": float})],
}

_HELP = {
    "separation": "pairwise distance of separation for every class pair and feature set",
    "learning-curve": "test error against training size",
    "noise-curve": "test error against label-contamination rate",
    "small-sample": "feature-set learning curves on small training sizes",
    "importance": "random-forest permutation importance",
    "confusion": "confusion matrix, error rates and kappa",
    "downsample-sweep": "effect of thinning one class",
    "compare-features": "learning curves for several feature sets",
    "corr-heatmap": "feature correlation matrix",
    "synth": "sample a Gaussian mixture to CSV",
    "verify-theory": "Monte-Carlo and random-instance checks of the closed-form results",
    "bayes-curve": "Bayes error against distance of separation",
}

_DATA_FREE = {"verify-theory", "bayes-curve"}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="structdiag", description="Structured diagnostics for classification error.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    p = sub.add_parser("run", help="run every procedure selected in a config file")
    _common(p, with_data=False)
    for name in PROCEDURES:
        p = sub.add_parser(name, help=_HELP[name])
        _common(p, with_data=name not in _DATA_FREE)
        g = p.add_argument_group(name)
        for flag, dest, kw in _PROC_FLAGS[name]:
            g.add_argument(flag, dest=f"proc_{dest}", **kw)
    return parser


def _mixture_from_args(args, base):
    mix = dict(base) if base else None
    if getattr(args, "preset", None):
        mix = PRESETS[args.preset]().to_dict()
    if getattr(args, "mixture", None):
        try:
            with open(args.mixture, encoding="utf-8") as fh:
                mix = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read mixture {args.mixture}: {exc}") from None
    for key in ("n_train", "n_test"):
        v = getattr(args, key, None)
        if v is not None:
            if mix is None:
                raise ConfigError(f"--{key.replace('_', '-')} needs a mixture")
            mix[key] = v
    return mix


def config_from_args(args) -> RunConfig:
    base = load_config(args.config).to_dict() if args.config else {}
    if args.seed is not None:
        base["seed"] = args.seed
    if args.out is not None:
        base["output_dir"] = args.out
    if args.command == "run":
        if not args.config:
            raise ConfigError("run needs --config")
        return RunConfig.from_dict(base)

    if args.command not in _DATA_FREE:
        for attr, key in (("input", "input"), ("test_input", "test_input"),
                          ("test_fraction", "test_fraction"), ("label_column", "label_column")):
            v = getattr(args, attr)
            if v is not None:
                base[key] = v
        if args.feature_set:
            sets = dict(base.get("feature_sets") or {})
            sets.update(dict(args.feature_set))
            base["feature_sets"] = sets
        mix = _mixture_from_args(args, base.get("mixture"))
        if mix is not None:
            base["mixture"] = mix
        clf = dict(base.get("classifier") or {})
        for attr, key in (("classifier", "kind"), ("n_trees", "n_trees"), ("mtry", "mtry"),
                          ("min_leaf", "min_leaf"), ("lam", "lambda"), ("max_iters", "max_iters"),
                          ("tol", "tol")):
            v = getattr(args, attr)
            if v is not None:
                clf[key] = v
        base["classifier"] = ClassifierSpec.from_dict(clf).to_dict()

    params = dict((base.get("procedures") or {}).get(args.command, {}))
    for name, value in vars(args).items():
        if name.startswith("proc_") and value is not None:
            params[name[5:]] = value
    base["procedures"] = {args.command: params}
    return RunConfig.from_dict(base)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        config = config_from_args(args)
        bundle = run(config, threads=args.threads)
        path = write_bundle(bundle, config.output_dir)
    except StructDiagError as exc:
        print(f"structdiag: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"structdiag: I/O error: {exc}", file=sys.stderr)
        return 3
    for w in bundle.report["warnings"]:
        print(f"structdiag: warning [{w['procedure']}]: {w['message']}", file=sys.stderr)
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
