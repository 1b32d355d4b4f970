"""Command-line front end: synth, preprocess, evaluate, ablate, stats, actuate-check.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
The default output directory is ``$GRASPDECODE_OUT`` (or ``./out``).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import report
from .actuation import ActuationError, command_for, encode_command, load_table, default_table, validate_table
from .classify import KINDS, ModelSpec
from .data import Label, LayoutError, load_epochs, load_layout, save_epochs, resolve_combination, select_electrodes
from .evaluation import PAIRS, EvalConfig, pair_name, parse_pair, pipeline_for, run_ablation, run_grid
from .preprocess import PreprocessConfig, augment_analogy, fit_normalization, normalize_robust, preprocess
from .stats import bootstrap_compare, wilcoxon_signed_rank
from .synth import SynthSpec, central_spec, default_spec, generate

log = logging.getLogger("graspdecode")

ENV_OUT = "GRASPDECODE_OUT"
EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def default_out() -> Path:
    return Path(os.environ.get(ENV_OUT, "out"))


# ---------------------------------------------------------------- run config


@dataclass
class RunConfig:
    """Settings shared by evaluate and ablate.

    A JSON config file may set any field by name; command-line flags win.
    ``synth`` holds keyword arguments for the synthetic generator and is used
    when no ``input`` is given.
    """

    input: str | None = None
    synth: dict | None = None
    pipelines: list = field(default_factory=lambda: ["CSP-WD", "Riemann"])
    models: list = field(default_factory=lambda: list(KINDS))
    pairs: list = field(default_factory=lambda: [pair_name(p) for p in PAIRS])
    combos: list | None = None
    layout: str | None = None
    seed: int = 0
    out: str | None = None
    augment_before_split: bool = False
    wavelet_band: str = "approx"
    wavelet_level: int | None = None
    augment_per_class: int | None = None
    normalize: bool = True
    jobs: int = 1

    def validate(self) -> None:
        if self.input is None and self.synth is None:
            raise UsageError("need --input or a 'synth' section in the config")
        if self.input is not None and not Path(self.input).is_file():
            raise UsageError(f"input file not found: {self.input}")
        if self.layout is not None and not Path(self.layout).is_file():
            raise UsageError(f"layout file not found: {self.layout}")
        unknown = [m for m in self.models if m not in KINDS]
        if unknown:
            raise UsageError(f"unknown model(s) {unknown}; choose from {list(KINDS)}")
        bad = [p for p in self.pipelines if p not in ("CSP-WD", "Riemann")]
        if bad:
            raise UsageError(f"unknown pipeline(s) {bad}")
        if not self.selected_models():
            raise UsageError("no models left after pipeline selection")
        if not self.pairs:
            raise UsageError("need at least one pair")
        try:
            [parse_pair(p) for p in self.pairs]
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if self.wavelet_band not in ("approx", "approx+detail"):
            raise UsageError(f"wavelet band must be 'approx' or 'approx+detail', got {self.wavelet_band!r}")
        if self.jobs < 1:
            raise UsageError("jobs must be >= 1")

    def selected_models(self) -> list:
        return [m for m in self.models if pipeline_for(m) in self.pipelines]

    def specs(self) -> list:
        return [ModelSpec(m, seed=self.seed) for m in self.selected_models()]

    def pair_list(self) -> list:
        return [parse_pair(p) for p in self.pairs]

    def eval_config(self) -> EvalConfig:
        if self.augment_before_split:
            return EvalConfig(None, False, wavelet_band=self.wavelet_band,
                              wavelet_level=self.wavelet_level, seed=self.seed)
        return EvalConfig(self.augment_per_class, self.normalize, wavelet_band=self.wavelet_band,
                          wavelet_level=self.wavelet_level, seed=self.seed)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _load_json(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return doc


def build_run_config(args) -> RunConfig:
    values = {}
    if args.config:
        doc = _load_json(args.config)
        known = {f.name for f in fields(RunConfig)}
        extra = sorted(set(doc) - known)
        if extra:
            raise UsageError(f"unknown config key(s): {extra}")
        values.update(doc)
    for name in ("input", "models", "pairs", "combos", "layout", "seed", "out", "augment_before_split",
                 "wavelet_band", "wavelet_level", "augment_per_class", "normalize", "jobs", "pipelines"):
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise UsageError(f"bad config: {exc}") from None
    cfg.validate()
    return cfg


def _load_input(cfg: RunConfig):
    if cfg.input is not None:
        return load_epochs(cfg.input)
    kwargs = dict(cfg.synth)
    central = kwargs.pop("central", False)
    if kwargs.pop("layout_channels", False) or central:
        layout, _ = load_layout(cfg.layout)
        kwargs.setdefault("channels", layout.names)
    try:
        spec = central_spec(**kwargs) if central else default_spec(**kwargs)
    except TypeError as exc:
        raise UsageError(f"bad synth section: {exc}") from None
    return preprocess(generate(spec), PreprocessConfig())


def _prepare(cfg: RunConfig, epochs):
    """Augment and normalize the whole set before splitting, when requested."""
    if not cfg.augment_before_split:
        return epochs
    if cfg.augment_per_class:
        epochs = augment_analogy(epochs, cfg.augment_per_class, seed=cfg.seed)
    if cfg.normalize:
        epochs = normalize_robust(epochs, fit_normalization(epochs))
    return epochs


def _combo_sets(cfg: RunConfig, epochs, combo_ids):
    """EpochSet per combination id; combination 0 is always the set as given."""
    combos = {}
    layout = None
    if any(c != 0 for c in combo_ids):
        layout, combos = load_layout(cfg.layout)
    sets, specs = {}, {}
    for cid in combo_ids:
        if cid == 0:
            sets[0] = epochs
            continue
        if cid not in combos:
            raise UsageError(f"unknown combination {cid}")
        try:
            names = resolve_combination(layout, combos[cid], epochs.meta.handedness)
            sets[cid] = select_electrodes(epochs, names)
        except LayoutError as exc:
            raise UsageError(f"combination {cid} does not resolve against the input: {exc}") from None
        specs[cid] = combos[cid]
    return sets, layout, specs


def _out_dir(cfg: RunConfig) -> Path:
    return Path(cfg.out) if cfg.out else default_out()


def _write_all(out: Path, files: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, payload in files.items():
        path = out / name
        if isinstance(payload, bytes):
            path.write_bytes(payload)
        else:
            path.write_text(payload)
        log.info("wrote %s", path)


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> int:
    if args.spec:
        p = Path(args.spec)
        if not p.is_file():
            raise UsageError(f"spec file not found: {args.spec}")
        try:
            spec = SynthSpec.from_json(p.read_text())
        except (ValueError, KeyError) as exc:
            raise UsageError(f"{args.spec}: {exc}") from None
    else:
        channels = None
        if args.layout_channels or args.central:
            if args.layout and not Path(args.layout).is_file():
                raise UsageError(f"layout file not found: {args.layout}")
            channels = load_layout(args.layout)[0].names
        kwargs = dict(sample_rate=args.rate, seed=args.seed, overlap=args.overlap, noise=args.noise,
                      rest_gain=args.rest_gain, move_gain=args.move_gain, jitter_sd=args.jitter)
        if args.trials:
            kwargs["trials"] = {lab: args.trials for lab in Label}
        if args.central:
            spec = central_spec(channels, **kwargs)
        else:
            spec = default_spec(n_channels=args.channels, channels=channels, **kwargs)
    out = Path(args.output) if args.output else default_out() / "synth.epochs"
    epochs = generate(spec)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_epochs(epochs, out)
    out.with_suffix(".spec.json").write_text(spec.to_json() + "\n")
    print(f"wrote {out} ({epochs.n_trials} trials, {epochs.n_channels} channels, {epochs.sample_rate:g} Hz)")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    if not Path(args.input).is_file():
        raise UsageError(f"input file not found: {args.input}")
    if args.band is not None and not args.band[0] < args.band[1]:
        raise UsageError(f"band must be increasing, got {args.band}")
    cfg = PreprocessConfig(target_rate=args.target_rate,
                           notch_hz=None if args.no_notch else args.notch,
                           band=None if args.no_band else tuple(args.band),
                           augment_per_class=args.augment, normalize=args.normalize, seed=args.seed)
    epochs = preprocess(load_epochs(args.input), cfg)
    out = Path(args.output) if args.output else default_out() / "preprocessed.epochs"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_epochs(epochs, out)
    print(f"wrote {out} ({epochs.n_trials} trials at {epochs.sample_rate:g} Hz)")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = build_run_config(args)
    combo_ids = cfg.combos if cfg.combos is not None else [0]
    epochs = _prepare(cfg, _load_input(cfg))
    sets, _, _ = _combo_sets(cfg, epochs, combo_ids)
    rows = run_grid(sets, cfg.pair_list(), cfg.specs(), cfg.eval_config(), jobs=cfg.jobs)
    files = {
        "results.csv": report.csv_text(report.results_rows(rows), report.RESULT_FIELDS),
        "folds.csv": report.csv_text(report.fold_rows(rows), report.FOLD_FIELDS),
        "summary.json": report.summary_json(rows, _public_config(cfg)),
        "accuracy.svg": report.accuracy_svg(rows),
    }
    _write_all(_out_dir(cfg), files)
    print(f"{len(rows)} result rows -> {_out_dir(cfg)}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = build_run_config(args)
    combo_ids = cfg.combos if cfg.combos is not None else list(range(10))
    if 0 not in combo_ids:
        raise UsageError("combination 0 (baseline) must be included")
    epochs = _prepare(cfg, _load_input(cfg))
    layout, combos = load_layout(cfg.layout)
    missing = [c for c in combo_ids if c not in combos]
    if missing:
        raise UsageError(f"unknown combination(s) {missing}")
    for cid in combo_ids:
        try:
            select_electrodes(epochs, resolve_combination(layout, combos[cid], epochs.meta.handedness))
        except LayoutError as exc:
            raise UsageError(f"combination {cid} does not resolve against the input: {exc}") from None
    table = run_ablation(epochs, [combos[c] for c in sorted(combo_ids)], layout, cfg.specs(),
                         cfg.pair_list(), cfg.eval_config(), jobs=cfg.jobs)
    files = {
        "ablation.csv": report.csv_text(report.ablation_rows(table), report.ABLATION_FIELDS),
        "ablation.svg": report.ablation_svg(table),
    }
    _write_all(_out_dir(cfg), files)
    print(f"{len(table.rows)} ablation rows -> {_out_dir(cfg)}")
    return EXIT_OK


def _parse_groups(items):
    groups = {}
    for item in items or []:
        name, sep, paths = item.partition("=")
        if not sep or not name or not paths:
            raise UsageError(f"--group expects NAME=FILE[,FILE...], got {item!r}")
        if name in groups:
            raise UsageError(f"duplicate group name {name!r}")
        files = [p for p in paths.split(",") if p]
        for p in files:
            if not Path(p).is_file():
                raise UsageError(f"results file not found: {p}")
        groups[name] = files
    if len(groups) < 2:
        raise UsageError("stats needs at least two groups")
    return groups


def _group_values(files):
    """Accuracy samples per (combo, pair, model), across files then rows."""
    values = {}
    for path in files:
        rows = report.read_csv(path)
        if not rows or not {"combo", "pair", "model", "accuracy"} <= set(rows[0]):
            raise UsageError(f"{path}: not a results or folds CSV")
        for r in rows:
            values.setdefault((int(r["combo"]), r["pair"], r["model"]), []).append(float(r["accuracy"]))
    return values


def cmd_stats(args) -> int:
    if args.reps < 1:
        raise UsageError(f"reps must be >= 1, got {args.reps}")
    if not 0 < args.alpha < 1:
        raise UsageError(f"alpha must be in (0, 1), got {args.alpha}")
    groups = _parse_groups(args.group)
    values = {name: _group_values(files) for name, files in groups.items()}
    names = list(groups)
    rows = []
    for i, ga in enumerate(names):
        for gb in names[i + 1:]:
            for key in sorted(set(values[ga]) & set(values[gb])):
                a, b = values[ga][key], values[gb][key]
                p = wilcoxon_signed_rank(a, b) if len(a) == len(b) else float("nan")
                subset = min(args.subset_size, len(a)) if args.subset_size else None
                boot = bootstrap_compare(a, b, reps=args.reps, subset_size=subset, seed=args.seed,
                                         alpha=args.alpha)
                rows.append({"group_a": ga, "group_b": gb, "combo": key[0], "pair": key[1],
                             "model": key[2], "n_a": len(a), "n_b": len(b), "wilcoxon_p": p,
                             "bootstrap_reps": boot.reps, "subset_size": boot.subset_size,
                             "fraction_significant": boot.fraction_significant,
                             "median_p": boot.median_p})
    if not rows:
        raise UsageError("groups share no (combo, pair, model) cells")
    out = Path(args.output) if args.output else default_out() / "stats.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.csv_text(rows, report.STATS_FIELDS))
    print(f"{len(rows)} comparisons -> {out}")
    return EXIT_OK


def cmd_actuate_check(args) -> int:
    if args.table:
        if not Path(args.table).is_file():
            raise UsageError(f"table file not found: {args.table}")
        table = load_table(args.table)
    else:
        table = default_table()
    try:
        validate_table(table)
    except ActuationError as exc:
        print(f"invalid lookup table: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    labels = args.labels or [lab.display for lab in Label]
    for text in labels:
        try:
            lab = Label.parse(text)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        cmd = command_for(lab, table)
        print(f"{lab.display}\t{cmd.channel.name.lower()}\t{cmd.millivolts}\t{cmd.duration_ms}\t"
              f"{encode_command(cmd).hex(' ')}")
    return EXIT_OK


def _public_config(cfg: RunConfig) -> dict:
    d = cfg.to_dict()
    d.pop("out")
    d.pop("jobs")  # results do not depend on the worker count
    return d


# ---------------------------------------------------------------- parser


def _run_flags(p):
    p.add_argument("--config", help="JSON file with RunConfig fields (flags override it)")
    p.add_argument("--input", "-i", help="epoch file (already preprocessed)")
    p.add_argument("--models", nargs="+", metavar="KIND", help=f"subset of {', '.join(KINDS)}")
    p.add_argument("--pipelines", nargs="+", choices=["CSP-WD", "Riemann"])
    p.add_argument("--pairs", nargs="+", metavar="A/B", help="e.g. TG/PG Open/Rest")
    p.add_argument("--combos", nargs="+", type=int, metavar="ID")
    p.add_argument("--layout", help="layout/combination JSON (default: bundled 63-channel layout)")
    p.add_argument("--seed", type=int, help="fold, augmentation and model seed")
    p.add_argument("--out", "-o", help=f"output directory (default ${ENV_OUT} or ./out)")
    p.add_argument("--augment-before-split", dest="augment_before_split", action="store_const", const=True,
                   help="augment and normalize the whole set before cross-validation")
    p.add_argument("--wavelet-band", dest="wavelet_band", choices=["approx", "approx+detail"])
    p.add_argument("--wavelet-level", dest="wavelet_level", type=int)
    p.add_argument("--augment", dest="augment_per_class", type=int, metavar="N",
                   help="augment each class to N trials (in-fold target scaled by (k-1)/k)")
    p.add_argument("--no-normalize", dest="normalize", action="store_const", const=False)
    p.add_argument("--jobs", "-j", type=int, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graspdecode", description="Grasp-type EEG decoding toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic epoch file")
    p.add_argument("--spec", help="SynthSpec JSON (other generator flags are ignored)")
    p.add_argument("--channels", type=int, default=16)
    p.add_argument("--layout-channels", action="store_true", help="use the layout's channel names")
    p.add_argument("--central", action="store_true", help="plant the signal on central channels only")
    p.add_argument("--layout")
    p.add_argument("--rate", type=float, default=250.0)
    p.add_argument("--trials", type=int, help="trials per class (default 30/30/30/10)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--overlap", type=float, default=0.9985)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--rest-gain", type=float, default=0.2)
    p.add_argument("--move-gain", type=float, default=5.0)
    p.add_argument("--jitter", type=float, default=0.25)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="resample, filter, augment and normalize")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--output", "-o")
    p.add_argument("--target-rate", type=float)
    p.add_argument("--notch", type=float, default=50.0)
    p.add_argument("--no-notch", action="store_true")
    p.add_argument("--band", type=float, nargs=2, default=[8.0, 30.0], metavar=("LO", "HI"))
    p.add_argument("--no-band", action="store_true")
    p.add_argument("--augment", type=int, metavar="N")
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("evaluate", help="5-fold evaluation of every pair and model")
    _run_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="electrode-combination ablation")
    _run_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("stats", help="compare groups of result files")
    p.add_argument("--group", action="append", metavar="NAME=FILE[,FILE...]")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--subset-size", type=int)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("actuate-check", help="validate a DAC lookup table and show encoded commands")
    p.add_argument("--table", help="JSON lookup table (default: built-in)")
    p.add_argument("labels", nargs="*")
    p.set_defaults(func=cmd_actuate_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"graspdecode: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ActuationError, LayoutError) as exc:
        print(f"graspdecode: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        log.debug("failure", exc_info=True)
        print(f"graspdecode: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
