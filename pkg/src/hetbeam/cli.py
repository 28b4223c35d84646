"""Command-line entry point.

Configuration is an INI file with ``[scenario]``, ``[model]``, ``[training]``,
``[experiment]`` and ``[io]`` sections; ``--set section.key=value`` overrides
single entries. Every command writes into one artifact directory per
(config, seed), ``<out>/<config hash>-s<seed>``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from .channel import Scenario, ScenarioError, gen_dataset, load_dataset, save_dataset
from .hgnn import HgnnConfig, TrainParams
from .hgnn import train as hgnn_train
from .report import ReportConflict
from .hgnn.train import checkpoint_meta, evaluate, load_checkpoint, prepare, save_checkpoint

SECTIONS = ("scenario", "model", "training", "experiment", "io")
EXPERIMENT_KEYS = {"kind": str, "seeds": "ints", "snrs": "floats", "nbar_grid": "ints",
                   "structures": "strs", "methods": "strs", "n_train": int, "n_test": int,
                   "altmin_samples": int, "phase_sigmas": "floats", "targets": str}
IO_KEYS = ("dataset", "checkpoint", "results")
DEFAULT_METHODS = ("WMMSE", "MO-AltMin", "PC-AltMin (LS)")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class InputError(RuntimeError):
    pass


# config parsing


def _parse_value(raw, kind):
    raw = raw.strip()
    if kind in ("ints", "floats", "strs"):
        conv = {"ints": int, "floats": float, "strs": str}[kind]
        return tuple(conv(x.strip()) for x in raw.split(",") if x.strip())
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def _field_kinds(cls):
    """Parser kind of every dataclass field, judged from its default."""
    kinds = {}
    for f in fields(cls):
        if f.name == "P":
            kinds[f.name] = "floats"
        elif f.name == "max_rf":
            kinds[f.name] = "optint"
        elif isinstance(f.default, tuple):
            kinds[f.name] = "ints"
        else:
            kinds[f.name] = type(f.default)
    return kinds


def read_config(path=None, overrides=()):
    """Merge the INI file and ``section.key=value`` overrides into a nested dict of strings.

    Structural problems (bad overrides, unknown sections) are collected under
    ``"_problems"`` so ``RunConfig`` can report them with everything else.
    """
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    problems = []
    if path:
        p = Path(path)
        if not p.exists():
            raise InputError(f"config file not found: {p}")
        cp.read(p)
    raw = {s: dict(cp[s]) for s in cp.sections()}
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            problems.append(f"override {ov!r} is not of the form section.key=value")
            continue
        lhs, value = ov.split("=", 1)
        section, key = lhs.split(".", 1)
        raw.setdefault(section.strip(), {})[key.strip()] = value
    for s in list(raw):
        if s not in SECTIONS:
            problems.append(f"unknown section [{s}]")
    raw["_problems"] = problems
    return raw


def _typed(section, raw, cls, problems):
    kinds = _field_kinds(cls)
    out = {}
    for key, value in raw.get(section, {}).items():
        if key not in kinds:
            problems.append(f"[{section}] unknown key {key!r}")
            continue
        kind = kinds[key]
        try:
            if kind == "optint":
                out[key] = None if value.strip().lower() in ("", "none") else int(value)
            else:
                out[key] = _parse_value(value, kind)
        except ValueError as exc:
            problems.append(f"[{section}] {key}: {exc}")
    return out


class RunConfig:
    """Validated configuration blocks."""

    def __init__(self, raw, seed=None):
        problems = list(raw.get("_problems", ()))
        sc_kw = _typed("scenario", raw, Scenario, problems)
        model_kw = _typed("model", raw, HgnnConfig, problems)
        train_kw = _typed("training", raw, TrainParams, problems)
        exp = {}
        for key, value in raw.get("experiment", {}).items():
            if key not in EXPERIMENT_KEYS:
                problems.append(f"[experiment] unknown key {key!r}")
                continue
            try:
                exp[key] = _parse_value(value, EXPERIMENT_KEYS[key])
            except ValueError as exc:
                problems.append(f"[experiment] {key}: {exc}")
        io = {}
        for key, value in raw.get("io", {}).items():
            if key not in IO_KEYS:
                problems.append(f"[io] unknown key {key!r}")
            else:
                io[key] = value.strip()
        if "seed" in sc_kw and "seed" not in train_kw:
            train_kw["seed"] = sc_kw["seed"]
        if seed is not None:
            sc_kw["seed"] = seed
            train_kw["seed"] = seed
            exp["seeds"] = (seed,)
        # model structure follows the scenario unless set explicitly
        if "structure" in sc_kw and "structure" not in model_kw:
            model_kw["structure"] = sc_kw["structure"]
        if "structure" in model_kw and "structure" not in sc_kw:
            sc_kw["structure"] = model_kw["structure"]
        self.scenario = self.model = self.training = None
        try:
            self.scenario = Scenario(**sc_kw)
        except ScenarioError as exc:
            problems += [f"[scenario] {p}" for p in exc.problems]
        except TypeError as exc:
            problems.append(f"[scenario] {exc}")
        try:
            self.model = HgnnConfig(**model_kw)
        except (ValueError, TypeError) as exc:
            problems.append(f"[model] {exc}")
        if self.model is not None and self.model.L < 1:
            problems.append("[model] L must be >= 1")
        try:
            self.training = TrainParams(**train_kw)
        except TypeError as exc:
            problems.append(f"[training] {exc}")
        if self.training is not None:
            t = self.training
            if t.epochs < 0:
                problems.append("[training] epochs must be >= 0")
            if t.batch_size < 1:
                problems.append("[training] batch_size must be >= 1")
            if t.lr <= 0:
                problems.append("[training] lr must be > 0")
            if t.lr_interval < 1:
                problems.append("[training] lr_interval must be >= 1")
        for key in ("n_train", "n_test"):
            if key in exp and exp[key] < 1:
                problems.append(f"[experiment] {key} must be >= 1")
        if "nbar_grid" in exp and self.scenario is not None:
            bad = [n for n in exp["nbar_grid"] if not 0 <= n <= self.scenario.N_m]
            if bad:
                problems.append(f"[experiment] nbar_grid entries outside [0, N_m]: {bad}")
        if problems:
            raise ConfigError(problems)
        self.experiment = exp
        self.io = io
        self.seed = self.training.seed

    def to_dict(self):
        return {"scenario": self.scenario.to_dict(), "model": self.model.to_dict(),
                "training": dict(vars(self.training)),
                "experiment": {k: list(v) if isinstance(v, tuple) else v for k, v in self.experiment.items()}}

    def digest(self):
        d = self.to_dict()
        d["scenario"].pop("seed")
        d["training"].pop("seed")
        d["experiment"].pop("seeds", None)
        text = json.dumps(d, sort_keys=True)
        return hashlib.sha256(text.encode()).hexdigest()[:12]

    @property
    def n_train(self):
        return int(self.experiment.get("n_train", 2000))

    @property
    def n_test(self):
        return int(self.experiment.get("n_test", 200))


# artifacts


def run_dir(cfg: RunConfig, out):
    d = Path(out) / f"{cfg.digest()}-s{cfg.seed}"
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True) + "\n")
    return d


def _datasets(cfg: RunConfig, rd: Path):
    """Load the run's datasets, generating them on first use."""
    stem = Path(cfg.io["dataset"]) if "dataset" in cfg.io else rd / "data"
    tr_stem, te_stem = stem / "train", stem / "test"
    if tr_stem.with_name("train.json").exists() and te_stem.with_name("test.json").exists():
        tr, te = load_dataset(tr_stem), load_dataset(te_stem)
        if tr.scenario.replace(seed=cfg.scenario.seed) != cfg.scenario.replace(seed=cfg.scenario.seed):
            raise InputError(f"dataset at {stem} was generated for a different scenario")
        return tr, te
    if "dataset" in cfg.io:
        raise InputError(f"dataset not found: {stem}")
    return _generate(cfg, stem)


def _generate(cfg: RunConfig, stem: Path):
    seed = cfg.scenario.seed
    tr = gen_dataset(cfg.scenario, cfg.n_train, np.random.default_rng([seed, 10]), "train")
    te = gen_dataset(cfg.scenario, cfg.n_test, np.random.default_rng([seed, 11]), "test")
    save_dataset(tr, stem / "train")
    save_dataset(te, stem / "test")
    return tr, te


def _write_rows(path, rows, columns):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    return path


def _say(msg):
    print(msg, flush=True)


# commands


def cmd_gen_data(cfg, rd):
    stem = Path(cfg.io.get("dataset", rd / "data"))
    _generate(cfg, stem)
    _say(f"wrote {stem}/train.{{json,bin}} and {stem}/test.{{json,bin}}")


def cmd_train(cfg, rd):
    tr, te = _datasets(cfg, rd)
    res = hgnn_train(tr, te, cfg.model, cfg.training,
                     log=lambda e: _say(f"epoch {e['epoch']:3d} lr {e['lr']:.2e} "
                                        f"train {e['train_se']:.4f} test {e['test_se']:.4f}"))
    stem = Path(cfg.io.get("checkpoint", rd / "checkpoint"))
    meta = checkpoint_meta(res.model, cfg.scenario, {"curve": res.curve, "initial_test_se": res.initial_test_se})
    save_checkpoint(stem, res.model, res.optimizer, meta)
    rows = [{"epoch": -1, "lr": "", "train_se": "", "test_se": res.initial_test_se, "seconds": ""}] + res.curve
    curve = _write_rows(rd / "curve.csv", rows, ("epoch", "lr", "train_se", "test_se", "seconds"))
    _say(f"checkpoint {stem}.json; curve {curve}; final test sum-SE {res.final_test_se:.6f}")


def cmd_eval(cfg, rd):
    from .eval.experiments import Runner, write_csv
    from .eval.metrics import flops_estimate
    kind = cfg.experiment.get("kind")
    stem = Path(cfg.io.get("checkpoint", rd / "checkpoint"))
    if kind:
        return _run_experiment(cfg, rd, kind)
    if not stem.with_name(stem.name + ".json").exists():
        raise InputError(f"missing checkpoint {stem}.json (run `train` first or set io.checkpoint)")
    model, meta = load_checkpoint(stem)
    _, te = _datasets(cfg, rd)
    t0 = time.perf_counter()
    se = evaluate(model, prepare(te), cfg.training.eval_batch)
    wall = (time.perf_counter() - t0) / len(te)
    runner = Runner()
    row = runner.row("eval", "HGNN", model.config.structure, te.scenario, cfg.seed, se, wall,
                     flops=flops_estimate(model.config, te.scenario))
    path = write_csv([row], rd / "eval.csv")
    _say(f"test sum-SE {se:.10f} -> {path}")


def _protocol(cfg):
    from .eval.experiments import Protocol
    seeds = cfg.experiment.get("seeds", (cfg.seed,))
    return Protocol(n_train=cfg.n_train, n_test=cfg.n_test, seeds=tuple(seeds), train=cfg.training,
                    altmin_samples=int(cfg.experiment.get("altmin_samples", 50)))


def _run_experiment(cfg, rd, kind):
    from .eval.experiments import Runner, run_experiment, write_csv
    runner = Runner(_protocol(cfg), log=_say)
    kw = {}
    e = cfg.experiment
    if "structures" in e:
        kw["structures"] = e["structures"]
    if kind == "snr_sweep" and "snrs" in e:
        kw["snrs"] = e["snrs"]
    if kind == "nbar_sweep" and "nbar_grid" in e:
        kw["grid"] = e["nbar_grid"]
    if kind == "phase_robustness" and "phase_sigmas" in e:
        kw["sigmas"] = e["phase_sigmas"]
    if kind == "scalability" and "targets" in e:
        kw["targets"] = tuple(tuple(int(x) for x in t.split("x")) for t in e["targets"].split(","))
    rows = run_experiment(kind, cfg.scenario, runner, **kw)
    path = write_csv(rows, rd / f"{kind}.csv")
    _say(f"{len(rows)} rows -> {path}")


def cmd_baseline(cfg, rd):
    from .eval.experiments import Runner, write_csv
    methods = cfg.experiment.get("methods", DEFAULT_METHODS)
    runner = Runner(_protocol(cfg), log=_say)
    rows = []
    for seed in runner.protocol.seeds:
        classical = tuple(m for m in methods if m in DEFAULT_METHODS)
        if classical:
            rows += runner.classical_rows("baseline", cfg.scenario, seed, classical)
        if "MLP" in methods:
            sc = cfg.scenario
            res = runner.mlp(sc, sc.structure, seed)
            rows.append(runner.row("baseline", "MLP", sc.structure, sc, seed, res.final_test_se))
    unknown = [m for m in methods if m not in DEFAULT_METHODS + ("MLP",)]
    if unknown:
        raise InputError(f"unknown baseline method(s) {unknown}; choose from {DEFAULT_METHODS + ('MLP',)}")
    path = write_csv(rows, rd / "baseline.csv")
    _say(f"{len(rows)} rows -> {path}")


def cmd_ablate(cfg, rd):
    from .eval.experiments import Runner, ablation, write_csv
    runner = Runner(_protocol(cfg), log=_say)
    structures = cfg.experiment.get("structures", (cfg.scenario.structure,))
    rows = ablation(runner, cfg.scenario, structures=structures, config=cfg.model)
    path = write_csv(rows, rd / "ablation.csv")
    _say(f"{len(rows)} rows -> {path}")


def cmd_report(cfg, out, inputs):
    from .report import build_report
    paths = [Path(p) for p in inputs] if inputs else None
    if paths is None and "results" in cfg.io:
        paths = sorted(Path().glob(cfg.io["results"]))
    if paths is None:
        paths = sorted(p for p in Path(out).rglob("*.csv")
                       if "report" not in p.parts and p.name != "curve.csv")
    if not paths:
        raise InputError("no result CSVs to report on")
    missing = [str(p) for p in paths if not p.exists()]
    if missing:
        raise InputError(f"missing result files: {', '.join(missing)}")
    written = build_report(paths, Path(out) / "report")
    for p in written:
        _say(f"wrote {p}")


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "baseline": cmd_baseline,
            "ablate": cmd_ablate}


def build_parser():
    ap = argparse.ArgumentParser(prog="hetbeam", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=[*COMMANDS, "report"])
    ap.add_argument("inputs", nargs="*", help="result CSVs (report only)")
    ap.add_argument("--config", help="INI config file")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                    help="override one config entry (repeatable)")
    ap.add_argument("--seed", type=int, help="seed for data, initialisation and shuffling")
    ap.add_argument("--out", default="runs", help="root directory for artifacts (default: runs)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        raw = read_config(args.config, args.overrides)
        cfg = RunConfig(raw, args.seed)
        if args.command == "report":
            cmd_report(cfg, args.out, args.inputs)
        else:
            if args.inputs:
                raise InputError(f"{args.command} takes no positional arguments")
            COMMANDS[args.command](cfg, run_dir(cfg, args.out))
    except ConfigError as exc:
        print("error: invalid configuration:", file=sys.stderr)
        for p in exc.problems:
            print(f"  - {p}", file=sys.stderr)
        return 2
    except (InputError, FileNotFoundError, ReportConflict) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
