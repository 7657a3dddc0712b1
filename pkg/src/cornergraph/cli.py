"""Command line front end.

Subcommands cover the full pipeline: ``gen-data`` writes a scenario corpus,
``train`` fits a checkpoint, ``eval`` scores it on held-out scenarios,
``perturb`` decodes predicted conflict graphs, ``simulate`` realizes and
rolls out episodes, and ``report`` merges evaluation and simulation output
into one summary.

Configuration comes from an optional ``key=value`` file (one pair per line,
``#`` comments allowed) with flags taking precedence.  Every JSON output
embeds ``provenance`` (sha256 of the resolved configuration plus the
governing seed); CSV outputs get a sibling ``<name>.meta.json``.  Outputs
contain no timestamps and keys are sorted, so reruns are byte-identical.

Errors are reported as one JSON object on stderr.  Exit codes: 2 for a
malformed configuration, 3 for a schema-version mismatch, 4 for a missing
input file.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import metrics, scenarios, sim
from .extended import ConsistentArgmax, Threshold, attach_predictions, decode_prediction, extend
from .frames import build_scene_graph
from .graphs import SchemaError, graph_from_json, graph_to_json
from .model import (
    ModelDims,
    SchemaVersionMismatch,
    checkpoint_from_json,
    predict_probs,
    save_checkpoint,
)
from .training import TrainConfig, scenario_split, pooled_predictions, train

CONFIG_SCHEMA_VERSION = "1"


class CliError(Exception):
    kind = "error"
    exit_code = 1


class ConfigParseError(CliError):
    kind = "config_parse"
    exit_code = 2


class SchemaVersionError(CliError):
    kind = "schema_version_mismatch"
    exit_code = 3


class MissingInputError(CliError):
    kind = "missing_input"
    exit_code = 4


def parse_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise MissingInputError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigParseError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not key:
                raise ConfigParseError(f"{path}:{lineno}: empty key")
            if key in out:
                raise ConfigParseError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value
    version = out.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise SchemaVersionError(
            f"config schema_version {version!r}, expected {CONFIG_SCHEMA_VERSION}"
        )
    return out


def _as_int(cfg: dict, key: str) -> int:
    try:
        return int(cfg[key])
    except ValueError:
        raise ConfigParseError(f"config key {key!r} must be an integer, got {cfg[key]!r}")


def _as_float(cfg: dict, key: str) -> float:
    try:
        return float(cfg[key])
    except ValueError:
        raise ConfigParseError(f"config key {key!r} must be a number, got {cfg[key]!r}")


def resolve_config(args, defaults: dict, overrides: dict) -> dict:
    """defaults <- config file <- explicit flags, all as strings."""
    cfg = dict(defaults)
    cfg["schema_version"] = CONFIG_SCHEMA_VERSION
    if args.config:
        cfg.update(parse_config_file(args.config))
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = str(value)
    return cfg


def config_sha256(cfg: dict) -> str:
    canon = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(canon.encode()).hexdigest()


def provenance(cfg: dict, seed) -> dict:
    return {"config_sha256": config_sha256(cfg), "seed": seed}


def _require(path, what: str) -> str:
    if path is None:
        raise MissingInputError(f"no {what} given")
    if not os.path.exists(path):
        raise MissingInputError(f"{what} not found: {path}")
    return path


def _require_out(args) -> str:
    if args.out is None:
        raise MissingInputError("no --out path given")
    return args.out


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def _write_meta(csv_path, prov: dict) -> None:
    _write_json(f"{csv_path}.meta.json", {"provenance": prov})


def _print_config(cfg: dict) -> None:
    print(json.dumps(cfg, sort_keys=True))


# --- subcommands -----------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = resolve_config(
        args,
        {"count": "600", "seed": "42", "workers": "1"},
        {"count": args.count, "seed": args.seed, "workers": args.workers},
    )
    if args.print_config:
        _print_config(cfg)
        return 0
    out = _require_out(args)
    count = _as_int(cfg, "count")
    seed = _as_int(cfg, "seed")
    workers = _as_int(cfg, "workers")
    # parallelism never changes the corpus, so keep it out of the provenance
    hashed = {k: v for k, v in cfg.items() if k != "workers"}

    templates = list(scenarios.ScenarioTemplate)
    base, rem = divmod(count, len(templates))
    tasks = [
        (t, seed, base + (1 if i < rem else 0))
        for i, t in enumerate(templates)
    ]
    tasks = [t for t in tasks if t[2] > 0]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(scenarios.generate, *t) for t in tasks]
            chunks = [f.result() for f in futures]
    else:
        chunks = [scenarios.generate(*t) for t in tasks]
    corpus = [s for chunk in chunks for s in chunk]
    scenarios.write_corpus(out, corpus, meta={"provenance": provenance(hashed, seed)})
    print(f"wrote {len(corpus)} scenarios to {out}")
    return 0


_TRAIN_DEFAULTS = {
    "learning_rate": "0.001",
    "epochs": "200",
    "optimizer": "adam",
    "seed": "0",
    "split": "0.7,0.2,0.1",
    "k_folds": "3",
    "positive_weight": "1.0",
    "early_stop_patience": "20",
    "encoder_hidden": "64",
    "gat1_out": "64",
    "mid_hidden": "128",
    "mid_out": "256",
    "triple_hidden": "4",
}


def _train_config(cfg: dict) -> TrainConfig:
    split = tuple(float(x) for x in cfg["split"].split(","))
    if len(split) != 3:
        raise ConfigParseError("split must have three comma-separated fractions")
    optimizer = cfg["optimizer"]
    if optimizer not in ("adam", "sgd"):
        raise ConfigParseError(f"unknown optimizer {optimizer!r}")
    return TrainConfig(
        learning_rate=_as_float(cfg, "learning_rate"),
        epochs=_as_int(cfg, "epochs"),
        optimizer=optimizer,
        seed=_as_int(cfg, "seed"),
        split=split,
        k_folds=_as_int(cfg, "k_folds"),
        positive_weight=_as_float(cfg, "positive_weight"),
        early_stop_patience=_as_int(cfg, "early_stop_patience"),
    )


def _model_dims(cfg: dict) -> ModelDims:
    return ModelDims(
        encoder_hidden=_as_int(cfg, "encoder_hidden"),
        gat1_out=_as_int(cfg, "gat1_out"),
        mid_hidden=_as_int(cfg, "mid_hidden"),
        mid_out=_as_int(cfg, "mid_out"),
        triple_hidden=_as_int(cfg, "triple_hidden"),
    )


def _train_config_json(tc: TrainConfig) -> dict:
    return {
        "learning_rate": tc.learning_rate,
        "epochs": tc.epochs,
        "optimizer": tc.optimizer,
        "seed": tc.seed,
        "split": list(tc.split),
        "k_folds": tc.k_folds,
        "positive_weight": tc.positive_weight,
        "early_stop_patience": tc.early_stop_patience,
    }


def cmd_train(args) -> int:
    cfg = resolve_config(args, _TRAIN_DEFAULTS, {"seed": args.seed})
    if args.print_config:
        _print_config(cfg)
        return 0
    out = _require_out(args)
    data = _require(args.data, "scenario corpus")
    tc = _train_config(cfg)
    dims = _model_dims(cfg)

    corpus, _ = scenarios.read_corpus(data)
    instances = scenarios.corpus_instances(corpus)
    params, log = train(instances, tc, dims)
    prov = provenance(cfg, tc.seed)
    save_checkpoint(
        out,
        params,
        extra={
            "train_config": _train_config_json(tc),
            "best_epoch": log.best_epoch,
            "stopped_early": log.stopped_early,
            "provenance": prov,
        },
    )
    if args.log:
        log.to_csv(args.log)
        _write_meta(args.log, prov)
    print(
        f"trained on {len(instances)} instances from {len(corpus)} scenarios; "
        f"best epoch {log.best_epoch}"
    )
    return 0


def _load_checkpoint_obj(path):
    with open(path) as fh:
        obj = json.load(fh)
    return obj, checkpoint_from_json(obj)


def _subset_instances(instances, obj, subset: str):
    if subset == "all":
        return instances
    tc = obj.get("train_config")
    if tc is None:
        raise MissingInputError(
            "checkpoint records no train_config; only --subset all is possible"
        )
    split = scenario_split(
        [ext.scenario_id for ext in instances],
        tuple(tc["split"]),
        int(tc["seed"]),
    )
    if subset not in split:
        raise ConfigParseError(f"unknown subset {subset!r}")
    wanted = set(split[subset])
    return [ext for ext in instances if ext.scenario_id in wanted]


def cmd_eval(args) -> int:
    cfg = resolve_config(args, {"subset": "test"}, {"subset": args.subset})
    if args.print_config:
        _print_config(cfg)
        return 0
    out = _require_out(args)
    data = _require(args.data, "scenario corpus")
    model_path = _require(args.model, "model checkpoint")
    subset = cfg["subset"]

    corpus, _ = scenarios.read_corpus(data)
    instances = scenarios.corpus_instances(corpus)
    obj, params = _load_checkpoint_obj(model_path)
    chosen = _subset_instances(instances, obj, subset)
    if not chosen:
        raise MissingInputError(f"subset {subset!r} selects no instances")
    probs, labels = pooled_predictions(params, chosen)
    report = metrics.sweep(probs, labels)
    prov = provenance(cfg, obj.get("train_config", {}).get("seed"))
    payload = report.to_json()
    payload.update(
        {
            "schema_version": 1,
            "subset": subset,
            "n_instances": len(chosen),
            "provenance": prov,
        }
    )
    _write_json(out, payload)
    if args.roc:
        metrics.write_roc_csv(report, args.roc)
        _write_meta(args.roc, prov)
    if args.pr:
        metrics.write_pr_csv(report, args.pr)
        _write_meta(args.pr, prov)
    print(
        f"{subset}: auc {report.auc:.4f}, best f1 {report.best_f1:.4f} "
        f"over {len(chosen)} instances"
    )
    return 0


def _decode_mode(cfg: dict):
    mode = cfg["mode"]
    if mode == "argmax":
        return ConsistentArgmax()
    if mode == "threshold":
        return Threshold(_as_float(cfg, "tau"))
    raise ConfigParseError(f"unknown decode mode {mode!r}")


def cmd_perturb(args) -> int:
    cfg = resolve_config(
        args,
        {"mode": "argmax", "tau": "0.5", "frame": "0"},
        {"mode": args.mode, "tau": args.tau, "frame": args.frame},
    )
    if args.print_config:
        _print_config(cfg)
        return 0
    out = _require_out(args)
    data = _require(args.data, "scenario corpus")
    model_path = _require(args.model, "model checkpoint")
    frame = _as_int(cfg, "frame")
    mode = _decode_mode(cfg)

    corpus, _ = scenarios.read_corpus(data)
    _, params = _load_checkpoint_obj(model_path)
    with open(out, "w") as fh:
        for scenario in corpus:
            graph = build_scene_graph(scenario.frames[frame])
            ext = extend(graph, target_frame=scenario.horizon, scenario_id=scenario.id)
            ext = attach_predictions(ext, predict_probs(params, ext))
            decoded = decode_prediction(ext, mode)
            record = {"scenario_id": scenario.id, "graph": graph_to_json(decoded)}
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")
    _write_meta(out, provenance(cfg, None))
    print(f"decoded {len(corpus)} predicted conflict graphs to {out}")
    return 0


def _read_predicted(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            out[record["scenario_id"]] = graph_from_json(record["graph"])
    return out


def cmd_simulate(args) -> int:
    cfg = resolve_config(
        args,
        {
            "profiles": ",".join(sim.PROFILES),
            "frame": "0",
            "dt": "0.05",
            "horizon": "30.0",
        },
        {"profiles": args.profiles, "frame": args.frame},
    )
    if args.print_config:
        _print_config(cfg)
        return 0
    out = _require_out(args)
    data = _require(args.data, "scenario corpus")
    frame = _as_int(cfg, "frame")
    dt = _as_float(cfg, "dt")
    horizon = _as_float(cfg, "horizon")
    names = [n.strip() for n in cfg["profiles"].split(",") if n.strip()]
    unknown = [n for n in names if n not in sim.PROFILES]
    if unknown:
        raise ConfigParseError(f"unknown profile(s) {unknown}")
    profiles = [sim.PROFILES[n] for n in names]

    predicted = {}
    if args.predicted:
        predicted = _read_predicted(_require(args.predicted, "predicted graphs"))

    corpus, _ = scenarios.read_corpus(data)
    executables = []
    for scenario in corpus:
        regular = build_scene_graph(scenario.frames[frame])
        target = predicted.get(scenario.id, regular)
        executables.append(
            sim.realize(regular, target, scenario.layout, scenario_id=scenario.id)
        )
    results = sim.simulate_batch(executables, profiles, dt=dt, horizon=horizon)
    report = sim.scr_report(results)
    matched = sum(e.fidelity[0] for e in executables)
    prescribed = sum(e.fidelity[1] for e in executables)
    payload = {
        "schema_version": 1,
        "episodes_per_profile": len(executables),
        "perturbed": bool(predicted),
        "infeasible": sum(1 for e in executables if e.infeasible),
        "fidelity": {"matched": matched, "prescribed": prescribed},
        "profiles": report,
        "provenance": provenance(cfg, None),
    }
    _write_json(out, payload)
    if args.table:
        print(sim.format_scr_table(report))
    else:
        print(
            f"simulated {len(executables)} episodes x {len(profiles)} profiles"
        )
    return 0


def cmd_report(args) -> int:
    cfg = resolve_config(args, {}, {})
    if args.print_config:
        _print_config(cfg)
        return 0
    out = _require_out(args)
    eval_path = _require(args.eval, "evaluation report")
    scr_path = _require(args.scr, "simulation report")
    with open(eval_path) as fh:
        eval_obj = json.load(fh)
    with open(scr_path) as fh:
        scr_obj = json.load(fh)
    payload = {
        "schema_version": 1,
        "evaluation": eval_obj,
        "simulation": scr_obj,
        "provenance": provenance(cfg, None),
    }
    _write_json(out, payload)
    print(f"combined report written to {out}")
    return 0


# --- wiring ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cornergraph",
        description="corner-case scene graph prediction and rollout pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--seed", type=int, help="override the configured seed")
        p.add_argument("--workers", type=int, help="worker processes where supported")
        p.add_argument("--out", help="output path")
        p.add_argument(
            "--print-config",
            action="store_true",
            help="print the resolved configuration and exit",
        )

    p = sub.add_parser("gen-data", help="generate a scenario corpus")
    common(p)
    p.add_argument("--count", type=int, help="number of scenarios")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="fit a model on a corpus")
    common(p)
    p.add_argument("--data", help="scenario corpus JSON")
    p.add_argument("--log", help="write the per-epoch loss log CSV here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on held-out scenarios")
    common(p)
    p.add_argument("--data", help="scenario corpus JSON")
    p.add_argument("--model", help="model checkpoint JSON")
    p.add_argument("--subset", choices=["train", "val", "test", "all"])
    p.add_argument("--roc", help="write the ROC curve CSV here")
    p.add_argument("--pr", help="write the precision-recall curve CSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("perturb", help="decode predicted conflict graphs")
    common(p)
    p.add_argument("--data", help="scenario corpus JSON")
    p.add_argument("--model", help="model checkpoint JSON")
    p.add_argument("--mode", choices=["argmax", "threshold"])
    p.add_argument("--tau", type=float, help="keep probability for threshold mode")
    p.add_argument("--frame", type=int, help="source frame index")
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("simulate", help="realize and roll out episodes")
    common(p)
    p.add_argument("--data", help="scenario corpus JSON")
    p.add_argument("--predicted", help="decoded graphs JSONL from perturb")
    p.add_argument("--profiles", help="comma-separated driver profiles")
    p.add_argument("--frame", type=int, help="source frame index")
    p.add_argument("--table", action="store_true", help="print the outcome table")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="merge evaluation and simulation reports")
    common(p)
    p.add_argument("--eval", help="evaluation report JSON")
    p.add_argument("--scr", help="simulation report JSON")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as err:
        print(
            json.dumps({"error": err.kind, "message": str(err)}, sort_keys=True),
            file=sys.stderr,
        )
        return err.exit_code
    except (SchemaError, SchemaVersionMismatch) as err:
        print(
            json.dumps(
                {"error": SchemaVersionError.kind, "message": str(err)},
                sort_keys=True,
            ),
            file=sys.stderr,
        )
        return SchemaVersionError.exit_code


if __name__ == "__main__":
    sys.exit(main())
