"""Command-line entry point: fit / train / sample / evaluate / report.

One JSON config file drives a run; flags override config keys via dotted
paths. Every command is reproducible from (config, seeds): reruns produce
identical artifacts modulo wall-clock fields.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation, training, transform
from .conditioning import MaskConfig
from .networks import DiscriminatorSpec, GeneratorSpec
from .schema import RawTable, TableSchema, read_csv_table, validate_table, write_csv_table
from .training import TrainConfig

EXIT_OK = 0
EXIT_USER_ERROR = 2
EXIT_INTERNAL_ERROR = 3

OUTPUT_ROOT_ENV = "TABSYNTH_OUTPUT_ROOT"

DEFAULT_CONFIG = {
    "run_id": "run",
    "output_dir": "runs",
    "data": {"csv": None, "schema": None, "target": None, "task": "classification"},
    "preprocess": {"modes": 10, "fairness_scale": 0.5, "seed": 0},
    "conditioning": {"beta": 2, "seed": 0},
    "networks": {
        "base_channels": 256,
        "grid": [8, 32],
        "disc_channels": [256, 512, 1024],
        "disc_grid": [16, 64],
        "gumbel_temperature": 0.2,
    },
    "training": {
        "learning_rate": 1.8e-3,
        "adam_betas": [0.0, 0.9],
        "batch_size": 500,
        "d1_steps": 2,
        "d2_steps": 3,
        "decay_rate": 0.99,
        "max_epochs": 400,
        "ortho_reg_weight": 1e-4,
        "chordal_reg_weight": 0.0,
        "seed": 0,
        "dtype": "float64",
        "checkpoint_every": 50,
    },
    "evaluation": {"split_ratio": 0.7, "seed": 0, "synthetic_csv": None},
}


class UserError(Exception):
    pass


def _deep_update(base: dict, overlay: dict) -> dict:
    out = dict(base)
    for k, v in overlay.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_update(out[k], v)
        else:
            out[k] = v
    return out


def _apply_override(config: dict, dotted: str) -> None:
    if "=" not in dotted:
        raise UserError(f"override {dotted!r} must look like section.key=value")
    path, _, raw = dotted.partition("=")
    keys = path.split(".")
    node = config
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node[keys[-1]] = value


def load_config(path, overrides=()) -> dict:
    try:
        with open(path) as fh:
            user = json.load(fh)
    except FileNotFoundError:
        raise UserError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise UserError(f"config file {path} is not valid JSON: {exc}")
    config = _deep_update(DEFAULT_CONFIG, user)
    for ov in overrides:
        _apply_override(config, ov)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root:
        config["output_dir"] = root
    return config


def run_dir(config: dict) -> Path:
    d = Path(config["output_dir"]) / config["run_id"]
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_table(config: dict) -> RawTable:
    data = config["data"]
    if not data.get("schema"):
        raise UserError("data.schema is not set")
    if not data.get("csv"):
        raise UserError("data.csv is not set")
    try:
        schema = TableSchema.from_json_file(data["schema"])
    except FileNotFoundError:
        raise UserError(f"schema file not found: {data['schema']}")
    try:
        return read_csv_table(data["csv"], schema)
    except FileNotFoundError:
        raise UserError(f"data file not found: {data['csv']}")


def _load_transformer(config: dict) -> transform.FittedTransformer:
    path = run_dir(config) / "transformer.json"
    if not path.exists():
        raise UserError(f"no fitted transformer at {path}; run `fit` first")
    return transform.FittedTransformer.from_json(path.read_text())


def _build_specs(config: dict, transformer: transform.FittedTransformer):
    net = config["networks"]
    layout = transformer.layout
    gen_spec = GeneratorSpec(
        layout=layout,
        cond_width=layout.n_t,
        base_channels=net["base_channels"],
        grid=tuple(net["grid"]),
        gumbel_temperature=net["gumbel_temperature"],
    )
    disc_spec = DiscriminatorSpec(
        layout=layout,
        cond_width=layout.n_t,
        channels=tuple(net["disc_channels"]),
        grid=tuple(net["disc_grid"]),
    )
    return gen_spec, disc_spec


def _train_config(config: dict) -> TrainConfig:
    t = config["training"]
    return TrainConfig(
        learning_rate=t["learning_rate"],
        adam_betas=tuple(t["adam_betas"]),
        batch_size=t["batch_size"],
        d1_steps=t["d1_steps"],
        d2_steps=t["d2_steps"],
        decay_rate=t["decay_rate"],
        max_epochs=t["max_epochs"],
        ortho_reg_weight=t["ortho_reg_weight"],
        chordal_reg_weight=t["chordal_reg_weight"],
        seed=t["seed"],
        dtype=t["dtype"],
    )


def _init_state(config: dict, transformer: transform.FittedTransformer):
    gen_spec, disc_spec = _build_specs(config, transformer)
    mask = MaskConfig(dof=config["conditioning"]["beta"], seed=config["conditioning"]["seed"])
    tcfg = _train_config(config)
    return training.init_train_state(gen_spec, disc_spec, mask, tcfg), tcfg


def cmd_fit(config: dict) -> int:
    table = _load_table(config)
    schema = table.schema.with_null_tokens()
    violations = validate_table(RawTable(schema=schema, rows=table.rows))
    if violations:
        for v in violations:
            print(str(v), file=sys.stderr)
        return EXIT_USER_ERROR
    pre = config["preprocess"]
    transformer = transform.fit_transformer(
        table, modes=pre["modes"], fairness_scale=pre["fairness_scale"], seed=pre["seed"]
    )
    out = run_dir(config) / "transformer.json"
    out.write_text(transformer.to_json())
    print(f"transformer written to {out}")
    for name, vgm in transformer.vgms.items():
        print(f"  {name}: {vgm.modes_active}/{vgm.modes_requested} modes active")
    return EXIT_OK


def cmd_train(config: dict) -> int:
    table = _load_table(config)
    transformer = _load_transformer(config)
    state, tcfg = _init_state(config, transformer)
    encode_rng = np.random.default_rng(tcfg.seed)
    encoded = transform.encode_table(table, transformer, encode_rng)

    out = run_dir(config)
    ckpt_path = out / "checkpoint.pt"
    resume = ckpt_path.exists()
    log_mode = "a" if resume else "w"
    if resume:
        training.load_checkpoint(ckpt_path, state)
        print(f"resuming from epoch {state.epoch}")

    with open(out / "train_log.jsonl", log_mode) as log_fh:
        def log_fn(rec):
            log_fh.write(json.dumps(rec, sort_keys=True) + "\n")

        def checkpoint_fn(st):
            training.save_checkpoint(ckpt_path, st, tcfg)
            (out / "manifest.json").write_text(
                json.dumps(training.checkpoint_manifest(st, tcfg, transformer.layout), indent=2)
            )

        state, reason = training.train(
            state,
            encoded,
            transformer.layout,
            tcfg,
            log_fn=log_fn,
            checkpoint_fn=checkpoint_fn,
            checkpoint_every=config["training"]["checkpoint_every"],
        )
    training.save_checkpoint(ckpt_path, state, tcfg)
    (out / "manifest.json").write_text(
        json.dumps(training.checkpoint_manifest(state, tcfg, transformer.layout), indent=2)
    )
    print(f"training finished at epoch {state.epoch}: {reason}")
    return EXIT_OK


def cmd_sample(config: dict, n_rows: int) -> int:
    table = _load_table(config)
    transformer = _load_transformer(config)
    out = run_dir(config)
    ckpt_path = out / "checkpoint.pt"
    if not ckpt_path.exists():
        raise UserError(f"no checkpoint at {ckpt_path}; run `train` first")
    state, _tcfg = _init_state(config, transformer)
    training.load_checkpoint(ckpt_path, state)

    cond_seed = config["conditioning"]["seed"]
    encoded = transform.encode_table(table, transformer, np.random.default_rng(cond_seed))
    synth = training.synthesize(
        state, n_rows, transformer, encoded, np.random.default_rng(cond_seed)
    )
    path = out / "synthetic.csv"
    write_csv_table(path, synth)
    print(f"{n_rows} synthetic rows written to {path}")
    return EXIT_OK


def cmd_evaluate(config: dict) -> int:
    real = _load_table(config)
    synth_path = config["evaluation"].get("synthetic_csv") or str(run_dir(config) / "synthetic.csv")
    if not Path(synth_path).exists():
        raise UserError(f"synthetic CSV not found: {synth_path}")
    synth = read_csv_table(synth_path, real.schema)
    ev = config["evaluation"]
    fitness = evaluation.likelihood_fitness(
        real,
        synth,
        modes=config["preprocess"]["modes"],
        seed=ev["seed"],
        val_ratio=ev["split_ratio"],
    )
    entry = {"fitness": fitness}
    target = config["data"].get("target")
    if target:
        entry["efficacy"] = evaluation.ml_efficacy(
            real, synth, target=target, task=config["data"]["task"], seed=ev["seed"]
        )
    report = evaluation.build_report({config["run_id"]: entry})
    _write_report(config, report)
    return EXIT_OK


def _write_report(config: dict, report: dict) -> None:
    out = run_dir(config)
    (out / "report.json").write_text(evaluation.emit_report_json(report))
    (out / "report.txt").write_text(evaluation.render_report_text(report))
    (out / "report.csv").write_text(evaluation.render_report_csv(report))
    print(evaluation.render_report_text(report), end="")


def cmd_report(config: dict) -> int:
    path = run_dir(config) / "report.json"
    if not path.exists():
        raise UserError(f"no report at {path}; run `evaluate` first")
    report = evaluation.parse_report_json(path.read_text())
    _write_report(config, report)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabsynth", description="Schema-aware tabular data synthesis toolkit"
    )
    parser.add_argument("--config", "-c", required=True, help="JSON run configuration")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key by dotted path, e.g. training.max_epochs=5",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", help="fit the column transformer")
    sub.add_parser("train", help="run adversarial training")
    p_sample = sub.add_parser("sample", help="synthesize rows from the trained model")
    p_sample.add_argument("-n", "--rows", type=int, default=1000)
    sub.add_parser("evaluate", help="score synthetic data against the real table")
    sub.add_parser("report", help="re-render report files from report.json")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config, args.overrides)
        if args.command == "fit":
            return cmd_fit(config)
        if args.command == "train":
            return cmd_train(config)
        if args.command == "sample":
            return cmd_sample(config, args.rows)
        if args.command == "evaluate":
            return cmd_evaluate(config)
        if args.command == "report":
            return cmd_report(config)
        raise UserError(f"unknown command {args.command}")
    except UserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER_ERROR
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
