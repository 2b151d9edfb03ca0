"""Operator entry point: one executable for the whole workflow.

Subcommands cover synthesizing a labeled dataset, training the aggregation
model, reducing templates to vectors, scoring against the unweighted-mean
baseline, inspecting per-member weights, and verifying gradients against
finite differences.

Configuration is layered. ``--set section.key=value`` overrides beat the
config file, which beats built-in defaults; the file comes from ``--config``
or, failing that, ``ctxpool.json`` inside ``$CTXPOOL_CONFIG_DIR``. Sections
are ``synth``, ``model``, and ``train``. Unknown sections or keys are
rejected rather than ignored, and the effective configuration is echoed
into every artifact the tool writes, so an artifact always records how it
was produced.

Exit codes mirror the exception taxonomy and are listed in ``--help``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import traceback
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import storage, synthetic
from .errors import CtxpoolError, DimensionError, ParameterError, SchemaError, UsageError
from .evaluation import EvalReport, evaluate_gap, evaluate_model
from .model import ModelConfig, ModelParams
from .numerics import fd_check
from .pooling import aggregate_forward, aggregate_template
from .summary import SUMMARY_BLOCKS
from .synthetic import SynthConfig
from .templates import Distribution, Embedding, Template
from .training import TrainConfig, batch_objective, fit

log = logging.getLogger(__name__)

CONFIG_ENV = "CTXPOOL_CONFIG_DIR"
CONFIG_FILENAME = "ctxpool.json"

_SECTION_CLASSES = {"synth": SynthConfig, "model": ModelConfig, "train": TrainConfig}

_EPILOG = """\
exit codes:
  0  success
  1  failed gradient check or unexpected internal error
  2  usage error: unknown flag, malformed --set, unknown override key
  4  format error: bad magic, version, checksum, manifest or header schema
  5  domain error: invalid parameter, dimension mismatch, unusable batch or dataset
  6  numeric failure: non-finite values, degenerate input, aborted training

environment:
  CTXPOOL_CONFIG_DIR  directory searched for ctxpool.json when --config is absent
"""


@dataclass(frozen=True)
class CliConfig:
    """One parsed invocation: which command, its paths, and the layered
    configuration inputs. Unknown override keys are rejected at parse
    time, never ignored."""

    subcommand: str
    paths: dict
    overrides: dict
    seed: int | None
    verbosity: int


# ---------------------------------------------------------------------------
# configuration layering


def _section_keys(section: str) -> set:
    return {f.name for f in fields(_SECTION_CLASSES[section])}


def _parse_value(raw: str):
    # JSON first, so numbers, booleans, and lists work; bare words stay strings
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_overrides(pairs) -> dict:
    """``--set section.key=value`` pairs into a dotted-key map.

    Malformed or unknown keys are usage errors: a typo must never fall
    back to a default silently.
    """
    out = {}
    for pair in pairs or []:
        key, sep, raw = pair.partition("=")
        if not sep:
            raise UsageError(f"--set expects section.key=value, got {pair!r}")
        section, dot, field_name = key.partition(".")
        if not dot:
            raise UsageError(
                f"--set key must be section.key with section in "
                f"{sorted(_SECTION_CLASSES)}, got {key!r}"
            )
        if section not in _SECTION_CLASSES:
            raise UsageError(
                f"unknown config section {section!r}; valid: {sorted(_SECTION_CLASSES)}"
            )
        if field_name not in _section_keys(section):
            raise UsageError(
                f"unknown key {key!r}; valid {section} keys: "
                f"{sorted(_section_keys(section))}"
            )
        out[key] = _parse_value(raw)
    return out


def _nested(overrides: dict) -> dict:
    out = {name: {} for name in _SECTION_CLASSES}
    for key, value in overrides.items():
        section, _, field_name = key.partition(".")
        out[section][field_name] = value
    return out


def load_config_file(path: str | None) -> dict:
    """The configuration file as nested dicts, ``{}`` when there is none.

    An explicit ``--config`` path must exist; the environment fallback is
    optional and silently absent.
    """
    if path is not None:
        file_path = Path(path)
        if not file_path.is_file():
            raise UsageError(f"config file {file_path} does not exist")
    else:
        env_dir = os.environ.get(CONFIG_ENV)
        if not env_dir:
            return {}
        file_path = Path(env_dir) / CONFIG_FILENAME
        if not file_path.is_file():
            return {}
    try:
        data = json.loads(file_path.read_text("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"config file {file_path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError(f"config file {file_path} must hold a JSON object")
    for section, payload in data.items():
        if section not in _SECTION_CLASSES:
            raise SchemaError(
                f"unknown section {section!r} in {file_path}; "
                f"valid: {sorted(_SECTION_CLASSES)}"
            )
        if not isinstance(payload, dict):
            raise SchemaError(f"section {section!r} in {file_path} must be an object")
        unknown = sorted(set(payload) - _section_keys(section))
        if unknown:
            raise SchemaError(
                f"unknown keys {unknown} in section {section!r} of {file_path}"
            )
    return data


def merge_config(file_data: dict, overrides: dict, seed: int | None) -> dict:
    """Layer the three sources: overrides beat the file, the file beats
    defaults (applied later, at construction). ``--seed`` slots in between,
    so an explicit ``--set`` of a seed still wins."""
    merged = {name: dict(file_data.get(name, {})) for name in _SECTION_CLASSES}
    if seed is not None:
        merged["synth"]["seed"] = seed
        merged["train"]["seed"] = seed
    for section, payload in _nested(overrides).items():
        merged[section].update(payload)
    return merged


def effective_synth(merged: dict) -> SynthConfig:
    data = SynthConfig().to_dict()
    data.update(merged["synth"])
    return SynthConfig.from_dict(data)


def effective_train(merged: dict) -> TrainConfig:
    data = TrainConfig().to_dict()
    data.update(merged["train"])
    return TrainConfig.from_dict(data)


def effective_model(merged: dict, d: int) -> ModelConfig:
    """Model section resolved against the dataset dimension.

    The forward temperature must be single-valued: setting it differently
    in the train and model sections is rejected instead of letting one
    silently win.
    """
    train_temp = merged["train"].get("softmax_temperature")
    model_temp = merged["model"].get("softmax_temperature")
    if train_temp is not None and model_temp is not None and train_temp != model_temp:
        raise ParameterError(
            f"softmax_temperature set to {train_temp} in the train section "
            f"but {model_temp} in the model section; pick one"
        )
    data = {"d": d, "softmax_temperature": effective_train(merged).softmax_temperature}
    data.update(merged["model"])
    if "blocks" in data:
        data["blocks"] = tuple(data["blocks"])
    if data["d"] != d:
        raise DimensionError(
            f"model config asks for d={data['d']} but the data has d={d}"
        )
    return ModelConfig.from_dict(data)


# ---------------------------------------------------------------------------
# provenance echo


def _provenance(cli: CliConfig, **payload) -> dict:
    record = {"tool": "ctxpool", "command": cli.subcommand, "seed": cli.seed}
    record.update(payload)
    return record


def _write_json(path: Path, record: dict) -> None:
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", "utf-8")


def _emit_lines(lines: list[str], out: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, "utf-8")


def _existing(path, what: str, directory: bool = False) -> Path:
    p = Path(path)
    if directory and not p.is_dir():
        raise UsageError(f"{what} directory {p} does not exist")
    if not directory and not p.is_file():
        raise UsageError(f"{what} file {p} does not exist")
    return p


# ---------------------------------------------------------------------------
# gradient checking

# The binned mode statistic enters the computation as a constant, so finite
# differences only agree with the tape where its inputs cannot move: with
# the probe transform disabled the members are fixed inputs and every block
# is safe; with the transform enabled the mode block must sit out.
GRADCHECK_VARIANTS = (
    ("fixed-members", {"use_probe_transform": False}),
    (
        "probe-transform",
        {
            "use_probe_transform": True,
            "blocks": tuple(b for b in SUMMARY_BLOCKS if b != "mode"),
        },
    ),
)

_GAP_MARGIN = 1e-3  # min spacing between a dimension's sorted values
_RELU_MARGIN = 1e-4  # min |preactivation| at the rectifiers
_NORM_MARGIN = 1e-2  # min norm where a direction is taken


def _selection_margins_ok(m: np.ndarray) -> bool:
    if m.shape[0] < 2:
        return True
    return bool(np.all(np.diff(np.sort(m, axis=0), axis=0) >= _GAP_MARGIN))


def _smoothness_margins_ok(batch, params: ModelParams) -> bool:
    """True when no piecewise-linear unit sits close enough to its kink,
    and no normalized vector close enough to zero, for a finite-difference
    step to cross over."""
    tensors = params.tensors
    w1, b1 = tensors["mlp.w1"], tensors["mlp.b1"]
    w2, b2 = tensors["mlp.w2"], tensors["mlp.b2"]
    for t in batch:
        fwd = aggregate_forward(t.matrix(), t.distribution, tensors, params.config)
        h1 = fwd.summary @ w1 + b1
        h2 = np.maximum(h1, 0.0) @ w2 + b2
        if min(np.min(np.abs(h1)), np.min(np.abs(h2))) < _RELU_MARGIN:
            return False
        norms = [
            np.linalg.norm(fwd.context),
            np.linalg.norm(fwd.pooled),
            np.min(np.linalg.norm(fwd.members, axis=1)),
        ]
        if min(norms) < _NORM_MARGIN:
            return False
    return True


def gradcheck_instance(
    d: int,
    n: int,
    rng: np.random.Generator,
    params: ModelParams,
    attempts: int = 200,
) -> list[Template]:
    """A small two-subject batch safe to difference numerically.

    Members are redrawn until every per-dimension order statistic is
    spaced clear of its decision boundary and the forward pass keeps away
    from rectifier kinks and zero norms, so no index selection can flip
    within a finite-difference step.
    """
    for _ in range(attempts):
        batch = []
        for subject in ("a", "b"):
            for dist in (Distribution.PROBE, Distribution.GALLERY):
                tid = f"{subject}/{dist.value}"
                m = rng.standard_normal((n, d))
                if not _selection_margins_ok(m):
                    break
                batch.append(
                    Template(
                        template_id=tid,
                        subject_id=subject,
                        distribution=dist,
                        embeddings=[
                            Embedding(vector=row, media_id=f"{tid}/m{k}")
                            for k, row in enumerate(m)
                        ],
                    )
                )
        if len(batch) == 4 and _smoothness_margins_ok(batch, params):
            return batch
    raise ParameterError(
        f"no boundary-safe instance found for d={d}, n={n} in {attempts} draws"
    )


def run_gradcheck(
    sizes,
    seed: int,
    train_config: TrainConfig,
    model_overrides: dict | None = None,
    step: float = 1e-5,
    tolerance: float = 1e-4,
):
    """Finite-difference verification of the whole model, one report per
    (d, n, variant). ``model_overrides`` that pin blocks or the probe
    transform replace the two built-in variants."""
    model_overrides = dict(model_overrides or {})
    model_overrides.pop("d", None)
    if "blocks" in model_overrides or "use_probe_transform" in model_overrides:
        variants = [("custom", model_overrides)]
    else:
        variants = [
            (label, {**model_overrides, **settings})
            for label, settings in GRADCHECK_VARIANTS
        ]

    reports = []
    for position, (d, n) in enumerate(sizes):
        for index, (label, settings) in enumerate(variants):
            data = {"d": d, "softmax_temperature": train_config.softmax_temperature}
            data.update(settings)
            if "blocks" in data:
                data["blocks"] = tuple(data["blocks"])
            config = ModelConfig.from_dict(data)
            # the list position keeps repeated (d, n) entries distinct
            params = ModelParams.initialize(
                config, seed=seed + 2 * position + index
            )
            rng = np.random.default_rng([seed, position, d, n, index])
            batch = gradcheck_instance(d, n, rng, params)
            objective = batch_objective(
                batch,
                config,
                loss_tau=train_config.loss_tau,
                anchor_roles=train_config.anchor_roles,
            )
            report = fd_check(objective, params.tensors, step=step, tolerance=tolerance)
            reports.append((f"d={d} n={n} {label}", report))
    return reports


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen_synth(cli: CliConfig, merged: dict, args) -> int:
    config = effective_synth(merged)
    dataset = synthetic.generate(config)
    out = Path(args.out)
    storage.write_dataset(out, dataset)
    _write_json(out / "config.json", _provenance(cli, synth=config.to_dict()))
    counts = {
        split: len(dataset.templates_for(split)) for split in ("train", "val", "test")
    }
    members = sum(len(t) for t in dataset.templates)
    print(
        f"wrote {len(dataset.templates)} templates "
        f"({members} members, {len(dataset.subjects())} subjects, d={dataset.d}) "
        f"to {out}"
    )
    print(
        "templates per split: "
        + "  ".join(f"{split}={n}" for split, n in counts.items())
    )
    return 0


def _cmd_train(cli: CliConfig, merged: dict, args) -> int:
    dataset = storage.read_dataset(_existing(args.dataset, "dataset", directory=True))
    train_config = effective_train(merged)
    model_config = effective_model(merged, dataset.d)
    out = Path(args.out_checkpoint)
    out.mkdir(parents=True, exist_ok=True)

    resume_from = None
    if args.resume:
        resume_from = out / "last.ckpt"
        if not resume_from.is_file():
            raise UsageError(f"--resume needs an existing {resume_from}")

    _write_json(
        out / "config.json",
        _provenance(
            cli,
            dataset=str(args.dataset),
            train=train_config.to_dict(),
            model=model_config.to_dict(),
            resumed=bool(args.resume),
        ),
    )
    result = fit(
        dataset, train_config, out, model_config=model_config, resume_from=resume_from
    )
    if args.log is not None and Path(args.log) != result.metrics_path:
        shutil.copyfile(result.metrics_path, args.log)
    stopped = " (stopped early)" if result.stopped_early else ""
    print(
        f"best val rank-1 {result.best_rank1:.4f} at epoch {result.best_epoch}; "
        f"ran {result.epochs_run} epoch(s){stopped}"
    )
    print(f"checkpoints in {out}, metrics in {result.metrics_path}")
    return 0


def _result_record(r) -> dict:
    return {
        "template_id": r.template_id,
        "subject_id": r.subject_id,
        "distribution": r.distribution.value,
        "temperature": r.temperature,
        "media_ids": list(r.media_ids),
        "weights": [float(w) for w in r.weights],
        "similarities": [float(s) for s in r.similarities],
        "pooled": [float(v) for v in r.pooled],
    }


def _cmd_aggregate(cli: CliConfig, merged: dict, args) -> int:
    params, _, _ = storage.read_checkpoint(_existing(args.checkpoint, "checkpoint"))
    dataset = storage.read_dataset(_existing(args.dataset, "dataset", directory=True))
    if args.all:
        templates = dataset.templates
    else:
        templates = [dataset.by_id(args.template_id)]
    envelope = _provenance(
        cli,
        checkpoint=str(args.checkpoint),
        dataset=str(args.dataset),
        model=params.config.to_dict(),
    )
    lines = [json.dumps(envelope, sort_keys=True)]
    for t in templates:
        lines.append(
            json.dumps(_result_record(aggregate_template(t, params)), sort_keys=True)
        )
    _emit_lines(lines, args.out)
    if args.out is not None:
        print(f"wrote {len(templates)} aggregation record(s) to {args.out}")
    return 0


def _cmd_eval(cli: CliConfig, merged: dict, args) -> int:
    params, _, _ = storage.read_checkpoint(_existing(args.checkpoint, "checkpoint"))
    dataset = storage.read_dataset(_existing(args.dataset, "dataset", directory=True))
    report = EvalReport()
    evaluate_model(params, dataset, args.split, report=report)
    for baseline in args.baselines:
        if baseline == "gap":
            evaluate_gap(dataset, args.split, report=report)
    print(report.render())
    if args.report is not None:
        envelope = _provenance(
            cli,
            checkpoint=str(args.checkpoint),
            dataset=str(args.dataset),
            split=args.split,
            baselines=list(args.baselines),
            model=params.config.to_dict(),
        )
        lines = [json.dumps(envelope, sort_keys=True)]
        lines.extend(report.to_json().strip().split("\n"))
        _emit_lines(lines, args.report)
        print(f"report written to {args.report}")
    return 0


def _cmd_inspect(cli: CliConfig, merged: dict, args) -> int:
    params, _, _ = storage.read_checkpoint(_existing(args.checkpoint, "checkpoint"))
    dataset = storage.read_dataset(_existing(args.dataset, "dataset", directory=True))
    r = aggregate_template(dataset.by_id(args.template_id), params)
    order = np.argsort(r.weights, kind="stable")  # lowest weight first
    print(f"template      {r.template_id}")
    print(f"subject       {r.subject_id}")
    print(f"distribution  {r.distribution.value}")
    print(f"members       {len(r.media_ids)}")
    print(f"temperature   {r.temperature:g}")
    print()
    width = max(len("media_id"), max(len(m) for m in r.media_ids))
    print(f"{'media_id':<{width}}  {'similarity':>12}  {'weight':>12}")
    for i in order:
        print(
            f"{r.media_ids[i]:<{width}}  "
            f"{r.similarities[i]:>12.6f}  {r.weights[i]:>12.6f}"
        )
    return 0


def _parse_sizes(text: str) -> list[tuple[int, int]]:
    sizes = []
    for chunk in text.split(","):
        d_part, sep, n_part = chunk.strip().partition("x")
        try:
            if not sep:
                raise ValueError
            pair = (int(d_part), int(n_part))
        except ValueError:
            raise UsageError(
                f"--sizes expects comma-separated DxN pairs like 8x2, got {chunk!r}"
            ) from None
        if pair[0] < 1 or pair[1] < 1:
            raise UsageError(f"sizes must be positive, got {chunk!r}")
        sizes.append(pair)
    return sizes


def _cmd_gradcheck(cli: CliConfig, merged: dict, args) -> int:
    sizes = _parse_sizes(args.sizes)
    train_config = effective_train(merged)
    reports = run_gradcheck(
        sizes,
        seed=cli.seed if cli.seed is not None else 0,
        train_config=train_config,
        model_overrides=merged["model"],
        step=args.step,
        tolerance=args.tolerance,
    )
    failed = 0
    for label, report in reports:
        verdict = "ok" if report.passed else "FAIL"
        print(f"{label:<28} max rel {report.max_rel_error:.3e}  {verdict}")
        if cli.verbosity > 0 or not report.passed:
            for line in str(report).split("\n"):
                print(f"    {line}")
        failed += 0 if report.passed else 1
    if failed:
        print(f"gradient check FAILED for {failed} of {len(reports)} instance(s)")
        return 1
    print(f"gradient check passed for all {len(reports)} instance(s)")
    return 0


# ---------------------------------------------------------------------------
# parser and entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctxpool",
        description=(
            "Conditional template aggregation: synthesize data, train, "
            "aggregate, evaluate, inspect, and verify gradients."
        ),
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", metavar="FILE", help="JSON config file (sections: synth, model, train)"
    )
    common.add_argument(
        "--set",
        metavar="SECTION.KEY=VALUE",
        action="append",
        dest="overrides",
        help="override one config value; beats the config file; repeatable",
    )
    common.add_argument("--seed", type=int, help="seed for every random choice")
    common.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker count; 1 is the reproducible reference and the only "
        "value this build parallelizes to",
    )
    common.add_argument(
        "-v", "--verbose", action="count", default=0, help="more logging; repeatable"
    )

    sub = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    kwargs = {
        "parents": [common],
        "epilog": _EPILOG,
        "formatter_class": argparse.RawDescriptionHelpFormatter,
    }

    p = sub.add_parser(
        "gen-synth", help="synthesize a labeled dataset with known ground truth", **kwargs
    )
    p.add_argument("--out", required=True, metavar="DIR", help="dataset directory to create")

    p = sub.add_parser("train", help="fit the aggregation model", **kwargs)
    p.add_argument("--dataset", required=True, metavar="DIR", help="dataset directory")
    p.add_argument(
        "--out-checkpoint", required=True, metavar="DIR",
        help="run directory for checkpoints and the metrics log",
    )
    p.add_argument("--log", metavar="FILE", help="also copy the metrics log here")
    p.add_argument(
        "--resume", action="store_true",
        help="continue from last.ckpt in the run directory",
    )

    p = sub.add_parser(
        "aggregate", help="reduce templates to single vectors", **kwargs
    )
    p.add_argument("--checkpoint", required=True, metavar="FILE")
    p.add_argument("--dataset", required=True, metavar="DIR")
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument("--template-id", metavar="ID", help="one template")
    which.add_argument("--all", action="store_true", help="every template in the dataset")
    p.add_argument("--out", metavar="FILE", help="write JSON lines here instead of stdout")

    p = sub.add_parser(
        "eval", help="verification and identification metrics for a checkpoint", **kwargs
    )
    p.add_argument("--checkpoint", required=True, metavar="FILE")
    p.add_argument("--dataset", required=True, metavar="DIR")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument(
        "--baselines", nargs="*", choices=("gap",), default=("gap",),
        help="baseline aggregators to score alongside the model",
    )
    p.add_argument("--report", metavar="FILE", help="write the report as JSON lines")

    p = sub.add_parser(
        "inspect", help="per-member weight table for one template", **kwargs
    )
    p.add_argument("--checkpoint", required=True, metavar="FILE")
    p.add_argument("--dataset", required=True, metavar="DIR")
    p.add_argument("--template-id", required=True, metavar="ID")

    p = sub.add_parser(
        "gradcheck", help="verify analytic gradients against finite differences", **kwargs
    )
    p.add_argument(
        "--sizes", default="8x1,8x2,8x5,16x1,16x2,16x5", metavar="DxN[,DxN...]",
        help="embedding width x members per template, one instance each",
    )
    p.add_argument("--step", type=float, default=1e-5, help="finite-difference step")
    p.add_argument(
        "--tolerance", type=float, default=1e-4, help="max allowed relative error"
    )
    return parser


_HANDLERS = {
    "gen-synth": _cmd_gen_synth,
    "train": _cmd_train,
    "aggregate": _cmd_aggregate,
    "eval": _cmd_eval,
    "inspect": _cmd_inspect,
    "gradcheck": _cmd_gradcheck,
}

_PATH_FLAGS = ("config", "out", "dataset", "out_checkpoint", "log", "checkpoint", "report")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints its own message; keep its code
        return int(exc.code or 0)
    if args.subcommand is None:
        parser.print_help()
        return 2

    logging.basicConfig(
        level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.threads < 1:
            raise UsageError(f"--threads must be >= 1, got {args.threads}")
        if args.threads > 1:
            log.warning(
                "--threads %d requested, but no stage of this build runs "
                "in parallel; continuing single-threaded", args.threads,
            )
        overrides = parse_overrides(args.overrides)
        cli = CliConfig(
            subcommand=args.subcommand,
            paths={
                name: getattr(args, name)
                for name in _PATH_FLAGS
                if getattr(args, name, None) is not None
            },
            overrides=overrides,
            seed=args.seed,
            verbosity=args.verbose,
        )
        merged = merge_config(load_config_file(args.config), overrides, args.seed)
        return _HANDLERS[args.subcommand](cli, merged, args)
    except CtxpoolError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # anything unmapped is an internal error
        if args.verbose:
            traceback.print_exc()
        print(f"internal error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
