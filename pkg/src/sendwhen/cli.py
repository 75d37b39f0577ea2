"""Command-line surface tying the modules into reproducible runs.

Six subcommands cover the pipeline end to end: simulate, ingest, train,
evaluate, score, decide.  Every command follows the same conventions:

  * config-file-first: --config FILE supplies values, individual flags
    override them, --print-config shows the effective merged config;
  * outputs land in --out DIR and are never overwritten without --force;
  * each output directory gets exactly one manifest.json recording the
    command, config digest, input digests, package version, seed, and
    timestamps, so runs are reproducible and diffable;
  * exit codes: 0 success, 2 config error, 3 data error, 4 numerical
    failure.

Timestamps honor SOURCE_DATE_EPOCH so archived runs can be compared
byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .errors import (
    ConfigError,
    DataError,
    NumericalError,
    SchemaError,
    SendwhenError,
)
from .evaluation import (
    DEFAULT_HORIZONS,
    LABELERS,
    REFERENCE_AUC_POINTS,
    auc_vs_horizon,
    label_naive,
)
from .io import (
    dump_json,
    file_sha256,
    load_json_config,
    read_events,
    read_model_json,
    read_observations_jsonl,
    read_schema_json,
    write_events_jsonl,
    write_model_json,
    write_observations_jsonl,
    write_schema_json,
)
from .optimize import OptConfig
from .pipeline import PipelineConfig, build_observations, build_send_instances
from .policies import Candidate, MooConfig, moo_solve, ratio_rule, threshold_rule
from .scoring import ScoringContext, model_digest, score_batch
from .simulate import SimConfig, default_sim_schema, generate_event_log
from .training import LogisticModel, WeibullAftModel, fit_aft, fit_logistic

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_MANIFEST_NAME = "manifest.json"


# -- shared plumbing ------------------------------------------------------------


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _digest_config(cfg: Mapping) -> str:
    return hashlib.sha256(_canonical(cfg).encode()).hexdigest()


def _utc_stamp() -> str:
    raw = os.environ.get("SOURCE_DATE_EPOCH")
    epoch = int(raw) if raw else int(time.time())
    return datetime.fromtimestamp(epoch, timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _prepare_out(out_dir: str, filenames: Sequence[str], force: bool) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    existing = [n for n in (*filenames, _MANIFEST_NAME) if (out / n).exists()]
    if existing and not force:
        raise ConfigError(
            f"refusing to overwrite {existing} in {out}; pass --force to allow"
        )
    return out


def _write_manifest(
    out: Path,
    command: str,
    config: Mapping,
    inputs: Mapping[str, str],
    seed: int | None = None,
    model_version: str | None = None,
) -> None:
    manifest = {
        "command": command,
        "config": dict(config),
        "config_digest": _digest_config(config),
        "input_digests": {name: file_sha256(path) for name, path in inputs.items()},
        "model_version": model_version,
        "tool_version": __version__,
        "seed": seed,
        "created_utc": _utc_stamp(),
    }
    dump_json(out / _MANIFEST_NAME, manifest)


def _merge_config(
    defaults: Mapping, config_path: str | None, overrides: Mapping
) -> dict:
    merged = dict(defaults)
    if config_path is not None:
        merged.update(load_json_config(config_path, allowed_keys=list(defaults)))
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    return merged


def _print_config(merged: Mapping) -> int:
    print(json.dumps(merged, sort_keys=True, indent=2))
    return EXIT_OK


def _check_threads(threads) -> int:
    try:
        n = int(threads)
    except (TypeError, ValueError):
        raise ConfigError(f"threads must be a positive integer, got {threads!r}")
    if n < 1:
        raise ConfigError(f"threads must be >= 1, got {n}")
    return n


def _pipeline_config(merged: Mapping) -> PipelineConfig:
    try:
        return PipelineConfig(
            duration_floor_hours=float(merged["duration_floor_hours"]),
            window_start=merged["window_start"],
            window_end=merged["window_end"],
        )
    except DataError:
        # invalid pipeline settings are a configuration problem at the CLI
        raise ConfigError(f"invalid pipeline config: {merged}") from None


def _opt_config(merged: Mapping) -> OptConfig:
    return OptConfig(
        tol=float(merged["tol"]),
        max_iters=int(merged["max_iters"]),
        ridge=float(merged["ridge"]),
        method=str(merged["method"]),
        seed=int(merged["seed"]),
    )


def _write_jsonl(path: Path, records: Sequence[Mapping]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(_canonical(rec) + "\n")


def _read_jsonl(path: str) -> list[dict]:
    records: list[dict] = []
    try:
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
                if not isinstance(rec, dict):
                    raise DataError(f"{path}:{lineno}: expected a JSON object")
                records.append(rec)
    except FileNotFoundError:
        raise DataError(f"input file not found: {path}") from None
    return records


# -- simulate ---------------------------------------------------------------------

_SIMULATE_DEFAULTS: dict = {
    "n_users": 100,
    "n_profile_features": 2,
    "true_coefficients": [3.2, 0.4, -0.3, -0.2, 0.05],
    "true_sigma": 1.5,
    "send_process": {"kind": "poisson", "rate_per_hour": 1.0 / 12.0},
    "window_hours": 168.0,
    "seed": 0,
    "include_interaction": True,
    "threads": 1,
}


def cmd_simulate(args: argparse.Namespace) -> int:
    merged = _merge_config(
        _SIMULATE_DEFAULTS,
        args.config,
        {
            "n_users": args.n_users,
            "seed": args.seed,
            "window_hours": args.window_hours,
            "threads": args.threads,
        },
    )
    if args.print_config:
        return _print_config(merged)
    if args.out is None:
        raise ConfigError("simulate needs --out DIR (or --print-config)")
    _check_threads(merged["threads"])
    sim_cfg = SimConfig.from_dict({k: v for k, v in merged.items() if k != "threads"})

    out = _prepare_out(
        args.out, ("events.jsonl", "contexts.jsonl", "truth.json", "schema.json"), args.force
    )
    result = generate_event_log(sim_cfg)
    schema = default_sim_schema(sim_cfg)

    write_events_jsonl(out / "events.jsonl", result.events)
    _write_jsonl(
        out / "contexts.jsonl",
        [
            {
                "user_id": c.user_id,
                "features": dict(sorted(c.features.items())),
                "badge_count": c.badge_count,
                "w0_hours": c.w0_hours,
            }
            for c in result.contexts
        ],
    )
    dump_json(out / "truth.json", result.truth)
    write_schema_json(out / "schema.json", schema)
    _write_manifest(out, "simulate", merged, inputs={}, seed=sim_cfg.seed)
    stats = result.truth["stats"]
    print(
        f"simulate: {sim_cfg.n_users} users, {stats['n_sends']} sends, "
        f"{stats['n_visits']} visits -> {out}"
    )
    return EXIT_OK


# -- ingest -----------------------------------------------------------------------

_INGEST_DEFAULTS: dict = {
    "duration_floor_hours": 1.0 / 3600.0,
    "window_start": None,
    "window_end": None,
    "threads": 1,
}


def cmd_ingest(args: argparse.Namespace) -> int:
    merged = _merge_config(
        _INGEST_DEFAULTS,
        args.config,
        {
            "duration_floor_hours": args.duration_floor_hours,
            "window_start": args.window_start,
            "window_end": args.window_end,
            "threads": args.threads,
        },
    )
    if args.print_config:
        return _print_config(merged)
    for name, value in (("--events", args.events), ("--schema", args.schema)):
        if value is None:
            raise ConfigError(f"ingest needs {name} (or --print-config)")
    if args.out is None:
        raise ConfigError("ingest needs --out DIR")
    _check_threads(merged["threads"])
    pipe_cfg = _pipeline_config(merged)

    schema = read_schema_json(args.schema)
    events = read_events(args.events)
    out = _prepare_out(args.out, ("observations.jsonl", "schema.json", "report.json"), args.force)

    observations = build_observations(events, schema, pipe_cfg)
    n_sends = sum(1 for e in events if e.kind == "send")
    report = {
        "n_events": len(events),
        "n_sends": n_sends,
        "n_observations": len(observations),
        "n_dropped_sends": n_sends - len(observations),
        "n_censored": sum(1 for o in observations if not o.uncensored),
        "n_uncensored": sum(1 for o in observations if o.uncensored),
    }
    write_observations_jsonl(out / "observations.jsonl", observations)
    write_schema_json(out / "schema.json", schema)
    dump_json(out / "report.json", report)
    _write_manifest(
        out, "ingest", merged, inputs={"events": args.events, "schema": args.schema}
    )
    if not events:
        print("ingest: warning: empty event input, wrote empty observations", file=sys.stderr)
    print(
        f"ingest: {report['n_events']} events -> {report['n_observations']} observations "
        f"({report['n_censored']} censored) -> {out}"
    )
    return EXIT_OK


# -- train ------------------------------------------------------------------------

_TRAIN_DEFAULTS: dict = {
    "model": "aft",
    "tol": 1e-7,
    "max_iters": 500,
    "ridge": 1e-6,
    "method": "lbfgs",
    "seed": 0,
    "duration_floor_hours": 1.0 / 3600.0,
    "window_start": None,
    "window_end": None,
    "threads": 1,
}


def _parse_model_kind(spec: str) -> tuple[str, float | None]:
    if spec == "aft":
        return "aft", None
    if spec.startswith("logistic:"):
        raw = spec.split(":", 1)[1]
        try:
            horizon = float(raw)
        except ValueError:
            raise ConfigError(f"bad horizon in model kind {spec!r}") from None
        if not horizon > 0:
            raise ConfigError(f"model horizon must be > 0, got {horizon}")
        return "logistic", horizon
    raise ConfigError(f"unknown model kind {spec!r}; expected 'aft' or 'logistic:T'")


def cmd_train(args: argparse.Namespace) -> int:
    merged = _merge_config(
        _TRAIN_DEFAULTS,
        args.config,
        {
            "model": args.model,
            "tol": args.tol,
            "max_iters": args.max_iters,
            "ridge": args.ridge,
            "method": args.method,
            "seed": args.seed,
            "threads": args.threads,
        },
    )
    if args.print_config:
        return _print_config(merged)
    if args.out is None:
        raise ConfigError("train needs --out DIR (or --print-config)")
    _check_threads(merged["threads"])
    kind, horizon = _parse_model_kind(str(merged["model"]))
    opt_cfg = _opt_config(merged)

    inputs: dict[str, str] = {}
    out = _prepare_out(args.out, ("model.json",), args.force)
    if kind == "aft":
        if args.observations is None:
            raise ConfigError("train --model aft needs --observations FILE")
        schema = read_schema_json(args.schema) if args.schema else None
        observations = read_observations_jsonl(args.observations, schema)
        inputs["observations"] = args.observations
        if args.schema:
            inputs["schema"] = args.schema
        model: WeibullAftModel | LogisticModel = fit_aft(
            observations, opt_cfg, schema=schema
        )
    else:
        # the logistic baseline trains on per-send labels, so it needs the
        # raw event timeline rather than censored triplets
        if args.events is None or args.schema is None:
            raise ConfigError("train --model logistic:T needs --events and --schema")
        schema = read_schema_json(args.schema)
        events = read_events(args.events)
        pipe_cfg = _pipeline_config(merged)
        instances = build_send_instances(events, schema, pipe_cfg)
        if not instances:
            raise DataError("no send instances found in the event input")
        X = np.stack([inst.x for inst in instances])
        y = label_naive(events, horizon, pipe_cfg).astype(float)
        inputs["events"] = args.events
        inputs["schema"] = args.schema
        model = fit_logistic(X, y, horizon, opt_cfg, schema=schema)

    write_model_json(out / "model.json", model)
    version = (
        model_digest(model) if isinstance(model, WeibullAftModel) else None
    )
    _write_manifest(
        out, "train", merged, inputs=inputs, seed=opt_cfg.seed, model_version=version
    )
    label = kind if horizon is None else f"{kind} (T={horizon}h)"
    print(f"train: fitted {label} model -> {out / 'model.json'}")
    return EXIT_OK


# -- evaluate ---------------------------------------------------------------------

_EVALUATE_DEFAULTS: dict = {
    "horizons": list(DEFAULT_HORIZONS),
    "labeler": "naive",
    "duration_floor_hours": 1.0 / 3600.0,
    "window_start": None,
    "window_end": None,
    "threads": 1,
}


def cmd_evaluate(args: argparse.Namespace) -> int:
    merged = _merge_config(
        _EVALUATE_DEFAULTS,
        args.config,
        {
            "horizons": args.horizons,
            "labeler": args.labeler,
            "threads": args.threads,
        },
    )
    if args.print_config:
        return _print_config(merged)
    for name, value in (
        ("--aft-model", args.aft_model),
        ("--events", args.events),
        ("--schema", args.schema),
    ):
        if value is None:
            raise ConfigError(f"evaluate needs {name} (or --print-config)")
    if not args.logistic_model:
        raise ConfigError("evaluate needs at least one --logistic-model FILE")
    if args.out is None:
        raise ConfigError("evaluate needs --out DIR")
    _check_threads(merged["threads"])
    if merged["labeler"] not in LABELERS:
        raise ConfigError(
            f"unknown labeler {merged['labeler']!r}; expected one of {sorted(LABELERS)}"
        )
    horizons = [float(t) for t in merged["horizons"]]
    pipe_cfg = _pipeline_config(merged)

    aft = read_model_json(args.aft_model)
    if not isinstance(aft, WeibullAftModel):
        raise SchemaError(f"{args.aft_model} does not hold a survival model")
    logistic_models: dict[float, LogisticModel] = {}
    for path in args.logistic_model:
        m = read_model_json(path)
        if not isinstance(m, LogisticModel):
            raise SchemaError(f"{path} does not hold a logistic model")
        logistic_models[m.horizon_t_hours] = m
    schema = read_schema_json(args.schema)
    events = read_events(args.events)

    out = _prepare_out(args.out, ("auc_report.csv", "auc_report.json"), args.force)
    report = auc_vs_horizon(
        aft, logistic_models, events, schema,
        horizons=horizons, labeler=str(merged["labeler"]), cfg=pipe_cfg,
    )
    (out / "auc_report.csv").write_text(report.to_csv(), encoding="utf-8")
    dump_json(
        out / "auc_report.json",
        {
            "rows": [
                {
                    "t_hours": r.t_hours,
                    "auc_aft": None if r.flag else r.auc_aft,
                    "auc_logistic": None if r.flag else r.auc_logistic,
                    "n": r.n,
                    "n_ambiguous": r.n_ambiguous,
                    "labeler": r.labeler,
                    "flag": r.flag,
                }
                for r in report.rows
            ],
            "reference_points": REFERENCE_AUC_POINTS,
        },
    )
    inputs = {"aft_model": args.aft_model, "events": args.events, "schema": args.schema}
    for i, path in enumerate(args.logistic_model):
        inputs[f"logistic_model_{i}"] = path
    _write_manifest(
        out, "evaluate", merged, inputs=inputs, model_version=model_digest(aft)
    )
    print(report.to_text())
    print(f"evaluate: {len(report.rows)} horizons -> {out / 'auc_report.csv'}")
    return EXIT_OK


# -- score ------------------------------------------------------------------------

_SCORE_DEFAULTS: dict = {
    "horizon_T": 24.0,
    "threads": 1,
}


def cmd_score(args: argparse.Namespace) -> int:
    merged = _merge_config(
        _SCORE_DEFAULTS,
        args.config,
        {"horizon_T": args.horizon_T, "threads": args.threads},
    )
    if args.print_config:
        return _print_config(merged)
    for name, value in (("--model", args.model), ("--contexts", args.contexts)):
        if value is None:
            raise ConfigError(f"score needs {name} (or --print-config)")
    if args.out is None:
        raise ConfigError("score needs --out DIR")
    _check_threads(merged["threads"])
    horizon = float(merged["horizon_T"])
    if not horizon > 0:
        raise ConfigError(f"horizon_T must be > 0, got {horizon}")

    model = read_model_json(args.model)
    if not isinstance(model, WeibullAftModel):
        raise SchemaError(f"{args.model} does not hold a survival model; scoring needs one")
    if model.schema is None:
        raise SchemaError(f"{args.model} carries no feature schema; scoring needs one")

    records = _read_jsonl(args.contexts)
    contexts: list[ScoringContext] = []
    user_ids: list[str] = []
    w0s: list[float] = []
    for i, rec in enumerate(records, start=1):
        try:
            user_id = str(rec["user_id"])
            features = {k: float(v) for k, v in dict(rec["features"]).items()}
            badge = int(rec["badge_count"])
            w0 = float(rec["w0_hours"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{args.contexts}:{i}: malformed context: {exc}") from exc
        x0 = model.schema.materialize(features, badge_count=badge)
        contexts.append(ScoringContext(features_now=tuple(x0), w0_hours=w0, horizon_T=horizon))
        user_ids.append(user_id)
        w0s.append(w0)

    out = _prepare_out(args.out, ("deltas.jsonl",), args.force)
    results = score_batch(contexts, model)
    version = model_digest(model)
    rows = []
    for user_id, w0, res in zip(user_ids, w0s, results):
        rec = {"user_id": user_id, "w0_hours": w0, "horizon_T": horizon}
        rec.update(res.to_dict())
        rec["model_version"] = version
        rows.append(rec)
    _write_jsonl(out / "deltas.jsonl", rows)
    _write_manifest(
        out,
        "score",
        merged,
        inputs={"model": args.model, "contexts": args.contexts},
        model_version=version,
    )
    print(f"score: {len(rows)} users at T={horizon}h -> {out / 'deltas.jsonl'}")
    return EXIT_OK


# -- decide -----------------------------------------------------------------------

_DECIDE_DEFAULTS: dict = {
    "rule": "threshold",
    "kappa": 0.0,
    "c_click": 0.0,
    "c_send": 0.0,
    "horizon_T": None,
    "evaluation_cadence_hours": 4.0,
    "synth_p_click_seed": None,
    "threads": 1,
}


def _candidates_from_scores(
    records: Sequence[Mapping], where: str, synth_seed: int | None, need_p_click: bool
) -> list[Candidate]:
    rows = []
    for i, rec in enumerate(records, start=1):
        try:
            rows.append(
                (
                    str(rec["user_id"]),
                    float(rec["delta"]),
                    float(rec["p_wait"]),
                    None if rec.get("p_click") is None else float(rec["p_click"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{where}:{i}: malformed score row: {exc}") from exc
    missing = [r[0] for r in rows if r[3] is None]
    if need_p_click and missing:
        if synth_seed is None:
            raise ConfigError(
                f"{len(missing)} score rows lack p_click; supply p_click in the scores "
                "file or pass --synth-p-click-seed for placeholder draws"
            )
        # placeholder click-through rates: uniform draws, keyed by seed and
        # user order, documented as synthetic stand-ins for a real CTR model
        rng = np.random.default_rng([int(synth_seed)])
        draws = iter(rng.uniform(0.0, 1.0, size=len(missing)))
        synth = {uid: float(next(draws)) for uid in missing}
        rows = [
            (uid, delta, p_wait, synth.get(uid) if p is None else p)
            for uid, delta, p_wait, p in rows
        ]
    return [
        Candidate(user_id=uid, delta=delta, p_wait=p_wait, p_click=0.0 if p is None else p)
        for uid, delta, p_wait, p in rows
    ]


def _round_fractional(result, c_send: float, deltas: Mapping[str, float]):
    """Integerize fractional LP entries greedily by descending delta.

    A fractional y rounds up while the rounded send count still fits the
    volume cap, in the same delta-descending order the LP itself fills.
    """
    fractional = [d for d in result.decisions if d.flagged and 0.0 < d.y < 1.0]
    n_whole = sum(1 for d in result.decisions if d.y >= 1.0 - 1e-12)
    order = sorted(fractional, key=lambda d: (-deltas.get(d.user_id, 0.0), d.user_id))
    budget = c_send - n_whole
    rounded = {}
    for d in order:
        up = budget >= 1.0 - 1e-9
        if up:
            budget -= 1.0
        rounded[d.user_id] = up
    out = []
    for d in result.decisions:
        if d.user_id in rounded:
            up = rounded[d.user_id]
            note = f"fractional y={d.y:.6f} rounded {'up' if up else 'down'}"
            out.append(
                type(d)(user_id=d.user_id, y=d.y, send=up, flagged=True, note=note)
            )
        else:
            out.append(d)
    return out


def cmd_decide(args: argparse.Namespace) -> int:
    merged = _merge_config(
        _DECIDE_DEFAULTS,
        args.config,
        {
            "rule": args.rule,
            "kappa": args.kappa,
            "c_click": args.c_click,
            "c_send": args.c_send,
            "horizon_T": args.horizon_T,
            "synth_p_click_seed": args.synth_p_click_seed,
            "threads": args.threads,
        },
    )
    if args.print_config:
        return _print_config(merged)
    if args.scores is None:
        raise ConfigError("decide needs --scores FILE (or --print-config)")
    if args.out is None:
        raise ConfigError("decide needs --out DIR")
    _check_threads(merged["threads"])
    rule = str(merged["rule"])
    if rule not in ("threshold", "ratio", "moo"):
        raise ConfigError(f"unknown rule {rule!r}; expected threshold, ratio, or moo")

    records = _read_jsonl(args.scores)
    synth_seed = merged["synth_p_click_seed"]
    candidates = _candidates_from_scores(
        records, args.scores, synth_seed, need_p_click=(rule == "moo")
    )
    out = _prepare_out(args.out, ("decisions.jsonl", "report.json"), args.force)

    decisions: list = []
    report: dict = {
        "rule": rule,
        "n_candidates": len(candidates),
        "evaluation_cadence_hours": float(merged["evaluation_cadence_hours"]),
    }
    status = "ok"
    if not candidates:
        print("decide: warning: empty candidate input", file=sys.stderr)
    elif rule == "threshold":
        result = threshold_rule(
            candidates, float(merged["kappa"]),
            horizon_T=None if merged["horizon_T"] is None else float(merged["horizon_T"]),
        )
        decisions = list(result.decisions)
        report["kappa"] = result.kappa
    elif rule == "ratio":
        result = ratio_rule(candidates, float(merged["kappa"]))
        decisions = list(result.decisions)
        report["kappa"] = result.kappa
    else:
        cfg = MooConfig(c_click=float(merged["c_click"]), c_send=float(merged["c_send"]))
        deltas = {c.user_id: c.delta for c in candidates}
        result = moo_solve(candidates, cfg)
        status = result.status
        if result.status == "infeasible":
            dump_json(out / "report.json", {**report, "status": status, **dict(result.report)})
            _write_jsonl(out / "decisions.jsonl", [])
            _write_manifest(out, "decide", merged, inputs={"scores": args.scores})
            print(
                f"decide: infeasible: click floor {cfg.c_click} unreachable "
                f"(max {result.report['max_click_reachable']:.6f})",
                file=sys.stderr,
            )
            return EXIT_DATA
        decisions = _round_fractional(result, cfg.c_send, deltas)
        report.update(
            kappa1=result.kappa1,
            kappa2=result.kappa2,
            objective=result.objective,
            click_total=result.report["click_total"],
            send_total=result.report["send_total"],
            n_fractional=result.report["n_fractional"],
        )

    rows = []
    for d in decisions:
        row = {"user_id": d.user_id, "y": d.y, "send": d.send, "rule": rule}
        if rule == "moo":
            row["kappa1"] = report.get("kappa1")
            row["kappa2"] = report.get("kappa2")
        else:
            row["kappa"] = report.get("kappa")
        if d.flagged:
            row["flagged"] = True
            row["note"] = d.note
        rows.append(row)
    report["status"] = status
    report["n_send"] = sum(1 for d in decisions if d.send)
    _write_jsonl(out / "decisions.jsonl", rows)
    dump_json(out / "report.json", report)
    _write_manifest(out, "decide", merged, inputs={"scores": args.scores})
    print(
        f"decide: {report['n_send']} of {len(decisions)} candidates send "
        f"({rule}) -> {out / 'decisions.jsonl'}"
    )
    return EXIT_OK


# -- parser -----------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--out", help="output directory")
    p.add_argument("--force", action="store_true", help="allow overwriting outputs")
    p.add_argument(
        "--print-config", action="store_true",
        help="print the effective config as JSON and exit",
    )
    p.add_argument("--threads", type=int, help="cap worker count (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sendwhen",
        description="Censored survival modeling of time-to-visit and send/hold policies.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic event log with ground truth")
    _add_common(p)
    p.add_argument("--n-users", type=int, dest="n_users")
    p.add_argument("--seed", type=int)
    p.add_argument("--window-hours", type=float, dest="window_hours")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="turn an event log into censored observations")
    _add_common(p)
    p.add_argument("--events", help="event log (.jsonl or .csv)")
    p.add_argument("--schema", help="feature schema JSON")
    p.add_argument("--duration-floor-hours", type=float, dest="duration_floor_hours")
    p.add_argument("--window-start", type=float, dest="window_start")
    p.add_argument("--window-end", type=float, dest="window_end")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="fit the survival model or a logistic baseline")
    _add_common(p)
    p.add_argument("--observations", help="observations JSONL (survival model)")
    p.add_argument("--events", help="event log (logistic baseline)")
    p.add_argument("--schema", help="feature schema JSON")
    p.add_argument("--model", help="aft or logistic:T (e.g. logistic:24)")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", type=int, dest="max_iters")
    p.add_argument("--ridge", type=float)
    p.add_argument("--method", choices=("lbfgs", "gd"))
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="AUC-versus-horizon comparison report")
    _add_common(p)
    p.add_argument("--aft-model", dest="aft_model", help="survival model JSON")
    p.add_argument(
        "--logistic-model", dest="logistic_model", action="append", default=[],
        help="logistic model JSON; repeat once per horizon",
    )
    p.add_argument("--events", help="test event log")
    p.add_argument("--schema", help="feature schema JSON")
    p.add_argument("--horizons", type=float, nargs="+")
    p.add_argument("--labeler", choices=tuple(sorted(LABELERS)))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("score", help="per-user delta effect of sending now versus waiting")
    _add_common(p)
    p.add_argument("--model", help="survival model JSON")
    p.add_argument("--contexts", help="scoring contexts JSONL")
    p.add_argument("--horizon-T", type=float, dest="horizon_T")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("decide", help="turn scores into send/hold decisions")
    _add_common(p)
    p.add_argument("--scores", help="deltas JSONL from the score command")
    p.add_argument("--rule", choices=("threshold", "ratio", "moo"))
    p.add_argument("--kappa", type=float)
    p.add_argument("--c-click", type=float, dest="c_click")
    p.add_argument("--c-send", type=float, dest="c_send")
    p.add_argument("--horizon-T", type=float, dest="horizon_T")
    p.add_argument(
        "--synth-p-click-seed", type=int, dest="synth_p_click_seed",
        help="seed for placeholder uniform p_click draws when the scores lack them",
    )
    p.set_defaults(func=cmd_decide)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SendwhenError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
