"""Command-line entry point.

Subcommands: forge, evaluate, select, metaeval, mock-serve.

Settings resolve in three layers: built-in defaults, then the JSON file
given by ``--config`` (top-level keys plus a section named after the
subcommand), then explicit flags. The effective settings are written into
every output manifest.

Exit codes: 0 success, 1 usage, 2 data error, 3 backend error. Failures
print one JSON object ``{"error", "message", "exit_code"}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Any

from . import __version__
from .backend import BACKEND_KINDS, BackendSpec, MockBackend, RecordingBackend, make_backend
from .backend.server import make_server
from .domain import AspectCatalog, TaskType, default_catalog_path, load_catalog
from .engine import Engine, EvaluationRequest, InjectionMode
from .errors import AspectEvalError, UsageError
from .forge import ForgeConfig, build_training_mix
from .ingest import load_rating_dataset, load_schema
from .jsonl import read_json, read_jsonl, write_json
from .metaeval import METRICS, Aggregation, run_metaeval, summary_table, write_reports
from .prompts import default_instruction_templates_path, load_instruction_templates
from .selector import (
    FileEmbeddingProvider,
    HashEmbeddingProvider,
    PoolMode,
    embed_definitions,
    filter_pool,
    rank_pool,
    save_embeddings,
    select_top_k,
)
from .verbalizer import default_templates_path, load_template_catalog

log = logging.getLogger("aspecteval")

GLOBAL_DEFAULTS: dict[str, Any] = {"seed": 0, "log_level": "WARNING", "output_dir": "out"}

DEFAULTS: dict[str, dict[str, Any]] = {
    "forge": {
        "catalog": None,
        "templates": None,
        "instructions": None,
        "source": [],
        "split_manifest": None,
        "likert_levels": 5,
        "threshold": 0.5,
        "min_gap": 0.0,
        "allow_nota": False,
        "quota": [],
        "fallback_templates": False,
    },
    "evaluate": {
        "catalog": None,
        "templates": None,
        "instructions": None,
        "requests": None,
        "ratings": None,
        "k": 1,
        "pool_mode": "all",
        "injection_mode": "predicted",
        "threshold": 0.5,
        "backend": "mock",
        "fixtures": None,
        "strict": True,
        "endpoint": None,
        "token_env": None,
        "timeout": 30.0,
        "retries": 3,
        "max_in_flight": 8,
        "embedding_provider": "mock",
        "embeddings_file": None,
        "parallelism": 1,
        "on_error": "abort",
        "fallback_templates": False,
        "record_fixtures": None,
    },
    "select": {
        "catalog": None,
        "target": None,
        "k": 1,
        "pool_mode": "all",
        "backend": "mock",
        "fixtures": None,
        "strict": True,
        "endpoint": None,
        "token_env": None,
        "timeout": 30.0,
        "retries": 3,
        "max_in_flight": 8,
        "embedding_provider": "mock",
        "embeddings_file": None,
        "save_embeddings": None,
    },
    "metaeval": {"results": None, "human": None, "metric": ["all"], "mode": ["all"]},
    "mock-serve": {"host": "127.0.0.1", "port": 8765, "backend": "mock", "fixtures": None, "strict": True},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; usage errors are 1 here
        raise UsageError(f"{self.prog}: {message}")


def _add_global(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, default=d, help="random seed recorded in every manifest (default 0)")
    p.add_argument("--log-level", default=d, choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="logging level")
    p.add_argument("--output-dir", default=d, help="directory for output files (default ./out)")


def _add_backend(p: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    g = p.add_argument_group("backend")
    g.add_argument("--backend", choices=BACKEND_KINDS, default=S, help="model backend kind (default mock)")
    g.add_argument("--fixtures", default=S, help="replay fixture file")
    g.add_argument("--strict", dest="strict", action="store_true", default=S, help="fail on replay misses (default)")
    g.add_argument("--no-strict", dest="strict", action="store_false", default=S, help="fall back to mock on misses")
    g.add_argument("--endpoint", default=S, help="base URL of a wire-protocol server")
    g.add_argument("--token-env", default=S, help="environment variable holding the bearer token")
    g.add_argument("--timeout", type=float, default=S, help="per-request timeout in seconds")
    g.add_argument("--retries", type=int, default=S, help="attempts on transport errors (default 3)")
    g.add_argument("--max-in-flight", type=int, default=S, help="bounded concurrent requests (default 8)")
    g.add_argument(
        "--embedding-provider", choices=["wire", "mock", "file"], default=S,
        help="where definition embeddings come from: the backend, local hashing, or --embeddings-file",
    )
    g.add_argument("--embeddings-file", default=S, help="precomputed {aspect_id, provider_id, vector} records")


def _add_catalogs(p: argparse.ArgumentParser, templates: bool = True) -> None:
    S = argparse.SUPPRESS
    p.add_argument("--catalog", default=S, help="aspect catalog JSONL (default: shipped catalog)")
    if templates:
        p.add_argument("--templates", default=S, help="verbalizer template JSONL (default: shipped)")
        p.add_argument("--instructions", default=S, help="instruction template JSONL (default: shipped)")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = _Parser(prog="aspecteval", description="Multi-aspect NLG evaluation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_global(parser, suppress=True)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("forge", help="build stage-1/stage-2 training files and inference requests")
    _add_global(p, suppress=True)
    _add_catalogs(p)
    p.add_argument("--source", nargs=3, action="append", metavar=("NAME", "DATA", "SCHEMA"), default=S,
                   help="a rating dataset: name, JSONL data file, schema config (repeatable)")
    p.add_argument("--split-manifest", default=S, help='JSON {"train": [names], "test": [names]}')
    p.add_argument("--likert-levels", type=int, default=S, help="levels K of the scoring task (default 5)")
    p.add_argument("--threshold", type=float, default=S, help="Boolean/verbalizer threshold (default 0.5)")
    p.add_argument("--min-gap", type=float, default=S, help="minimum score gap for comparison pairs")
    p.add_argument("--allow-nota", action="store_true", default=S, help="emit NOTA labels for tied pairs")
    p.add_argument("--quota", action="append", metavar="TYPE=N", default=S,
                   help="cap per (aspect, task type); TYPE in scoring|comparison|ranking|boolean_qa")
    p.add_argument("--fallback-templates", action="store_true", default=S,
                   help="use a generic verbalization for aspects without a template")

    p = sub.add_parser("evaluate", help="score requests with auxiliary aspects")
    _add_global(p, suppress=True)
    _add_catalogs(p)
    p.add_argument("--requests", default=S, help="request JSONL {id, output, sources, target_aspect, ratings?}")
    p.add_argument("--ratings", default=S, help="ground-truth JSONL {id, ratings} merged into requests")
    p.add_argument("--k", type=int, default=S, help="number of auxiliary aspects (0 disables; default 1)")
    p.add_argument("--pool-mode", choices=[m.value for m in PoolMode], default=S, help="candidate pool")
    p.add_argument("--injection-mode", choices=[m.value for m in InjectionMode], default=S,
                   help="where auxiliary results come from")
    p.add_argument("--threshold", type=float, default=S, help="verbalizer threshold (default 0.5)")
    p.add_argument("--parallelism", type=int, default=S, help="worker threads (default 1)")
    p.add_argument("--on-error", choices=["abort", "skip"], default=S, help="per-item failure policy")
    p.add_argument("--fallback-templates", action="store_true", default=S,
                   help="use a generic verbalization for aspects without a template")
    p.add_argument("--record-fixtures", default=S, help="write every backend exchange to this fixture file")
    _add_backend(p)

    p = sub.add_parser("select", help="show the auxiliary aspects chosen for a target")
    _add_global(p, suppress=True)
    _add_catalogs(p, templates=False)
    p.add_argument("--target", default=S, help="target aspect id (or unambiguous name)")
    p.add_argument("--k", type=int, default=S, help="number of aspects to show")
    p.add_argument("--pool-mode", choices=[m.value for m in PoolMode], default=S, help="candidate pool")
    p.add_argument("--save-embeddings", default=S, help="also write the catalog embeddings here")
    _add_backend(p)

    p = sub.add_parser("metaeval", help="correlate predicted scores with human ratings")
    _add_global(p, suppress=True)
    p.add_argument("--results", default=S, help="results JSONL from evaluate")
    p.add_argument("--human", default=S, help="human ratings JSONL {id, aspect_id, context_id, score}")
    p.add_argument("--metric", action="append", choices=[*METRICS, "all"], default=S, help="metric(s)")
    p.add_argument("--mode", action="append", choices=["pooled", "grouped", "all"], default=S,
                   help="aggregation mode(s)")

    p = sub.add_parser("mock-serve", help="serve the wire protocol from a mock or replay backend")
    _add_global(p, suppress=True)
    p.add_argument("--host", default=S, help="bind address (default 127.0.0.1)")
    p.add_argument("--port", type=int, default=S, help="port, 0 picks a free one (default 8765)")
    p.add_argument("--backend", choices=["mock", "replay"], default=S, help="what answers the requests")
    p.add_argument("--fixtures", default=S, help="replay fixture file")
    p.add_argument("--strict", dest="strict", action="store_true", default=S, help="fail on replay misses")
    p.add_argument("--no-strict", dest="strict", action="store_false", default=S, help="fall back to mock")
    return parser


def resolve_config(args: argparse.Namespace) -> dict[str, Any]:
    command = args.command
    cfg: dict[str, Any] = dict(GLOBAL_DEFAULTS)
    cfg.update(DEFAULTS[command])
    flags = {k: v for k, v in vars(args).items() if k not in ("command",)}
    config_path = flags.pop("config", None)
    if config_path:
        if not Path(config_path).exists():
            raise UsageError(f"config file not found: {config_path}")
        filecfg = read_json(config_path)
        if not isinstance(filecfg, dict):
            raise UsageError(f"config file {config_path} must hold a JSON object")
        known = set(cfg)
        for key, value in filecfg.items():
            if key in DEFAULTS:
                continue
            key = key.replace("-", "_")
            if key in known:
                cfg[key] = value
        for key, value in (filecfg.get(command) or {}).items():
            key = key.replace("-", "_")
            if key not in known:
                raise UsageError(f"unknown setting {key!r} in section {command!r} of {config_path}")
            cfg[key] = value
    cfg.update(flags)
    cfg["command"] = command
    return cfg


def _need_path(value: str | None, what: str) -> Path:
    if not value:
        raise UsageError(f"missing required {what}")
    path = Path(value)
    if not path.exists():
        raise UsageError(f"{what} not found: {path}")
    return path


def _opt_path(value: str | None, what: str, default: Path) -> Path:
    return _need_path(value, what) if value else default


def _load_catalog(cfg: dict) -> AspectCatalog:
    return load_catalog(_opt_path(cfg.get("catalog"), "catalog path", default_catalog_path()))


def _backend_spec(cfg: dict) -> BackendSpec:
    if cfg["backend"] == "replay":
        _need_path(cfg.get("fixtures"), "fixtures file")
    return BackendSpec(
        kind=cfg["backend"], seed=cfg["seed"], fixtures=cfg.get("fixtures"), strict=cfg["strict"],
        endpoint=cfg.get("endpoint"), token_env=cfg.get("token_env"), timeout=cfg["timeout"],
        retries=cfg["retries"], max_in_flight=cfg["max_in_flight"],
    )


def _embedder(cfg: dict, backend, catalog: AspectCatalog):
    kind = cfg["embedding_provider"]
    if kind == "mock":
        return HashEmbeddingProvider()
    if kind == "file":
        return FileEmbeddingProvider(_need_path(cfg.get("embeddings_file"), "embeddings file"), list(catalog))
    return backend


def _manifest(cfg: dict, **extra: Any) -> dict:
    return {"command": cfg["command"], "seed": cfg["seed"], "config": {k: v for k, v in sorted(cfg.items())}, **extra}


def cmd_forge(cfg: dict) -> int:
    catalog = _load_catalog(cfg)
    verbalizers = load_template_catalog(_opt_path(cfg.get("templates"), "templates path", default_templates_path()))
    instructions = load_instruction_templates(
        _opt_path(cfg.get("instructions"), "instructions path", default_instruction_templates_path())
    )
    sources_cfg = cfg.get("source") or []
    if not sources_cfg:
        raise UsageError("forge needs at least one --source NAME DATA SCHEMA")
    sources = {}
    for entry in sources_cfg:
        name, data, schema = (entry["name"], entry["data"], entry["schema"]) if isinstance(entry, dict) else entry
        if name in sources:
            raise UsageError(f"duplicate source name {name!r}")
        schema_cfg = load_schema(_need_path(schema, f"schema config for {name}"))
        sources[name] = load_rating_dataset(_need_path(data, f"data file for {name}"), schema_cfg, catalog)
    split = {"train": [], "test": []}
    if cfg.get("split_manifest"):
        split = read_json(_need_path(cfg["split_manifest"], "split manifest"))
    quotas: dict[TaskType, int] = {}
    for q in cfg.get("quota") or []:
        try:
            tt, n = q.split("=", 1)
            quotas[TaskType(tt)] = int(n)
        except ValueError as exc:
            raise UsageError(f"bad --quota {q!r}; expected TYPE=N") from exc
    fcfg = ForgeConfig(
        likert_levels=cfg["likert_levels"], threshold=cfg["threshold"], min_gap=cfg["min_gap"],
        allow_nota=cfg["allow_nota"], seed=cfg["seed"], quotas=quotas,
        train=tuple(split.get("train", ())), test=tuple(split.get("test", ())),
        fallback_templates=cfg["fallback_templates"],
    )
    mix = build_training_mix(sources, catalog, fcfg, templates=instructions, verbalizers=verbalizers)
    mix.manifest["run"] = _manifest(cfg)
    paths = mix.write(cfg["output_dir"])
    for w in mix.manifest["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    print(json.dumps({k: str(v) for k, v in paths.items()}, sort_keys=True))
    return 0


def _merge_ratings(rows: list[dict], ratings_path: str | None) -> list[dict]:
    if not ratings_path:
        return rows
    extra = {str(r["id"]): r.get("ratings", {}) for r in read_jsonl(_need_path(ratings_path, "ratings file"))}
    merged = []
    for row in rows:
        row = dict(row)
        if str(row.get("id")) in extra:
            row["ratings"] = {**(row.get("ratings") or {}), **extra[str(row["id"])]}
        merged.append(row)
    return merged


def cmd_evaluate(cfg: dict) -> int:
    catalog = _load_catalog(cfg)
    verbalizers = load_template_catalog(_opt_path(cfg.get("templates"), "templates path", default_templates_path()))
    instructions = load_instruction_templates(
        _opt_path(cfg.get("instructions"), "instructions path", default_instruction_templates_path())
    )
    rows = read_jsonl(_need_path(cfg.get("requests"), "requests file"))
    injection = InjectionMode(cfg["injection_mode"])
    if injection is InjectionMode.GROUND_TRUTH and cfg["k"] > 0:
        if not cfg.get("ratings") and not any(r.get("ratings") for r in rows):
            raise UsageError("--injection-mode ground-truth needs --ratings or inline request ratings")
    rows = _merge_ratings(rows, cfg.get("ratings"))
    base = make_backend(_backend_spec(cfg))
    recorder = RecordingBackend(base) if cfg.get("record_fixtures") else None
    backend = recorder or base
    engine = Engine(
        backend, catalog, verbalizers=verbalizers, templates=instructions,
        embedder=_embedder(cfg, backend, catalog), threshold=cfg["threshold"],
        fallback_templates=cfg["fallback_templates"],
    )
    defaults = {"k": cfg["k"], "pool_mode": cfg["pool_mode"], "injection": injection, "seed": cfg["seed"]}
    try:
        batch = engine.evaluate_batch(rows, parallelism=cfg["parallelism"], on_error=cfg["on_error"],
                                      defaults=defaults)
    finally:
        if hasattr(base, "close"):
            base.close()
    paths = batch.write(cfg["output_dir"])
    if recorder is not None:
        recorder.save(cfg["record_fixtures"])
    write_json(Path(cfg["output_dir"]) / "evaluate_manifest.json",
               _manifest(cfg, counts={"items": len(rows), "ok": len(batch.results), "failed": len(batch.errors)}))
    print(json.dumps({"ok": len(batch.results), "failed": len(batch.errors),
                      **{k: str(v) for k, v in paths.items()}}, sort_keys=True))
    return 0


def cmd_select(cfg: dict) -> int:
    catalog = _load_catalog(cfg)
    if not cfg.get("target"):
        raise UsageError("select needs --target")
    target = catalog.resolve(cfg["target"])
    backend = make_backend(_backend_spec(cfg))
    embeddings = embed_definitions(list(catalog), _embedder(cfg, backend, catalog))
    if cfg.get("save_embeddings"):
        save_embeddings(cfg["save_embeddings"], embeddings)
    by_id = {e.aspect_id: e for e in embeddings}
    mode = PoolMode(cfg["pool_mode"])
    k = cfg["k"]
    if k < 1:
        raise UsageError(f"--k must be at least 1 for select, got {k}")
    req = EvaluationRequest("select", "-", (), target.id, k=k, pool_mode=mode, seed=cfg["seed"])
    pool = Engine(backend, catalog).pool_for(target, req)
    if mode is PoolMode.RANDOM:
        picks = select_top_k(target, pool, k, mode, by_id, random.Random(f"{req.seed}:{req.id}:pool"))
        ranked = [{"aspect_id": a.id, "similarity": None} for a in picks]
    else:
        ranked = [{"aspect_id": a.id, "similarity": s}
                  for a, s in rank_pool(target, filter_pool(target, pool, mode), by_id)[:k]]
    print(json.dumps({"target": target.id, "pool_mode": cfg["pool_mode"], "selected": ranked}, indent=2))
    return 0


def _expand(values: Sequence[str], every: Sequence[str]) -> list[str]:
    out: list[str] = []
    for v in values:
        for item in (every if v == "all" else [v]):
            if item not in out:
                out.append(item)
    return out


def cmd_metaeval(cfg: dict) -> int:
    results = read_jsonl(_need_path(cfg.get("results"), "results file"))
    human = read_jsonl(_need_path(cfg.get("human"), "human ratings file"))
    metrics = _expand(cfg["metric"], list(METRICS))
    modes = _expand(cfg["mode"], [m.value for m in Aggregation])
    reports = run_metaeval(results, human, metrics=metrics, modes=modes)
    write_reports(cfg["output_dir"], reports)
    write_json(Path(cfg["output_dir"]) / "metaeval_manifest.json", _manifest(cfg, reports=len(reports)))
    sys.stdout.write(summary_table(reports))
    return 0


def cmd_mock_serve(cfg: dict) -> int:
    if cfg["backend"] == "replay":
        spec = BackendSpec(kind="replay", seed=cfg["seed"], fixtures=str(_need_path(cfg.get("fixtures"), "fixtures file")),
                           strict=cfg["strict"])
        backend = make_backend(spec)
    else:
        backend = MockBackend(cfg["seed"])
    server = make_server(backend, cfg["host"], cfg["port"])
    host, port = server.server_address[:2]
    print(f"listening on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


COMMANDS = {
    "forge": cmd_forge,
    "evaluate": cmd_evaluate,
    "select": cmd_select,
    "metaeval": cmd_metaeval,
    "mock-serve": cmd_mock_serve,
}


def _fail(exc: AspectEvalError) -> int:
    record = {"error": exc.kind, "message": str(exc), "exit_code": exc.exit_code}
    print(json.dumps(record), file=sys.stderr)
    return exc.exit_code


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = resolve_config(args)
        logging.basicConfig(level=cfg["log_level"], format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[cfg["command"]](cfg)
    except AspectEvalError as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
