"""Operator entry points: index build, batch classification, serving,
evaluation, ablation, and whitelist derivation.

Every tunable has a flag, an optional TOML config key, and a documented
default; flags override the file. Exit codes: 0 success, 1 operational
failure, 2 usage error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 path
    import tomli as tomllib

from .cache import CacheStore
from .catalog import load_catalog_file, load_taxonomy
from .disambiguation import ConflictWhitelist, load_whitelist
from .errors import ConfigError, QIntentError
from .evalharness import (
    build_synthetic_benchmark,
    derive_whitelist,
    evaluate,
    load_benchmark,
    run_ablation,
)
from .pipeline import (
    AblationFlags,
    PipelineConfig,
    PipelineDeps,
    batch_run,
    pipeline_version,
)
from .providers import ProviderConfig, LiveEncoder, LiveEngine, LiveSearchTool
from .reasoner import (
    FixtureSearchTool,
    PolicyContext,
    ScriptedEngine,
    ScriptedRules,
    ToolBudget,
    load_policy,
    load_scripted_rules,
)
from .retrieval import HashEncoder, RetrievalConfig, build_index, load_index, save_index
from .service import ServeConfig, serve


def _read_config(path: str | None) -> tuple[dict, Path]:
    if path is None:
        return {}, Path.cwd()
    p = Path(path)
    try:
        with open(p, "rb") as fp:
            return tomllib.load(fp), p.parent
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _provider_config(cfg: dict) -> ProviderConfig:
    return ProviderConfig(
        endpoint=cfg["endpoint"],
        identity=cfg.get("identity", "unnamed"),
        timeout=float(cfg.get("timeout", 10.0)),
        retries=int(cfg.get("retries", 2)),
        backoff_base=float(cfg.get("backoff_base", 0.1)),
        credential_env=cfg.get("credential_env"),
    )


def _pipeline_config(cfg: dict, overrides: dict) -> PipelineConfig:
    retrieval_cfg = cfg.get("retrieval", {})
    budget_cfg = cfg.get("budget", {})
    pipe_cfg = cfg.get("pipeline", {})
    flags_cfg = pipe_cfg.get("ablation", {})

    def pick(key, file_value, default):
        return overrides[key] if overrides.get(key) is not None else file_value if file_value is not None else default

    return PipelineConfig(
        retrieval=RetrievalConfig(
            top_n=int(pick("top_n", retrieval_cfg.get("top_n"), 50)),
            alpha=float(pick("alpha", retrieval_cfg.get("alpha"), 0.6)),
            tau_fuzzy=float(pick("tau_fuzzy", retrieval_cfg.get("tau_fuzzy"), 0.75)),
        ),
        budget=ToolBudget(
            max_tool_calls=int(
                pick("max_tool_calls", budget_cfg.get("max_tool_calls"), 2)
            ),
            per_call_timeout=float(budget_cfg.get("per_call_timeout", 10.0)),
        ),
        agentic_mode=pick("agentic_mode", pipe_cfg.get("agentic_mode"), "on_empty_catalog"),
        ablation_flags=AblationFlags(
            catalog_grounding=bool(flags_cfg.get("catalog_grounding", True)),
            agentic_search=bool(flags_cfg.get("agentic_search", True)),
            dual_intent=bool(flags_cfg.get("dual_intent", True)),
        ),
        default_vertical=pick(
            "default_vertical", pipe_cfg.get("default_vertical"), "restaurant"
        ),
    )


def _build_deps(cfg: dict, base: Path, overrides: dict) -> PipelineDeps:
    stack = cfg.get("stack", {})
    for key in ("taxonomy", "catalog"):
        if key not in stack:
            raise ConfigError(f"config [stack] must set '{key}'")
    taxonomy = load_taxonomy(_resolve(base, stack["taxonomy"]))
    store = load_catalog_file(_resolve(base, stack["catalog"]), taxonomy)

    encoder_kind = stack.get("encoder", "hash")
    if encoder_kind == "hash":
        encoder = HashEncoder(
            dimension=int(stack.get("dimension", 64)), seed=int(stack.get("seed", 0))
        )
    elif encoder_kind == "live":
        encoder = LiveEncoder(
            _provider_config(cfg.get("providers", {}).get("encoder", {})),
            dimension=int(stack.get("dimension", 64)),
        )
    else:
        raise ConfigError(f"unknown encoder kind {encoder_kind!r}")

    if "index" in stack and _resolve(base, stack["index"]).exists():
        index = load_index(_resolve(base, stack["index"]), store=store, encoder=encoder)
    else:
        index = build_index(store, encoder)

    engine_kind = stack.get("engine", "scripted")
    if engine_kind == "scripted":
        rules = (
            load_scripted_rules(_resolve(base, stack["rules"]))
            if "rules" in stack
            else ScriptedRules()
        )
        engine = ScriptedEngine(rules)
    elif engine_kind == "live":
        engine = LiveEngine(_provider_config(cfg.get("providers", {}).get("engine", {})))
    else:
        raise ConfigError(f"unknown engine kind {engine_kind!r}")

    search_kind = stack.get("search", "fixture")
    if search_kind == "fixture":
        tool = (
            FixtureSearchTool.from_file(_resolve(base, stack["search_fixtures"]))
            if "search_fixtures" in stack
            else FixtureSearchTool({})
        )
    elif search_kind == "live":
        tool = LiveSearchTool(_provider_config(cfg.get("providers", {}).get("search", {})))
    else:
        raise ConfigError(f"unknown search kind {search_kind!r}")

    whitelist = (
        load_whitelist(_resolve(base, stack["whitelist"]), taxonomy)
        if "whitelist" in stack
        else ConflictWhitelist.empty()
    )
    policy = (
        load_policy(_resolve(base, stack["policy"]), taxonomy)
        if "policy" in stack
        else PolicyContext.empty()
    )
    return PipelineDeps(
        store=store,
        index=index,
        encoder=encoder,
        engine=engine,
        tool=tool,
        whitelist=whitelist,
        policy=policy,
        config=_pipeline_config(cfg, overrides),
    )


_OVERRIDE_OPTIONS = [
    click.option("--top-n", "top_n", type=int, default=None, help="Stage-1 candidate count (default 50)."),
    click.option("--alpha", type=float, default=None, help="Fuzzy blend weight (default 0.6)."),
    click.option("--tau-fuzzy", "tau_fuzzy", type=float, default=None, help="Fuzzy retention threshold (default 0.75)."),
    click.option("--max-tool-calls", "max_tool_calls", type=int, default=None, help="Agentic search budget per query (default 2)."),
    click.option("--agentic-mode", "agentic_mode", type=click.Choice(["model_decides", "on_empty_catalog", "off"]), default=None, help="When the engine may search (default on_empty_catalog)."),
    click.option("--default-vertical", "default_vertical", type=str, default=None, help="Fallback vertical (default restaurant)."),
]


def _with_overrides(fn):
    for opt in reversed(_OVERRIDE_OPTIONS):
        fn = opt(fn)
    return fn


def _overrides_from(kwargs: dict) -> dict:
    keys = ("top_n", "alpha", "tau_fuzzy", "max_tool_calls", "agentic_mode", "default_vertical")
    return {k: kwargs.pop(k) for k in keys}


@click.group()
def main() -> None:
    """Grounded query intent classification toolkit."""


@main.command("build-index")
@click.option("--catalog", required=True, type=click.Path(exists=True), help="Entity records, one JSON object per line.")
@click.option("--taxonomy", required=True, type=click.Path(exists=True), help="Taxonomy JSON document.")
@click.option("--out", required=True, type=click.Path(), help="Output index file (.npz).")
@click.option("--dimension", type=int, default=64, show_default=True, help="Hash encoder dimension.")
@click.option("--seed", type=int, default=0, show_default=True, help="Hash encoder seed.")
def cmd_build_index(catalog: str, taxonomy: str, out: str, dimension: int, seed: int) -> None:
    """Build and persist the semantic index for a catalog."""
    tax = load_taxonomy(taxonomy)
    store = load_catalog_file(catalog, tax)
    encoder = HashEncoder(dimension=dimension, seed=seed)
    index = build_index(store, encoder)
    save_index(index, out)
    click.echo(f"indexed {len(index)} surfaces from {len(store)} entities -> {out}")


@main.command("batch")
@click.option("--queries", required=True, type=click.Path(exists=True), help="Plain text, one raw query per line.")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True), help="Pipeline TOML config.")
@click.option("--cache", "cache_path", required=True, type=click.Path(), help="Cache file to populate.")
@click.option("--parallelism", type=int, default=1, show_default=True, help="Concurrent classification workers.")
@_with_overrides
def cmd_batch(queries: str, config_path: str, cache_path: str, parallelism: int, **kwargs) -> None:
    """Classify a query file into the cache and print the batch report."""
    overrides = _overrides_from(kwargs)
    cfg, base = _read_config(config_path)
    deps = _build_deps(cfg, base, overrides)
    version = pipeline_version(deps)
    lines = Path(queries).read_text(encoding="utf-8").splitlines()
    with CacheStore(cache_path, version, deps.store.version) as cache:
        report = batch_run(lines, deps, cache, parallelism=parallelism)
    click.echo(json.dumps(report.to_json(), indent=2))


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="TOML config with a [serve] section.")
@click.option("--cache", "cache_path", type=click.Path(), default=None, help="Cache file to serve.")
@click.option("--whitelist", "whitelist_path", type=click.Path(), default=None, help="Whitelist JSON document.")
@click.option("--taxonomy", "taxonomy_path", type=click.Path(), default=None, help="Taxonomy JSON document.")
@click.option("--host", default=None, help="Bind address (default 127.0.0.1).")
@click.option("--port", type=int, default=None, help="Bind port (default 8080).")
@click.option("--miss-policy", type=click.Choice(["default_vertical", "error_404"]), default=None, help="Cache miss behavior (default default_vertical).")
@click.option("--default-vertical", "default_vertical", default=None, help="Vertical returned on miss (default restaurant).")
def cmd_serve(config_path, cache_path, whitelist_path, taxonomy_path, host, port, miss_policy, default_vertical) -> None:
    """Serve cached intents over HTTP until interrupted."""
    cfg, base = _read_config(config_path)
    serve_cfg = cfg.get("serve", {})
    stack = cfg.get("stack", {})

    def need(flag_value, file_value, name, default=None):
        if flag_value is not None:
            return flag_value
        if file_value is not None:
            return str(_resolve(base, file_value)) if name.endswith("path") else file_value
        if default is not None:
            return default
        raise ConfigError(f"serve needs --{name.replace('_', '-')} or a config value")

    config = ServeConfig(
        cache_path=need(cache_path, serve_cfg.get("cache"), "cache_path"),
        whitelist_path=need(whitelist_path, serve_cfg.get("whitelist", stack.get("whitelist")), "whitelist_path"),
        taxonomy_path=need(taxonomy_path, serve_cfg.get("taxonomy", stack.get("taxonomy")), "taxonomy_path"),
        host=need(host, serve_cfg.get("host"), "host", "127.0.0.1"),
        port=int(need(port, serve_cfg.get("port"), "port", 8080)),
        miss_policy=need(miss_policy, serve_cfg.get("miss_policy"), "miss_policy", "default_vertical"),
        default_vertical=need(default_vertical, serve_cfg.get("default_vertical"), "default_vertical", "restaurant"),
        admin_token=serve_cfg.get("admin_token"),
    )
    service = serve(config)
    click.echo(f"serving on {config.host}:{service.port} ({len(service.snapshot.records)} records)")
    try:
        service.wait()
    except KeyboardInterrupt:
        service.stop()


@main.command("eval")
@click.option("--benchmark", required=True, type=click.Path(exists=True), help="Cases, one JSON object per line.")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True), help="Pipeline TOML config.")
@click.option("--json-out", type=click.Path(), default=None, help="Also write the report as JSON.")
@_with_overrides
def cmd_eval(benchmark: str, config_path: str, json_out: str | None, **kwargs) -> None:
    """Evaluate final-resolved-intent accuracy on a benchmark file."""
    overrides = _overrides_from(kwargs)
    cfg, base = _read_config(config_path)
    deps = _build_deps(cfg, base, overrides)
    cases = load_benchmark(benchmark, deps.store.taxonomy)
    report = evaluate(cases, deps)
    doc = report.to_json()
    acc = doc["overall"]["accuracy"]
    click.echo(f"overall: {doc['overall']['correct']}/{doc['overall']['total']}"
               f" accuracy={'n/a' if acc is None else f'{acc:.3f}'}")
    for seg, s in doc["segments"].items():
        sacc = "n/a" if s["accuracy"] is None else f"{s['accuracy']:.3f}"
        click.echo(f"  {seg:<8} {s['correct']}/{s['total']} accuracy={sacc}")
    if json_out:
        Path(json_out).write_text(json.dumps(doc, indent=2), encoding="utf-8")


@main.command("ablate")
@click.option("--benchmark", type=click.Path(exists=True), default=None, help="Cases file; omit to use --synthetic.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="Pipeline TOML config (required with --benchmark).")
@click.option("--synthetic", "cases_per_family", type=int, default=None, help="Generate a synthetic benchmark with N cases per family.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for synthetic generation.")
@click.option("--json-out", type=click.Path(), default=None, help="Also write the report as JSON.")
@_with_overrides
def cmd_ablate(benchmark, config_path, cases_per_family, seed, json_out, **kwargs) -> None:
    """Run the four-arm ablation and print the accuracy table."""
    overrides = _overrides_from(kwargs)
    if benchmark is None and cases_per_family is None:
        raise click.UsageError("provide --benchmark or --synthetic")
    if benchmark is not None:
        if config_path is None:
            raise click.UsageError("--benchmark requires --config")
        cfg, base = _read_config(config_path)
        deps = _build_deps(cfg, base, overrides)
        cases = load_benchmark(benchmark, deps.store.taxonomy)
    else:
        bench = build_synthetic_benchmark(seed, cases_per_family)
        encoder = HashEncoder(dimension=64, seed=seed)
        deps = PipelineDeps(
            store=bench.store,
            index=build_index(bench.store, encoder),
            encoder=encoder,
            engine=bench.engine(),
            tool=bench.tool,
            whitelist=bench.whitelist,
            policy=PolicyContext.empty(),
            config=_pipeline_config({}, overrides),
        )
        cases = list(bench.cases)
    report = run_ablation(cases, deps)
    click.echo(report.render())
    if json_out:
        Path(json_out).write_text(json.dumps(report.to_json(), indent=2), encoding="utf-8")


@main.command("derive-whitelist")
@click.option("--interactions", required=True, type=click.Path(exists=True), help="Conflict outcomes, one JSON object per line.")
@click.option("--taxonomy", required=True, type=click.Path(exists=True), help="Taxonomy JSON document.")
@click.option("--threshold", type=float, required=True, help="Secondary win rate required, in (0.5, 1].")
@click.option("--min-support", type=int, default=20, show_default=True, help="Minimum observations per pair.")
@click.option("--out", required=True, type=click.Path(), help="Output whitelist JSON.")
def cmd_derive_whitelist(interactions, taxonomy, threshold, min_support, out) -> None:
    """Derive the override whitelist from historical win rates."""
    tax = load_taxonomy(taxonomy)
    whitelist = derive_whitelist(interactions, tax, threshold, min_support)
    doc = {
        "version": whitelist.version,
        "pairs": [
            {"primary": p, "secondary": s} for p, s in sorted(whitelist.pairs)
        ],
    }
    Path(out).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    click.echo(f"wrote {len(whitelist.pairs)} pair(s) -> {out}")


def run() -> None:
    """Console entry point with operational error handling."""
    try:
        main(standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.exceptions.Abort:
        sys.exit(1)
    except QIntentError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    run()
