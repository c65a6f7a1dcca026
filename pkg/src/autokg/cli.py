"""Command line interface: build, query, bench, export, inspect.

Exit codes: 0 success, 1 runtime error, 2 usage or configuration error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import load_config
from .errors import AutoKGError, ConfigurationError, ParameterError
from .hybrid import answer_query, assemble_response_prompt, hybrid_search, vector_search
from .kgraph import export_full_graph, export_subgraph, load_kg
from .llm import provider_from_config as llm_provider_from_config
from .pipeline import TRANSCRIPT_FILENAME, bench_search, build, load_artifacts


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    code = 2 if isinstance(exc, (ConfigurationError, ParameterError)) else 1
    sys.exit(code)


@click.group()
def main():
    """Build keyword knowledge graphs and query them with hybrid search."""


@main.command("build")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True),
              help="JSON config file.")
@click.option("--sequential", is_flag=True, default=False,
              help="Strictly sequential extraction loop (avoid-list updates per call).")
def cmd_build(config_path, sequential):
    """Run the full pipeline: corpus -> embeddings -> graph -> keywords -> KG."""
    try:
        config = load_config(config_path)
        if sequential:
            config.sequential_extraction = True
        artifacts = build(config)
    except AutoKGError as exc:
        _fail(exc)
        return
    click.echo(json.dumps(artifacts.report, sort_keys=True, indent=2))
    click.echo(f"knowledge graph written to {artifacts.kg_path}", err=True)


@main.command("query")
@click.argument("query_text")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--kg", "kg_path", default=None, type=click.Path(),
              help="KG file; defaults to <output_dir>/kg.json.")
@click.option("--search-mode", type=click.Choice(["hybrid", "vector-only"]),
              default="hybrid", show_default=True)
@click.option("--dry-run", is_flag=True, default=False,
              help="Print the assembled prompt without calling the LLM.")
@click.option("--out", "out_path", default=None, type=click.Path(),
              help="Also write the result JSON to this file.")
def cmd_query(query_text, config_path, kg_path, search_mode, dry_run, out_path):
    """Answer a query against a built knowledge graph."""
    try:
        config = load_config(config_path)
        artifacts = load_artifacts(config, kg_path=kg_path)

        if search_mode == "vector-only":
            hits = vector_search(artifacts.embedder(query_text), artifacts.index,
                                 config.search.s_t0)
            payload = {
                "query": query_text,
                "keywords": [],
                "blocks": [{"id": h.id, "stage": h.stage, "angle": h.angle} for h in hits],
            }
            block_texts = [artifacts.corpus.blocks[h.id].text for h in hits]
            click.echo(json.dumps(payload, indent=2))
            if not dry_run:
                for text in block_texts:
                    click.echo(f"* {text}", err=True)
        else:
            if dry_run:
                result = hybrid_search(query_text, artifacts.kg, artifacts.corpus,
                                       artifacts.vectors, config.search,
                                       artifacts.embedder, index=artifacts.index)
                prompt = assemble_response_prompt(
                    query_text, result, artifacts.corpus, config.token_limit,
                    language=config.extraction.language,
                    tokenizer_id=config.tokenizer_id)
                click.echo(prompt)
                payload = result.to_dict()
            else:
                llm = llm_provider_from_config(
                    config.llm,
                    transcript_path=Path(config.output_dir) / TRANSCRIPT_FILENAME)
                answered = answer_query(
                    query_text, artifacts.kg, artifacts.corpus, artifacts.vectors,
                    config.search, artifacts.embedder, llm,
                    token_limit=config.token_limit,
                    max_response_tokens=config.max_response_tokens,
                    language=config.extraction.language,
                    index=artifacts.index)
                click.echo(answered.answer)
                payload = answered.to_dict()
            click.echo(json.dumps(payload, indent=2), err=True)

        if out_path:
            Path(out_path).write_text(json.dumps(payload, indent=2), encoding="utf-8")
    except FileNotFoundError as exc:
        _fail(AutoKGError(f"missing artifact: {exc}"))
    except AutoKGError as exc:
        _fail(exc)


@main.command("bench")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--kg", "kg_path", default=None, type=click.Path())
@click.option("--repetitions", default=100, show_default=True, type=int)
@click.option("--vector-k", default=30, show_default=True, type=int,
              help="Blocks retrieved by the vector-only baseline.")
def cmd_bench(config_path, kg_path, repetitions, vector_k):
    """Compare hybrid vs vector-only search latency on random queries."""
    try:
        config = load_config(config_path)
        artifacts = load_artifacts(config, kg_path=kg_path)
        report = bench_search(artifacts, config.search, repetitions=repetitions,
                              vector_k=vector_k, seed=config.seed)
    except FileNotFoundError as exc:
        _fail(AutoKGError(f"missing artifact: {exc}"))
        return
    except AutoKGError as exc:
        _fail(exc)
        return
    click.echo(json.dumps(report, indent=2))
    click.echo(
        f"hybrid {report['hybrid_mean_s'] * 1000:.3f} ms | "
        f"vector-only {report['vector_mean_s'] * 1000:.3f} ms | "
        f"ratio {report['ratio']:.3f}",
        err=True,
    )


@main.command("export")
@click.option("--config", "config_path", default=None, type=click.Path(exists=True),
              help="Needed when --query is given (for the embedder and corpus).")
@click.option("--kg", "kg_path", default=None, type=click.Path())
@click.option("--query", "query_text", default=None,
              help="Export the query-centered subgraph instead of the full graph.")
@click.option("--format", "fmt", type=click.Choice(["dot", "json"]), default="dot",
              show_default=True)
@click.option("--out", "out_path", default=None, type=click.Path())
def cmd_export(config_path, kg_path, query_text, fmt, out_path):
    """Export the keyword graph (or a query subgraph) as DOT or JSON."""
    try:
        if query_text is not None:
            if config_path is None:
                raise ConfigurationError("--query export requires --config")
            config = load_config(config_path)
            artifacts = load_artifacts(config, kg_path=kg_path)
            result = hybrid_search(query_text, artifacts.kg, artifacts.corpus,
                                   artifacts.vectors, config.search,
                                   artifacts.embedder, index=artifacts.index)
            inner = [k.id for k in result.keywords if k.stage == "similar"]
            outer = [k.id for k in result.keywords if k.stage == "adjacent"]
            document = export_subgraph(
                artifacts.kg, inner, outer,
                block_ids=result.block_ids(),
                query_label=query_text, fmt=fmt)
        else:
            if kg_path is None:
                if config_path is None:
                    raise ConfigurationError("give --kg or --config to locate the KG")
                config = load_config(config_path)
                kg_path = str(Path(config.output_dir) / "kg.json")
            document = export_full_graph(load_kg(kg_path), fmt=fmt)
    except FileNotFoundError as exc:
        _fail(AutoKGError(f"missing artifact: {exc}"))
        return
    except AutoKGError as exc:
        _fail(exc)
        return
    if out_path:
        Path(out_path).write_text(document, encoding="utf-8")
        click.echo(f"wrote {out_path}", err=True)
    else:
        click.echo(document)


@main.command("inspect")
@click.option("--kg", "kg_path", required=True, type=click.Path())
def cmd_inspect(kg_path):
    """Print a KG file's manifest and structural diagnostics."""
    try:
        kg = load_kg(kg_path)
    except FileNotFoundError as exc:
        _fail(AutoKGError(f"missing artifact: {exc}"))
        return
    except AutoKGError as exc:
        _fail(exc)
        return
    degree = kg.degree_distribution()
    click.echo(json.dumps({
        "manifest": kg.manifest,
        "keywords": len(kg.keywords),
        "nnz": int(kg.weights.nnz),
        "max_degree": int(degree.max()) if degree.size else 0,
        "association_sizes": {
            "min": int(min((len(a.block_ids) for a in kg.associations), default=0)),
            "max": int(max((len(a.block_ids) for a in kg.associations), default=0)),
        },
    }, sort_keys=True, indent=2))


if __name__ == "__main__":
    main()
