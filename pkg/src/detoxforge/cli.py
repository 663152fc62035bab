"""Operator CLI wiring the pipeline stages.

Exit codes: 1 usage, 2 config, 3 remote/gateway, 4 data. Commands that emit
offensive content (adversarial suites, curated adversaries, raw generation)
require --i-understand-offensive-content; logs always redact perturbed words.
"""

from __future__ import annotations

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

from . import adversarial as adv
from .corpus import (
    CorpusStore,
    Label,
    ParallelRecord,
    Provenance,
    TextSample,
    load_label_map,
    read_jsonl,
    read_source_dump,
    write_jsonl,
)
from .errors import ConfigError, DataError, DetoxforgeError, GatewayError, StageError
from .evaluation import BleuReferent, EvalEndpoints, EvalRow, evaluate_corpus
from .filtration import DEFAULT_ENSEMBLE, ErrorPolicy, run_filter
from .gateway import EndpointKind, Gateway, load_endpoint_registry
from .metrics import BleuConfig, Smoothing
from .prompts import PromptFactory, default_paraphrase_fewshots, load_fewshot_file
from .report import render_filter_figure, render_roundtrip_figure, write_report_files
from .roundtrip import roundtrip as run_roundtrip
from .runtime import DetoxMode, DetoxRequest, DetoxRuntime

EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_REMOTE = 3
EXIT_DATA = 4

OFFENSIVE_FLAG = "--i-understand-offensive-content"


def _now_iso() -> str:
    from datetime import datetime, timezone

    return datetime.now(timezone.utc).isoformat()


def _build_gateway(ctx) -> Gateway:
    cfg = ctx.obj
    if not cfg.get("endpoints"):
        raise ConfigError("this command needs --endpoints <config.json>")
    registry = load_endpoint_registry(cfg["endpoints"])
    cache_dir = cfg.get("cache_dir") or "./cache"
    return Gateway(registry, cache_dir, replay=cfg.get("replay", False))


@click.group()
@click.option("--endpoints", type=click.Path(), default=None,
              help="Endpoint registry JSON (see README).")
@click.option("--cache-dir", type=click.Path(), default=None,
              help="Response cache directory (default ./cache).")
@click.option("--replay", is_flag=True,
              help="Serve every endpoint call from the cache; no network I/O.")
@click.option("--data-root", type=click.Path(), default="./data",
              help="Corpus store root.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Worker threads for batch endpoint calls.")
@click.pass_context
def cli(ctx, endpoints, cache_dir, replay, data_root, jobs):
    """detoxforge: detoxification pipeline and evaluation harness."""
    ctx.obj = {"endpoints": endpoints, "cache_dir": cache_dir,
               "replay": replay, "data_root": data_root, "jobs": max(1, jobs)}


# -- data -----------------------------------------------------------------------


@cli.command()
@click.option("--platform", required=True)
@click.option("--source", "source_path", required=True, type=click.Path(exists=True),
              help="CSV/TSV/JSONL dump of raw samples.")
@click.option("--label-map", "label_map_path", required=True, type=click.Path(exists=True))
@click.option("--text-field", default="text", show_default=True)
@click.option("--label-field", default="label", show_default=True)
@click.option("--id-field", default=None)
@click.option("--cap", type=int, default=3000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--split", "split_ratios", nargs=3, type=float, default=(0.8, 0.1, 0.1),
              show_default=True)
@click.pass_context
def ingest(ctx, platform, source_path, label_map_path, text_field, label_field,
           id_field, cap, seed, split_ratios):
    """Read a source dump, binarize labels, cap, persist, and split."""
    label_map = load_label_map(label_map_path)
    samples = list(read_source_dump(source_path, text_field=text_field,
                                    label_field=label_field, id_field=id_field,
                                    platform=platform, label_map=label_map))
    store = CorpusStore(ctx.obj["data_root"])
    manifest = store.ingest(platform, samples, cap=cap, seed=seed,
                            split_ratios=split_ratios)
    train, dev, test = store.split(manifest)
    click.echo(json.dumps({
        "platform": platform, "ingested": len(samples),
        "kept": sum(manifest.counts.values()), "counts": manifest.counts,
        "splits": {"train": len(train), "dev": len(dev), "test": len(test)},
    }, indent=2))


def _map_records(ctx, items, fn):
    jobs = ctx.obj["jobs"]
    if jobs == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


@cli.command("generate-parallel")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True),
              help="JSONL of TextSample rows.")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--endpoint", "endpoint_id", default="chat", show_default=True)
@click.option("--dry-run", is_flag=True, help="Render prompts only; no network I/O.")
@click.pass_context
def generate_parallel(ctx, in_path, out_path, endpoint_id, dry_run):
    """Generate opposite-label counterparts for every sample."""
    factory = PromptFactory()
    samples = [TextSample.from_json(d) for d in read_jsonl(in_path)]
    if dry_run:
        for s in samples:
            click.echo(factory.build_parallel_prompt(s.text, s.label).rendered)
            click.echo("-" * 72)
        return
    gateway = _build_gateway(ctx)

    def generate(sample):
        prompt = factory.build_parallel_prompt(sample.text, sample.label)
        completion = gateway.complete(endpoint_id, prompt)
        return ParallelRecord(
            source=sample, target_text=completion.text.strip(),
            source_label=sample.label,
            provenance=Provenance(endpoint_id=endpoint_id,
                                  prompt_hash=prompt.sha256(),
                                  timestamp=_now_iso()))

    records = _map_records(ctx, samples, generate)
    write_jsonl(out_path, (r.to_json() for r in records))
    click.echo(f"wrote {len(records)} parallel records to {out_path}")


@cli.command("annotate-explanations")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--endpoint", "endpoint_id", default="chat", show_default=True)
@click.option("--dry-run", is_flag=True)
@click.pass_context
def annotate_explanations(ctx, in_path, out_path, endpoint_id, dry_run):
    """Ask the chat endpoint why each toxic side is toxic (<= 3 sentences)."""
    factory = PromptFactory()
    records = [ParallelRecord.from_json(d) for d in read_jsonl(in_path)]
    if dry_run:
        for r in records:
            toxic = r.source.text if r.source_label is Label.TOXIC else r.target_text
            click.echo(factory.build_explanation_prompt(toxic).rendered)
            click.echo("-" * 72)
        return
    gateway = _build_gateway(ctx)

    def annotate(record):
        toxic = record.source.text if record.source_label is Label.TOXIC else record.target_text
        prompt = factory.build_explanation_prompt(toxic)
        completion = gateway.complete(endpoint_id, prompt)
        return ParallelRecord(
            source=record.source, target_text=record.target_text,
            source_label=record.source_label,
            explanation=completion.text.strip(),
            paraphrase_label=record.paraphrase_label,
            provenance=Provenance(endpoint_id=endpoint_id,
                                  prompt_hash=prompt.sha256(),
                                  timestamp=_now_iso()))

    out = _map_records(ctx, records, annotate)
    write_jsonl(out_path, (r.to_json() for r in out))
    click.echo(f"annotated {len(out)} records -> {out_path}")


@cli.command("annotate-paraphrase")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--endpoint", "endpoint_id", default="chat", show_default=True)
@click.option("--fewshot", "fewshot_path", type=click.Path(exists=True), default=None,
              help="JSONL of five labeled exemplars (default: bundled set).")
@click.option("--dry-run", is_flag=True)
@click.pass_context
def annotate_paraphrase(ctx, in_path, out_path, endpoint_id, fewshot_path, dry_run):
    """Label each pair as semantically similar (yes) or not (no)."""
    factory = PromptFactory()
    fewshots = (load_fewshot_file(fewshot_path) if fewshot_path
                else default_paraphrase_fewshots())
    records = [ParallelRecord.from_json(d) for d in read_jsonl(in_path)]

    def pair_of(record):
        if record.source_label is Label.TOXIC:
            return record.source.text, record.target_text
        return record.target_text, record.source.text

    if dry_run:
        for r in records:
            click.echo(factory.build_paraphrase_prompt(pair_of(r), fewshots).rendered)
            click.echo("-" * 72)
        return
    gateway = _build_gateway(ctx)

    def annotate(record):
        from .corpus import ParaphraseLabel

        prompt = factory.build_paraphrase_prompt(pair_of(record), fewshots)
        completion = gateway.complete(endpoint_id, prompt)
        answer = completion.text.strip().strip(".").lower()
        if answer.startswith("yes"):
            label = ParaphraseLabel.YES
        elif answer.startswith("no"):
            label = ParaphraseLabel.NO
        else:
            raise DataError(f"record {record.source.id}: unparseable yes/no "
                            f"answer {completion.text!r}")
        return ParallelRecord(
            source=record.source, target_text=record.target_text,
            source_label=record.source_label, explanation=record.explanation,
            paraphrase_label=label,
            provenance=Provenance(endpoint_id=endpoint_id,
                                  prompt_hash=prompt.sha256(),
                                  timestamp=_now_iso()))

    out = _map_records(ctx, records, annotate)
    write_jsonl(out_path, (r.to_json() for r in out))
    click.echo(f"labeled {len(out)} records -> {out_path}")


# -- filtration -----------------------------------------------------------------


@cli.command("filter")
@click.option("--ensemble", "ensemble_path", required=True, type=click.Path(exists=True),
              help='Endpoint registry JSON; optional "ensemble": [ids] key '
                   "(default: every classifier endpoint in the file).")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", type=click.Path(), default=".", show_default=True)
@click.option("--error-policy", type=click.Choice(["abort", "skip"]), default="skip",
              show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.pass_context
def filter_cmd(ctx, ensemble_path, in_path, out_dir, error_policy, figures):
    """Apply the ensemble keep rule; writes filtered.jsonl + stats.json."""
    registry = load_endpoint_registry(ensemble_path)
    with open(ensemble_path, encoding="utf-8") as f:
        doc = json.load(f)
    ensemble = doc.get("ensemble") or [
        eid for eid, spec in registry.items() if spec.kind is EndpointKind.CLASSIFIER]
    if not ensemble:
        raise ConfigError(f"{ensemble_path} defines no classifier endpoints")
    cache_dir = ctx.obj.get("cache_dir") or "./cache"
    gateway = Gateway(registry, cache_dir, replay=ctx.obj.get("replay", False))

    records = [ParallelRecord.from_json(d) for d in read_jsonl(in_path)]
    kept, stats = run_filter(records, ensemble, gateway,
                             error_policy=ErrorPolicy(error_policy))
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_jsonl(out_dir / "filtered.jsonl", (r.to_json() for r in kept))
    stats_doc = stats.to_json()
    with open(out_dir / "stats.json", "w", encoding="utf-8") as f:
        json.dump(stats_doc, f, indent=2)
        f.write("\n")
    if figures:
        render_filter_figure(stats_doc, out_dir / "stats.png")
    totals = stats.totals()
    click.echo(f"kept {totals['kept']} / {totals['original']} "
               f"({totals['errors']} errors) -> {out_dir}/filtered.jsonl")
    if totals["errors"]:
        sys.exit(EXIT_DATA)


# -- evaluation -------------------------------------------------------------------


@cli.command()
@click.option("--records", "records_path", required=True, type=click.Path(exists=True),
              help="JSONL rows {platform, input, output, reference?}.")
@click.option("--mode", type=click.Choice(["reference", "self"]), default="reference",
              show_default=True, help="BLEU referent.")
@click.option("--smoothing", type=click.Choice(["none", "add-epsilon"]), default="none",
              show_default=True)
@click.option("--style-classifier", default="style_classifier", show_default=True)
@click.option("--fluency-classifier", default="fluency_classifier", show_default=True)
@click.option("--bertscore-embedder", default="bertscore_embedder", show_default=True)
@click.option("--sim-embedder", default="sim_embedder", show_default=True)
@click.option("--out-dir", type=click.Path(), default="./eval", show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.pass_context
def evaluate(ctx, records_path, mode, smoothing, style_classifier, fluency_classifier,
             bertscore_embedder, sim_embedder, out_dir, figures):
    """Score a corpus per platform; writes report.json/.txt/.png."""
    gateway = _build_gateway(ctx)
    rows = [EvalRow.from_json(d) for d in read_jsonl(records_path)]
    endpoints = EvalEndpoints(style_classifier=style_classifier,
                              fluency_classifier=fluency_classifier,
                              bertscore_embedder=bertscore_embedder,
                              sim_embedder=sim_embedder)
    rep = evaluate_corpus(rows, gateway, endpoints,
                          BleuConfig(smoothing=Smoothing(smoothing)),
                          referent=BleuReferent(mode))
    paths = write_report_files(rep.rows, rep.overall, out_dir,
                               extra={"refusals": rep.refusals,
                                      "bleu_referent": rep.bleu_referent},
                               figure=figures)
    click.echo((Path(paths["txt"])).read_text(encoding="utf-8"))
    click.echo(f"report files: {', '.join(str(p) for p in paths.values())}")


# -- adversaries ------------------------------------------------------------------


@cli.command()
@click.option("--n", type=int, default=5000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="AdversaryConfig JSON (default: bundled word/template lists).")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option(OFFENSIVE_FLAG, "acknowledged", is_flag=True)
def adversarial(n, seed, config_path, out_path, acknowledged):
    """Generate the seeded token-level adversarial testbed (JSONL)."""
    if not acknowledged:
        raise click.UsageError(
            f"adversarial output contains offensive content; pass {OFFENSIVE_FLAG}")
    if config_path:
        with open(config_path, encoding="utf-8") as f:
            base = adv.AdversaryConfig.from_json(json.load(f))
        cfg = adv.AdversaryConfig(toxic_words=base.toxic_words, templates=base.templates,
                                  perturb_chars=base.perturb_chars, n=n, seed=seed)
    else:
        cfg = adv.default_config(n=n, seed=seed)
    sentences = adv.generate_testbed(cfg)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    Path(out_path).write_bytes(adv.serialize_testbed(sentences))
    # Log line stays redacted regardless of the acknowledgment flag.
    sample = sentences[0].redacted_word() if sentences else "-"
    click.echo(f"wrote {len(sentences)} adversarial sentences to {out_path} "
               f"(e.g. word {sample})")


@cli.command("curated-adversaries")
@click.option("--fixture", "fixture_path", type=click.Path(), default=None)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.option(OFFENSIVE_FLAG, "acknowledged", is_flag=True)
def curated_adversaries(fixture_path, out_path, acknowledged):
    """Emit the 15 curated masked-token inputs for manual inspection."""
    if not acknowledged:
        raise click.UsageError(
            f"the curated suite contains offensive content; pass {OFFENSIVE_FLAG}")
    suite = adv.curated_suite(fixture_path)
    lines = [json.dumps({"text": c.text, "adversarial_token": c.adversarial_token},
                        ensure_ascii=False) for c in suite]
    body = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(body, encoding="utf-8")
        click.echo(f"wrote {len(suite)} curated adversaries to {out_path}")
    else:
        click.echo(body, nl=False)


# -- round-trip --------------------------------------------------------------------


@cli.command()
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True),
              help="JSONL of ParallelRecord rows.")
@click.option("--language", required=True, help="Target language (BCP-47).")
@click.option("--translator", default="translator", show_default=True)
@click.option("--classifier", default="style_classifier", show_default=True)
@click.option("--embedder", default="sim_embedder", show_default=True)
@click.option("--limit", type=int, default=None, help="Use only the first N pairs.")
@click.option("--out-dir", type=click.Path(), default="./roundtrip", show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.pass_context
def roundtrip(ctx, pairs_path, language, translator, classifier, embedder,
              limit, out_dir, figures):
    """Translate pairs out and back; measure toxicity retention + similarity."""
    gateway = _build_gateway(ctx)
    pairs = [ParallelRecord.from_json(d) for d in read_jsonl(pairs_path)]
    if limit:
        pairs = pairs[:limit]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rep = run_roundtrip(pairs, language, translator, classifier, embedder,
                        gateway, audit_path=out_dir / "audit.jsonl")
    doc = rep.to_json()
    with open(out_dir / "langreport.json", "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, ensure_ascii=False)
        f.write("\n")
    if figures:
        render_roundtrip_figure([doc], out_dir / "langreport.png")
    click.echo(json.dumps(doc, indent=2, ensure_ascii=False))


# -- runtime -----------------------------------------------------------------------


@cli.command()
@click.option("--text", required=True)
@click.option("--mode", type=click.Choice([m.value for m in DetoxMode]),
              default=DetoxMode.COT_EXPL.value, show_default=True)
@click.option("--detox-endpoint", default="detox_model", show_default=True)
@click.option("--paraphrase-endpoint", default="paraphrase_classifier", show_default=True)
@click.option("--dry-run", is_flag=True, help="Print the prompt; no network I/O.")
@click.pass_context
def detoxify(ctx, text, mode, detox_endpoint, paraphrase_endpoint, dry_run):
    """Run one text through explanation + rewrite + paraphrase gate."""
    req = DetoxRequest(text=text, mode=DetoxMode(mode),
                       detox_endpoint=detox_endpoint,
                       paraphrase_endpoint=paraphrase_endpoint)
    if dry_run:
        factory = PromptFactory()
        prompt = DetoxRuntime(gateway=None, factory=factory)._prompt(req)
        click.echo(prompt if isinstance(prompt, str) else prompt.rendered)
        return
    gateway = _build_gateway(ctx)
    runtime = DetoxRuntime(gateway)
    result = runtime.detoxify(req)
    click.echo(json.dumps(result.to_json(), indent=2, ensure_ascii=False))
    if result.warning:
        click.echo("warning: rewrite is not a confirmed paraphrase of the input",
                   err=True)


# -- service -----------------------------------------------------------------------


@cli.command()
@click.option("--host", default=None, help="Default from DETOXFORGE_BIND.")
@click.option("--port", type=int, default=None)
@click.option("--data-dir", type=click.Path(), default="./service-data", show_default=True)
@click.option("--workers", type=int, default=2, show_default=True)
@click.option("--queue-capacity", type=int, default=16, show_default=True)
@click.pass_context
def serve(ctx, host, port, data_dir, workers, queue_capacity):
    """Run the HTTP service (no auth; bind to localhost)."""
    import uvicorn

    from .service import ServiceSettings, bind_address, create_app

    default_host, default_port = bind_address()
    settings = ServiceSettings(
        data_dir=Path(data_dir),
        endpoints_path=Path(ctx.obj["endpoints"]) if ctx.obj.get("endpoints") else None,
        cache_dir=Path(ctx.obj["cache_dir"]) if ctx.obj.get("cache_dir") else None,
        replay=ctx.obj.get("replay", False),
        workers=workers, queue_capacity=queue_capacity)
    app = create_app(settings)
    uvicorn.run(app, host=host or default_host, port=port or default_port,
                log_level="info")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as e:
        sys.exit(e.exit_code)
    except click.ClickException as e:
        e.show()
        sys.exit(EXIT_USAGE)
    except click.Abort:
        sys.exit(EXIT_USAGE)
    except ConfigError as e:
        click.echo(f"config error: {e}", err=True)
        sys.exit(EXIT_CONFIG)
    except StageError as e:
        if isinstance(e.cause, GatewayError):
            click.echo(f"remote error: {e}", err=True)
            sys.exit(EXIT_REMOTE)
        click.echo(f"error: {e}", err=True)
        sys.exit(EXIT_DATA)
    except GatewayError as e:
        click.echo(f"remote error: {e}", err=True)
        sys.exit(EXIT_REMOTE)
    except (DataError, DetoxforgeError) as e:
        click.echo(f"data error: {e}", err=True)
        sys.exit(EXIT_DATA)
    except OSError as e:
        click.echo(f"i/o error: {e}", err=True)
        sys.exit(EXIT_DATA)


if __name__ == "__main__":
    main()
