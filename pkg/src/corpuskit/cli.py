"""Command-line entry points.

Subcommands: ``run`` (the 8-stage pipeline), ``train`` (classifiers and the
n-gram model), ``coreset``, ``longctx``, ``synth``, ``stats``. Logs go to
standard error; corpus files are line-delimited JSON, gzip-transparent.
Exit codes: 1 usage, 2 configuration, 3 data errors.
"""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import classify, fixtures, ngram_lm, synth as synth_mod
from .config import ALL_STAGE_NAMES, load_config
from .coreset import CoreSetConfig, assign_metadata, build_core_set
from .errors import ConfigInvalid, CorpusError
from .longctx import BucketPlan, CharTokenizer, bucketize
from .pipeline import make_refilter_callable, run_pipeline
from .records import read_corpus, write_corpus
from .stats import AXES, distribution, distribution_csv, distribution_json_series

log = logging.getLogger("corpuskit")


def _read_labeled(path: str) -> list[tuple[str, str]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rec = json.loads(line)
                rows.append((rec["text"], rec["label"]))
    return rows


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="debug logging")
def cli(verbose: bool):
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--input", "input_path", type=click.Path(), required=True)
@click.option("--output", "output_path", type=click.Path(), required=True)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=None, help="recorded in the manifest")
@click.option("--stages", default=None, help=f"comma list from: {','.join(ALL_STAGE_NAMES)}")
@click.option("--dry-run", is_flag=True)
def run(config_path, input_path, output_path, workers, seed, stages, dry_run):
    """Run the 8-stage filtering pipeline over a corpus file."""
    cfg = load_config(config_path)
    stage_list = stages.split(",") if stages else None
    resolved = cfg.stages(stage_list)
    if dry_run:
        click.echo("stages: " + " -> ".join(s.value for s in resolved))
        click.echo(f"config_hash: {cfg.config_hash()}")
        return
    result = run_pipeline(
        cfg, input_path, output_path,
        workers=workers, stages_override=stage_list, seed=seed,
    )
    click.echo(json.dumps(result.manifest, ensure_ascii=False, sort_keys=True, indent=2))


@cli.group()
def train():
    """Train pipeline models from labeled line-delimited records."""


@train.command("domain")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--buckets-log2", "b", type=int, default=20, show_default=True)
def train_domain(input_path, output_path, seed, b):
    """Subdomain classifier from {text, label} records."""
    model = classify.train_domain_classifier(_read_labeled(input_path), seed=seed, b=b)
    classify.save_model(model, output_path)
    click.echo(f"wrote {output_path} ({len(model.classes)} classes)")


@train.command("quality")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--buckets-log2", "b", type=int, default=20, show_default=True)
def train_quality(input_path, output_path, seed, b):
    """Binary quality classifier from {text, label: good|bad} records."""
    from .quality import train_quality_model

    spec = classify.FeatureSpec(b=b, seed=seed)
    model = train_quality_model(_read_labeled(input_path), spec)
    classify.save_model(model, output_path)
    click.echo(f"wrote {output_path}")


@train.command("toxicity")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--buckets-log2", "b", type=int, default=20, show_default=True)
def train_toxicity(input_path, output_path, seed, b):
    """Toxicity category model from {text, label: category|clean} records."""
    from .quality import train_toxicity_model

    spec = classify.FeatureSpec(b=b, seed=seed)
    labeled = _read_labeled(input_path)
    categories = tuple(sorted({lab for _, lab in labeled if lab != "clean"}))
    model = train_toxicity_model(labeled, categories, spec)
    classify.save_model(model, output_path)
    click.echo(f"wrote {output_path} ({len(model.classes)} categories)")


@train.command("lm")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="corpus JSONL; document text fields feed the model")
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--order", type=int, default=5, show_default=True)
@click.option("--calibrate", "calibrate_path", type=click.Path(exists=True), default=None,
              help="corpus JSONL sampled for the perplexity band")
@click.option("--band-out", type=click.Path(), default=None)
@click.option("--quantiles", nargs=2, type=float, default=(0.01, 0.99), show_default=True)
def train_lm(input_path, output_path, order, calibrate_path, band_out, quantiles):
    """Character n-gram model (+ optional two-sided band calibration)."""
    model = ngram_lm.train_lm(read_corpus(input_path), order=order)
    ngram_lm.save_lm(model, output_path)
    click.echo(f"wrote {output_path} (order {model.order}, vocab {len(model.vocab)})")
    if calibrate_path:
        band = ngram_lm.calibrate_band(model, list(read_corpus(calibrate_path)), tuple(quantiles))
        out = band_out or str(Path(output_path).with_suffix(".band.json"))
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(band.to_dict(), fh)
        click.echo(f"wrote {out} (band [{band.low:.3f}, {band.high:.3f}])")


@cli.command("stats")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--axis", required=True, type=click.Choice(AXES))
@click.option("--output", "output_path", type=click.Path(), default=None,
              help="CSV destination (default: stdout)")
@click.option("--json", "json_path", type=click.Path(), default=None,
              help="also write a plot-ready JSON series")
def stats_cmd(input_path, axis, output_path, json_path):
    """Distribution of a corpus along one classification axis."""
    rows = distribution(read_corpus(input_path), axis)
    csv_text = distribution_csv(rows)
    if output_path:
        Path(output_path).write_text(csv_text, encoding="utf-8")
        click.echo(f"wrote {output_path}")
    else:
        click.echo(csv_text, nl=False)
    if json_path:
        Path(json_path).write_text(distribution_json_series(rows), encoding="utf-8")
        click.echo(f"wrote {json_path}")


@cli.command("coreset")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--output-dir", required=True, type=click.Path())
@click.option("--capacity", type=int, required=True, help="per-cell capacity")
@click.option("--sim-threshold", type=float, default=0.9, show_default=True)
def coreset_cmd(input_path, output_dir, capacity, sim_threshold):
    """Build the domain-by-skill core set from tagged candidates."""
    docs = list(read_corpus(input_path))
    tagged = assign_metadata(docs)
    subdomains = tuple(sorted({t.subdomain for t in tagged}))
    skills = tuple(sorted({t.skill for t in tagged}))
    matrix, rejections = build_core_set(
        tagged,
        CoreSetConfig(
            capacity=capacity, sim_threshold=sim_threshold,
            subdomains=subdomains, skills=skills,
        ),
    )
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "coreset_manifest.json").write_text(
        json.dumps(matrix.to_manifest(), ensure_ascii=False, sort_keys=True, indent=2),
        encoding="utf-8",
    )
    (out / "fill_ratio.csv").write_text(matrix.fill_ratio_csv(), encoding="utf-8")
    with open(out / "rejections.jsonl", "w", encoding="utf-8") as fh:
        for r in rejections:
            fh.write(json.dumps(r.__dict__, ensure_ascii=False, sort_keys=True) + "\n")
    click.echo(f"accepted {matrix.total_accepted()} into {len(matrix.capacity)} cells")


@cli.command("longctx")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
@click.option("--output-dir", type=click.Path(), default=None)
@click.option("--quota", type=int, default=2200, show_default=True)
@click.option("--dry-run", is_flag=True, help="print the bucket plan, write nothing")
def longctx_cmd(input_path, output_dir, quota, dry_run):
    """Bucket long documents for long-context sampling."""
    plan = BucketPlan(quota_per_bucket_per_language=quota)
    if dry_run:
        click.echo(f"buckets ({len(plan.bucket_lengths)}): {list(plan.bucket_lengths)}")
        click.echo(f"quota per (bucket, language): {plan.quota_per_bucket_per_language}")
        click.echo(f"languages: {[l.value for l in plan.languages]}")
        return
    if not output_dir:
        raise ConfigInvalid("--output-dir required unless --dry-run")
    result = bucketize(read_corpus(input_path), plan, CharTokenizer())
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "buckets": {
            f"{bucket}/{lang}": ids
            for (bucket, lang), ids in sorted(result.ids_by_bucket().items())
        },
        "skipped": result.skipped,
    }
    (out / "buckets.json").write_text(
        json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2), encoding="utf-8"
    )
    n = sum(len(v) for v in result.assignments.values())
    click.echo(f"bucketized {n} docs, skipped {len(result.skipped)}")


@cli.group("synth")
def synth_group():
    """Synthetic-rewrite orchestration and the balance feedback loop."""


@synth_group.command("rewrite")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--input", "input_path", required=True, type=click.Path(exists=True),
              help="rejected-pool corpus JSONL")
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--generator", "generator_kind", type=click.Choice(["echo", "http"]),
              default="echo", show_default=True)
@click.option("--refilter/--no-refilter", "do_refilter", default=True, show_default=True,
              help="re-run survivors through the filtering pipeline")
def synth_rewrite(config_path, input_path, output_path, generator_kind, do_refilter):
    """Two-stage rewrite of rejected documents, then mandatory re-filtering."""
    cfg = load_config(config_path)
    if generator_kind == "http":
        generator = synth_mod.HttpGenerator()
    else:
        generator = synth_mod.EchoGenerator()
    rewritten = []
    for doc in read_corpus(input_path):
        try:
            analysis = synth_mod.analyze_topic(doc, _echo_analyzer(doc) if generator_kind == "echo" else generator)
            for child in synth_mod.split_document(doc, analysis):
                rewritten.append(synth_mod.rewrite(child, analysis, generator))
        except CorpusError as exc:
            log.warning("skipping %s: %s", doc.id, exc)
    if do_refilter:
        pipeline_fn = make_refilter_callable(cfg)
        kept, rejected = synth_mod.refilter(rewritten, pipeline_fn)
        log.info("refilter kept %d/%d synthetic docs", len(kept), len(rewritten))
    else:
        kept = rewritten
    write_corpus(kept, output_path)
    click.echo(f"wrote {len(kept)} synthetic docs to {output_path}")


def _echo_analyzer(doc):
    """Offline topic analysis: treat every paragraph as relevant."""
    n = len(synth_mod.split_paragraphs(doc.text))
    indices = ", ".join(str(i) for i in range(n))
    reply = f"```analysis\ntopic: document\nparagraphs: [{indices}]\nsplits: []\n```"
    return synth_mod.ScriptedGenerator([reply] * 3)


@synth_group.command("feedback")
@click.option("--current", "current_path", required=True, type=click.Path(exists=True),
              help="JSON {label: share} of the present distribution")
@click.option("--targets", "targets_path", required=True, type=click.Path(exists=True),
              help="JSON {label: share} targets")
@click.option("--total-orders", type=int, default=1000, show_default=True)
def synth_feedback(current_path, targets_path, total_orders):
    """Deficit-proportional generation work orders."""
    current = json.loads(Path(current_path).read_text(encoding="utf-8"))
    targets = json.loads(Path(targets_path).read_text(encoding="utf-8"))
    orders = synth_mod.balance_feedback(current, targets, {}, total_orders=total_orders)
    click.echo(json.dumps([o.__dict__ for o in orders], ensure_ascii=False, indent=2))


@cli.command("fixture")
@click.option("--kind", type=click.Choice(["noisy", "pii"]), default="noisy", show_default=True)
@click.option("--n", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--output", "output_path", required=True, type=click.Path())
def fixture_cmd(kind, n, seed, output_path):
    """Generate the deterministic synthetic corpora used by tests and demos."""
    docs = (
        fixtures.build_noisy_corpus(n, seed)
        if kind == "noisy"
        else fixtures.build_pii_corpus(n, seed)
    )
    write_corpus(docs, output_path)
    click.echo(f"wrote {len(docs)} docs to {output_path}")


def main(argv: list[str] | None = None) -> int:
    """Entry point with the documented exit-code contract."""
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        return 1
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        click.echo(cli.get_help(click.Context(cli)), err=True)
        return 1
    except ConfigInvalid as exc:
        click.echo(f"config error: {exc}", err=True)
        return 2
    except (CorpusError, OSError, json.JSONDecodeError) as exc:
        click.echo(f"data error: {exc}", err=True)
        return 3


if __name__ == "__main__":
    sys.exit(main())
