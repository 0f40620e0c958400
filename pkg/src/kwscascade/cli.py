"""Command-line surface: compile graphs, run the cascade, evaluate corpora.

Batch only, never interactive. Diagnostics go to stderr, data to files or
stdout; exit code 0 means success. All commands are deterministic given
identical inputs and seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evaluation, fst, synth
from .aligner import AlignerConfig, force_align, pushback, stage2_verify
from .detector import DetectorConfig
from .pipeline import Engine, PipelineConfig, detections_to_jsonl, run_pipeline
from .posteriors import SegmentRef, load_stream
from .symbols import parse_keyword_set, parse_lexicon, parse_phone_set
from .verifier import (
    PooledPosteriorScorer,
    VerifierConfig,
    beam_search,
    load_table_fixture,
    stage3_verify,
)

_CONFIG_KEYS = {"phones", "lexicon", "keywords", "stages", "detector", "aligner", "verifier"}
_DETECTOR_KEYS = {"beam_width", "allow_same_label_loop", "refractory_emissions"}
_ALIGNER_KEYS = {"t_d", "tau", "garbage_mode"}
_VERIFIER_KEYS = {"beam_width", "upsilon", "scorer"}


class CliError(Exception):
    pass


def _check_keys(data: dict, allowed: set[str], where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise CliError(f"unknown {where} config keys: {sorted(unknown)}")


def load_config(path: str | None) -> tuple[PipelineConfig, dict[str, Path]]:
    """Read the JSON config; returns the pipeline config and resolved paths."""
    if path is None:
        return PipelineConfig(), {}
    cfg_path = Path(path)
    try:
        data = json.loads(cfg_path.read_text())
    except OSError as e:
        raise CliError(f"cannot read config: {e}") from None
    except json.JSONDecodeError as e:
        raise CliError(f"bad config JSON: {e}") from None
    if not isinstance(data, dict):
        raise CliError("config must be a JSON object")
    _check_keys(data, _CONFIG_KEYS, "top-level")
    _check_keys(data.get("detector", {}), _DETECTOR_KEYS, "detector")
    _check_keys(data.get("aligner", {}), _ALIGNER_KEYS, "aligner")
    _check_keys(data.get("verifier", {}), _VERIFIER_KEYS, "verifier")
    try:
        config = PipelineConfig(
            detector=DetectorConfig(**data.get("detector", {})),
            aligner=AlignerConfig(**data.get("aligner", {})),
            verifier=VerifierConfig(**data.get("verifier", {})),
            stages=data.get("stages", 3),
        )
    except (TypeError, ValueError) as e:
        raise CliError(f"bad config: {e}") from None
    paths = {}
    for key in ("phones", "lexicon", "keywords"):
        if key in data:
            paths[key] = (cfg_path.parent / data[key]).resolve()
    return config, paths


def _load_symbols(paths: dict[str, Path], args):
    phones_path = getattr(args, "phones", None) or paths.get("phones")
    lexicon_path = getattr(args, "lexicon", None) or paths.get("lexicon")
    keywords_path = getattr(args, "keywords", None) or paths.get("keywords")
    if not phones_path or not lexicon_path:
        raise CliError("phones and lexicon files are required (flags or config)")
    try:
        phones = parse_phone_set(Path(phones_path).read_text())
        lexicon = parse_lexicon(Path(lexicon_path).read_text(), phones)
    except OSError as e:
        raise CliError(str(e)) from None
    keyword_set = None
    if keywords_path:
        try:
            keyword_set = parse_keyword_set(Path(keywords_path).read_text(), lexicon)
        except OSError as e:
            raise CliError(str(e)) from None
    return phones, lexicon, keyword_set


def _make_scorer(config: PipelineConfig, phones, ali_stream):
    if config.verifier.scorer == "pooled":
        return PooledPosteriorScorer(ali_stream)
    fixture = config.verifier.scorer.split(":", 1)[1]
    return load_table_fixture(fixture, phones)


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------


def cmd_compile_graph(args, config, paths) -> int:
    phones, lexicon, keyword_set = _load_symbols(paths, args)
    if keyword_set is None:
        raise CliError("keywords file is required (flag or config)")
    graph = fst.build_decoding_graph(lexicon, keyword_set)
    Path(args.out).write_text(fst.to_text(graph))
    print(f"wrote {graph.num_states}-state graph to {args.out}", file=sys.stderr)
    return 0


def cmd_run(args, config, paths) -> int:
    phones, lexicon, keyword_set = _load_symbols(paths, args)
    if keyword_set is None:
        raise CliError("keywords file is required (flag or config)")
    engine = Engine.build(phones, lexicon, keyword_set)
    det_stream = load_stream(args.det)
    ali_stream = load_stream(args.ali)
    scorer = _make_scorer(config, phones, ali_stream) if config.stages >= 3 else None
    detections = run_pipeline(engine, det_stream, ali_stream, config, scorer=scorer)
    text = detections_to_jsonl(detections, det_stream.frame_duration)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_align(args, config, paths) -> int:
    phones, lexicon, _ = _load_symbols(paths, args)
    if args.keyword not in lexicon:
        raise CliError(f"keyword {args.keyword!r} not in lexicon")
    units = lexicon.pronunciation(args.keyword)
    stream = load_stream(args.ali)
    span = (pushback(args.t0, config.aligner.t_d), args.t_end)
    graph = fst.build_alignment_graph(units, with_garbage=True)
    result = force_align(stream, span, graph, config.aligner, phones.garbage_id)
    out = {
        "keyword": args.keyword,
        "span_start": result.span_start,
        "t_r": result.t_r,
        "t_end": result.t_end,
        "s1": result.score,
        "duration": result.duration,
        "accepted": stage2_verify(result, config.aligner.tau),
        "framewise": [
            "(g)" if label == fst.GARBAGE else phones.name_of(label)
            for label in result.framewise
        ],
    }
    print(json.dumps(out, indent=2))
    return 0


def cmd_verify(args, config, paths) -> int:
    phones, lexicon, _ = _load_symbols(paths, args)
    if args.keyword not in lexicon:
        raise CliError(f"keyword {args.keyword!r} not in lexicon")
    units = lexicon.pronunciation(args.keyword)
    stream = load_stream(args.ali)
    scorer = _make_scorer(config, phones, stream)
    segment = SegmentRef(stream, args.t_r, args.t_end, label=args.segment_id or "")
    beam = beam_search(scorer, segment, len(units), config.verifier.beam_width)
    verdict = stage3_verify(beam, units, config.verifier.upsilon)
    out = {
        "keyword": args.keyword,
        "matched": verdict.matched,
        "s2": verdict.s2,
        "accepted": verdict.accepted,
        "beam": [
            {"tokens": [phones.name_of(t) for t in hyp.tokens], "logp": hyp.logp_sum}
            for hyp in beam
        ],
    }
    print(json.dumps(out, indent=2))
    return 0


def cmd_eval(args, config, paths) -> int:
    phones, lexicon, keyword_set = _load_symbols(paths, args)
    if keyword_set is None:
        raise CliError("keywords file is required (flag or config)")
    engine = Engine.build(phones, lexicon, keyword_set)
    utts = evaluation.load_manifest(args.manifest)
    positives = [u for u in utts if u.label is not None]
    negatives = [u for u in utts if u.label is None]
    report = evaluation.evaluate_corpus(
        engine, positives, negatives, config, jobs=args.jobs
    )
    text = json.dumps(report.to_dict(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_roc(args, config, paths) -> int:
    phones, lexicon, keyword_set = _load_symbols(paths, args)
    if keyword_set is None:
        raise CliError("keywords file is required (flag or config)")
    try:
        grid = [float(v) for v in args.tau_grid.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"bad tau grid {args.tau_grid!r}") from None
    engine = Engine.build(phones, lexicon, keyword_set)
    utts = evaluation.load_manifest(args.manifest)
    positives = [u for u in utts if u.label is not None]
    negatives = [u for u in utts if u.label is None]
    points = evaluation.roc_sweep(
        engine, positives, negatives, config, grid, sweep=args.sweep, jobs=args.jobs
    )
    Path(args.out).write_text(evaluation.roc_to_csv(points))
    if args.svg:
        Path(args.svg).write_text(evaluation.roc_to_svg(points))
    return 0


def cmd_synth(args, config, paths) -> int:
    phones, lexicon, _ = _load_symbols(paths, args)
    try:
        spec_data = json.loads(Path(args.spec).read_text())
    except OSError as e:
        raise CliError(str(e)) from None
    except json.JSONDecodeError as e:
        raise CliError(f"bad synth spec JSON: {e}") from None
    try:
        spec = synth.SynthSpec.from_dict(spec_data)
        corpus = synth.synth_corpus(phones, lexicon, spec, seed=args.seed)
    except (TypeError, ValueError) as e:
        raise CliError(str(e)) from None
    manifest = synth.write_corpus(corpus, args.out_dir)
    print(f"wrote {len(corpus.positives)} positives and {len(corpus.negatives)} "
          f"negatives; manifest at {manifest}", file=sys.stderr)
    return 0


# ----------------------------------------------------------------------
# Argument parsing
# ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kwscascade",
        description="Multi-stage keyword spotting over frame-level posterior streams",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--jobs", type=int, default=1, help="parallel utterance workers")
    parser.add_argument("--seed", type=int, default=0, help="seed for synthetic corpora")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_symbol_flags(p):
        p.add_argument("--phones", help="symbol table (overrides config)")
        p.add_argument("--lexicon", help="lexicon file (overrides config)")

    p = sub.add_parser("compile-graph", help="compile and write the decoding graph")
    add_symbol_flags(p)
    p.add_argument("--keywords", help="active keywords file (overrides config)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compile_graph)

    p = sub.add_parser("run", help="run the cascade over one stream pair")
    add_symbol_flags(p)
    p.add_argument("--keywords")
    p.add_argument("--det", required=True, help="detection posterior file")
    p.add_argument("--ali", required=True, help="alignment posterior file")
    p.add_argument("--out", help="detections JSONL (default stdout)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("align", help="debug stage 2 on one candidate")
    add_symbol_flags(p)
    p.add_argument("--ali", required=True)
    p.add_argument("--keyword", required=True)
    p.add_argument("--t0", type=int, required=True)
    p.add_argument("--t-end", dest="t_end", type=int, required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("verify", help="debug stage 3 on one candidate")
    add_symbol_flags(p)
    p.add_argument("--ali", required=True)
    p.add_argument("--keyword", required=True)
    p.add_argument("--t-r", dest="t_r", type=int, required=True)
    p.add_argument("--t-end", dest="t_end", type=int, required=True)
    p.add_argument("--segment-id", help="segment key for table scorers")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval", help="evaluate a corpus manifest")
    add_symbol_flags(p)
    p.add_argument("--keywords")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="report JSON (default stdout)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("roc", help="threshold sweep over a corpus manifest")
    add_symbol_flags(p)
    p.add_argument("--keywords")
    p.add_argument("--manifest", required=True)
    p.add_argument("--tau-grid", dest="tau_grid", required=True,
                   help="comma-separated ascending threshold values")
    p.add_argument("--sweep", choices=("tau", "upsilon"), default="tau")
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--svg", help="optional SVG plot path")
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    add_symbol_flags(p)
    p.add_argument("--spec", required=True, help="generator spec JSON")
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config, paths = load_config(args.config)
        return args.func(args, config, paths)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
