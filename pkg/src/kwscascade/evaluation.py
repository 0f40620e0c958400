"""Corpus-level metrics: accuracy, false alarms per hour, boundary error,
and threshold sweeps producing ROC curves.

An utterance is counted correct when at least one accepted detection names
its label (each utterance carries one command). False-alarm rate is
accepted detections per hour of negative audio. The ROC sweep varies the
alignment threshold with the verification threshold fixed; it scores every
stage-1 candidate through both verification stages once and applies
thresholds offline, which is equivalent to re-running the cascade per
point because candidates are verified independently.
"""

from __future__ import annotations

import concurrent.futures
from dataclasses import dataclass, field
from pathlib import Path

from .aligner import AlignmentInfeasibleError, force_align, pushback
from .detector import skip_blank_filter, token_passing_decode
from .fst import build_alignment_graph
from .pipeline import Detection, Engine, PipelineConfig, run_pipeline
from .posteriors import PosteriorStream, SegmentRef, load_stream
from .synth import SynthCorpus
from .verifier import PooledPosteriorScorer, Scorer, beam_search, stage3_verify


@dataclass
class LabeledUtterance:
    """One evaluation item; streams load lazily from paths unless provided."""

    det_path: Path | None = None
    ali_path: Path | None = None
    label: str | None = None
    true_start: int | None = None
    det: PosteriorStream | None = None
    ali: PosteriorStream | None = None

    def streams(self) -> tuple[PosteriorStream, PosteriorStream]:
        if self.det is None:
            self.det = load_stream(self.det_path)
        if self.ali is None:
            self.ali = load_stream(self.ali_path)
        return self.det, self.ali


@dataclass
class StageStats:
    accuracy: float | None = None
    mean_start_error_s: float | None = None
    fa_count: int = 0
    fa_per_hour: float = 0.0


@dataclass
class EvalReport:
    accuracy: float
    fa_per_hour: float
    mean_start_error_s: float | None
    num_positives: int
    num_negatives: int
    negative_hours: float
    stages: dict[int, StageStats] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "fa_per_hour": self.fa_per_hour,
            "mean_start_error_s": self.mean_start_error_s,
            "num_positives": self.num_positives,
            "num_negatives": self.num_negatives,
            "negative_hours": self.negative_hours,
            "stages": {
                str(s): {
                    "accuracy": st.accuracy,
                    "mean_start_error_s": st.mean_start_error_s,
                    "fa_count": st.fa_count,
                    "fa_per_hour": st.fa_per_hour,
                }
                for s, st in sorted(self.stages.items())
            },
        }


@dataclass(frozen=True)
class RocPoint:
    tau: float
    frr: float
    fa_per_hour: float


def load_manifest(path: str | Path) -> list[LabeledUtterance]:
    """Read ``det<TAB>ali<TAB>label-or-'-'<TAB>true_start-or-'-'`` lines."""
    path = Path(path)
    base = path.parent
    utts = []
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ValueError(f"{path}: line {lineno}: expected 4 tab-separated fields")
        det, ali, label, start = parts
        utts.append(
            LabeledUtterance(
                det_path=base / det,
                ali_path=base / ali,
                label=None if label == "-" else label,
                true_start=None if start == "-" else int(start),
            )
        )
    return utts


def from_synth(corpus: SynthCorpus) -> tuple[list[LabeledUtterance], list[LabeledUtterance]]:
    positives = [
        LabeledUtterance(det=u.det, ali=u.ali, label=u.label, true_start=u.true_start)
        for u in corpus.positives
    ]
    negatives = [LabeledUtterance(det=u.det, ali=u.ali) for u in corpus.negatives]
    return positives, negatives


# ----------------------------------------------------------------------
# Corpus evaluation
# ----------------------------------------------------------------------


def _detect(args) -> list[Detection]:
    engine, utt, config, scorer = args
    det, ali = utt.streams()
    return run_pipeline(engine, det, ali, config, scorer=scorer)


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def evaluate_corpus(
    engine: Engine,
    positives: list[LabeledUtterance],
    negatives: list[LabeledUtterance],
    config: PipelineConfig,
    scorer: Scorer | None = None,
    jobs: int = 1,
) -> EvalReport:
    """Full report over a positive set and a negative set."""
    pos_results = _map(_detect, [(engine, u, config, scorer) for u in positives], jobs)
    neg_results = _map(_detect, [(engine, u, config, scorer) for u in negatives], jobs)

    report = EvalReport(
        accuracy=0.0,
        fa_per_hour=0.0,
        mean_start_error_s=None,
        num_positives=len(positives),
        num_negatives=len(negatives),
        negative_hours=_total_hours(negatives),
        stages={s: StageStats() for s in range(1, config.stages + 1)},
    )

    if positives:
        for utt in positives:
            if utt.label is None:
                raise ValueError("positive utterance without a label")
        errors: dict[int, list[float]] = {s: [] for s in report.stages}
        correct: dict[int, int] = {s: 0 for s in report.stages}
        for utt, detections in zip(positives, pos_results):
            frame_s = utt.streams()[0].frame_duration
            for stage in report.stages:
                matches = [
                    d
                    for d in detections
                    if d.keyword == utt.label and d.final_stage_passed >= stage
                ]
                if not matches:
                    continue
                correct[stage] += 1
                best = min(matches, key=lambda d: (d.detect_cost, d.t0))
                if utt.true_start is not None:
                    boundary = best.t0 if stage == 1 else best.t_r
                    if boundary is not None:
                        errors[stage].append(abs(boundary - utt.true_start) * frame_s)
        for stage in report.stages:
            stats = report.stages[stage]
            stats.accuracy = correct[stage] / len(positives)
            if errors[stage]:
                stats.mean_start_error_s = sum(errors[stage]) / len(errors[stage])
        report.accuracy = report.stages[config.stages].accuracy
        report.mean_start_error_s = report.stages[config.stages].mean_start_error_s

    if negatives:
        hours = report.negative_hours
        if hours <= 0:
            raise ValueError("negative set has zero duration")
        for detections in neg_results:
            for d in detections:
                for stage in report.stages:
                    if d.final_stage_passed >= stage:
                        report.stages[stage].fa_count += 1
        for stats in report.stages.values():
            stats.fa_per_hour = stats.fa_count / hours
        report.fa_per_hour = report.stages[config.stages].fa_per_hour

    return report


def eval_positives(
    engine: Engine,
    positives: list[LabeledUtterance],
    config: PipelineConfig,
    scorer: Scorer | None = None,
    jobs: int = 1,
) -> EvalReport:
    return evaluate_corpus(engine, positives, [], config, scorer=scorer, jobs=jobs)


def eval_negatives(
    engine: Engine,
    negatives: list[LabeledUtterance],
    config: PipelineConfig,
    scorer: Scorer | None = None,
    jobs: int = 1,
) -> EvalReport:
    return evaluate_corpus(engine, [], negatives, config, scorer=scorer, jobs=jobs)


# ----------------------------------------------------------------------
# ROC sweep
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ScoredCandidate:
    """Threshold-free candidate record: both verification scores, no cuts."""

    keyword: str
    s1: float | None
    matched: bool
    s2: float | None

    def passes(self, tau: float, upsilon: float) -> bool:
        return (
            self.s1 is not None
            and self.s1 <= tau
            and self.matched
            and self.s2 is not None
            and self.s2 <= upsilon
        )


def _score(args) -> list[ScoredCandidate]:
    engine, utt, config, scorer = args
    det_stream, ali_stream = utt.streams()
    emissions = skip_blank_filter(det_stream, engine.blank_id)
    candidates = token_passing_decode(
        emissions, engine.graph, list(engine.keywords), config.detector
    )
    if scorer is None:
        scorer = PooledPosteriorScorer(ali_stream)
    scored = []
    for cand in candidates:
        span = (pushback(cand.t0, config.aligner.t_d), cand.t_end)
        graph = build_alignment_graph(cand.phone_seq, with_garbage=True)
        try:
            result = force_align(ali_stream, span, graph, config.aligner, engine.garbage_id)
        except AlignmentInfeasibleError:
            scored.append(ScoredCandidate(cand.keyword, None, False, None))
            continue
        segment = SegmentRef(ali_stream, result.t_r, cand.t_end)
        beam = beam_search(scorer, segment, len(cand.phone_seq), config.verifier.beam_width)
        verdict = stage3_verify(beam, cand.phone_seq, float("inf"))
        scored.append(ScoredCandidate(cand.keyword, result.score, verdict.matched, verdict.s2))
    return scored


def roc_sweep(
    engine: Engine,
    positives: list[LabeledUtterance],
    negatives: list[LabeledUtterance],
    config: PipelineConfig,
    tau_grid: list[float],
    sweep: str = "tau",
    scorer: Scorer | None = None,
    jobs: int = 1,
) -> list[RocPoint]:
    """One ROC point per threshold value, full-cascade semantics.

    ``sweep="tau"`` varies the alignment threshold with ``upsilon`` fixed
    from the config (the default protocol); ``sweep="upsilon"`` fixes
    ``tau`` and varies the verification threshold instead, reusing the
    ``tau`` field of the points for the swept value.
    """
    if not tau_grid:
        raise ValueError("empty threshold grid")
    if sorted(tau_grid) != list(tau_grid):
        raise ValueError("threshold grid must be sorted ascending")
    if sweep not in ("tau", "upsilon"):
        raise ValueError("sweep must be 'tau' or 'upsilon'")
    hours = _total_hours(negatives)
    if hours <= 0:
        raise ValueError("negative set has zero duration")

    pos_scored = _map(_score, [(engine, u, config, scorer) for u in positives], jobs)
    neg_scored = _map(_score, [(engine, u, config, scorer) for u in negatives], jobs)

    points = []
    for value in tau_grid:
        tau = value if sweep == "tau" else config.aligner.tau
        upsilon = config.verifier.upsilon if sweep == "tau" else value
        n_correct = 0
        for utt, scored in zip(positives, pos_scored):
            if any(c.keyword == utt.label and c.passes(tau, upsilon) for c in scored):
                n_correct += 1
        fa = sum(
            1 for scored in neg_scored for c in scored if c.passes(tau, upsilon)
        )
        frr = 1.0 - (n_correct / len(positives)) if positives else 0.0
        points.append(RocPoint(tau=value, frr=frr, fa_per_hour=fa / hours))
    return points


def roc_to_csv(points: list[RocPoint]) -> str:
    lines = ["tau,frr,fa_per_hour\n"]
    for p in points:
        lines.append(f"{p.tau:g},{p.frr:g},{p.fa_per_hour:g}\n")
    return "".join(lines)


def roc_to_svg(points: list[RocPoint], width: int = 640, height: int = 480) -> str:
    """Minimal deterministic SVG line plot of FRR against FA per hour."""
    margin = 60
    xs = [p.fa_per_hour for p in points]
    ys = [p.frr for p in points]
    x_max = max(xs) or 1.0
    y_max = max(ys) or 1.0

    def sx(x: float) -> float:
        return margin + (x / x_max) * (width - 2 * margin)

    def sy(y: float) -> float:
        return height - margin - (y / y_max) * (height - 2 * margin)

    coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in sorted(zip(xs, ys)))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" stroke="black"/>',
        f'<text x="{width // 2}" y="{height - margin // 3}" text-anchor="middle" '
        f'font-size="14">false alarms per hour (max {x_max:g})</text>',
        f'<text x="{margin // 3}" y="{height // 2}" text-anchor="middle" font-size="14" '
        f'transform="rotate(-90 {margin // 3} {height // 2})">false reject rate (max {y_max:g})</text>',
        f'<polyline points="{coords}" fill="none" stroke="steelblue" stroke-width="2"/>',
    ]
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="steelblue"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _total_hours(utts: list[LabeledUtterance]) -> float:
    total = 0.0
    for utt in utts:
        det, _ = utt.streams()
        total += det.num_frames * det.frame_duration
    return total / 3600.0
