"""Three-stage cascade orchestration over a detection/alignment stream pair.

Stage 1 spots candidates by token passing, stage 2 force-aligns each
candidate after boundary pushback and thresholds the alignment score,
stage 3 beam-searches a scorer over the refined segment and thresholds the
match score. Candidates are verified independently; rejected ones are
retained with their rejecting stage recorded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .aligner import AlignerConfig, AlignmentInfeasibleError, force_align, pushback, stage2_verify
from .detector import DetectorConfig, skip_blank_filter, token_passing_decode
from .fst import Wfst, build_alignment_graph, build_decoding_graph
from .posteriors import PosteriorStream, SegmentRef
from .symbols import KeywordSet, Lexicon, PhoneSet, keyword_table
from .verifier import PooledPosteriorScorer, Scorer, VerifierConfig, beam_search, stage3_verify


@dataclass
class PipelineConfig:
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    aligner: AlignerConfig = field(default_factory=AlignerConfig)
    verifier: VerifierConfig = field(default_factory=VerifierConfig)
    stages: int = 3

    def __post_init__(self):
        if self.stages not in (1, 2, 3):
            raise ValueError("stages must be 1, 2, or 3")


@dataclass
class Detection:
    """Per-candidate record across the cascade.

    ``final_stage_passed`` is the deepest stage the candidate survived;
    ``accepted`` means it survived every configured stage. ``t_r`` and
    ``s1`` appear once stage 2 aligned the candidate, ``s2`` once stage 3
    found a matching hypothesis.
    """

    keyword: str
    t0: int
    t_end: int
    detect_cost: float
    t_r: int | None = None
    s1: float | None = None
    s2: float | None = None
    final_stage_passed: int = 1
    accepted: bool = False


@dataclass(frozen=True)
class Engine:
    """Immutable per-keyword-set assets shared by all decoding sessions."""

    graph: Wfst
    keywords: tuple[tuple[str, tuple[int, ...]], ...]
    blank_id: int
    garbage_id: int | None

    @classmethod
    def build(cls, phones: PhoneSet, lexicon: Lexicon, keywords: KeywordSet) -> "Engine":
        graph = build_decoding_graph(lexicon, keywords)
        table = tuple(keyword_table(lexicon, keywords))
        return cls(
            graph=graph,
            keywords=table,
            blank_id=phones.blank_id,
            garbage_id=phones.garbage_id,
        )


def run_pipeline(
    engine: Engine,
    det_stream: PosteriorStream,
    ali_stream: PosteriorStream,
    config: PipelineConfig,
    scorer: Scorer | None = None,
) -> list[Detection]:
    """Run the cascade to the configured depth and return every candidate."""
    if det_stream.num_frames != ali_stream.num_frames:
        raise ValueError(
            f"stream mismatch: {det_stream.num_frames} vs {ali_stream.num_frames} frames"
        )
    if det_stream.frame_duration != ali_stream.frame_duration:
        raise ValueError(
            f"stream mismatch: frame durations {det_stream.frame_duration} "
            f"vs {ali_stream.frame_duration}"
        )
    emissions = skip_blank_filter(det_stream, engine.blank_id)
    candidates = token_passing_decode(emissions, engine.graph, list(engine.keywords), config.detector)
    if config.stages >= 3 and scorer is None:
        scorer = PooledPosteriorScorer(ali_stream)

    detections = []
    for cand in candidates:
        det = Detection(
            keyword=cand.keyword,
            t0=cand.t0,
            t_end=cand.t_end,
            detect_cost=cand.detect_cost,
            accepted=config.stages == 1,
        )
        detections.append(det)
        if config.stages < 2:
            continue
        span = (pushback(cand.t0, config.aligner.t_d), cand.t_end)
        graph = build_alignment_graph(cand.phone_seq, with_garbage=True)
        try:
            result = force_align(ali_stream, span, graph, config.aligner, engine.garbage_id)
        except AlignmentInfeasibleError:
            continue  # spurious short candidate; counts as a stage-2 reject
        det.t_r = result.t_r
        det.s1 = result.score
        if not stage2_verify(result, config.aligner.tau):
            continue
        det.final_stage_passed = 2
        det.accepted = config.stages == 2
        if config.stages < 3:
            continue
        segment = SegmentRef(ali_stream, result.t_r, cand.t_end)
        beam = beam_search(scorer, segment, len(cand.phone_seq), config.verifier.beam_width)
        verdict = stage3_verify(beam, cand.phone_seq, config.verifier.upsilon)
        if verdict.matched:
            det.s2 = verdict.s2
        if verdict.accepted:
            det.final_stage_passed = 3
            det.accepted = True
    return detections


def detection_to_dict(det: Detection, frame_duration: float) -> dict:
    """JSON-ready view with frame indices converted to seconds."""
    return {
        "keyword": det.keyword,
        "t0_s": det.t0 * frame_duration,
        "tr_s": None if det.t_r is None else det.t_r * frame_duration,
        "tend_s": det.t_end * frame_duration,
        "detect_cost": det.detect_cost,
        "s1": det.s1,
        "s2": det.s2,
        "final_stage_passed": det.final_stage_passed,
        "accepted": det.accepted,
    }


def detections_to_jsonl(detections: list[Detection], frame_duration: float) -> str:
    return "".join(
        json.dumps(detection_to_dict(d, frame_duration)) + "\n" for d in detections
    )
