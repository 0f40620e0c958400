"""Stage 2: boundary pushback and garbage-prefixed forced alignment.

The sketchy start point is pushed back ``t_d`` frames, then every frame of
the widened span is assigned to one state of the candidate's linear
alignment graph by frame-synchronous Viterbi over the phone-predictor
posteriors. Frames absorbed by the leading garbage state precede the
refined start ``t_r``; the confidence score is the mean negative
log-likelihood over the refined span and rejects the candidate when it
exceeds ``tau``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fst import GARBAGE, AlignmentGraph
from .posteriors import LOG_FLOOR, PosteriorStream

GARBAGE_MODES = ("designated-unit", "max-posterior", "uniform-floor")

NEG_INF = float("-inf")


class AlignmentInfeasibleError(RuntimeError):
    """Span cannot host the candidate's phone sequence; treated as a reject."""


@dataclass
class AlignerConfig:
    t_d: int = 15
    tau: float = 1.5
    garbage_mode: str = "designated-unit"

    def __post_init__(self):
        if self.t_d < 0:
            raise ValueError("t_d must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.garbage_mode not in GARBAGE_MODES:
            raise ValueError(f"garbage_mode must be one of {GARBAGE_MODES}")


@dataclass
class AlignmentResult:
    """Refined boundary, per-frame labels, and the span confidence score.

    ``framewise`` covers [span_start, t_end]; garbage frames carry the
    :data:`kwscascade.fst.GARBAGE` sentinel and only ever precede ``t_r``.
    ``score`` is the mean negative log posterior of the aligned phones over
    the refined span of ``duration`` frames.
    """

    span_start: int
    t_r: int
    t_end: int
    framewise: tuple[int, ...]
    score: float
    duration: int
    log_likelihood: float


def pushback(t0: int, t_d: int) -> int:
    """Move the start point t_d frames back, clamped at the stream start."""
    return max(0, t0 - t_d)


def force_align(
    stream: PosteriorStream,
    span: tuple[int, int],
    graph: AlignmentGraph,
    config: AlignerConfig,
    garbage_id: int | None = None,
) -> AlignmentResult:
    """Viterbi-align every frame of ``span`` to the candidate's graph.

    Parameters
    ----------
    stream : PosteriorStream
        Phone-predictor posteriors.
    span : (int, int)
        Inclusive frame range [pushback_start, t_end].
    graph : AlignmentGraph
        Built from the candidate's phone sequence.
    config : AlignerConfig
        Supplies the garbage scoring mode.
    garbage_id : int or None
        Unit scored by the ``designated-unit`` garbage mode.

    Ties prefer staying in the current state over advancing, which biases
    the garbage-to-phone transition (and therefore ``t_r``) earlier.
    """
    lo, hi = span
    if not 0 <= lo <= hi < stream.num_frames:
        raise ValueError(f"span [{lo}, {hi}] outside stream of {stream.num_frames} frames")
    phones = graph.phone_seq
    num_phones = len(phones)
    span_len = hi - lo + 1
    if span_len < num_phones:
        raise AlignmentInfeasibleError(
            f"span of {span_len} frames cannot align {num_phones} phones"
        )
    for p in phones:
        if not 0 <= p < stream.num_units:
            raise ValueError(f"phone {p} out of range for {stream.num_units} units")

    logs = stream.log_values()
    garbage_scores = _garbage_scores(stream, logs, lo, hi, config.garbage_mode, garbage_id)

    # state 0 = lead-in (garbage self-loop when present), state i = phone i
    num_states = num_phones + 1
    prev = np.full(num_states, NEG_INF)
    stayed = np.zeros((span_len, num_states), dtype=bool)
    if graph.has_garbage:
        prev[0] = garbage_scores[0]
    prev[1] = logs[lo, phones[0]]
    for t in range(1, span_len):
        cur = np.full(num_states, NEG_INF)
        if graph.has_garbage and prev[0] > NEG_INF:
            cur[0] = prev[0] + garbage_scores[t]
            stayed[t, 0] = True
        for s in range(1, num_states):
            stay = prev[s]
            advance = prev[s - 1]
            if stay == NEG_INF and advance == NEG_INF:
                continue
            best = stay if stay >= advance else advance
            cur[s] = best + logs[lo + t, phones[s - 1]]
            stayed[t, s] = stay >= advance
        prev = cur

    total = prev[num_phones]
    if total == NEG_INF:
        raise AlignmentInfeasibleError("no feasible alignment for the span")

    states = np.empty(span_len, dtype=int)
    s = num_states - 1
    for t in range(span_len - 1, -1, -1):
        states[t] = s
        if t > 0 and not stayed[t, s]:
            s -= 1

    framewise = tuple(GARBAGE if st == 0 else phones[st - 1] for st in states)
    first_phone = int(np.argmax(states > 0))
    t_r = lo + first_phone
    duration = hi - t_r + 1
    score = -sum(
        logs[lo + t, phones[states[t] - 1]] for t in range(first_phone, span_len)
    ) / duration
    return AlignmentResult(
        span_start=lo,
        t_r=t_r,
        t_end=hi,
        framewise=framewise,
        score=float(score),
        duration=duration,
        log_likelihood=float(total),
    )


def stage2_verify(result: AlignmentResult, tau: float) -> bool:
    """Accept when the alignment confidence is at or under the threshold."""
    return result.score <= tau


def _garbage_scores(
    stream: PosteriorStream,
    logs: np.ndarray,
    lo: int,
    hi: int,
    mode: str,
    garbage_id: int | None,
) -> np.ndarray:
    if mode == "designated-unit":
        if garbage_id is None:
            raise ValueError(
                "designated-unit garbage mode needs a garbage unit; "
                "use max-posterior or uniform-floor instead"
            )
        if not 0 <= garbage_id < stream.num_units:
            raise ValueError(f"garbage_id {garbage_id} out of range")
        return logs[lo : hi + 1, garbage_id]
    if mode == "max-posterior":
        return logs[lo : hi + 1].max(axis=1)
    return np.full(hi - lo + 1, max(-np.log(stream.num_units), LOG_FLOOR))
