"""Stage 3: fixed-step beam-search verification against a pluggable scorer.

The scorer abstracts whatever autoregressive model reads the refined
keyword segment. Beam search runs exactly as many steps as the candidate
has phones (no end-of-sequence handling); the candidate is accepted only
when some hypothesis reproduces its phone sequence exactly and that
hypothesis's negative log-probability is at or under ``upsilon``.

Two deterministic scorers ship with the engine: a pooled-posterior scorer
that averages the alignment stream over equal sub-slices of the segment,
and a scripted table scorer for exact-control fixtures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .posteriors import LOG_FLOOR, PosteriorStream, SegmentRef
from .symbols import PhoneSet


class ScorerError(LookupError):
    """A scorer was asked for a segment or prefix it cannot score."""


@dataclass
class VerifierConfig:
    beam_width: int = 8
    upsilon: float = 5.0
    scorer: str = "pooled"

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.upsilon <= 0:
            raise ValueError("upsilon must be positive")
        if self.scorer != "pooled" and not self.scorer.startswith("table:"):
            raise ValueError("scorer must be 'pooled' or 'table:<path>'")


@dataclass(frozen=True)
class Hypothesis:
    tokens: tuple[int, ...]
    logp_sum: float
    per_step_logp: tuple[float, ...]


@dataclass(frozen=True)
class VerifyResult:
    accepted: bool
    matched: bool
    s2: float | None


class ScorerSession:
    """Per-candidate scoring session; deterministic for identical queries."""

    def step(self, prefix: Sequence[int]) -> np.ndarray:
        """Normalized log distribution over units for the next position."""
        raise NotImplementedError


class Scorer:
    """Factory of sessions for one refined keyword segment."""

    def open(self, segment: SegmentRef, num_steps: int) -> ScorerSession:
        raise NotImplementedError


def beam_search(
    scorer: Scorer, segment: SegmentRef, num_steps: int, beam_width: int
) -> list[Hypothesis]:
    """Standard beam search stopped after exactly ``num_steps`` steps.

    Every live hypothesis is extended with every unit at each step; the top
    ``beam_width`` by summed log-probability survive. Ties break toward the
    lexicographically smaller token sequence, so equal-probability units
    rank by lower unit id. The final beam is sorted best first.
    """
    if num_steps < 1:
        raise ValueError("num_steps must be >= 1")
    session = scorer.open(segment, num_steps)
    beam: list[tuple[float, tuple[int, ...], tuple[float, ...]]] = [(0.0, (), ())]
    for _ in range(num_steps):
        extended = []
        for logp_sum, tokens, per_step in beam:
            dist = session.step(tokens)
            for unit, logp in enumerate(dist):
                lp = float(logp)
                extended.append((logp_sum + lp, tokens + (unit,), per_step + (lp,)))
        extended.sort(key=lambda e: (-e[0], e[1]))
        beam = extended[:beam_width]
    return [Hypothesis(tokens, logp_sum, per_step) for logp_sum, tokens, per_step in beam]


def stage3_verify(
    beam: list[Hypothesis], candidate_phone_seq: Sequence[int], upsilon: float
) -> VerifyResult:
    """Exact-match check plus threshold on the matching hypothesis's score."""
    target = tuple(candidate_phone_seq)
    for hyp in beam:
        if len(hyp.tokens) != len(target):
            raise ValueError(
                f"hypothesis length {len(hyp.tokens)} != candidate length {len(target)}"
            )
    for hyp in beam:
        if hyp.tokens == target:
            s2 = -hyp.logp_sum
            return VerifyResult(accepted=s2 <= upsilon, matched=True, s2=s2)
    return VerifyResult(accepted=False, matched=False, s2=None)


# ----------------------------------------------------------------------
# Bundled scorers
# ----------------------------------------------------------------------


class _FixedStepSession(ScorerSession):
    def __init__(self, tables: list[np.ndarray]):
        self._tables = tables

    def step(self, prefix: Sequence[int]) -> np.ndarray:
        i = len(prefix)
        if i >= len(self._tables):
            raise ScorerError(f"step {i} beyond the {len(self._tables)}-step session")
        return self._tables[i]


class PooledPosteriorScorer(Scorer):
    """Prefix-independent scorer pooling the stream over segment sub-slices.

    Step i sees the renormalized mean of the posteriors over the i-th of
    ``num_steps`` equal slices of the segment. Segments shorter than the
    step count fall back to single-frame slices, repeating the last frame.
    """

    def __init__(self, stream: PosteriorStream):
        self.stream = stream

    def open(self, segment: SegmentRef, num_steps: int) -> ScorerSession:
        if num_steps < 1:
            raise ValueError("num_steps must be >= 1")
        if segment.stream is not self.stream:
            raise ScorerError("segment refers to a different stream")
        start, end = segment.start_frame, segment.end_frame
        length = end - start + 1
        if length >= num_steps:
            bounds = [start + (i * length) // num_steps for i in range(num_steps + 1)]
            slices = [(bounds[i], bounds[i + 1]) for i in range(num_steps)]
        else:
            slices = [(min(start + i, end), min(start + i, end) + 1) for i in range(num_steps)]
        tables = []
        for a, b in slices:
            if b <= a:
                raise ScorerError(f"empty slice [{a}, {b}) pooling segment {segment.key}")
            mean = self.stream.values[a:b].mean(axis=0, dtype=np.float64)
            total = mean.sum()
            if total <= 0:
                raise ScorerError(f"zero-mass slice [{a}, {b}) in segment {segment.key}")
            tables.append(_log_dist(mean / total))
        return _FixedStepSession(tables)


class TableScorer(Scorer):
    """Replays scripted step distributions keyed by (segment key, prefix).

    ``table[segment_key][prefix_tuple]`` holds linear per-unit
    probabilities; they are normalized here. Unscripted queries raise.
    """

    def __init__(self, table: dict[str, dict[tuple[int, ...], Sequence[float]]]):
        self._table: dict[str, dict[tuple[int, ...], np.ndarray]] = {}
        for seg_key, prefixes in table.items():
            scripted = {}
            for prefix, probs in prefixes.items():
                row = np.asarray(probs, dtype=np.float64)
                total = row.sum()
                if total <= 0 or row.min() < 0:
                    raise ValueError(f"bad probabilities for {seg_key!r} prefix {prefix}")
                scripted[tuple(prefix)] = _log_dist(row / total)
            self._table[seg_key] = scripted

    def open(self, segment: SegmentRef, num_steps: int) -> ScorerSession:
        scripted = self._table.get(segment.key)
        if scripted is None:
            raise ScorerError(f"unscripted segment {segment.key!r}")
        return _TableSession(scripted)


class _TableSession(ScorerSession):
    def __init__(self, scripted: dict[tuple[int, ...], np.ndarray]):
        self._scripted = scripted

    def step(self, prefix: Sequence[int]) -> np.ndarray:
        key = tuple(prefix)
        dist = self._scripted.get(key)
        if dist is None:
            raise ScorerError(f"unscripted prefix {key}")
        return dist


def load_table_fixture(path: str | Path, phones: PhoneSet) -> TableScorer:
    """Load a scripted-scorer fixture.

    JSON shape: ``{segment-id: {"prefix as space-separated unit names":
    [per-unit probabilities]}}`` with ``""`` keying the empty prefix.
    """
    data = json.loads(Path(path).read_text())
    table: dict[str, dict[tuple[int, ...], Sequence[float]]] = {}
    for seg_key, prefixes in data.items():
        scripted = {}
        for prefix_text, probs in prefixes.items():
            prefix = tuple(phones.id_of(name) for name in prefix_text.split())
            if len(probs) != len(phones):
                raise ValueError(
                    f"{path}: segment {seg_key!r} prefix {prefix_text!r} has "
                    f"{len(probs)} probabilities, expected {len(phones)}"
                )
            scripted[prefix] = probs
        table[seg_key] = scripted
    return TableScorer(table)


def _log_dist(row: np.ndarray) -> np.ndarray:
    logs = np.full(row.shape, LOG_FLOOR)
    np.log(row, out=logs, where=row > 0)
    return logs
