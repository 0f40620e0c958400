"""Stage 1: skip-blank filtering and token passing over the decoding graph.

Frames whose argmax unit is blank never reach the graph search. Each
surviving frame contributes exactly one label (its best non-blank unit);
tokens advance along arcs carrying that label, die on mismatch, and a
fresh token is injected at the start state for every emission so keywords
can begin anywhere. Reaching a final state emits a keyword candidate with
the token's start frame as the sketchy boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fst import EPSILON, Wfst
from .posteriors import LOG_FLOOR, PosteriorStream

NO_LABEL = -1


@dataclass
class DetectorConfig:
    beam_width: int = 64
    allow_same_label_loop: bool = True
    refractory_emissions: int = 20

    def __post_init__(self):
        if self.beam_width < 1:
            raise ValueError("beam_width must be >= 1")
        if self.refractory_emissions < 0:
            raise ValueError("refractory_emissions must be >= 0")


@dataclass
class EmittedFrame:
    """One non-blank frame: original index plus blank-masked log posteriors."""

    source_frame: int
    log_post: np.ndarray

    @property
    def best_label(self) -> int:
        return int(np.argmax(self.log_post))


@dataclass(frozen=True)
class Candidate:
    """Stage-1 detection with sketchy boundaries."""

    keyword: str
    phone_seq: tuple[int, ...]
    t0: int
    t_end: int
    detect_cost: float
    end_emission: int  # index into the emission sequence, used for dedup


def skip_blank_filter(stream: PosteriorStream, blank_id: int) -> list[EmittedFrame]:
    """Keep exactly the frames whose argmax unit is not blank.

    The kept frames' log posteriors have the blank entry masked to the log
    floor so blank can never win a downstream argmax.
    """
    if not 0 <= blank_id < stream.num_units:
        raise ValueError(f"blank_id {blank_id} out of range for {stream.num_units} units")
    argmax = np.argmax(stream.values, axis=1)
    logs = stream.log_values()
    emissions = []
    for t in np.nonzero(argmax != blank_id)[0]:
        row = logs[t].copy()
        row[blank_id] = LOG_FLOOR
        emissions.append(EmittedFrame(source_frame=int(t), log_post=row))
    return emissions


def token_passing_decode(
    emissions: list[EmittedFrame],
    graph: Wfst,
    keywords: list[tuple[str, tuple[int, ...]]],
    config: DetectorConfig,
) -> list[Candidate]:
    """Frame-synchronous token passing over the compiled decoding graph.

    ``keywords[sym]`` maps the graph's output symbol ``sym`` to the keyword
    name and pronunciation. One best token is kept per state; candidates
    for the same keyword completing within ``refractory_emissions`` of each
    other are deduplicated keeping the lowest cost.
    """
    if graph.num_states == 0 or not graph.finals:
        raise ValueError("empty decoding graph")

    arcs_by_label: dict[tuple[int, int], list] = {}
    for state in range(graph.num_states):
        for arc in graph.arcs[state]:
            if arc.ilabel != EPSILON:
                arcs_by_label.setdefault((state, arc.ilabel), []).append(arc)
    closures = _final_closures(graph)

    # token: (cost, start_frame, last_label, output_trace); -1 start = not started
    fresh = (0.0, -1, NO_LABEL, ())
    live: dict[int, tuple] = {}
    raw: list[Candidate] = []

    for ei, emission in enumerate(emissions):
        label = emission.best_label
        step_cost = -float(emission.log_post[label])
        sources = dict(live)
        if graph.start not in sources or fresh < sources[graph.start]:
            sources[graph.start] = fresh
        new_live: dict[int, tuple] = {}

        for state in sorted(sources):
            cost, start, last, otrace = sources[state]
            if config.allow_same_label_loop and last == label:
                staying = (cost + step_cost, start, label, otrace)
                held = new_live.get(state)
                if held is None or staying < held:
                    new_live[state] = staying
            for arc in arcs_by_label.get((state, label), ()):
                ncost = cost + step_cost + arc.weight
                nstart = start if start >= 0 else emission.source_frame
                ntrace = otrace if arc.olabel == EPSILON else otrace + (arc.olabel,)
                token = (ncost, nstart, label, ntrace)
                held = new_live.get(arc.dst)
                if held is None or token < held:
                    new_live[arc.dst] = token
                closure = closures.get(arc.dst)
                if closure is not None:
                    extra_cost, extra_trace = closure
                    full_trace = ntrace + extra_trace
                    if len(full_trace) != 1:
                        raise RuntimeError(
                            f"accepting path emitted {len(full_trace)} keyword symbols"
                        )
                    name, units = keywords[full_trace[0]]
                    raw.append(
                        Candidate(
                            keyword=name,
                            phone_seq=units,
                            t0=nstart,
                            t_end=emission.source_frame,
                            detect_cost=ncost + extra_cost,
                            end_emission=ei,
                        )
                    )

        if len(new_live) > config.beam_width:
            ranked = sorted(new_live.items(), key=lambda kv: (kv[1][0], kv[0]))
            new_live = dict(ranked[: config.beam_width])
        live = new_live

    return _dedup(raw, config.refractory_emissions)


def _final_closures(graph: Wfst) -> dict[int, tuple[float, tuple[int, ...]]]:
    """Best (weight, outputs) epsilon-input continuation to a final state.

    Covers the residual-output tails determinization appends; interior
    epsilon input labels do not occur in compiled decoding graphs.
    """
    closures: dict[int, tuple[float, tuple[int, ...]]] = {}

    def best_from(state: int, depth: int) -> tuple[float, tuple[int, ...]] | None:
        if depth > graph.num_states:
            raise ValueError("epsilon cycle in decoding graph")
        options = []
        if state in graph.finals:
            options.append((graph.finals[state], ()))
        for arc in graph.arcs[state]:
            if arc.ilabel == EPSILON:
                beyond = best_from(arc.dst, depth + 1)
                if beyond is not None:
                    w, trace = beyond
                    out = () if arc.olabel == EPSILON else (arc.olabel,)
                    options.append((arc.weight + w, out + trace))
        return min(options) if options else None

    for state in range(graph.num_states):
        found = best_from(state, 0)
        if found is not None:
            closures[state] = found
    return closures


def _dedup(raw: list[Candidate], refractory: int) -> list[Candidate]:
    by_keyword: dict[str, list[Candidate]] = {}
    for cand in raw:
        by_keyword.setdefault(cand.keyword, []).append(cand)
    kept: list[Candidate] = []
    for keyword in sorted(by_keyword):
        group = sorted(by_keyword[keyword], key=lambda c: (c.end_emission, c.detect_cost, c.t0))
        cluster: list[Candidate] = []
        for cand in group:
            if cluster and cand.end_emission - cluster[-1].end_emission > refractory:
                kept.append(min(cluster, key=lambda c: (c.detect_cost, c.end_emission, c.t0)))
                cluster = []
            cluster.append(cand)
        if cluster:
            kept.append(min(cluster, key=lambda c: (c.detect_cost, c.end_emission, c.t0)))
    kept.sort(key=lambda c: (c.t0, c.t_end, c.keyword))
    return kept
