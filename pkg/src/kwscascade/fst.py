"""Weighted finite-state machinery for keyword decoding graphs.

Everything runs in the tropical semiring (min over paths, plus along a
path). The surface is deliberately narrow: build a lexicon transducer L
and a grammar acceptor G over a keyword set, compile the decoding graph
``minimize(determinize(compose(L, G)))``, and build the linear alignment
graphs used by forced alignment. Determinization and minimization are
restricted to acyclic machines, which is all keyword graphs ever need.

Labels are bare integers. :data:`EPSILON` marks the absence of a label and
:data:`GARBAGE` marks the alignment-graph lead-in self-loop that absorbs
frames preceding the keyword.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .symbols import KeywordSet, Lexicon, keyword_table

EPSILON = -1
GARBAGE = -2


class Arc(NamedTuple):
    ilabel: int
    olabel: int
    weight: float
    dst: int


class Wfst:
    """Mutable during construction, immutable by convention afterwards."""

    def __init__(self):
        self.start = 0
        self.arcs: list[list[Arc]] = []
        self.finals: dict[int, float] = {}
        # optional alphabet metadata, set by the graph builders so compose
        # can detect obviously mismatched operands
        self.ilabel_alphabet: frozenset[int] | None = None
        self.olabel_alphabet: frozenset[int] | None = None

    @property
    def num_states(self) -> int:
        return len(self.arcs)

    def add_state(self) -> int:
        self.arcs.append([])
        return len(self.arcs) - 1

    def add_arc(self, src: int, ilabel: int, olabel: int, weight: float, dst: int) -> None:
        if weight < 0 or weight != weight:
            raise ValueError(f"arc weight must be finite and non-negative, got {weight}")
        if not (0 <= src < self.num_states and 0 <= dst < self.num_states):
            raise ValueError(f"arc {src}->{dst} references a missing state")
        self.arcs[src].append(Arc(ilabel, olabel, float(weight), dst))

    def set_final(self, state: int, weight: float = 0.0) -> None:
        if not 0 <= state < self.num_states:
            raise ValueError(f"final state {state} out of range")
        self.finals[state] = float(weight)

    def is_final(self, state: int) -> bool:
        return state in self.finals

    def __eq__(self, other) -> bool:
        if not isinstance(other, Wfst):
            return NotImplemented
        return (
            self.start == other.start
            and self.arcs == other.arcs
            and self.finals == other.finals
        )

    def __repr__(self) -> str:
        return f"Wfst(states={self.num_states}, arcs={sum(map(len, self.arcs))}, finals={len(self.finals)})"


@dataclass(frozen=True)
class AlignmentGraph:
    """Linear graph accepting ``g* a1+ a2+ ... an+`` over a phone sequence.

    State 0 is the lead-in (with a :data:`GARBAGE` self-loop when
    ``has_garbage``); state i hosts phone i with a self-loop, entered by an
    arc carrying that phone's label so every phone consumes at least one
    frame. The single final state is the last phone's.
    """

    graph: Wfst
    phone_seq: tuple[int, ...]
    has_garbage: bool


# ----------------------------------------------------------------------
# Builders
# ----------------------------------------------------------------------


def build_lexicon_fst(lexicon: Lexicon, keywords: KeywordSet) -> Wfst:
    """Transducer mapping each active keyword's unit sequence to its symbol.

    The keyword output symbol is its index in ``keywords.active`` and is
    emitted on the first arc of the pronunciation. All weights are 0.
    """
    table = keyword_table(lexicon, keywords)
    fst = Wfst()
    start = fst.add_state()
    fst.start = start
    for sym, (_, units) in enumerate(table):
        src = start
        for i, unit in enumerate(units):
            dst = fst.add_state()
            fst.add_arc(src, unit, sym if i == 0 else EPSILON, 0.0, dst)
            src = dst
        fst.set_final(src, 0.0)
    fst.olabel_alphabet = frozenset(range(len(table)))
    return fst


def build_grammar_fst(keywords: KeywordSet) -> Wfst:
    """Acceptor of exactly one keyword symbol per path."""
    fst = Wfst()
    start = fst.add_state()
    end = fst.add_state()
    fst.start = start
    for sym in range(len(keywords)):
        fst.add_arc(start, sym, sym, 0.0, end)
    fst.set_final(end, 0.0)
    fst.ilabel_alphabet = frozenset(range(len(keywords)))
    fst.olabel_alphabet = frozenset(range(len(keywords)))
    return fst


def build_decoding_graph(lexicon: Lexicon, keywords: KeywordSet) -> Wfst:
    """Compile the decoding graph: minimize(determinize(compose(L, G)))."""
    lex = build_lexicon_fst(lexicon, keywords)
    grammar = build_grammar_fst(keywords)
    return minimize(determinize(compose(lex, grammar)))


def build_alignment_graph(phone_seq: Iterable[int], with_garbage: bool) -> AlignmentGraph:
    seq = tuple(phone_seq)
    if not seq:
        raise ValueError("alignment graph needs a non-empty phone sequence")
    fst = Wfst()
    lead = fst.add_state()
    fst.start = lead
    if with_garbage:
        fst.add_arc(lead, GARBAGE, GARBAGE, 0.0, lead)
    prev = lead
    for phone in seq:
        state = fst.add_state()
        fst.add_arc(prev, phone, phone, 0.0, state)  # entry consumes the first frame
        fst.add_arc(state, phone, phone, 0.0, state)
        prev = state
    fst.set_final(prev, 0.0)
    return AlignmentGraph(graph=fst, phone_seq=seq, has_garbage=with_garbage)


# ----------------------------------------------------------------------
# Core operations
# ----------------------------------------------------------------------


def compose(a: Wfst, b: Wfst) -> Wfst:
    """Epsilon-aware composition with a sequencing filter.

    Between matched labels the filter admits exactly one interleaving of
    a-side output-epsilon moves and b-side input-epsilon moves (all a-side
    first), so no path pair is counted twice. Weights add along paths.
    """
    if a.olabel_alphabet is not None and b.ilabel_alphabet is not None:
        if a.olabel_alphabet != b.ilabel_alphabet:
            raise ValueError("alphabet mismatch between composition operands")
    out = Wfst()
    state_ids: dict[tuple[int, int, int], int] = {}

    def state_of(key: tuple[int, int, int]) -> int:
        sid = state_ids.get(key)
        if sid is None:
            sid = out.add_state()
            state_ids[key] = sid
            queue.append(key)
        return sid

    queue: deque[tuple[int, int, int]] = deque()
    start_key = (a.start, b.start, 0)
    out.start = state_of(start_key)
    while queue:
        key = queue.popleft()
        qa, qb, flt = key
        sid = state_ids[key]
        if qa in a.finals and qb in b.finals:
            out.set_final(sid, a.finals[qa] + b.finals[qb])
        for arc_a in a.arcs[qa]:
            if arc_a.olabel == EPSILON:
                if flt != 2:
                    dst = state_of((arc_a.dst, qb, 1))
                    out.add_arc(sid, arc_a.ilabel, EPSILON, arc_a.weight, dst)
            else:
                for arc_b in b.arcs[qb]:
                    if arc_b.ilabel == arc_a.olabel:
                        dst = state_of((arc_a.dst, arc_b.dst, 0))
                        out.add_arc(
                            sid, arc_a.ilabel, arc_b.olabel, arc_a.weight + arc_b.weight, dst
                        )
        for arc_b in b.arcs[qb]:
            if arc_b.ilabel == EPSILON:
                dst = state_of((qa, arc_b.dst, 2))
                out.add_arc(sid, EPSILON, arc_b.olabel, arc_b.weight, dst)
    return _renumber(connect(out))


def determinize(m: Wfst) -> Wfst:
    """Weighted subset determinization for acyclic functional transducers.

    Output symbols are delayed until the input disambiguates them; a
    residual still pending when a subset turns final is emitted on a chain
    of epsilon-input arcs. The result has at most one arc per
    (state, input label).
    """
    _check_acyclic(m, what="determinize")
    for arcs in m.arcs:
        for arc in arcs:
            if arc.ilabel == EPSILON:
                raise ValueError("determinize does not support epsilon input labels")

    out = Wfst()
    Subset = tuple  # of (state, residual output tuple, leftover weight)
    start_subset: Subset = ((m.start, (), 0.0),)
    subset_ids: dict[Subset, int] = {start_subset: out.add_state()}
    out.start = 0
    queue: deque[Subset] = deque([start_subset])

    while queue:
        subset = queue.popleft()
        sid = subset_ids[subset]

        final_elems = [(q, res, w) for q, res, w in subset if q in m.finals]
        if final_elems:
            residuals = {res for _, res, _ in final_elems}
            if len(residuals) > 1:
                raise ValueError("determinize requires a functional machine")
            residual = residuals.pop()
            final_weight = min(w + m.finals[q] for q, _, w in final_elems)
            state = sid
            for sym in residual:
                nxt = out.add_state()
                out.add_arc(state, EPSILON, sym, 0.0, nxt)
                state = nxt
            out.set_final(state, final_weight)

        by_label: dict[int, list[tuple[int, tuple[int, ...], float]]] = {}
        for q, res, w in subset:
            for arc in m.arcs[q]:
                new_res = res if arc.olabel == EPSILON else res + (arc.olabel,)
                by_label.setdefault(arc.ilabel, []).append((arc.dst, new_res, w + arc.weight))
        for label in sorted(by_label):
            cands = by_label[label]
            w_min = min(w for _, _, w in cands)
            prefix = _common_prefix([res for _, res, _ in cands])
            emit = prefix[0] if prefix else EPSILON
            strip = 1 if prefix else 0
            merged: dict[tuple[int, tuple[int, ...]], float] = {}
            for dst, res, w in cands:
                key = (dst, res[strip:])
                leftover = w - w_min
                if key not in merged or leftover < merged[key]:
                    merged[key] = leftover
            next_subset: Subset = tuple(
                sorted((dst, res, lw) for (dst, res), lw in merged.items())
            )
            nid = subset_ids.get(next_subset)
            if nid is None:
                nid = out.add_state()
                subset_ids[next_subset] = nid
                queue.append(next_subset)
            out.add_arc(sid, label, emit, w_min, nid)
    return _renumber(out)


def minimize(m: Wfst) -> Wfst:
    """Merge equivalent states of a deterministic acyclic machine.

    Bottom-up signature merging: two states collapse when they have the
    same finality and identical arc sets into already-merged classes.
    Preserves the weighted path language exactly.
    """
    _check_deterministic(m)
    order = _check_acyclic(m, what="minimize")

    class_of: dict[int, int] = {}
    signatures: dict[tuple, int] = {}
    for state in reversed(order):  # successors first
        sig = (
            m.finals.get(state),
            tuple(
                sorted(
                    (arc.ilabel, arc.olabel, arc.weight, class_of[arc.dst])
                    for arc in m.arcs[state]
                )
            ),
        )
        cls = signatures.get(sig)
        if cls is None:
            cls = len(signatures)
            signatures[sig] = cls
        class_of[state] = cls

    representative: dict[int, int] = {}
    for state in order:
        representative.setdefault(class_of[state], state)

    out = Wfst()
    new_ids: dict[int, int] = {}

    def new_state(cls: int) -> int:
        sid = new_ids.get(cls)
        if sid is None:
            sid = out.add_state()
            new_ids[cls] = sid
            queue.append(cls)
        return sid

    queue: deque[int] = deque()
    out.start = new_state(class_of[m.start])
    while queue:
        cls = queue.popleft()
        sid = new_ids[cls]
        rep = representative[cls]
        if rep in m.finals:
            out.set_final(sid, m.finals[rep])
        for arc in m.arcs[rep]:
            out.add_arc(sid, arc.ilabel, arc.olabel, arc.weight, new_state(class_of[arc.dst]))
    return _renumber(out)


def enumerate_paths(
    m: Wfst, max_paths: int = 100_000
) -> list[tuple[tuple[int, ...], tuple[int, ...], float]]:
    """Complete accepting-path inventory as (inputs, outputs, weight) triples.

    Self-loops are never expanded (depth 0); any other cycle raises.
    Epsilon labels contribute no symbol. Order is deterministic: depth
    first with arcs sorted by (ilabel, olabel, weight, dst).
    """
    if m.num_states == 0:
        return []
    paths: list[tuple[tuple[int, ...], tuple[int, ...], float]] = []

    def visit(state: int, inputs: tuple, outputs: tuple, weight: float, depth: int):
        if depth > m.num_states:
            raise ValueError("cycle detected while enumerating paths")
        if state in m.finals:
            if len(paths) >= max_paths:
                raise ValueError(f"more than max_paths={max_paths} paths")
            paths.append((inputs, outputs, weight + m.finals[state]))
        for arc in sorted(m.arcs[state]):
            if arc.dst == state:
                continue
            nin = inputs if arc.ilabel == EPSILON else inputs + (arc.ilabel,)
            nout = outputs if arc.olabel == EPSILON else outputs + (arc.olabel,)
            visit(arc.dst, nin, nout, weight + arc.weight, depth + 1)

    visit(m.start, (), (), 0.0, 0)
    return paths


def connect(m: Wfst) -> Wfst:
    """Drop states that are unreachable or cannot reach a final state."""
    forward = {m.start}
    stack = [m.start]
    while stack:
        q = stack.pop()
        for arc in m.arcs[q]:
            if arc.dst not in forward:
                forward.add(arc.dst)
                stack.append(arc.dst)
    reverse: dict[int, set[int]] = {}
    for src, arcs in enumerate(m.arcs):
        for arc in arcs:
            reverse.setdefault(arc.dst, set()).add(src)
    backward = set(m.finals)
    stack = list(m.finals)
    while stack:
        q = stack.pop()
        for src in reverse.get(q, ()):
            if src not in backward:
                backward.add(src)
                stack.append(src)
    keep = forward & backward
    keep.add(m.start)  # an empty-language machine keeps its start state
    out = Wfst()
    mapping = {}
    for state in sorted(keep):
        mapping[state] = out.add_state()
    out.start = mapping[m.start]
    for state in sorted(keep):
        for arc in m.arcs[state]:
            if arc.dst in mapping:
                out.add_arc(mapping[state], arc.ilabel, arc.olabel, arc.weight, mapping[arc.dst])
        if state in m.finals:
            out.set_final(mapping[state], m.finals[state])
    return out


# ----------------------------------------------------------------------
# Serialization (one arc per line: src dst ilabel olabel weight; then
# final lines: state weight)
# ----------------------------------------------------------------------


def to_text(m: Wfst) -> str:
    lines = []
    for src, arcs in enumerate(m.arcs):
        for arc in arcs:
            lines.append(f"{src}\t{arc.dst}\t{arc.ilabel}\t{arc.olabel}\t{arc.weight!r}\n")
    for state in sorted(m.finals):
        lines.append(f"{state}\t{m.finals[state]!r}\n")
    return "".join(lines)


def from_text(text: str) -> Wfst:
    arc_rows = []
    final_rows = []
    max_state = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) == 5:
            src, dst, ilabel, olabel = (int(p) for p in parts[:4])
            arc_rows.append((src, dst, ilabel, olabel, float(parts[4])))
            max_state = max(max_state, src, dst)
        elif len(parts) == 2:
            state = int(parts[0])
            final_rows.append((state, float(parts[1])))
            max_state = max(max_state, state)
        else:
            raise ValueError(f"line {lineno}: expected an arc or final line, got {raw!r}")
    m = Wfst()
    for _ in range(max_state + 1):
        m.add_state()
    for src, dst, ilabel, olabel, weight in arc_rows:
        m.add_arc(src, ilabel, olabel, weight, dst)
    for state, weight in final_rows:
        m.set_final(state, weight)
    return m


# ----------------------------------------------------------------------
# Internals
# ----------------------------------------------------------------------


def _common_prefix(seqs: list[tuple[int, ...]]) -> tuple[int, ...]:
    prefix = seqs[0]
    for seq in seqs[1:]:
        limit = min(len(prefix), len(seq))
        i = 0
        while i < limit and prefix[i] == seq[i]:
            i += 1
        prefix = prefix[:i]
        if not prefix:
            break
    return prefix


def _check_acyclic(m: Wfst, what: str) -> list[int]:
    """Topological order of reachable states; raises on any cycle."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = [WHITE] * m.num_states
    order: list[int] = []
    stack: list[tuple[int, int]] = [(m.start, 0)]
    color[m.start] = GRAY
    while stack:
        state, idx = stack[-1]
        if idx < len(m.arcs[state]):
            stack[-1] = (state, idx + 1)
            nxt = m.arcs[state][idx].dst
            if color[nxt] == GRAY:
                raise ValueError(f"{what} requires an acyclic machine")
            if color[nxt] == WHITE:
                color[nxt] = GRAY
                stack.append((nxt, 0))
        else:
            color[state] = BLACK
            order.append(state)
            stack.pop()
    order.reverse()
    return order


def _check_deterministic(m: Wfst) -> None:
    for state, arcs in enumerate(m.arcs):
        labels = [arc.ilabel for arc in arcs]
        if len(labels) != len(set(labels)):
            raise ValueError(f"state {state} has duplicate input labels; machine not deterministic")


def _renumber(m: Wfst) -> Wfst:
    """Canonical breadth-first state numbering for reproducible output."""
    out = Wfst()
    mapping = {m.start: out.add_state()}
    queue = deque([m.start])
    while queue:
        state = queue.popleft()
        for arc in sorted(m.arcs[state]):
            if arc.dst not in mapping:
                mapping[arc.dst] = out.add_state()
                queue.append(arc.dst)
    for state, sid in mapping.items():
        for arc in sorted(m.arcs[state]):
            out.add_arc(sid, arc.ilabel, arc.olabel, arc.weight, mapping[arc.dst])
        if state in m.finals:
            out.set_final(sid, m.finals[state])
    out.ilabel_alphabet = m.ilabel_alphabet
    out.olabel_alphabet = m.olabel_alphabet
    return out
