"""Unit symbol tables, keyword lexicon, and keyword-set parsing.

The decoder is unit-agnostic: the same tables may hold phones, characters,
or any other sub-word inventory. Two names are reserved: ``<blk>`` binds
the non-emission (blank) unit, and ``<sil>``, when present, binds the
default garbage unit used by alignment scoring. Everything here is
immutable after parsing and safe to share across decoding sessions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

BLANK_NAME = "<blk>"
GARBAGE_NAME = "<sil>"


class ParseError(ValueError):
    """Raised for malformed symbol-table, lexicon, or keyword files."""


@dataclass(frozen=True)
class PhoneSet:
    """Dense unit inventory: unit id ``i`` is named ``names[i]``."""

    names: tuple[str, ...]
    blank_id: int
    garbage_id: int | None = None

    def __post_init__(self):
        if not self.names:
            raise ParseError("empty phone set")
        seen = set()
        for i, name in enumerate(self.names):
            if not name:
                raise ParseError(f"unit {i} has an empty name")
            if name in seen:
                raise ParseError(f"duplicate unit name {name!r}")
            seen.add(name)
        if not 0 <= self.blank_id < len(self.names):
            raise ParseError(f"blank_id {self.blank_id} out of range")
        if self.garbage_id is not None:
            if not 0 <= self.garbage_id < len(self.names):
                raise ParseError(f"garbage_id {self.garbage_id} out of range")
            if self.garbage_id == self.blank_id:
                raise ParseError("garbage unit must differ from blank")

    def __len__(self) -> int:
        return len(self.names)

    def name_of(self, unit_id: int) -> str:
        return self.names[unit_id]

    def id_of(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise KeyError(f"unknown unit name {name!r}") from None

    @property
    def _ids(self) -> dict[str, int]:
        # cached on first use; object.__setattr__ because the dataclass is frozen
        cache = self.__dict__.get("_ids_cache")
        if cache is None:
            cache = {n: i for i, n in enumerate(self.names)}
            object.__setattr__(self, "_ids_cache", cache)
        return cache


@dataclass(frozen=True)
class Lexicon:
    """Keyword name to unit-id pronunciation map (one pronunciation each)."""

    entries: dict[str, tuple[int, ...]] = field(default_factory=dict)

    def validate(self, phones: PhoneSet) -> None:
        for keyword, units in self.entries.items():
            if not keyword:
                raise ParseError("empty keyword name")
            if not units:
                raise ParseError(f"keyword {keyword!r} has an empty pronunciation")
            for u in units:
                if not 0 <= u < len(phones):
                    raise ParseError(f"keyword {keyword!r} uses out-of-range unit {u}")
                if u == phones.blank_id:
                    raise ParseError(f"keyword {keyword!r} uses the blank unit")

    def __contains__(self, keyword: str) -> bool:
        return keyword in self.entries

    def pronunciation(self, keyword: str) -> tuple[int, ...]:
        return self.entries[keyword]


@dataclass(frozen=True)
class KeywordSet:
    """Active keywords for one decoding graph, in output-symbol order."""

    active: tuple[str, ...]

    def __post_init__(self):
        if not self.active:
            raise ParseError("keyword set is empty")
        if len(set(self.active)) != len(self.active):
            raise ParseError("duplicate keyword in keyword set")

    def __len__(self) -> int:
        return len(self.active)


def parse_phone_set(text: str) -> PhoneSet:
    """Parse a ``name<TAB>id`` symbol table.

    Ids must be dense 0..N-1 (any line order); the reserved name ``<blk>``
    is required and binds the blank unit, ``<sil>`` optionally binds the
    garbage unit.
    """
    by_id: dict[int, str] = {}
    names_seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(f"line {lineno}: expected 'name<TAB>id', got {raw!r}")
        name, id_text = parts[0], parts[1].strip()
        try:
            unit_id = int(id_text)
        except ValueError:
            raise ParseError(f"line {lineno}: bad unit id {id_text!r}") from None
        if unit_id < 0:
            raise ParseError(f"line {lineno}: negative unit id {unit_id}")
        if unit_id in by_id:
            raise ParseError(f"line {lineno}: duplicate unit id {unit_id}")
        if name in names_seen:
            raise ParseError(f"line {lineno}: duplicate unit name {name!r}")
        by_id[unit_id] = name
        names_seen.add(name)
    if not by_id:
        raise ParseError("empty phone set")
    if sorted(by_id) != list(range(len(by_id))):
        missing = sorted(set(range(len(by_id))) - set(by_id))[:3]
        raise ParseError(f"unit ids are not dense 0..{len(by_id) - 1} (missing {missing})")
    names = tuple(by_id[i] for i in range(len(by_id)))
    if BLANK_NAME not in names_seen:
        raise ParseError(f"blank symbol required ({BLANK_NAME!r} missing)")
    blank_id = names.index(BLANK_NAME)
    garbage_id = names.index(GARBAGE_NAME) if GARBAGE_NAME in names_seen else None
    return PhoneSet(names=names, blank_id=blank_id, garbage_id=garbage_id)


def serialize_phone_set(phones: PhoneSet) -> str:
    return "".join(f"{name}\t{i}\n" for i, name in enumerate(phones.names))


def parse_lexicon(text: str, phones: PhoneSet) -> Lexicon:
    """Parse ``keyword<TAB>space-separated unit names`` lines."""
    entries: dict[str, tuple[int, ...]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t", 1)
        if len(parts) != 2:
            raise ParseError(f"line {lineno}: expected 'keyword<TAB>units', got {raw!r}")
        keyword, pron_text = parts[0].strip(), parts[1]
        if not keyword:
            raise ParseError(f"line {lineno}: empty keyword name")
        if keyword in entries:
            raise ParseError(f"line {lineno}: duplicate keyword {keyword!r}")
        unit_names = pron_text.split()
        if not unit_names:
            raise ParseError(f"line {lineno}: keyword {keyword!r} has an empty pronunciation")
        units = []
        for unit_name in unit_names:
            try:
                uid = phones.id_of(unit_name)
            except KeyError:
                raise ParseError(f"line {lineno}: unknown unit name {unit_name!r}") from None
            if uid == phones.blank_id:
                raise ParseError(f"line {lineno}: pronunciation contains the blank unit")
            units.append(uid)
        entries[keyword] = tuple(units)
    lexicon = Lexicon(entries=entries)
    lexicon.validate(phones)
    return lexicon


def serialize_lexicon(lexicon: Lexicon, phones: PhoneSet) -> str:
    lines = []
    for keyword, units in lexicon.entries.items():
        lines.append(keyword + "\t" + " ".join(phones.name_of(u) for u in units) + "\n")
    return "".join(lines)


def parse_keyword_set(text: str, lexicon: Lexicon) -> KeywordSet:
    """Parse one active keyword name per line, validated against the lexicon."""
    names = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        name = raw.strip()
        if not name:
            continue
        if name not in lexicon:
            raise ParseError(f"line {lineno}: keyword {name!r} not in lexicon")
        if name in names:
            raise ParseError(f"line {lineno}: duplicate keyword {name!r}")
        names.append(name)
    return KeywordSet(active=tuple(names))


def keyword_table(lexicon: Lexicon, keywords: KeywordSet) -> list[tuple[str, tuple[int, ...]]]:
    """Resolve the active keywords to (name, pronunciation) in output-symbol order.

    Index in the returned list is the keyword's output symbol id in the
    decoding graph.
    """
    table = []
    for name in keywords.active:
        if name not in lexicon:
            raise ParseError(f"keyword {name!r} not in lexicon")
        table.append((name, lexicon.pronunciation(name)))
    return table
