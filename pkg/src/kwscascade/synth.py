"""Seeded synthetic corpora for exercising and evaluating the cascade.

Positives plant one keyword per utterance: the alignment stream carries
the phone evidence at the true location while the detection stream shows
the same evidence shifted by a configurable emission delay, mimicking a
streaming detector that fires late. Negatives are keyword-free unit churn,
independently drawn for the two streams so that detection-stage false
alarms find no support at alignment time. All randomness flows from one
seed; identical seeds give byte-identical corpora.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .posteriors import PosteriorStream, save_stream
from .symbols import Lexicon, PhoneSet

_SPEC_FIELDS = {
    "keywords",
    "num_positives",
    "num_negatives",
    "positive_frames",
    "negative_frames",
    "frames_per_phone",
    "spike_frames",
    "p_hit",
    "noise",
    "emission_delay",
    "frame_duration",
    "negative_blank_rate",
    "negative_hold_min",
    "negative_hold_max",
    "negative_mass_min",
    "negative_mass_max",
}


@dataclass
class SynthSpec:
    keywords: list[str]
    num_positives: int = 200
    num_negatives: int = 20
    positive_frames: int = 160
    negative_frames: int = 1500
    frames_per_phone: int = 10
    spike_frames: int = 1
    p_hit: float = 0.9
    noise: float = 0.05
    emission_delay: int = 0
    frame_duration: float = 0.04
    negative_blank_rate: float = 0.3
    negative_hold_min: int = 2
    negative_hold_max: int = 6
    negative_mass_min: float = 0.8
    negative_mass_max: float = 0.95

    def __post_init__(self):
        if not self.keywords:
            raise ValueError("spec needs at least one keyword")
        if not 0.0 < self.p_hit <= 1.0:
            raise ValueError("p_hit must be in (0, 1]")
        if not 0.0 <= self.noise < 1.0:
            raise ValueError("noise must be in [0, 1)")
        if self.emission_delay < 0:
            raise ValueError("emission_delay must be >= 0")
        if self.frames_per_phone < 1:
            raise ValueError("frames_per_phone must be >= 1")
        if not 1 <= self.spike_frames <= self.frames_per_phone:
            raise ValueError("spike_frames must be in [1, frames_per_phone]")
        if not 1 <= self.negative_hold_min <= self.negative_hold_max:
            raise ValueError("bad negative hold range")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        unknown = set(data) - _SPEC_FIELDS
        if unknown:
            raise ValueError(f"unknown synth spec keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class SynthUtterance:
    det: PosteriorStream
    ali: PosteriorStream
    label: str | None
    true_start: int | None


@dataclass
class SynthCorpus:
    positives: list[SynthUtterance] = field(default_factory=list)
    negatives: list[SynthUtterance] = field(default_factory=list)

    @property
    def utterances(self) -> list[SynthUtterance]:
        return self.positives + self.negatives


def synth_corpus(phones: PhoneSet, lexicon: Lexicon, spec: SynthSpec, seed: int) -> SynthCorpus:
    """Generate a labeled positive set and an unlabeled negative set."""
    for name in spec.keywords:
        if name not in lexicon:
            raise ValueError(f"unknown keyword {name!r}")
    rng = np.random.default_rng(seed)
    gen = _Generator(phones, spec, rng)
    corpus = SynthCorpus()
    for i in range(spec.num_positives):
        keyword = spec.keywords[i % len(spec.keywords)]
        corpus.positives.append(gen.positive(keyword, lexicon.pronunciation(keyword)))
    for _ in range(spec.num_negatives):
        corpus.negatives.append(gen.negative())
    return corpus


def write_corpus(corpus: SynthCorpus, out_dir: str | Path) -> Path:
    """Write streams plus a manifest; returns the manifest path.

    Manifest lines: ``det<TAB>ali<TAB>label-or-'-'<TAB>true_start-or-'-'``
    with paths relative to the manifest's directory.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for kind, utts in (("pos", corpus.positives), ("neg", corpus.negatives)):
        for i, utt in enumerate(utts):
            det_name = f"{kind}_{i:04d}.det.kwsp"
            ali_name = f"{kind}_{i:04d}.ali.kwsp"
            save_stream(utt.det, out / det_name)
            save_stream(utt.ali, out / ali_name)
            label = utt.label if utt.label is not None else "-"
            start = str(utt.true_start) if utt.true_start is not None else "-"
            lines.append(f"{det_name}\t{ali_name}\t{label}\t{start}\n")
    manifest = out / "manifest.tsv"
    manifest.write_text("".join(lines))
    return manifest


class _Generator:
    def __init__(self, phones: PhoneSet, spec: SynthSpec, rng: np.random.Generator):
        self.phones = phones
        self.spec = spec
        self.rng = rng
        self.num_units = len(phones)
        self.blank = phones.blank_id
        # alignment-stream background leans on the garbage unit so pushback
        # frames score well under designated-unit garbage mode
        self.ali_background = phones.garbage_id if phones.garbage_id is not None else phones.blank_id
        self.churn_units = [
            u for u in range(self.num_units) if u != self.blank and u != phones.garbage_id
        ]

    def positive(self, keyword: str, units: tuple[int, ...]) -> SynthUtterance:
        """Plant one keyword: full-duration phone evidence in the alignment
        stream, one delayed short spike per phone in the detection stream
        (streaming detectors fire briefly and late)."""
        spec = self.spec
        duration = spec.frames_per_phone * len(units)
        frames = spec.positive_frames
        last_spike_end = (len(units) - 1) * spec.frames_per_phone + spec.emission_delay + spec.spike_frames
        latest = frames - max(duration, last_spike_end) - 2
        if latest < 1:
            raise ValueError(
                f"positive_frames={frames} too short for keyword {keyword!r} "
                f"plus emission delay {spec.emission_delay}"
            )
        start = int(self.rng.integers(1, latest + 1))

        ali = np.repeat(self._one_hot(self.ali_background)[None, :], frames, axis=0)
        det = np.repeat(self._one_hot(self.blank)[None, :], frames, axis=0)
        for i, unit in enumerate(units):
            row = self._concentrated(unit, spec.p_hit)
            a = start + i * spec.frames_per_phone
            ali[a : a + spec.frames_per_phone] = row
            d = a + spec.emission_delay
            det[d : d + spec.spike_frames] = row
        return SynthUtterance(
            det=self._finish(det),
            ali=self._finish(ali),
            label=keyword,
            true_start=start,
        )

    def negative(self) -> SynthUtterance:
        det = self._churn(self.spec.negative_frames)
        ali = self._churn(self.spec.negative_frames)
        return SynthUtterance(det=self._finish(det), ali=self._finish(ali), label=None, true_start=None)

    def _churn(self, frames: int) -> np.ndarray:
        spec = self.spec
        rows = np.empty((frames, self.num_units))
        t = 0
        while t < frames:
            hold = int(self.rng.integers(spec.negative_hold_min, spec.negative_hold_max + 1))
            if self.rng.random() < spec.negative_blank_rate:
                unit = self.blank
            else:
                unit = self.churn_units[int(self.rng.integers(len(self.churn_units)))]
            mass = float(self.rng.uniform(spec.negative_mass_min, spec.negative_mass_max))
            rows[t : t + hold] = self._concentrated(unit, mass)
            t += hold
        return rows

    def _one_hot(self, unit: int, mass: float = 0.97) -> np.ndarray:
        return self._concentrated(unit, mass)

    def _concentrated(self, unit: int, mass: float) -> np.ndarray:
        row = np.full(self.num_units, (1.0 - mass) / (self.num_units - 1))
        row[unit] = mass
        return row

    def _finish(self, rows: np.ndarray) -> PosteriorStream:
        eps = self.spec.noise
        if eps > 0:
            perturb = self.rng.dirichlet(np.ones(self.num_units), size=len(rows))
            rows = (1.0 - eps) * rows + eps * perturb
        rows = rows / rows.sum(axis=1, keepdims=True)
        return PosteriorStream(
            values=rows.astype(np.float32), frame_duration=self.spec.frame_duration
        )
