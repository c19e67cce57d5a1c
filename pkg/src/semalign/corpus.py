"""Deterministic synthetic multilingual paired corpus.

A corpus is built from K "meanings" (random concept-id sequences). Every
meaning is rendered in all L languages, so utterances whose utt_ids share the
meaning prefix are translations of each other. Each utterance gets:

  * a frame matrix standing in for audio features: per word, a language-
    conditioned prototype plus small noise, padded with near-zero silence,
  * ground-truth word alignment spans over those frames,
  * a teacher embedding that depends only on the concept sequence, never on
    the language, so all renderings of one meaning share the same anchor.

File formats (all UTF-8, floats printed with 9 significant digits):

  manifest    header ``SENSE-MANIFEST 1 <L> <M> <d_in> <d_e> <seed>`` then one
              tab-separated line per entry: utt_id, lang, space-joined concept
              ids, surface text, frames path, alignment path (paths relative
              to the manifest's directory)
  frames      line 1 ``T d_in``, then T lines of d_in reals
  alignment   one line per word: ``word_index<TAB>start<TAB>end<TAB>surface``
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .prng import SplitMix64, derive_seed

MANIFEST_MAGIC = "SENSE-MANIFEST 1"
MANIFEST_NAME = "manifest.tsv"

_MIN_WORDS = 3
_MAX_WORDS = 8
_LEAD_SILENCE = 2
_TRAIL_SILENCE = 2
_GAP_SILENCE = 1
_SILENCE_SCALE = 0.01
_CONTENT_NOISE = 0.05
_POSITION_WEIGHT = 0.05
_ALPHABET = "abcdefghijklmnopqrstuvwxyz"


def float_repr(x: float) -> str:
    """9-significant-digit scientific notation used by every file format."""
    return f"{x:.8e}"


def atomic_write_text(path: Path, text: str) -> None:
    """Write-then-rename so readers never observe a partial file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


@dataclass(frozen=True)
class Span:
    """Word alignment span; frames [start, end) belong to word word_index."""

    word_index: int
    start: int
    end: int
    surface: str


@dataclass(frozen=True)
class Sentence:
    utt_id: str
    lang: int
    concepts: tuple[int, ...]
    surface_text: str


@dataclass
class FrameSequence:
    utt_id: str
    frames: np.ndarray  # (T, d_in)
    alignment: list[Span] = field(default_factory=list)

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class ManifestEntry:
    utt_id: str
    lang: int
    concepts: tuple[int, ...]
    surface_text: str
    frames_file: str
    align_file: str


@dataclass
class Manifest:
    num_langs: int
    num_concepts: int
    d_in: int
    d_e: int
    seed: int
    entries: list[ManifestEntry]
    base_dir: Path | None = None  # set on load/write; not serialized

    def resolve(self, rel: str) -> Path:
        if self.base_dir is None:
            raise ValueError("manifest has no base directory; load or write it first")
        return self.base_dir / rel


@dataclass(frozen=True)
class CorpusSpec:
    num_langs: int
    num_concepts: int
    sentences_per_lang: int
    d_in: int
    d_e: int
    seed: int

    def validate(self) -> None:
        if self.num_langs < 2:
            raise ConfigurationError("need at least 2 languages for cross-lingual pairs")
        if self.num_concepts < 8:
            raise ConfigurationError("need at least 8 concepts")
        if self.sentences_per_lang < 1:
            raise ConfigurationError("need at least 1 sentence per language")
        if self.d_in < 4:
            raise ConfigurationError("d_in must be >= 4")
        if self.d_e < 8:
            raise ConfigurationError("d_e must be >= 8")


def make_utt_id(meaning: int, lang: int) -> str:
    return f"m{meaning:06d}_l{lang:02d}"


def meaning_id(utt_id: str) -> str:
    """Meaning prefix shared by all translations (duplicate suffixes ignored)."""
    return utt_id.split("_l")[0]


def word_frames(concept: int) -> int:
    """Content frames for a word: 3 + (concept mod 4)."""
    return 3 + (concept % 4)


def surface_word(lang: int, concept: int, seed: int) -> str:
    rng = SplitMix64(derive_seed(seed, "surface", lang, concept))
    return "".join(_ALPHABET[rng.randbelow(26)] for _ in range(4))


def teacher_embed(concepts, d_e: int, seed: int) -> np.ndarray:
    """Unit-norm anchor for a concept sequence, independent of language.

    t = normalize(sum_j (1 + 0.05*j) * g[c_j]) where g[k] is the per-concept
    base vector drawn once per (seed, k). The position weight makes the
    sequence order significant.
    """
    concepts = tuple(int(c) for c in concepts)
    if len(concepts) == 0:
        raise ValueError("teacher_embed requires a non-empty concept sequence")
    acc = np.zeros(d_e)
    for j, c in enumerate(concepts):
        acc += (1.0 + _POSITION_WEIGHT * j) * concept_base_vector(c, d_e, seed)
    return acc / np.linalg.norm(acc)


def concept_base_vector(concept: int, d_e: int, seed: int) -> np.ndarray:
    rng = SplitMix64(derive_seed(seed, "teacher", concept))
    return np.array(rng.normals(d_e))


@lru_cache(maxsize=4096)
def acoustic_prototype(lang: int, concept: int, d_in: int, seed: int) -> np.ndarray:
    """p = A_lang @ q_concept: shared acoustic base rotated into the language.

    Cached (callers must not mutate the result); every word occurrence of a
    concept reuses the same prototype.
    """
    q_rng = SplitMix64(derive_seed(seed, "acoustic", concept))
    q = np.array(q_rng.normals(d_in))
    a = _language_matrix(lang, d_in, seed)
    return a @ q


@lru_cache(maxsize=64)
def _language_matrix(lang: int, d_in: int, seed: int) -> np.ndarray:
    rng = SplitMix64(derive_seed(seed, "langmat", lang))
    return np.array(rng.normals(d_in * d_in)).reshape(d_in, d_in) / np.sqrt(d_in)


def render_frames(sentence: Sentence, seed: int, d_in: int) -> FrameSequence:
    """Render a sentence as frames with ground-truth alignment.

    Layout: 2 leading silence frames, per word its content frames, 1 silence
    frame between words, 2 trailing silence frames. Silence is 0.01*noise so
    no frame ever has zero norm; content frames are prototype + 0.05*noise.
    """
    rng = SplitMix64(derive_seed(seed, "render", sentence.utt_id))
    words = sentence.surface_text.split(" ")
    rows: list[np.ndarray] = []
    spans: list[Span] = []

    def silence(n: int) -> None:
        for _ in range(n):
            rows.append(_SILENCE_SCALE * np.array(rng.normals(d_in)))

    silence(_LEAD_SILENCE)
    for w, concept in enumerate(sentence.concepts):
        if w > 0:
            silence(_GAP_SILENCE)
        proto = acoustic_prototype(sentence.lang, concept, d_in, seed)
        start = len(rows)
        for _ in range(word_frames(concept)):
            rows.append(proto + _CONTENT_NOISE * np.array(rng.normals(d_in)))
        spans.append(Span(w, start, len(rows), words[w]))
    silence(_TRAIL_SILENCE)

    return FrameSequence(sentence.utt_id, np.array(rows), spans)


def make_sentences(spec: CorpusSpec) -> list[Sentence]:
    """Draw K meanings and render each in every language, meaning-major order."""
    spec.validate()
    rng = SplitMix64(derive_seed(spec.seed, "meanings"))
    meanings: list[tuple[int, ...]] = []
    for _ in range(spec.sentences_per_lang):
        length = _MIN_WORDS + rng.randbelow(_MAX_WORDS - _MIN_WORDS + 1)
        meanings.append(tuple(rng.randbelow(spec.num_concepts) for _ in range(length)))

    sentences = []
    for mid, concepts in enumerate(meanings):
        for lang in range(spec.num_langs):
            text = " ".join(surface_word(lang, c, spec.seed) for c in concepts)
            sentences.append(Sentence(make_utt_id(mid, lang), lang, concepts, text))
    return sentences


def write_frames_file(path: Path, frames: np.ndarray) -> None:
    t, d = frames.shape
    lines = [f"{t} {d}"]
    for row in frames:
        lines.append(" ".join(float_repr(x) for x in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_frames(path: Path) -> np.ndarray:
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise ValueError(f"bad frames header in {path}")
        t, d = int(header[0]), int(header[1])
        frames = np.loadtxt(f, ndmin=2)
    if frames.shape != (t, d):
        raise ValueError(f"frames shape {frames.shape} does not match header ({t}, {d}) in {path}")
    return frames


def write_alignment_file(path: Path, spans: list[Span]) -> None:
    lines = [f"{s.word_index}\t{s.start}\t{s.end}\t{s.surface}" for s in spans]
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_alignment(path: Path) -> list[Span]:
    spans = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        w, start, end, surface = line.split("\t")
        spans.append(Span(int(w), int(start), int(end), surface))
    return spans


def load_frame_sequence(manifest: Manifest, entry: ManifestEntry) -> FrameSequence:
    frames_path = manifest.resolve(entry.frames_file)
    if not frames_path.exists():
        raise FileNotFoundError(f"frames file missing for {entry.utt_id}: {frames_path}")
    frames = load_frames(frames_path)
    spans = load_alignment(manifest.resolve(entry.align_file))
    return FrameSequence(entry.utt_id, frames, spans)


def write_manifest(manifest: Manifest, path: Path) -> None:
    path = Path(path)
    header = (
        f"{MANIFEST_MAGIC} {manifest.num_langs} {manifest.num_concepts} "
        f"{manifest.d_in} {manifest.d_e} {manifest.seed}"
    )
    lines = [header]
    for e in manifest.entries:
        concepts = " ".join(str(c) for c in e.concepts)
        lines.append(
            f"{e.utt_id}\t{e.lang}\t{concepts}\t{e.surface_text}\t{e.frames_file}\t{e.align_file}"
        )
    atomic_write_text(path, "\n".join(lines) + "\n")
    manifest.base_dir = path.parent


def load_manifest(path: Path) -> Manifest:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"empty manifest {path}")
    head = lines[0].split()
    if " ".join(head[:2]) != MANIFEST_MAGIC or len(head) != 7:
        raise ValueError(f"bad manifest header in {path}")
    num_langs, num_concepts, d_in, d_e, seed = (int(x) for x in head[2:])
    entries = []
    seen = set()
    for line in lines[1:]:
        if not line:
            continue
        utt_id, lang, concepts, text, frames_file, align_file = line.split("\t")
        if utt_id in seen:
            raise ValueError(f"duplicate utt_id {utt_id} in {path}")
        seen.add(utt_id)
        entries.append(
            ManifestEntry(
                utt_id,
                int(lang),
                tuple(int(c) for c in concepts.split(" ")),
                text,
                frames_file,
                align_file,
            )
        )
    return Manifest(num_langs, num_concepts, d_in, d_e, seed, entries, base_dir=path.parent)


def gen_corpus(spec: CorpusSpec, out_dir: Path) -> Manifest:
    """Generate the full corpus tree under out_dir and return its manifest."""
    spec.validate()
    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    align_dir = out_dir / "align"
    frames_dir.mkdir(parents=True, exist_ok=True)
    align_dir.mkdir(parents=True, exist_ok=True)

    entries = []
    for sentence in make_sentences(spec):
        seq = render_frames(sentence, spec.seed, spec.d_in)
        frames_rel = f"frames/{sentence.utt_id}.frames"
        align_rel = f"align/{sentence.utt_id}.align"
        write_frames_file(out_dir / frames_rel, seq.frames)
        write_alignment_file(out_dir / align_rel, seq.alignment)
        entries.append(
            ManifestEntry(
                sentence.utt_id,
                sentence.lang,
                sentence.concepts,
                sentence.surface_text,
                frames_rel,
                align_rel,
            )
        )

    manifest = Manifest(
        spec.num_langs, spec.num_concepts, spec.d_in, spec.d_e, spec.seed, entries
    )
    write_manifest(manifest, out_dir / MANIFEST_NAME)
    return manifest


def balance_languages(manifest: Manifest, target_per_lang: int) -> Manifest:
    """Up-/down-sample each language to exactly target_per_lang entries.

    Languages above target keep their first target entries in utt_id order;
    languages below target cycle their entries in utt_id order, appending
    duplicates with ``.dupN`` suffixed utt_ids. Output is ordered by
    (lang, resulting position).
    """
    if target_per_lang < 1:
        raise ConfigurationError("target_per_lang must be >= 1")
    buckets: dict[int, list[ManifestEntry]] = {lang: [] for lang in range(manifest.num_langs)}
    for e in manifest.entries:
        buckets.setdefault(e.lang, []).append(e)

    out: list[ManifestEntry] = []
    for lang in sorted(buckets):
        bucket = sorted(buckets[lang], key=lambda e: e.utt_id)
        if not bucket:
            raise ValueError(f"language {lang} has no entries to balance")
        if len(bucket) >= target_per_lang:
            out.extend(bucket[:target_per_lang])
            continue
        out.extend(bucket)
        # cycle, suffixing the Nth extra copy of an entry with .dupN
        produced = len(bucket)
        copies = 1
        while produced < target_per_lang:
            for e in bucket:
                if produced == target_per_lang:
                    break
                out.append(replace(e, utt_id=f"{e.utt_id}.dup{copies}"))
                produced += 1
            copies += 1

    balanced = Manifest(
        manifest.num_langs,
        manifest.num_concepts,
        manifest.d_in,
        manifest.d_e,
        manifest.seed,
        out,
        base_dir=manifest.base_dir,
    )
    return balanced


def filter_manifest(
    manifest: Manifest,
    langs: set[int] | None = None,
    meanings: set[str] | None = None,
) -> Manifest:
    """Sub-manifest with only the given languages and/or meaning prefixes."""
    entries = [
        e
        for e in manifest.entries
        if (langs is None or e.lang in langs)
        and (meanings is None or meaning_id(e.utt_id) in meanings)
    ]
    return Manifest(
        manifest.num_langs,
        manifest.num_concepts,
        manifest.d_in,
        manifest.d_e,
        manifest.seed,
        entries,
        base_dir=manifest.base_dir,
    )


def split_heldout(manifest: Manifest, heldout_meanings: int) -> tuple[Manifest, Manifest]:
    """Split by meaning id: the last heldout_meanings meanings are held out."""
    ids = sorted({meaning_id(e.utt_id) for e in manifest.entries})
    if heldout_meanings >= len(ids):
        raise ConfigurationError(
            f"cannot hold out {heldout_meanings} of {len(ids)} meanings"
        )
    held = set(ids[len(ids) - heldout_meanings:])
    train = set(ids) - held
    return filter_manifest(manifest, meanings=train), filter_manifest(manifest, meanings=held)
