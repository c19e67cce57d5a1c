"""Frame-level attention analysis.

Utterances have different lengths, so per-frame attention values are compared
on a normalized position axis: frame i of a T-frame utterance sits at
relpos(i) = i/(T-1), and value sequences are resampled onto a fixed grid by
linear interpolation before averaging. The pipeline also measures how much
attention mass the first k frames concentrate versus the share of frames they
represent, and ranks words by the sum of pre-softmax logits over their
ground-truth alignment spans (silence frames belong to no word).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Manifest, Span, atomic_write_text, load_frame_sequence
from .model import AttentionRecord, ModelParams, forward

SOURCES = ("logits", "weights")


@dataclass
class PositionProfile:
    grid_size: int
    positions: np.ndarray  # strictly increasing, 0 to 1
    values: np.ndarray
    n_utterances: int


@dataclass(frozen=True)
class WordAttentionStat:
    word: str
    utt_id: str
    logit_sum: float
    span_len: int


def relpos(i: int, t: int) -> float:
    """Relative position i/(T-1); the single frame of a T=1 utterance maps to 0."""
    if not 0 <= i < t:
        raise ValueError(f"frame index {i} out of range for T={t}")
    if t == 1:
        return 0.0
    return i / (t - 1)


def resample_profile(values: np.ndarray, grid_size: int) -> np.ndarray:
    """Linear interpolation of (relpos(i), values[i]) onto a uniform grid."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("values must be a non-empty 1-d sequence")
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    t = values.size
    if t == 1:
        return np.full(grid_size, values[0])
    grid = np.arange(grid_size) / (grid_size - 1)
    source = np.arange(t) / (t - 1)
    return np.interp(grid, source, values)


def record_values(record: AttentionRecord, source: str) -> np.ndarray:
    if source not in SOURCES:
        raise ValueError(f"source must be one of {SOURCES}, got {source!r}")
    return record.logits if source == "logits" else record.weights


def average_profile(
    records: list[AttentionRecord], source: str, grid_size: int = 100
) -> PositionProfile:
    """Pointwise mean of each record's resampled value sequence."""
    if not records:
        raise ValueError("average_profile requires at least one record")
    acc = np.zeros(grid_size)
    for record in records:
        acc += resample_profile(record_values(record, source), grid_size)
    return PositionProfile(
        grid_size,
        np.arange(grid_size) / (grid_size - 1),
        acc / len(records),
        len(records),
    )


def first_k_mass(record: AttentionRecord, k: int) -> tuple[float, float]:
    """(attention mass of the first k frames, fraction of frames they are)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    t = record.weights.size
    kk = min(k, t)
    return float(record.weights[:kk].sum()), kk / t


def corpus_first_k_mass(records: list[AttentionRecord], k: int) -> tuple[float, float]:
    """Corpus-level aggregation: mean of each fraction over utterances."""
    if not records:
        raise ValueError("corpus_first_k_mass requires at least one record")
    pairs = [first_k_mass(r, k) for r in records]
    return (
        sum(p[0] for p in pairs) / len(pairs),
        sum(p[1] for p in pairs) / len(pairs),
    )


def word_logit_sums(record: AttentionRecord, spans: list[Span]) -> list[WordAttentionStat]:
    """Per word, the sum of pre-softmax logits over the word's span."""
    t = record.logits.size
    stats = []
    for span in spans:
        if not (0 <= span.start < span.end <= t):
            raise ValueError(
                f"span [{span.start}, {span.end}) out of range for T={t} in {record.utt_id}"
            )
        stats.append(
            WordAttentionStat(
                span.surface,
                record.utt_id,
                float(record.logits[span.start : span.end].sum()),
                span.end - span.start,
            )
        )
    return stats


def word_reports(
    stats: list[WordAttentionStat], top_n: int = 10, freq_n: int = 10
) -> tuple[list[tuple[str, float]], list[tuple[str, int, float]]]:
    """(top words by max single-utterance logit sum, most frequent words with
    their mean logit sum). Ties break by ascending word."""
    if not stats:
        raise ValueError("word_reports requires at least one stat")
    max_sum: dict[str, float] = {}
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for st in stats:
        if st.word not in max_sum or st.logit_sum > max_sum[st.word]:
            max_sum[st.word] = st.logit_sum
        sums[st.word] = sums.get(st.word, 0.0) + st.logit_sum
        counts[st.word] = counts.get(st.word, 0) + 1

    top = sorted(max_sum.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
    frequent = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:freq_n]
    freq_table = [(w, c, sums[w] / c) for w, c in frequent]
    return top, freq_table


def collect_records(
    params: ModelParams, manifest: Manifest
) -> list[tuple[AttentionRecord, list[Span]]]:
    """Run the encoder over a manifest, keeping each record with its alignment."""
    out = []
    for entry in manifest.entries:
        seq = load_frame_sequence(manifest, entry)
        _, _, record = forward(params, seq)
        out.append((record, seq.alignment))
    return out


# ---------------------------------------------------------------- file output

def write_profile_csv(profile: PositionProfile, path: Path) -> None:
    lines = ["position,value,n_utterances"]
    for pos, val in zip(profile.positions, profile.values):
        lines.append(f"{pos:.8e},{val:.8e},{profile.n_utterances}")
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def write_first_k_csv(records: list[AttentionRecord], k: int, path: Path) -> None:
    lines = ["utt_id,mass_fraction,frame_fraction"]
    for record in records:
        mass, frac = first_k_mass(record, k)
        lines.append(f"{record.utt_id},{mass:.8e},{frac:.8e}")
    mass, frac = corpus_first_k_mass(records, k)
    lines.append(f"ALL,{mass:.8e},{frac:.8e}")
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def write_word_stats_csv(stats: list[WordAttentionStat], path: Path) -> None:
    lines = ["word,utt_id,logit_sum,span_len"]
    for st in stats:
        lines.append(f"{st.word},{st.utt_id},{st.logit_sum:.8e},{st.span_len}")
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def write_word_reports_csv(
    top: list[tuple[str, float]],
    frequent: list[tuple[str, int, float]],
    top_path: Path,
    freq_path: Path,
) -> None:
    lines = ["word,max_logit_sum"]
    lines += [f"{w},{s:.8e}" for w, s in top]
    atomic_write_text(Path(top_path), "\n".join(lines) + "\n")
    lines = ["word,count,mean_logit_sum"]
    lines += [f"{w},{c},{s:.8e}" for w, c, s in frequent]
    atomic_write_text(Path(freq_path), "\n".join(lines) + "\n")


def profile_svg(profile: PositionProfile, title: str = "Average attention profile") -> str:
    """Self-contained SVG line chart of a position profile."""
    width, height = 640, 360
    left, right, top, bottom = 60, 20, 30, 40
    plot_w = width - left - right
    plot_h = height - top - bottom

    lo = float(profile.values.min())
    hi = float(profile.values.max())
    if hi == lo:
        hi = lo + 1.0

    def sx(pos: float) -> float:
        return left + pos * plot_w

    def sy(val: float) -> float:
        return top + (hi - val) / (hi - lo) * plot_h

    points = " ".join(
        f"{sx(p):.2f},{sy(v):.2f}" for p, v in zip(profile.positions, profile.values)
    )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
        f'<rect width="{width}" height="{height}" fill="white"/>\n'
        f'<text x="{width / 2:.0f}" y="18" text-anchor="middle" font-size="14" '
        f'font-family="sans-serif">{title} (n={profile.n_utterances})</text>\n'
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" y2="{top + plot_h}" '
        f'stroke="black"/>\n'
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="black"/>\n'
        f'<text x="{left}" y="{height - 12}" text-anchor="middle" font-size="11" '
        f'font-family="sans-serif">0</text>\n'
        f'<text x="{left + plot_w}" y="{height - 12}" text-anchor="middle" font-size="11" '
        f'font-family="sans-serif">1</text>\n'
        f'<text x="{width / 2:.0f}" y="{height - 12}" text-anchor="middle" font-size="11" '
        f'font-family="sans-serif">normalized position</text>\n'
        f'<text x="{left - 6}" y="{sy(hi) + 4:.2f}" text-anchor="end" font-size="11" '
        f'font-family="sans-serif">{hi:.3g}</text>\n'
        f'<text x="{left - 6}" y="{sy(lo) + 4:.2f}" text-anchor="end" font-size="11" '
        f'font-family="sans-serif">{lo:.3g}</text>\n'
        f'<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{points}"/>\n'
        f"</svg>\n"
    )


def write_profile_svg(profile: PositionProfile, path: Path, title: str | None = None) -> None:
    svg = profile_svg(profile) if title is None else profile_svg(profile, title)
    atomic_write_text(Path(path), svg)
