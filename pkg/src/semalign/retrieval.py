"""Translation-retrieval protocol: embedding databases, exact cosine top-k,
Recall@k and scenario report tables.

A query database and a search database are built in either modality (speech
through the student encoder, text through the teacher), optionally normalized
by mean subtraction, and each query must retrieve its gold counterpart by
exact cosine ranking. Search is exhaustive on purpose; desk-scale databases
need no index and exactness keeps the oracle tests meaningful.

Store file: header ``SENSE-EMB 1 <dim> <count> <centered:0|1>``, an optional
``#center`` line holding the subtracted mean, then ``id<TAB>f1 f2 ...`` per
entry. Gold map file: ``query_id<TAB>search_id`` lines.
Report CSV: ``query_lang,query_mod,search_lang,search_mod,n_query,n_search,k,recall``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import (
    Manifest,
    atomic_write_text,
    float_repr,
    load_frame_sequence,
    meaning_id,
    teacher_embed,
)
from .model import ModelParams, forward

STORE_MAGIC = "SENSE-EMB 1"
CENTERINGS = ("per-db", "joint", "none")


@dataclass
class EmbeddingStore:
    dim: int
    ids: list[str]
    vectors: np.ndarray  # (n, dim)
    centered: bool = False
    center_vector: np.ndarray | None = None

    def __post_init__(self):
        if self.center_vector is None:
            self.center_vector = np.zeros(self.dim)
        if len(self.ids) != len(set(self.ids)):
            raise ValueError("store ids must be unique")
        if self.vectors.shape != (len(self.ids), self.dim):
            raise ValueError(
                f"vectors shape {self.vectors.shape} does not match "
                f"({len(self.ids)}, {self.dim})"
            )
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("store vectors must be finite")

    def __len__(self) -> int:
        return len(self.ids)


def embed_manifest(
    params: ModelParams | None, manifest: Manifest, modality: str
) -> EmbeddingStore:
    """Embed every manifest entry; store order equals manifest order.

    speech runs the student encoder over the frames files; text uses the
    teacher anchors (params may be None in that case).
    """
    if modality not in ("speech", "text"):
        raise ValueError(f"modality must be 'speech' or 'text', got {modality!r}")
    ids = []
    rows = []
    for entry in manifest.entries:
        ids.append(entry.utt_id)
        if modality == "speech":
            if params is None:
                raise ValueError("speech embedding requires model parameters")
            seq = load_frame_sequence(manifest, entry)
            s, _, _ = forward(params, seq)
            rows.append(s)
        else:
            rows.append(teacher_embed(entry.concepts, manifest.d_e, manifest.seed))
    dim = params.dims.d_e if modality == "speech" else manifest.d_e
    return EmbeddingStore(dim, ids, np.array(rows).reshape(len(ids), dim))


def mean_center(store: EmbeddingStore) -> EmbeddingStore:
    """New store with the entry mean subtracted from every vector."""
    if len(store) == 0:
        raise ValueError("cannot center an empty store")
    if store.centered:
        raise ValueError("store is already centered")
    mean = store.vectors.mean(axis=0)
    return EmbeddingStore(
        store.dim, list(store.ids), store.vectors - mean, centered=True, center_vector=mean
    )


def _center_with(store: EmbeddingStore, mean: np.ndarray) -> EmbeddingStore:
    if store.centered:
        raise ValueError("store is already centered")
    return EmbeddingStore(
        store.dim, list(store.ids), store.vectors - mean, centered=True, center_vector=mean
    )


def top_k(query: np.ndarray, store: EmbeddingStore, k: int) -> list[tuple[str, float]]:
    """Exact cosine ranking, descending, ties by ascending id.

    Zero-norm store entries score -inf and rank last.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    query = np.asarray(query, dtype=float)
    if query.shape != (store.dim,):
        raise ValueError(f"query shape {query.shape} does not match store dim {store.dim}")
    qn = np.linalg.norm(query)
    if qn == 0.0:
        raise ValueError("query has zero norm")

    norms = np.linalg.norm(store.vectors, axis=1)
    scores = np.full(len(store), -np.inf)
    nonzero = norms > 0.0
    scores[nonzero] = (store.vectors[nonzero] @ query) / (norms[nonzero] * qn)
    ranked = sorted(zip(store.ids, scores), key=lambda pair: (-pair[1], pair[0]))
    return [(i, float(sc)) for i, sc in ranked[: min(k, len(store))]]


def load_gold(path: Path) -> dict[str, str]:
    gold = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line:
            continue
        qid, sid = line.split("\t")
        gold[qid] = sid
    return gold


def write_gold(gold: dict[str, str], path: Path) -> None:
    atomic_write_text(Path(path), "".join(f"{q}\t{s}\n" for q, s in gold.items()))


def gold_by_meaning(query_ids: list[str], search_ids: list[str]) -> dict[str, str]:
    """Gold map pairing ids that share the meaning prefix of their utt_ids."""
    by_meaning: dict[str, str] = {}
    for sid in search_ids:
        by_meaning.setdefault(meaning_id(sid), sid)
    gold = {}
    for qid in query_ids:
        mid = meaning_id(qid)
        if mid not in by_meaning:
            raise ValueError(f"no search entry shares a meaning with query {qid}")
        gold[qid] = by_meaning[mid]
    return gold


def recall_at_k(
    query_store: EmbeddingStore,
    search_store: EmbeddingStore,
    gold: dict[str, str],
    k: int,
    centering: str = "per-db",
) -> float:
    """Percentage of queries whose gold item appears in their top-k results."""
    if not gold:
        raise ValueError("gold map is empty")
    if centering not in CENTERINGS:
        raise ValueError(f"centering must be one of {CENTERINGS}, got {centering!r}")

    if centering == "per-db":
        query_store = mean_center(query_store)
        search_store = mean_center(search_store)
    elif centering == "joint":
        pooled = np.concatenate([query_store.vectors, search_store.vectors])
        mean = pooled.mean(axis=0)
        query_store = _center_with(query_store, mean)
        search_store = _center_with(search_store, mean)

    query_index = {qid: i for i, qid in enumerate(query_store.ids)}
    search_ids = set(search_store.ids)
    hits = 0
    for qid, sid in gold.items():
        if qid not in query_index:
            raise ValueError(f"gold query id {qid} not found in the query store")
        if sid not in search_ids:
            raise ValueError(f"gold search id {sid} not found in the search store")
        ranked = top_k(query_store.vectors[query_index[qid]], search_store, k)
        if any(rid == sid for rid, _ in ranked):
            hits += 1
    return 100.0 * hits / len(gold)


@dataclass(frozen=True)
class Scenario:
    query_manifest: Manifest
    query_modality: str
    search_manifest: Manifest
    search_modality: str
    gold: dict[str, str]


def _lang_label(manifest: Manifest) -> str:
    langs = {e.lang for e in manifest.entries}
    return str(langs.pop()) if len(langs) == 1 else "mixed"


def retrieval_matrix(
    scenarios: list[Scenario],
    params: ModelParams | None,
    k: int,
    centering: str = "per-db",
) -> list[dict]:
    """One report row per scenario, in scenario order."""
    rows = []
    for sc in scenarios:
        q_store = embed_manifest(params, sc.query_manifest, sc.query_modality)
        s_store = embed_manifest(params, sc.search_manifest, sc.search_modality)
        recall = recall_at_k(q_store, s_store, sc.gold, k, centering)
        rows.append(
            {
                "query_lang": _lang_label(sc.query_manifest),
                "query_mod": sc.query_modality,
                "search_lang": _lang_label(sc.search_manifest),
                "search_mod": sc.search_modality,
                "n_query": len(q_store),
                "n_search": len(s_store),
                "k": k,
                "recall": recall,
            }
        )
    return rows


REPORT_HEADER = "query_lang,query_mod,search_lang,search_mod,n_query,n_search,k,recall"


def write_report_csv(rows: list[dict], path: Path) -> None:
    lines = [REPORT_HEADER]
    for r in rows:
        lines.append(
            f"{r['query_lang']},{r['query_mod']},{r['search_lang']},{r['search_mod']},"
            f"{r['n_query']},{r['n_search']},{r['k']},{r['recall']:.2f}"
        )
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def save_store(store: EmbeddingStore, path: Path) -> None:
    lines = [f"{STORE_MAGIC} {store.dim} {len(store)} {1 if store.centered else 0}"]
    if store.centered:
        lines.append("#center\t" + " ".join(float_repr(x) for x in store.center_vector))
    for i, utt_id in enumerate(store.ids):
        lines.append(utt_id + "\t" + " ".join(float_repr(x) for x in store.vectors[i]))
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def load_store(path: Path) -> EmbeddingStore:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"empty store file {path}")
    head = lines[0].split()
    if " ".join(head[:2]) != STORE_MAGIC or len(head) != 5:
        raise ValueError(f"bad store header in {path}")
    dim, count, centered = int(head[2]), int(head[3]), head[4] == "1"
    body = lines[1:]
    center = np.zeros(dim)
    if centered:
        tag, _, values = body[0].partition("\t")
        if tag != "#center":
            raise ValueError(f"centered store {path} is missing its #center line")
        center = np.array([float(x) for x in values.split(" ")])
        body = body[1:]
    ids = []
    rows = []
    for line in body:
        if not line:
            continue
        utt_id, _, values = line.partition("\t")
        ids.append(utt_id)
        rows.append([float(x) for x in values.split(" ")])
    if len(ids) != count:
        raise ValueError(f"store {path} has {len(ids)} entries, header says {count}")
    return EmbeddingStore(
        dim, ids, np.array(rows).reshape(count, dim), centered=centered, center_vector=center
    )
