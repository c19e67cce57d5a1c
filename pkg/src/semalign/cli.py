"""Command-line entry point wiring corpus -> train -> embed -> retrieve ->
analyze -> score.

Settings resolve in three layers: built-in defaults, then a ``--config``
key=value file, then explicit flags (last flag wins). Every run writes its
fully resolved settings to a ``run.meta`` file (next to directory outputs, or
as ``<output>.run.meta`` for file outputs); feeding that file back through
``--config`` reproduces the run byte-identically.

All randomness flows from the single ``seed`` setting; each module receives
a sub-seed derived by hashing (seed, module name) through the corpus PRNG.

Exit codes: 0 success, 2 configuration/validation, 3 I/O, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

from . import attention, corpus, retrieval, slu_metrics, training
from . import model as model_mod
from .errors import ConfigurationError, NumericError
from .prng import derive_seed

ARTIFACT_VERSION = "0.1.0"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

_REQUIRED = object()


@dataclass(frozen=True)
class Setting:
    name: str
    kind: str  # int | float | str | bool
    default: object = _REQUIRED
    help: str = ""

    def convert(self, raw: str):
        if self.kind == "int":
            return int(raw)
        if self.kind == "float":
            return float(raw)
        if self.kind == "bool":
            return raw.strip().lower() in ("1", "true", "yes")
        return raw


def _parse_kv_file(path: Path) -> dict[str, str]:
    pairs = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key=value")
        key, _, value = line.partition("=")
        pairs[key.strip()] = value.strip()
    return pairs


def _resolve(subcommand: str, settings: list[Setting], args: argparse.Namespace) -> dict:
    by_name = {s.name: s for s in settings}
    values = {s.name: (None if s.default is _REQUIRED else s.default) for s in settings}

    if getattr(args, "config", None):
        raw = _parse_kv_file(Path(args.config))
        file_sub = raw.pop("subcommand", None)
        raw.pop("artifact_version", None)
        if file_sub is not None and file_sub != subcommand:
            raise ConfigurationError(
                f"config file is for subcommand {file_sub!r}, not {subcommand!r}"
            )
        for key, value in raw.items():
            if key not in by_name:
                raise ConfigurationError(f"unknown config key {key!r} for {subcommand}")
            values[key] = by_name[key].convert(value)

    for setting in settings:
        flag_value = getattr(args, setting.name, None)
        if flag_value is not None:
            values[setting.name] = flag_value

    for setting in settings:
        if setting.default is _REQUIRED and values[setting.name] is None:
            raise ConfigurationError(f"missing required setting --{setting.name.replace('_', '-')}")
    return values


def _write_run_meta(path: Path, subcommand: str, values: dict) -> None:
    lines = [f"subcommand={subcommand}", f"artifact_version={ARTIFACT_VERSION}"]
    for key in sorted(values):
        value = values[key]
        if value is None:
            continue
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key}={value}")
    path.parent.mkdir(parents=True, exist_ok=True)
    corpus.atomic_write_text(path, "\n".join(lines) + "\n")


# ------------------------------------------------------------------ commands

GEN_CORPUS_SETTINGS = [
    Setting("languages", "int", 2),
    Setting("concepts", "int", 16),
    Setting("sentences", "int", 8),
    Setting("dim_in", "int", 8),
    Setting("dim_embed", "int", 16),
    Setting("seed", "int", 0),
    Setting("out", "str"),
]


def cmd_gen_corpus(values: dict) -> int:
    spec = corpus.CorpusSpec(
        num_langs=values["languages"],
        num_concepts=values["concepts"],
        sentences_per_lang=values["sentences"],
        d_in=values["dim_in"],
        d_e=values["dim_embed"],
        seed=derive_seed(values["seed"], "corpus"),
    )
    out = Path(values["out"])
    manifest = corpus.gen_corpus(spec, out)
    _write_run_meta(out / "run.meta", "gen-corpus", values)
    print(f"wrote {len(manifest.entries)} utterances to {out / corpus.MANIFEST_NAME}")
    return EXIT_OK


_TRAIN_DEFAULTS = training.TrainConfig()

TRAIN_SETTINGS = [
    Setting("manifest", "str"),
    Setting("out", "str"),
    Setting("heldout", "str", None),
    Setting("dim_hidden", "int", 32),
    Setting("dim_attn", "int", 0),  # 0 means: use dim_hidden
    Setting("epochs", "int", _TRAIN_DEFAULTS.epochs),
    Setting("batch_size", "int", _TRAIN_DEFAULTS.batch_size),
    Setting("lr_encoder", "float", _TRAIN_DEFAULTS.lr_encoder),
    Setting("lr_pool", "float", _TRAIN_DEFAULTS.lr_pool),
    Setting("beta1", "float", _TRAIN_DEFAULTS.beta1),
    Setting("beta2", "float", _TRAIN_DEFAULTS.beta2),
    Setting("eps", "float", _TRAIN_DEFAULTS.eps),
    Setting("seed", "int", 0),
    Setting("checkpoint_every", "int", 0),
]


def cmd_train(values: dict) -> int:
    manifest = corpus.load_manifest(Path(values["manifest"]))
    heldout = corpus.load_manifest(Path(values["heldout"])) if values["heldout"] else None
    cfg = training.TrainConfig(
        epochs=values["epochs"],
        batch_size=values["batch_size"],
        lr_encoder=values["lr_encoder"],
        lr_pool=values["lr_pool"],
        beta1=values["beta1"],
        beta2=values["beta2"],
        eps=values["eps"],
        seed=derive_seed(values["seed"], "training"),
        checkpoint_every=values["checkpoint_every"],
    )
    d_h = values["dim_hidden"]
    d_a = values["dim_attn"] or d_h
    dims = model_mod.ModelDims(manifest.d_in, d_h, d_a, manifest.d_e)
    params = model_mod.init_params(dims, derive_seed(values["seed"], "model-init"))

    out = Path(values["out"])
    _, report = training.train(cfg, manifest, params, heldout=heldout, out_dir=out)
    training.write_report_csv(report, out / "train_report.csv")
    _write_run_meta(out / "run.meta", "train", values)
    final_cos = report.heldout_cosines[-1]
    print(
        f"trained {cfg.epochs} epochs; final mean loss {report.epoch_losses[-1]:.6f}, "
        f"held-out mean cosine {final_cos:.6f}"
    )
    return EXIT_OK


EMBED_SETTINGS = [
    Setting("manifest", "str"),
    Setting("model", "str", None),
    Setting("modality", "str"),
    Setting("langs", "str", None),
    Setting("out", "str"),
]


def cmd_embed(values: dict) -> int:
    manifest = corpus.load_manifest(Path(values["manifest"]))
    if values["langs"]:
        langs = {int(x) for x in values["langs"].split(",")}
        manifest = corpus.filter_manifest(manifest, langs=langs)
    params = None
    if values["modality"] == "speech":
        if not values["model"]:
            raise ConfigurationError("speech embedding requires --model")
        params = model_mod.load_model(Path(values["model"]))
    store = retrieval.embed_manifest(params, manifest, values["modality"])
    out = Path(values["out"])
    retrieval.save_store(store, out)
    _write_run_meta(Path(str(out) + ".run.meta"), "embed", values)
    print(f"wrote {len(store)} {values['modality']} embeddings to {out}")
    return EXIT_OK


RETRIEVE_SETTINGS = [
    Setting("query_store", "str"),
    Setting("search_store", "str"),
    Setting("gold", "str", None),
    Setting("gold_by_meaning", "bool", False),
    Setting("k", "int", 1),
    Setting("center", "str", "per-db"),
    Setting("query_lang", "str", "-"),
    Setting("query_mod", "str", "-"),
    Setting("search_lang", "str", "-"),
    Setting("search_mod", "str", "-"),
    Setting("out", "str"),
]


def cmd_retrieve(values: dict) -> int:
    query_store = retrieval.load_store(Path(values["query_store"]))
    search_store = retrieval.load_store(Path(values["search_store"]))
    if values["gold"]:
        gold = retrieval.load_gold(Path(values["gold"]))
    elif values["gold_by_meaning"]:
        gold = retrieval.gold_by_meaning(query_store.ids, search_store.ids)
    else:
        raise ConfigurationError("provide --gold FILE or --gold-by-meaning")
    recall = retrieval.recall_at_k(
        query_store, search_store, gold, values["k"], values["center"]
    )
    row = {
        "query_lang": values["query_lang"],
        "query_mod": values["query_mod"],
        "search_lang": values["search_lang"],
        "search_mod": values["search_mod"],
        "n_query": len(query_store),
        "n_search": len(search_store),
        "k": values["k"],
        "recall": recall,
    }
    out = Path(values["out"])
    retrieval.write_report_csv([row], out)
    _write_run_meta(Path(str(out) + ".run.meta"), "retrieve", values)
    print(f"R@{values['k']} = {recall:.2f}")
    return EXIT_OK


ATTN_SETTINGS = [
    Setting("manifest", "str"),
    Setting("model", "str"),
    Setting("source", "str", "logits"),
    Setting("grid", "int", 100),
    Setting("first_k", "int", 5),
    Setting("top_n", "int", 10),
    Setting("freq_n", "int", 10),
    Setting("svg", "bool", False),
    Setting("out", "str"),
]


def cmd_attn(values: dict) -> int:
    manifest = corpus.load_manifest(Path(values["manifest"]))
    params = model_mod.load_model(Path(values["model"]))
    pairs = attention.collect_records(params, manifest)
    records = [record for record, _ in pairs]

    out = Path(values["out"])
    out.mkdir(parents=True, exist_ok=True)
    profile = attention.average_profile(records, values["source"], values["grid"])
    attention.write_profile_csv(profile, out / "profile.csv")
    attention.write_first_k_csv(records, values["first_k"], out / "first_k.csv")

    stats = []
    for record, spans in pairs:
        stats.extend(attention.word_logit_sums(record, spans))
    attention.write_word_stats_csv(stats, out / "word_stats.csv")
    top, frequent = attention.word_reports(stats, values["top_n"], values["freq_n"])
    attention.write_word_reports_csv(
        top, frequent, out / "top_words.csv", out / "frequent_words.csv"
    )
    if values["svg"]:
        attention.write_profile_svg(
            profile, out / "profile.svg", f"Average attention {values['source']}"
        )
    _write_run_meta(out / "run.meta", "attn", values)
    mass, frac = attention.corpus_first_k_mass(records, values["first_k"])
    print(
        f"analyzed {len(records)} utterances; first {values['first_k']} frames hold "
        f"{100 * mass:.2f}% of attention mass over {100 * frac:.2f}% of frames"
    )
    return EXIT_OK


SLU_SCORE_SETTINGS = [
    Setting("refs", "str"),
    Setting("hyps", "str"),
    Setting("tags", "str"),
    Setting("out", "str"),
]


def cmd_slu_score(values: dict) -> int:
    tags = slu_metrics.load_tag_table(Path(values["tags"]))
    breakdowns = slu_metrics.score_files(Path(values["refs"]), Path(values["hyps"]), tags)
    out = Path(values["out"])
    slu_metrics.write_breakdown_csv(breakdowns, out)
    _write_run_meta(Path(str(out) + ".run.meta"), "slu-score", values)
    for metric, b in breakdowns.items():
        print(f"{metric}: rate {b.rate:.2f} (S={b.substitutions} I={b.insertions} D={b.deletions} N={b.ref_count})")
    return EXIT_OK


_COMMANDS = {
    "gen-corpus": (GEN_CORPUS_SETTINGS, cmd_gen_corpus),
    "train": (TRAIN_SETTINGS, cmd_train),
    "embed": (EMBED_SETTINGS, cmd_embed),
    "retrieve": (RETRIEVE_SETTINGS, cmd_retrieve),
    "attn": (ATTN_SETTINGS, cmd_attn),
    "slu-score": (SLU_SCORE_SETTINGS, cmd_slu_score),
}

_ARG_TYPES = {"int": int, "float": float, "str": str}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semalign",
        description="Teacher-student utterance embedding alignment toolkit",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, (settings, _) in _COMMANDS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", help="key=value settings file (flags override)")
        for s in settings:
            flag = "--" + s.name.replace("_", "-")
            if s.kind == "bool":
                p.add_argument(flag, dest=s.name, action="store_true", default=None)
            else:
                p.add_argument(flag, dest=s.name, type=_ARG_TYPES[s.kind], default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings, handler = _COMMANDS[args.subcommand]
    try:
        values = _resolve(args.subcommand, settings, args)
        return handler(values)
    except ConfigurationError as exc:
        print(f"semalign {args.subcommand}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"semalign {args.subcommand}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"semalign {args.subcommand}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"semalign {args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
