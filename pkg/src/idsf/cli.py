"""Command-line entry point: prepare / train / evaluate / ablate / sweep /
analyze, driven by a JSON config file with flag overrides.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis as analysis_mod
from . import data as dataio
from .errors import ConfigError, DataError, NumericError
from .evaluate import evaluate
from .graph import build_graph
from .model import IDSFModel, ModelConfig
from .trainer import fit

log = logging.getLogger(__name__)

DATASET_DEFAULTS = {
    # dataset name -> (beta, gamma)
    "baby": (0.3, 0.3),
    "sports": (1.0, 0.3),
    "clothing": (1.0, 1.0),
}

DATA_KEYS = {"interactions", "features_t", "features_v", "split_seed", "ratios",
             "split_mode", "dataset", "split_manifest", "synthetic"}
SYNTH_KEYS = {"users", "items", "clusters", "seed", "interactions_per_user"}

ABLATION_ALIASES = {
    "none": "none",
    "no_content": "no_content",
    "no_contrast": "content_no_contrast",
    "content_no_id": "content_no_id",
    "structure_no_id": "structure_no_id",
}

SWEEP_GRID = (0.0, 0.1, 0.3, 0.5, 1.0)


def load_config(path, overrides: dict) -> tuple[dict, ModelConfig]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    unknown = set(doc) - {"data", "model"}
    if unknown:
        raise ConfigError(f"unknown top-level config keys: {sorted(unknown)}")
    data_cfg = doc.get("data", {})
    model_cfg = dict(doc.get("model", {}))
    bad = set(data_cfg) - DATA_KEYS
    if bad:
        raise ConfigError(f"unknown data config keys: {sorted(bad)}")
    synth = data_cfg.get("synthetic")
    if synth:
        bad = set(synth) - SYNTH_KEYS
        if bad:
            raise ConfigError(f"unknown synthetic config keys: {sorted(bad)}")

    dataset_name = data_cfg.get("dataset")
    if dataset_name:
        defaults = DATASET_DEFAULTS.get(dataset_name.lower())
        if defaults:
            model_cfg.setdefault("beta", defaults[0])
            model_cfg.setdefault("gamma", defaults[1])
    for key, value in overrides.items():
        if value is not None:
            model_cfg[key] = value
    return data_cfg, ModelConfig.from_dict(model_cfg)


def build_dataset(data_cfg: dict, out_dir: Path, data_dir: Path | None):
    """Returns (dataset, feature tables dict).  Synthetic config wins over
    file paths; a split manifest, when present, pins the exact split."""
    synth = data_cfg.get("synthetic")
    ratios = tuple(data_cfg.get("ratios", (0.8, 0.1, 0.1)))
    seed = int(data_cfg.get("split_seed", 0))
    mode = data_cfg.get("split_mode", "per_user")

    def resolve(p):
        p = Path(p)
        if not p.is_absolute() and data_dir is not None:
            p = data_dir / p
        return p

    if synth:
        records, table_t, table_v = dataio.generate_synthetic(
            user_count=int(synth.get("users", 50)),
            item_count=int(synth.get("items", 200)),
            cluster_count=int(synth.get("clusters", 5)),
            rng_seed=int(synth.get("seed", 7)),
            interactions_per_user=int(synth.get("interactions_per_user", 15)))
        dataset = dataio.split_dataset(records, ratios, seed, mode)
        # items without interactions are dropped by the split; keep only
        # the surviving rows, in dataset order
        rows = [int(raw[1:]) for raw in dataset.item_ids]
        features = {t.modality: dataio.ModalFeatureTable(
            t.modality, t.raw_dim, t.matrix[rows]) for t in (table_t, table_v)}
        return dataset, features, ratios, seed

    manifest = data_cfg.get("split_manifest")
    if manifest and resolve(manifest).exists():
        dataset = dataio.read_split_manifest(resolve(manifest))
    else:
        if "interactions" not in data_cfg:
            raise ConfigError("config needs data.interactions or data.synthetic")
        records = dataio.load_interactions(resolve(data_cfg["interactions"]))
        dataset = dataio.split_dataset(records, ratios, seed, mode)
    features = {}
    for m, key in (("t", "features_t"), ("v", "features_v")):
        if key in data_cfg and data_cfg[key]:
            features[m] = dataio.load_features(resolve(data_cfg[key]), dataset, m)
    return dataset, features, ratios, seed


def check_modalities(config: ModelConfig, features: dict) -> None:
    for m in config.modalities:
        if m not in features:
            raise ConfigError(
                f"modality {m!r} requested but no feature file configured; "
                f"narrow --modalities or provide features_{m}")


def write_run_manifest(out_dir: Path, config: ModelConfig, data_cfg: dict) -> None:
    snapshot = {"model": config.to_dict(), "data": data_cfg}
    blob = json.dumps(snapshot, sort_keys=True).encode("utf-8")
    run_id = hashlib.sha256(blob).hexdigest()[:16]
    checksums = {}
    for key in ("interactions", "features_t", "features_v"):
        p = data_cfg.get(key)
        if p and Path(p).exists():
            checksums[key] = hashlib.sha256(Path(p).read_bytes()).hexdigest()
    doc = {"run_id": run_id, "config": snapshot, "checksums": checksums,
           "output_dir": str(out_dir)}
    (out_dir / "run_manifest.json").write_text(json.dumps(doc, indent=2),
                                               encoding="utf-8")


def make_model(config: ModelConfig, dataset, features) -> IDSFModel:
    check_modalities(config, features)
    graph = build_graph(dataset)
    return IDSFModel(config, dataset, graph, features)


# -- commands ----------------------------------------------------------------

def cmd_prepare(args, data_cfg, config) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset, _, ratios, seed = build_dataset(data_cfg, out, args.data_dir)
    dataio.write_split_manifest(out / "split.json", dataset, seed, ratios)
    print(f"split manifest written to {out / 'split.json'} "
          f"({dataset.user_count} users, {dataset.item_count} items)")
    return 0


def cmd_train(args, data_cfg, config) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset, features, ratios, seed = build_dataset(data_cfg, out, args.data_dir)
    dataio.write_split_manifest(out / "split.json", dataset, seed, ratios)
    write_run_manifest(out, config, data_cfg)
    model = make_model(config, dataset, features)
    state = fit(model, dataset, checkpoint_dir=out / "checkpoint",
                progress_path=out / "progress.jsonl",
                max_epochs=args.max_epochs)
    (out / "history.json").write_text(json.dumps(state.history, indent=2),
                                      encoding="utf-8")
    print(f"best epoch {state.best_epoch}: validation Recall@20 = "
          f"{100.0 * state.best_recall20:.3f}%")
    return 0


def cmd_evaluate(args, data_cfg, config) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset, features, _, _ = build_dataset(data_cfg, out, args.data_dir)
    model = make_model(config, dataset, features)
    ckpt = out / "checkpoint"
    if ckpt.exists():
        model.load_checkpoint(ckpt)
    report = evaluate(model, dataset, args.split, config_echo=config.to_dict())
    (out / f"eval_{args.split}.json").write_text(report.to_json(), encoding="utf-8")
    print(report.to_table())
    return 0


def cmd_ablate(args, data_cfg, config) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    variants = ["none", "no_content", "content_no_contrast", "content_no_id",
                "structure_no_id"]
    for variant in variants:
        cfg = ModelConfig.from_dict({**config.to_dict(), "ablation": variant})
        dataset, features, _, _ = build_dataset(data_cfg, out, args.data_dir)
        model = make_model(cfg, dataset, features)
        fit(model, dataset, max_epochs=args.max_epochs)
        report = evaluate(model, dataset, "test")
        pct = report.as_percent()
        label = "IDSF" if variant == "none" else variant
        rows.append([label] + [round(pct[k][m], 3)
                               for k in (10, 20) for m in ("recall", "precision", "ndcg")])
    header = ["variant", "R@10", "P@10", "N@10", "R@20", "P@20", "N@20"]
    with open(out / "ablation.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    widths = [max(len(str(r[c])) for r in [header] + rows) for c in range(len(header))]
    for r in [header] + rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)))
    return 0


def cmd_sweep(args, data_cfg, config) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for gamma in SWEEP_GRID:
        for beta in SWEEP_GRID:
            cfg = ModelConfig.from_dict({**config.to_dict(),
                                         "gamma": gamma, "beta": beta})
            dataset, features, _, _ = build_dataset(data_cfg, out, args.data_dir)
            model = make_model(cfg, dataset, features)
            fit(model, dataset, max_epochs=args.max_epochs)
            report = evaluate(model, dataset, "test")
            pct = report.as_percent()
            rows.append([gamma, beta,
                         round(pct[20]["recall"], 4),
                         round(pct[20]["precision"], 4),
                         round(pct[20]["ndcg"], 4)])
            print(f"gamma={gamma} beta={beta} -> R@20={rows[-1][2]}")
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gamma", "beta", "recall20", "precision20", "ndcg20"])
        writer.writerows(rows)
    return 0


def cmd_analyze(args, data_cfg, config) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset, features, _, _ = build_dataset(data_cfg, out, args.data_dir)
    model = make_model(config, dataset, features)
    ckpt = out / "checkpoint"
    if ckpt.exists():
        model.load_checkpoint(ckpt)
    rng = np.random.default_rng(config.seed)
    items, labels = analysis_mod.sample_user_items(dataset, args.sample_users, rng)
    for selector, table in (("item-id-t", "item_id_t"), ("item-id-v", "item_id_v")):
        rows = model.params[table][items]
        sim = analysis_mod.similarity_matrix(rows, items, labels)
        filtered = analysis_mod.top_k_row_filter(sim, k=args.top_k)
        analysis_mod.similarity_csv(filtered, out / f"similarity_{selector}.csv")
    for selector in ("item-id-t", "item-id-v", "user-id", "projected-t",
                     "projected-v", "fused-c", "structural-s"):
        try:
            analysis_mod.export_embeddings(model, selector,
                                           out / f"emb_{selector}.mat")
        except AttributeError:
            log.warning("selector %s unavailable under this config", selector)
    within, cross = analysis_mod.group_similarity_means(
        analysis_mod.similarity_matrix(model.params["item_id_t"][items], items, labels))
    print(f"item-ID similarity: within-group mean {within:.4f}, "
          f"cross-group mean {cross:.4f}")
    return 0


# -- argument plumbing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="idsf")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("prepare", cmd_prepare), ("train", cmd_train),
                     ("evaluate", cmd_evaluate), ("ablate", cmd_ablate),
                     ("sweep", cmd_sweep), ("analyze", cmd_analyze)):
        p = sub.add_parser(name)
        p.set_defaults(handler=fn)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default="runs/latest")
        p.add_argument("--data-dir", type=Path, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--gamma", type=float, default=None)
        p.add_argument("--beta", type=float, default=None)
        p.add_argument("--modalities", choices=("t", "v", "tv"), default=None)
        p.add_argument("--enhanced", choices=("on", "off"), default=None)
        p.add_argument("--ablation", choices=sorted(ABLATION_ALIASES), default=None)
        p.add_argument("--max-epochs", type=int, default=None)
        if name == "evaluate":
            p.add_argument("--split", choices=("valid", "test"), default="test")
        if name == "analyze":
            p.add_argument("--sample-users", type=int, default=10)
            p.add_argument("--top-k", type=int, default=10)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    overrides = {
        "seed": args.seed,
        "gamma": args.gamma,
        "beta": args.beta,
        "modalities": args.modalities,
        "enhanced": {"on": True, "off": False}.get(args.enhanced),
        "ablation": ABLATION_ALIASES.get(args.ablation) if args.ablation else None,
    }
    try:
        data_cfg, config = load_config(args.config, overrides)
        return args.handler(args, data_cfg, config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
