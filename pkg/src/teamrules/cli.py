"""Command line pipeline: simulate, discover, describe, evaluate, serve.

Exit codes: 0 on success, 1 on validation errors (bad flags, bad files,
bad config), 2 on backend failures. Every error is reported to stderr as
a single JSON line {"error": kind, "reason": text}.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from collections import Counter

from .dataset import StudyDataset, loads_dataset, normalize_dataset, save_dataset
from .describe import (BagOfWordsEmbedder, DescriberConfig, HTTPEmbedder,
                       HTTPLLMClient, KeywordMockLLM, LookupEmbedder,
                       ScriptedLLM, describe_region, tokenize)
from .errors import BackendError, ValidationError
from .estimators import PRIOR_NAMES, prior_from_name
from .evaluation import resplit, splits_summary, team_error_report
from .gradient_discovery import DiscoveryConfig, discover
from .regions import load_regions, save_regions
from .regions import dataset_fingerprint as _fingerprint
from .selection_discovery import SelectionConfig, discover_select
from .synth import PlantSpec, generate_blobs, plant_regions, simulate_responses


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so bad flags map to exit 1."""

    def error(self, message):
        raise ValidationError(message)


# dests of DiscoveryConfig fields exposed as flags (seed handled separately)
_DISCOVERY_DESTS = ("T", "alpha", "beta_l", "beta_u", "delta", "lam", "c1",
                    "learning_rate", "epochs", "trial_epochs", "n_starts",
                    "patience", "lr_decay", "lr_floor", "weight_decay")
_SELECTION_DESTS = ("T", "alpha", "beta_l", "beta_u", "delta")
_DESCRIBE_DESTS = ("m", "n_inside", "n_outside", "word_limit", "contrast",
                   "prompt_style", "max_retries", "backoff")

_SIMULATE_DEFAULTS = {
    "n": 1000, "d": 8, "blobs": 10, "separation": 10.0, "blob_std": 1.0,
    "train_fraction": 0.7, "labels": "0,1", "regions_per_agent": 4,
    "support_lower": 0.01, "support_upper": 0.2, "good_accuracy": 0.95,
    "bad_accuracy": 0.60, "background_accuracy": 0.75, "prior_p": 0.5,
    "seed": 0,
}
_EVALUATE_DEFAULTS = {"splits": 5, "split_ratio": 0.7, "max_t": None,
                      "prior": "recorded", "seed": 0}


def _build_parser() -> argparse.ArgumentParser:
    shared = _Parser(add_help=False)
    shared.add_argument("--dataset", help="dataset file (JSON lines)")
    shared.add_argument("--out", help="primary output file")
    shared.add_argument("--seed", type=int, default=None)
    shared.add_argument("--config", help="JSON config file; flags override it")

    norm = _Parser(add_help=False)
    norm.add_argument("--no-normalize", action="store_true",
                      help="skip per-vector max-abs normalization")
    norm.add_argument("--allow-dataset-mismatch", action="store_true",
                      help="accept a regions file built from another dataset")

    parser = _Parser(prog="teamrules",
                     description="Discover, describe and serve reliance regions.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    disc = sub.add_parser("discover", parents=[shared, norm],
                          help="gradient search for correction regions")
    _add_discovery_flags(disc, _DISCOVERY_DESTS)
    disc.add_argument("--prior", choices=PRIOR_NAMES, default="recorded")
    disc.add_argument("--log", help="run log path (default: <out>.log.jsonl)")
    disc.set_defaults(func=_cmd_discover)

    sel = sub.add_parser("discover-select", parents=[shared, norm],
                         help="point-centered selection search")
    _add_discovery_flags(sel, _SELECTION_DESTS)
    sel.add_argument("--prior", choices=PRIOR_NAMES, default="recorded")
    sel.add_argument("--log", help="run log path (default: <out>.log.jsonl)")
    sel.set_defaults(func=_cmd_discover_select)

    desc = sub.add_parser("describe", parents=[shared, norm],
                          help="write contrastive region descriptions")
    desc.add_argument("--regions", help="regions file to augment")
    desc.add_argument("--m", type=int, default=None, help="refinement rounds")
    desc.add_argument("--n-inside", dest="n_inside", type=int, default=None)
    desc.add_argument("--n-outside", dest="n_outside", type=int, default=None)
    desc.add_argument("--word-limit", dest="word_limit", type=int, default=None)
    desc.add_argument("--no-contrast", dest="contrast", action="store_false",
                      default=None, help="drop the outside-texts section")
    desc.add_argument("--prompt-style", dest="prompt_style", default=None)
    desc.add_argument("--max-retries", dest="max_retries", type=int,
                      default=None)
    desc.add_argument("--backoff", type=float, default=None)
    desc.add_argument("--llm", choices=("http", "mock"), default="mock")
    desc.add_argument("--llm-endpoint")
    desc.add_argument("--llm-model", default="")
    desc.add_argument("--llm-token-env", help="env var holding the bearer token")
    desc.add_argument("--llm-fixture", help="scripted responses for --llm mock")
    desc.add_argument("--embedder", choices=("http", "lookup", "bow"), default="bow")
    desc.add_argument("--embedder-endpoint")
    desc.add_argument("--embedder-token-env")
    desc.add_argument("--embedder-fixture", help="text-to-vector JSON table")
    desc.add_argument("--trace", help="trace path (default: <out>.trace.json)")
    desc.set_defaults(func=_cmd_describe)

    sim = sub.add_parser("simulate", parents=[shared],
                         help="generate a planted synthetic study")
    sim.add_argument("--n", type=int, default=None)
    sim.add_argument("--d", type=int, default=None)
    sim.add_argument("--blobs", type=int, default=None)
    sim.add_argument("--separation", type=float, default=None)
    sim.add_argument("--blob-std", dest="blob_std", type=float, default=None)
    sim.add_argument("--train-fraction", dest="train_fraction", type=float, default=None)
    sim.add_argument("--labels", default=None, help="comma-separated label vocabulary")
    sim.add_argument("--regions-per-agent", dest="regions_per_agent", type=int, default=None)
    sim.add_argument("--support-lower", dest="support_lower", type=float, default=None)
    sim.add_argument("--support-upper", dest="support_upper", type=float, default=None)
    sim.add_argument("--good-acc", dest="good_accuracy", type=float, default=None)
    sim.add_argument("--bad-acc", dest="bad_accuracy", type=float, default=None)
    sim.add_argument("--background-acc", dest="background_accuracy", type=float, default=None)
    sim.add_argument("--prior-p", dest="prior_p", type=float, default=None)
    sim.add_argument("--sidecar", help="ground-truth path (default: <out>.truth.json)")
    sim.set_defaults(func=_cmd_simulate)

    ev = sub.add_parser("evaluate", parents=[shared, norm],
                        help="team error over repeated random splits")
    ev.add_argument("--regions", help="regions file to evaluate")
    ev.add_argument("--splits", type=int, default=None)
    ev.add_argument("--split-ratio", dest="split_ratio", type=float, default=None)
    ev.add_argument("--max-t", dest="max_t", type=int, default=None)
    ev.add_argument("--prior", choices=PRIOR_NAMES, default=None)
    ev.add_argument("--sidecar", help="planted ground truth for clustering scores")
    ev.set_defaults(func=_cmd_evaluate)

    srv = sub.add_parser("serve", parents=[shared, norm],
                         help="run the onboarding HTTP service")
    srv.add_argument("--regions")
    srv.add_argument("--port", type=int, default=8000)
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--card", help="JSON file with the human-AI card fields")
    srv.add_argument("--assets-dir", dest="assets_dir")
    srv.set_defaults(func=_cmd_serve)

    return parser


def _add_discovery_flags(parser, dests) -> None:
    flags = {
        "T": ("--T", int), "alpha": ("--alpha", float),
        "beta_l": ("--beta-l", float), "beta_u": ("--beta-u", float),
        "delta": ("--delta", float), "lam": ("--lambda", float),
        "c1": ("--c1", float), "learning_rate": ("--lr", float),
        "epochs": ("--epochs", int), "trial_epochs": ("--trial-epochs", int),
        "n_starts": ("--n-starts", int), "patience": ("--patience", int),
        "lr_decay": ("--lr-decay", float), "lr_floor": ("--lr-floor", float),
        "weight_decay": ("--weight-decay", float),
    }
    for dest in dests:
        flag, typ = flags[dest]
        parser.add_argument(flag, dest=dest, type=typ, default=None)


def _require(args, *names) -> None:
    for name in names:
        if getattr(args, name) in (None, ""):
            raise ValidationError(f"--{name.replace('_', '-')} is required")


def _check_out(path) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise ValidationError(f"output directory does not exist: {parent}")


def _config_file(args) -> dict:
    if not args.config:
        return {}
    with open(args.config, encoding="utf-8") as handle:
        try:
            doc = json.load(handle)
        except json.JSONDecodeError as err:
            raise ValidationError(f"config file is not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise ValidationError("config file must hold a JSON object")
    return doc


def _merged_config(args, dests) -> dict:
    """Command config: defaults < config file < explicit flags."""
    merged = dict(_config_file(args))
    for dest in dests:
        value = getattr(args, dest, None)
        if value is not None:
            merged[dest] = value
    if args.seed is not None:
        merged["seed"] = args.seed
    return merged


def _load_inputs(args):
    """Read the dataset, fingerprint the raw bytes, normalize unless told not to."""
    _require(args, "dataset")
    with open(args.dataset, "rb") as handle:
        raw = handle.read()
    dataset = loads_dataset(raw.decode("utf-8"))
    fingerprint = _fingerprint(raw)
    if not dataset.manifest.normalized and not getattr(args, "no_normalize", False):
        dataset = normalize_dataset(dataset)
    return dataset, fingerprint


def _load_checked_regions(args, dataset: StudyDataset, fingerprint: str):
    _require(args, "regions")
    regions, doc = load_regions(args.regions)
    dim = doc["manifest"]["dim"]
    if dim != dataset.manifest.joint_dim:
        raise ValidationError(
            f"regions expect joint dimension {dim}, dataset has "
            f"{dataset.manifest.joint_dim}")
    recorded = doc["manifest"].get("dataset_id", "")
    if recorded and recorded != fingerprint \
            and not getattr(args, "allow_dataset_mismatch", False):
        raise ValidationError(
            f"regions were built from dataset {recorded}, got {fingerprint}; "
            "pass --allow-dataset-mismatch to override")
    return regions, doc


def _train_split(dataset: StudyDataset) -> StudyDataset:
    train = StudyDataset(dataset.manifest, dataset.split_examples("train"))
    if not train.examples:
        raise ValidationError("dataset has no train examples")
    return train


def _write_discovery_outputs(args, result, dim: int, fingerprint: str,
                             config: dict, command: str) -> None:
    config = dict(config)
    config["prior"] = args.prior
    save_regions(args.out, result.regions, dim, fingerprint, config)
    log_path = args.log or (args.out + ".log.jsonl")
    _check_out(log_path)
    header = {"command": command, "dataset_id": fingerprint, "config": config}
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(row, sort_keys=True) for row in result.log]
    with open(log_path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def _cmd_discover(args) -> None:
    _require(args, "out")
    _check_out(args.out)
    dataset, fingerprint = _load_inputs(args)
    cfg = DiscoveryConfig.from_dict(_merged_config(args, _DISCOVERY_DESTS))
    train = _train_split(dataset)
    prior = prior_from_name(args.prior, cfg.seed)
    result = discover(train, prior, cfg)
    _write_discovery_outputs(args, result, train.manifest.joint_dim,
                             fingerprint, cfg.to_json(), "discover")


def _cmd_discover_select(args) -> None:
    _require(args, "out")
    _check_out(args.out)
    dataset, fingerprint = _load_inputs(args)
    cfg = SelectionConfig.from_dict(_merged_config(args, _SELECTION_DESTS))
    train = _train_split(dataset)
    prior = prior_from_name(args.prior, cfg.seed)
    result = discover_select(train, prior, cfg)
    _write_discovery_outputs(args, result, train.manifest.joint_dim,
                             fingerprint, cfg.to_json(), "discover-select")


def _bow_vocabulary(dataset: StudyDataset, dim: int) -> list:
    counts = Counter()
    for ex in dataset.examples:
        if ex.text:
            counts.update(tokenize(ex.text))
    ranked = sorted(counts, key=lambda tok: (-counts[tok], tok))
    if len(ranked) < dim:
        raise ValidationError(
            f"dataset texts provide {len(ranked)} distinct tokens, "
            f"need {dim} for a bag-of-words embedder")
    return ranked[:dim]


def _build_llm(args):
    if args.llm == "mock":
        if args.llm_fixture:
            return ScriptedLLM.from_fixture(args.llm_fixture)
        return KeywordMockLLM()
    if not args.llm_endpoint:
        raise ValidationError("--llm-endpoint is required with --llm http")
    return HTTPLLMClient(args.llm_endpoint, model=args.llm_model,
                         auth_env=args.llm_token_env)


def _build_embedder(args, dataset: StudyDataset):
    dim = dataset.manifest.embedding_dim
    if args.embedder == "bow":
        return BagOfWordsEmbedder(_bow_vocabulary(dataset, dim))
    if args.embedder == "lookup":
        if not args.embedder_fixture:
            raise ValidationError("--embedder-fixture is required with --embedder lookup")
        return LookupEmbedder.from_fixture(args.embedder_fixture)
    if not args.embedder_endpoint:
        raise ValidationError("--embedder-endpoint is required with --embedder http")
    return HTTPEmbedder(args.embedder_endpoint, dim=dim,
                        auth_env=args.embedder_token_env)


def _cmd_describe(args) -> None:
    _require(args, "out")
    _check_out(args.out)
    dataset, fingerprint = _load_inputs(args)
    regions, doc = _load_checked_regions(args, dataset, fingerprint)
    cfg = DescriberConfig.from_dict(_merged_config(args, _DESCRIBE_DESTS))
    llm = _build_llm(args)
    # with zero refinement rounds no similarity queries happen
    embedder = _build_embedder(args, dataset) if cfg.m > 0 else None
    traces = []
    for region in sorted(regions, key=lambda reg: reg.id):
        text, trace = describe_region(region, dataset, llm, embedder, cfg)
        region.description = text
        traces.append(trace.to_json())
    doc["regions"] = [reg.to_json() for reg in sorted(regions, key=lambda r: r.id)]
    doc["describe_config"] = cfg.to_json()
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(doc, indent=2) + "\n")
    trace_path = args.trace or (args.out + ".trace.json")
    _check_out(trace_path)
    trace_doc = {"command": "describe", "dataset_id": fingerprint,
                 "config": cfg.to_json(), "traces": traces}
    with open(trace_path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(trace_doc, indent=2) + "\n")


def _cmd_simulate(args) -> None:
    _require(args, "out")
    _check_out(args.out)
    merged = dict(_SIMULATE_DEFAULTS)
    file_cfg = _config_file(args)
    unknown = set(file_cfg) - set(merged)
    if unknown:
        raise ValidationError(f"unknown simulate config keys: {sorted(unknown)}")
    merged.update(file_cfg)
    for dest in _SIMULATE_DEFAULTS:
        value = getattr(args, dest, None)
        if value is not None:
            merged[dest] = value
    if args.seed is not None:
        merged["seed"] = args.seed

    labels = merged["labels"]
    if isinstance(labels, str):
        labels = [tok for tok in labels.split(",") if tok]
    labels = tuple(str(tok) for tok in labels)
    if len(labels) < 2:
        raise ValidationError("need at least two labels")

    dataset = generate_blobs(merged["n"], merged["d"], merged["blobs"],
                             separation=merged["separation"],
                             blob_std=merged["blob_std"],
                             label_vocabulary=labels,
                             train_fraction=merged["train_fraction"],
                             seed=merged["seed"])
    spec = PlantSpec(n_regions_per_agent=merged["regions_per_agent"],
                     support_lower=merged["support_lower"],
                     support_upper=merged["support_upper"],
                     good_accuracy=merged["good_accuracy"],
                     bad_accuracy=merged["bad_accuracy"],
                     background_accuracy=merged["background_accuracy"],
                     prior_p=merged["prior_p"],
                     seed=merged["seed"]).validate()
    truth = plant_regions(dataset, spec)
    filled = simulate_responses(dataset, truth, spec)
    save_dataset(filled, args.out)

    sidecar_path = args.sidecar or (args.out + ".truth.json")
    _check_out(sidecar_path)
    merged["labels"] = list(labels)
    doc = {"command": "simulate", "config": merged}
    doc.update(truth.to_json())
    with open(sidecar_path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(doc, indent=2) + "\n")


def _clustering_lines(args, dataset: StudyDataset, regions) -> list:
    from .evaluation import (adjusted_rand_index, fowlkes_mallows,
                             kmeans_baseline_labels, region_cluster_labels)
    from .synth import combined_cluster_labels

    with open(args.sidecar, encoding="utf-8") as handle:
        truth_doc = json.load(handle)
    if "examples" not in truth_doc or "predicates" not in truth_doc:
        raise ValidationError("sidecar must carry predicates and examples")
    n_human = len(truth_doc["predicates"]["human"])
    planted = combined_cluster_labels(truth_doc["examples"], dataset.examples, n_human)
    found = region_cluster_labels(regions, dataset)
    k = len(regions) + 1
    baseline = kmeans_baseline_labels(dataset.joint_matrix(), k, seed=0)
    scores = {
        "ari": adjusted_rand_index(planted, found),
        "fowlkes_mallows": fowlkes_mallows(planted, found),
        "kmeans_ari": adjusted_rand_index(planted, baseline),
    }
    return ["# clustering: " + json.dumps(scores, sort_keys=True)]


def _cmd_evaluate(args) -> None:
    _require(args, "out")
    _check_out(args.out)
    dataset, fingerprint = _load_inputs(args)
    regions, _doc = _load_checked_regions(args, dataset, fingerprint)

    merged = dict(_EVALUATE_DEFAULTS)
    file_cfg = _config_file(args)
    unknown = set(file_cfg) - set(merged)
    if unknown:
        raise ValidationError(f"unknown evaluate config keys: {sorted(unknown)}")
    merged.update(file_cfg)
    for dest in ("splits", "split_ratio", "max_t", "prior"):
        value = getattr(args, dest, None)
        if value is not None:
            merged[dest] = value
    if args.seed is not None:
        merged["seed"] = args.seed
    if merged["splits"] < 1:
        raise ValidationError("--splits must be >= 1")
    if merged["prior"] not in PRIOR_NAMES:
        raise ValidationError(f"unknown prior {merged['prior']!r}")
    max_t = merged["max_t"] if merged["max_t"] is not None else len(regions)

    prior = prior_from_name(merged["prior"], merged["seed"])
    reports = []
    for s in range(merged["splits"]):
        split_ds = resplit(dataset, merged["split_ratio"], merged["seed"] + s)
        reports.append(team_error_report(split_ds, prior, regions, max_t))
    summary = splits_summary(reports)

    lines = ["# command: evaluate",
             f"# dataset_id: {fingerprint}",
             "# config: " + json.dumps(merged, sort_keys=True)]
    if args.sidecar:
        lines += _clustering_lines(args, dataset, regions)
    for s, report in enumerate(reports):
        lines.append(f"# split {s} seed {merged['seed'] + s}")
        lines.append(report.to_csv().rstrip("\n"))
    lines.append(f"# summary over {len(reports)} splits (mean ± stderr)")
    lines.append("# t,train_error,test_error")
    for entry in summary:
        cells = [str(entry["t"])]
        for col in ("train_error", "test_error"):
            mean = entry[f"{col}_mean"]
            stderr = entry[f"{col}_stderr"]
            cells.append("" if mean is None else f"{mean!r} ± {stderr!r}")
        lines.append("# " + ",".join(cells))
    with open(args.out, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")

    print(f"team error over {len(reports)} splits "
          f"(ratio {merged['split_ratio']}, seed {merged['seed']})")
    print("t  train_error          test_error")
    for entry in summary:
        cells = []
        for col in ("train_error", "test_error"):
            mean = entry[f"{col}_mean"]
            stderr = entry[f"{col}_stderr"]
            cells.append("-" if mean is None else f"{mean:.4f} ± {stderr:.4f}")
        print(f"{entry['t']}  {cells[0]}  {cells[1]}")


def _cmd_serve(args) -> None:
    import uvicorn

    from .service import create_app
    from .sessions import card_from_file

    dataset, fingerprint = _load_inputs(args)
    regions, _doc = _load_checked_regions(args, dataset, fingerprint)
    card = card_from_file(args.card, dataset) if args.card else None
    app = create_app(dataset, regions, card=card, assets_dir=args.assets_dir,
                     seed=args.seed or 0)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")


def run_command(argv=None) -> int:
    """Parse and execute one subcommand; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
        return 0
    except BackendError as err:
        print(json.dumps({"error": "backend", "reason": str(err)}),
              file=sys.stderr)
        return 2
    except (ValidationError, OSError) as err:
        print(json.dumps({"error": "validation", "reason": str(err)}),
              file=sys.stderr)
        return 1


def main(argv=None) -> int:
    return run_command(argv)


if __name__ == "__main__":
    sys.exit(main())
