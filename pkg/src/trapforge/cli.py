"""Command-line pipeline: mine, sweep, gradcheck, train, eval.

Exit codes: 0 success, 1 data or runtime failure, 2 usage error.
Any flag may also be set in a JSON file passed with ``--config`` (keys are
the flag names with underscores); flags on the command line win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evalkit as ek
from . import losszoo as lz
from . import trapstream as ts
from .embedio import EmbeddingFormatError, format_embeddings, parse_embeddings
from .microtrain import (SynthConfig, TrainConfig, TrainingDiverged, build_pairs, embed,
                         open_world_gallery, replay_manifest, synth_dataset, train)
from .microtrain.synth import PAIR_MODES, eval_config

DEFAULT_SWEEP = [round(0.1 * i, 1) for i in range(1, 10)]
METRICS = ("map", "knn", "probe", "pck", "miou", "multilabel")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _write(path: str, text: str):
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("TRAPFORGE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"TRAPFORGE_SEED must be an integer, got {env!r}")


def _mining_config(args) -> ts.MiningConfig:
    try:
        return ts.MiningConfig(args.iou_threshold, args.max_gap_seconds, args.min_confidence)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _load_sequences(path: str) -> tuple[list[ts.FrameSequence], str]:
    raw = _read_bytes(path)
    try:
        return ts.parse_detections(raw), ts.digest_bytes(raw)
    except (ts.DetectionParseError, ts.DetectionValidationError) as exc:
        raise DataError(f"{path}: {exc}") from exc


# -- subcommands ---------------------------------------------------------------

def cmd_mine(args) -> int:
    cfg = _mining_config(args)
    seqs, digest = _load_sequences(args.detections)
    per_camera = [(s, ts.mine_pairs(s, cfg)) for s in seqs]
    manifest = ts.PairManifest(cfg, [p for _, m in per_camera for p in m.pairs], digest)
    _write(args.out, manifest.to_jsonl())
    print(f"pairs: {len(manifest)}")
    for seq, m in per_camera:
        print(f"camera {seq.camera_id}: frames {len(seq.frames)} "
              f"detections {seq.num_detections} pairs {len(m)}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _mining_config(args)
    thresholds = args.thresholds
    if not thresholds:
        raise UsageError("at least one threshold is required")
    if any(b < a for a, b in zip(thresholds, thresholds[1:])):
        raise UsageError("thresholds must be sorted ascending")
    if any(not 0.0 < t < 1.0 for t in thresholds):
        raise UsageError("thresholds must lie in (0, 1)")
    seqs, _ = _load_sequences(args.detections)
    rows = ts.sweep_thresholds(seqs, cfg, thresholds)
    _write(args.out, "alpha,pair_count\n" + "".join(f"{a:g},{n}\n" for a, n in rows))
    for a, n in rows:
        print(f"alpha {a:g}: {n} pairs")
    return 0


def cmd_gradcheck(args) -> int:
    methods = args.methods or list(lz.DEFAULT_METHODS)
    unknown = [m for m in methods if m not in lz.CASES]
    if unknown:
        raise UsageError(f"unknown method(s): {', '.join(unknown)}; "
                         f"choose from {', '.join(sorted(lz.CASES))}")
    if args.trials < 1:
        raise UsageError("trials must be at least 1")
    if not 1e-7 <= args.eps <= 1e-4:
        raise UsageError("eps must lie in [1e-7, 1e-4]")
    seed = _seed(args)
    failed = []
    print(f"{'method':<14}{'max_rel_error':>16}  stop_grad  checked  skipped")
    for m in methods:
        res = lz.check_method(m, args.trials, seed, args.eps)
        print(f"{m:<14}{res.max_rel_error:>16.3e}  {'ok' if res.stop_gradient_ok else 'FAIL':>9}"
              f"{res.checked:>9}{res.skipped:>9}")
        if not res.passed(args.tolerance):
            failed.append((m, res))
    for m, res in failed:
        where = "stop-gradient input has non-zero gradient" if not res.stop_gradient_ok else \
            f"worst coordinate {res.worst_input}{list(res.worst_index or ())}"
        print(f"gradcheck failed: {m}: max relative error {res.max_rel_error:.3e} "
              f"> {args.tolerance:g}; {where}", file=sys.stderr)
    return 1 if failed else 0


def _synth_config(args, seed: int) -> SynthConfig:
    kw = {k: getattr(args, k) for k in ("num_identities", "views_per_identity", "input_dim",
                                        "view_noise_sigma", "drift_sigma", "pose_sigma",
                                        "light_sigma") if getattr(args, k) is not None}
    return SynthConfig(seed=seed, **kw)


def cmd_train(args) -> int:
    seed = _seed(args)
    try:
        synth = _synth_config(args, seed)
        kw = {k: getattr(args, k) for k in ("learning_rate", "batch_size", "hidden_dim",
                                            "embed_dim", "aug_sigma") if getattr(args, k) is not None}
        cfg = TrainConfig(method=args.method, steps=args.steps, seed=seed, **kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.manifest:
        raw = _read_bytes(args.manifest)
        try:
            data = replay_manifest(ts.PairManifest.from_jsonl(raw.decode("utf-8")), synth)
        except (ts.DetectionParseError, ValueError, UnicodeDecodeError) as exc:
            raise DataError(f"{args.manifest}: {exc}") from exc
    else:
        data, _ = synth_dataset(synth)
    data = build_pairs(data, args.pair_source, cfg.aug_sigma, seed, synth.light_sigma, synth.light_dims)
    if cfg.batch_size > len(data):
        raise UsageError(f"batch_size {cfg.batch_size} exceeds dataset size {len(data)}")
    try:
        report = train(data, cfg)
    except TrainingDiverged as exc:
        raise DataError(f"training diverged: {exc}") from exc
    heldout, _ = synth_dataset(eval_config(synth))
    gallery = open_world_gallery(report.params, heldout)
    _write(args.out, format_embeddings(gallery.embeddings, gallery.labels))
    if args.report:
        doc = report.to_dict()
        doc["synth"] = {k: v for k, v in vars(synth).items()}
        doc["pairs"] = {"source": args.pair_source, "count": len(data),
                        "manifest": args.manifest is not None}
        _write(args.report, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    means = report.epoch_means()
    print(f"method {cfg.method}: {cfg.steps} steps, loss {means[0]:.4f} -> {means[-1]:.4f} "
          f"({report.elapsed_seconds:.2f} s)")
    return 0


def _load_gallery(path: str) -> tuple[ek.Gallery, str]:
    raw = _read_bytes(path)
    try:
        _, labels, emb = parse_embeddings(raw.decode("utf-8"))
        return ek.Gallery.from_raw(emb, labels), ts.digest_bytes(raw)
    except (EmbeddingFormatError, ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def _aux_metric(name: str, path: str | None) -> float:
    if path is None:
        raise UsageError(f"--metric {name} needs --aux")
    try:
        doc = json.loads(_read_bytes(path))
        if name == "pck":
            return ek.pck(doc["pred"], doc["truth"], doc["visibility"], doc["threshold"])
        if name == "miou":
            return ek.miou(doc["pred"], doc["truth"], doc["num_classes"])
        return ek.multilabel_accuracy(doc["pred"], doc["truth"])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON at line {exc.lineno}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc


def cmd_eval(args) -> int:
    metrics = args.metric or ["map"]
    unknown = [m for m in metrics if m not in METRICS]
    if unknown:
        raise UsageError(f"unknown metric(s): {', '.join(unknown)}; choose from {', '.join(METRICS)}")
    if len(args.embeddings) > 2:
        raise UsageError("give one embedding file (leave-one-out) or two (train/gallery, test/query)")
    needs_emb = {"map", "knn", "probe"} & set(metrics)
    if needs_emb and not args.embeddings:
        raise UsageError(f"--metric {sorted(needs_emb)[0]} needs an embedding file")
    if "probe" in metrics and len(args.embeddings) != 2:
        raise UsageError("--metric probe needs a train and a test embedding file")
    try:
        knn_cfg = ek.KnnConfig(args.k, args.temperature)
        probe_cfg = ek.ProbeConfig(args.probe_learning_rate, args.probe_epochs, _seed(args))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    loaded = [_load_gallery(p) for p in args.embeddings]
    digests = {Path(p).name: d for p, (_, d) in zip(args.embeddings, loaded)}
    galleries = [g for g, _ in loaded]
    out: dict[str, float] = {}
    config: dict = {"metrics": metrics}
    try:
        if "map" in metrics:
            if len(galleries) == 1:
                ap = ek.retrieval_ap(galleries[0])
            else:
                ap = ek.retrieval_ap(galleries[1], galleries[0])
            if np.all(np.isnan(ap)):
                raise ValueError("no query has a relevant gallery item")
            out["map"] = float(np.nanmean(ap))
            out["map_excluded_queries"] = float(np.sum(np.isnan(ap)))
            config["map_protocol"] = "leave_one_out" if len(galleries) == 1 else "query_gallery"
        if "knn" in metrics:
            loo = len(galleries) == 1
            train_g = galleries[0]
            test_g = train_g if loo else galleries[1]
            _, acc = ek.weighted_knn(train_g, test_g, knn_cfg, leave_one_out=loo)
            out["knn_top1"] = acc
            out["knn_effective_k"] = float(ek.effective_k(knn_cfg.k, len(train_g), loo))
            config["knn"] = {"k": knn_cfg.k, "temperature": knn_cfg.temperature, "leave_one_out": loo}
        if "probe" in metrics:
            out["probe_top1"] = ek.linear_probe(galleries[0], galleries[1], probe_cfg)
            config["probe"] = vars(probe_cfg).copy()
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    for name in ("pck", "miou", "multilabel"):
        if name in metrics:
            out["multilabel_accuracy" if name == "multilabel" else name] = _aux_metric(name, args.aux)
    if args.aux and {"pck", "miou", "multilabel"} & set(metrics):
        digests[Path(args.aux).name] = ts.digest_bytes(_read_bytes(args.aux))

    text = ek.EvalReport(out, config, digests).to_json()
    if args.out:
        _write(args.out, text)
    print(text, end="")
    return 0


# -- argument parsing ----------------------------------------------------------

def _add_mining_flags(p):
    d = ts.MiningConfig()
    p.add_argument("--iou-threshold", type=float, default=d.iou_threshold)
    p.add_argument("--max-gap-seconds", type=int, default=d.max_gap_seconds)
    p.add_argument("--min-confidence", type=float, default=d.min_confidence)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trapforge", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of flag defaults")
    common.add_argument("--seed", type=int, default=None,
                        help="global seed (falls back to TRAPFORGE_SEED, then 0)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mine", parents=[common], help="mine temporal pairs into a JSONL manifest")
    p.add_argument("detections")
    p.add_argument("--out", required=True)
    _add_mining_flags(p)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("sweep", parents=[common], help="pair count per IoU threshold (CSV)")
    p.add_argument("detections")
    p.add_argument("--out", required=True)
    p.add_argument("--thresholds", type=_float_list, default=DEFAULT_SWEEP,
                   help="comma-separated, ascending, each in (0, 1)")
    _add_mining_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every loss")
    p.add_argument("--methods", nargs="*", default=None)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--eps", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train", parents=[common], help="train the toy encoder, write embeddings")
    p.add_argument("--method", default="simclr_dclw")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--hidden-dim", type=int, default=None)
    p.add_argument("--embed-dim", type=int, default=None)
    p.add_argument("--aug-sigma", type=float, default=None)
    p.add_argument("--pair-source", choices=PAIR_MODES, default="temporal")
    p.add_argument("--manifest", default=None, help="replay a mined manifest instead of synth pairs")
    for name in ("num-identities", "views-per-identity", "input-dim"):
        p.add_argument(f"--{name}", type=int, default=None)
    for name in ("view-noise-sigma", "drift-sigma", "pose-sigma", "light-sigma"):
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--out", required=True, help="embedding CSV of held-out identities")
    p.add_argument("--report", default=None, help="TrainReport JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="evaluate embeddings into an EvalReport")
    p.add_argument("embeddings", nargs="*")
    p.add_argument("--metric", action="append", default=None, help=f"one of {', '.join(METRICS)}")
    p.add_argument("--k", type=int, default=200)
    p.add_argument("--temperature", type=float, default=0.07)
    p.add_argument("--probe-learning-rate", type=float, default=1.0)
    p.add_argument("--probe-epochs", type=int, default=200)
    p.add_argument("--aux", default=None, help="JSON with pred/truth for pck, miou, multilabel")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config or known.command is None:
        return
    try:
        doc = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {known.config}: {exc.strerror or exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {known.config}: malformed JSON at line {exc.lineno}") from exc
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    sp = subparsers.choices.get(known.command)
    if sp is None:
        return
    dests = {a.dest for a in sp._actions} - {"help", "config", "func"}
    unknown = sorted(set(doc) - dests)
    if unknown:
        raise UsageError(f"unknown config key(s) for {known.command}: {', '.join(unknown)}")
    sp.set_defaults(**doc)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"trapforge: error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"trapforge: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse usage errors and --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
