"""Command-line entry point.

Exit status: 0 on success, 1 on a usage or validation error, 2 on a runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import diffusion as D
from .checkpoint import load_models, save_models
from .conditions import combine_conditions, gloss_condition, temporal_condition
from .config import Config, dump_config, load_config, parse_config, with_overrides
from .constraints import median_heuristic, mmd, noise_loss
from .data import ManifestError, generate_dataset, load_codebook, load_manifest, load_split, save_dataset
from .backbone import baseline_forward
from .denoiser import denoiser_forward
from .errors import ConfigError, ShapeError
from .similarity import export_similarity, write_csv
from .training import MetricsRecord, build_schedule, denoise_timesteps, evaluate, train

log = logging.getLogger("acdr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, *, data: bool = False, out: bool = True) -> None:
    p.add_argument("--config", help="key = value config file (defaults when omitted)")
    p.add_argument("--seed", type=int, help="override the run's seed")
    if out:
        p.add_argument("--out", required=True, help="output directory")
    if data:
        p.add_argument("--data", required=True, help="dataset directory written by gen-data")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="acdr", description="Conditional diffusion feature refinement on synthetic gloss data")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate and persist a synthetic dataset")
    _common(p)

    p = sub.add_parser("train", help="train a model in baseline, cdr or acdr mode")
    _common(p, data=True)
    p.add_argument("--mode", choices=("baseline", "cdr", "acdr"))
    p.add_argument("--timing", action="store_true", help="also log wall-clock seconds per epoch")

    p = sub.add_parser("eval", help="corpus WER of a checkpoint on one split (JSON on stdout)")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--config", help="accepted for symmetry; the checkpoint's config is used")
    p.add_argument("--seed", type=int, help="unused; evaluation is deterministic")

    p = sub.add_parser("sample", help="denoise one utterance's V from a noised start and write V0_hat")
    _common(p, data=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="dev")
    p.add_argument("--utt", required=True, help="utterance id, e.g. dev-00003")
    p.add_argument("--t", type=int, help="starting diffusion step (default: T_noise)")
    p.add_argument("--ancestral", action="store_true",
                   help="stochastic unit-stride chain instead of the strided deterministic pass")

    p = sub.add_parser("export-sim", help="write cosine similarity matrices for one utterance")
    _common(p, data=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--utt", required=True)
    return parser


def _config(args, **overrides) -> Config:
    cfg = load_config(args.config)
    return with_overrides(cfg, **overrides) if overrides else cfg


def _find(utts, uid):
    for u in utts:
        if u.uid == uid:
            return u
    raise LookupError(f"no utterance {uid!r}")


def cmd_gen_data(args) -> None:
    cfg = _config(args, **({"data": {"seed": args.seed}} if args.seed is not None else {}))
    cb, splits = generate_dataset(cfg.data)
    out = save_dataset(args.out, cfg.data, cb, splits)
    log.info("wrote %s", out)


def cmd_train(args) -> None:
    over = {}
    if args.mode:
        over["train"] = {"mode": args.mode}
    if args.seed is not None:
        over.setdefault("train", {})["seed"] = args.seed
        over["model"] = {"init_seed": args.seed}
    cfg = _config(args, **over)
    manifest = load_manifest(args.data)
    cb = load_codebook(args.data, manifest)
    train_set = load_split(args.data, "train")
    dev_set = load_split(args.data, "dev")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg_text = dump_config(cfg)
    (out / "config.cfg").write_text(cfg_text)
    metrics = (out / "metrics.jsonl").open("w")

    def on_epoch(rec: MetricsRecord):
        metrics.write(json.dumps(rec.to_json_dict(include_time=args.timing), sort_keys=True) + "\n")
        metrics.flush()
        log.info("epoch %d ctc=%.4f total=%.4f dev_wer=%.4f", rec.epoch, rec.l_ctc, rec.total, rec.dev_wer)

    try:
        best_m, best_d, last_m, last_d, records = train(cfg, cb, train_set, dev_set, callback=on_epoch)
    finally:
        metrics.close()
    best_epoch = min(records, key=lambda r: (r.dev_wer, r.epoch))
    save_models(out / "best", best_m, best_d, cfg_text,
                {"mode": cfg.train.mode, "epoch": best_epoch.epoch, "dev_wer": best_epoch.dev_wer})
    save_models(out / "last", last_m, last_d, cfg_text,
                {"mode": cfg.train.mode, "epoch": records[-1].epoch, "dev_wer": records[-1].dev_wer})


def cmd_eval(args) -> None:
    model, _, meta = load_models(args.ckpt)
    utts = load_split(args.data, args.split)
    load_manifest(args.data)
    report = evaluate(model, utts)
    out = report.to_dict()
    out.update({"split": args.split, "n_utterances": len(utts), "mode": meta.get("mode")})
    print(json.dumps(out, sort_keys=True))


def cmd_sample(args) -> None:
    model, denoiser, meta = load_models(args.ckpt)
    if denoiser is None:
        raise ConfigError("checkpoint has no denoiser; train in cdr or acdr mode")
    cfg = parse_config(meta["config"])
    cb = load_codebook(args.data)
    utt = _find(load_split(args.data, args.split), args.utt)
    sched = build_schedule(cfg)
    t = sched.T_max if args.t is None else args.t
    sched.check_step(t)
    rng = np.random.default_rng(0 if args.seed is None else args.seed)
    _, X_gwt, V, _ = baseline_forward(utt.frames, model)
    f = combine_conditions(temporal_condition(X_gwt), gloss_condition(V, cb), cfg.train.tau)
    V_t = D.forward_noise(V, f, t, sched, rng.standard_normal(V.shape))

    def eps_fn(x, s):
        return denoiser_forward(x, V, f, s, denoiser)

    if args.ancestral:
        steps = list(range(t, 0, -1))
        v0_hat = D.denoise_loop(V_t, f, eps_fn, sched, steps, rng=rng)
    else:
        steps = denoise_timesteps(t, sched.T_max, cfg.diffusion.ddim_steps)
        v0_hat = D.denoise_loop(V_t, f, eps_fn, sched, steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "v.csv", V)
    write_csv(out / "v0_hat.csv", v0_hat)
    summary = {"utterance": utt.uid, "t": t, "timesteps": steps,
               "mmd": mmd(v0_hat, V, median_heuristic(V)), "mse": noise_loss(v0_hat, V)}
    (out / "sample.json").write_text(json.dumps(summary, sort_keys=True) + "\n")


def cmd_export_sim(args) -> None:
    model, _, _ = load_models(args.ckpt)
    utt = _find(load_split(args.data, args.split), args.utt)
    export_similarity(utt.frames, model, args.out)


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "sample": cmd_sample, "export-sim": cmd_export_sim}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except (ConfigError, ShapeError, LookupError, ManifestError, FileNotFoundError) as exc:
        print(f"acdr {args.command}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.exception("%s failed", args.command)
        print(f"acdr {args.command}: runtime failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
