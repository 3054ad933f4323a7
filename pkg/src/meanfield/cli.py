"""``meanfield`` command line: generate, train, rollout, evaluate, chaos.

Exit codes: 0 success, 2 configuration/validation/format problems, 3 numeric
failures (blow-up, diverged training).  Failures print one line to stderr::

    meanfield: exit=2 kind=ConfigError msg=invalid sigma
"""

import argparse
import csv
import io as _io
import logging
import os
from pathlib import Path
import sys

from threadpoolctl import threadpool_limits

from . import pipeline
from .config import load_config
from .data import sample_initial
from .errors import DegenerateError, FormatError, MeanFieldError, NumericalError
from .io import _atomic_write, load_checkpoint, read_json, read_trajectory, save_checkpoint, write_json, \
    write_trajectory
from .dynamics import RNG_ID

log = logging.getLogger("meanfield")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _check_hash(expected, found, what, force):
    if found != expected:
        if not force:
            raise FormatError(f"config hash mismatch for {what} (use --force to override)")
        log.warning("config hash mismatch for %s ignored (--force)", what)


def cmd_generate(args):
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trajs = pipeline.generate(cfg, args.threads)
    entries = []
    for traj in trajs:
        name = f"traj_{traj.meta['index']:04d}.bin"
        write_trajectory(out / name, traj)
        split = "train" if traj.meta["index"] < cfg.split.train else "test"
        entries.append({"index": traj.meta["index"], "file": name, "split": split,
                        "init_seed": traj.meta["init_seed"], "noise_seed": traj.seed})
    write_json(out / "manifest.json", {"config_hash": cfg.hash(), "config": cfg.to_dict(), "rng": RNG_ID,
                                       "trajectories": entries})
    log.info("wrote %d trajectories to %s", len(entries), out)


def load_trajectories(data_dir, cfg, force=False):
    data_dir = Path(data_dir)
    try:
        manifest = read_json(data_dir / "manifest.json")
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read manifest: {exc}") from None
    _check_hash(cfg.hash(), manifest.get("config_hash"), "dataset manifest", force)
    entries = sorted(manifest["trajectories"], key=lambda e: e["index"])
    if len(entries) != cfg.split.train + cfg.split.test:
        raise FormatError(f"manifest lists {len(entries)} trajectories, split needs "
                          f"{cfg.split.train + cfg.split.test}")
    return [read_trajectory(data_dir / e["file"]) for e in entries]


def cmd_train(args):
    cfg = _config(args)
    trajs = load_trajectories(args.data, cfg, args.force)
    model, history, summary = pipeline.fit(cfg, trajs)
    meta = {"config_hash": cfg.hash(), "summary": summary,
            "final_train_loss": history[-1][1], "epochs": len(history)}
    save_checkpoint(args.out, model, meta)
    buf = _io.StringIO()
    buf.write(f"# config_hash={cfg.hash()}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "test_loss"])
    for epoch, tr, te in history:
        w.writerow([epoch, repr(tr), repr(te)])
    _atomic_write(args.log or f"{args.out}.log.csv", buf.getvalue(), mode="w")
    log.info("final train loss %.6g", history[-1][1])


def cmd_rollout(args):
    cfg = _config(args)
    model, meta = load_checkpoint(args.checkpoint)
    _check_hash(cfg.hash(), meta.get("config_hash"), "checkpoint", args.force)
    if args.init is not None and args.n is not None:
        raise FormatError("--init and --n are mutually exclusive")
    if args.init is not None:
        init = pipeline.initial_state(read_trajectory(args.init))
    else:
        init = sample_initial(cfg.init, args.n or cfg.N, cfg.seed, cfg.system.group_sizes)
    traj = pipeline.rollout(model, cfg, init, cfg.seed, args.steps)
    write_trajectory(args.out, traj)


def cmd_evaluate(args):
    cfg = _config(args)
    truth, learned = read_trajectory(args.truth), read_trajectory(args.learned)
    _check_hash(cfg.hash(), truth.meta.get("config_hash"), "reference trajectory", args.force)
    _check_hash(cfg.hash(), learned.meta.get("config_hash"), "learned trajectory", args.force)
    density_dir = args.densities
    if density_dir is not None:
        Path(density_dir).mkdir(parents=True, exist_ok=True)
    report = pipeline.evaluate(truth, learned, cfg.eval, density_dir)
    report["config_hash"] = cfg.hash()
    if cfg.eval.chaos is not None and args.checkpoint is not None:
        model, _ = load_checkpoint(args.checkpoint)
        report["chaos"] = pipeline.chaos(cfg, model, threads=args.threads)
    write_json(args.out, report)


def cmd_chaos(args):
    cfg = _config(args)
    model = None
    if args.checkpoint is not None:
        model, meta = load_checkpoint(args.checkpoint)
        _check_hash(cfg.hash(), meta.get("config_hash"), "checkpoint", args.force)
    rows = pipeline.chaos(cfg, model, threads=args.threads)
    write_json(args.out, {"config_hash": cfg.hash(), "learned": model is not None, "reference_N": rows[-1]["N"],
                          "rows": rows})


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment config JSON")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker cap")
    common.add_argument("--out", required=True, help="output path")
    common.add_argument("--force", action="store_true", help="ignore config hash mismatches")

    p = argparse.ArgumentParser(prog="meanfield", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="simulate ground-truth trajectories")
    t = sub.add_parser("train", parents=[common], help="fit a model to generated data")
    t.add_argument("--data", required=True, help="directory written by generate")
    t.add_argument("--log", help="training log CSV (default: <out>.log.csv)")
    r = sub.add_parser("rollout", parents=[common], help="simulate the learned system")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--init", help="take the initial state from this trajectory file")
    r.add_argument("--n", type=int, help="draw a fresh initial state with this many particles")
    r.add_argument("--steps", type=int, help="number of steps (default: config L)")
    e = sub.add_parser("evaluate", parents=[common], help="compare a learned rollout with a reference")
    e.add_argument("--truth", required=True)
    e.add_argument("--learned", required=True)
    e.add_argument("--densities", help="directory for density CSVs")
    e.add_argument("--checkpoint", help="also run the chaos ladder for this model")
    c = sub.add_parser("chaos", parents=[common], help="propagation-of-chaos ladder")
    c.add_argument("--checkpoint", help="learned model (default: ground-truth system)")
    return p


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "rollout": cmd_rollout,
            "evaluate": cmd_evaluate, "chaos": cmd_chaos}


def _fail(code, exc):
    msg = " ".join(str(exc).split())
    print(f"meanfield: exit={code} kind={type(exc).__name__} msg={msg}", file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = os.environ.get("MEANFIELD_LOG", "error").lower()
    if level not in LOG_LEVELS:
        return _fail(2, ValueError(f"MEANFIELD_LOG must be one of {sorted(LOG_LEVELS)}"))
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        return _fail(2, ValueError("--threads must be >= 1"))
    try:
        with threadpool_limits(limits=args.threads):
            COMMANDS[args.command](args)
    except (NumericalError, DegenerateError) as exc:
        return _fail(3, exc)
    except (MeanFieldError, ValueError, OSError, KeyError) as exc:
        return _fail(2, exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
