"""Command line: ``gen-data``, ``train``, ``eval`` and ``sweep``."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

from . import __version__
from .channel import ConfigError
from .config import load_config
from .experiments import format_axis_value, make_dataset, run_sweep
from .io import FormatError, read_checkpoint, read_dataset, write_checkpoint, write_dataset
from .training import TrainingError, evaluate, train

log = logging.getLogger("chanode")

DATASET_FILE = "dataset.lodc"
MODEL_FILE = "model.lodm"


def _fmt(x: float) -> str:
    return "-inf" if x == -math.inf else repr(float(x))


def _write_csv(path: Path, header: list[str], rows: list[list], seed: int) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# chanode {__version__} seed={seed}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_data(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _out_dir(args.out)
    cfg.dump(out / "config.json")
    ds = make_dataset(cfg)
    write_dataset(out / DATASET_FILE, ds)
    log.info("wrote %d samples (%d train) to %s", len(ds), ds.n_train, out / DATASET_FILE)
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.set)
    ds = read_dataset(args.data)
    # the dataset fixes the physical setup
    cfg = cfg.with_overrides({f"channel.{k}": v for k, v in vars(ds.scenario).items()}
                             | {"observation.r": ds.observation.r,
                                "observation.snr_db": ds.observation.snr_db})
    out = _out_dir(args.out)
    cfg.dump(out / "config.json")
    net_config = cfg.net_config()
    if net_config.M != len(ds.antenna_set):
        raise ConfigError("observation.r", "dataset antenna count disagrees with config")
    params, metrics = train(ds, net_config, cfg.train,
                            callback=lambda e, m: log.info("epoch %d loss %.4e", e, m.train_loss[-1]))
    write_checkpoint(out / MODEL_FILE, params, {"seed": cfg.train.seed})
    val_db = metrics.val_nmse_db
    rows = [[e + 1, repr(metrics.lr[e]), repr(metrics.train_loss[e]),
             _fmt(val_db[e]) if e < len(val_db) else ""] for e in range(len(metrics))]
    _write_csv(out / "metrics.csv", ["epoch", "lr", "train_loss", "val_nmse_db"], rows, cfg.train.seed)
    return 0


def cmd_eval(args) -> int:
    ds = read_dataset(args.data)
    params, header = read_checkpoint(args.model)
    split = {"validation": ds.validation, "train": ds.train, "all": ds}[args.split]
    rep = evaluate(params, split)
    out = _out_dir(args.out)
    rows = [["overall", "", repr(rep.nmse), _fmt(rep.nmse_db)]]
    rows += [["block", n, repr(float(v)), _fmt(db)] for n, (v, db) in
             enumerate(zip(rep.per_block, rep.per_block_db))]
    _write_csv(out / "report.csv", ["scope", "block", "nmse", "nmse_db"], rows, header.get("seed", 0))
    print(f"NMSE {rep.nmse_db:.3f} dB over {rep.count} samples")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, args.set)
    out = _out_dir(args.out)
    cfg.dump(out / "config.json")
    seeds = [int(s) for s in args.seeds.split(",")]
    rows = run_sweep(cfg, args.axis, args.values.split(","), seeds, workers=args.workers)
    _write_csv(out / "curve.csv", ["axis_value", "nmse_db", "seed"],
               [[format_axis_value(r.value), _fmt(r.nmse_db), r.seed] for r in rows],
               cfg.dataset["seed"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chanode", description=__doc__)
    p.add_argument("--version", action="version", version=f"chanode {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="JSON config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted override, e.g. observation.r=0.5 (repeatable)")
        sp.add_argument("--out", required=True, help="output directory")

    g = sub.add_parser("gen-data", help="generate a channel dataset")
    common(g)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model on a dataset file")
    common(t)
    t.add_argument("--data", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset file")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--split", choices=("validation", "train", "all"), default="validation")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="NMSE curve along one axis")
    common(s)
    s.add_argument("--axis", required=True, choices=("snr", "r", "td", "epoch"))
    s.add_argument("--values", required=True, help="comma separated; 'none' for noise-free SNR")
    s.add_argument("--seeds", default="0")
    s.add_argument("--workers", type=int, default=None,
                   help="parallel processes (default: $CHANODE_THREADS or 1)")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except TrainingError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
