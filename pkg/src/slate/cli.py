"""Command-line front end: reproducible dataset, training, and report runs.

Thread caps must land in the environment before numpy first loads, so
this module imports only the stdlib at top level and defers the numeric
submodules into the command handlers.

Exit codes are a stable contract: 0 success, 1 I/O or failed --check,
2 usage or configuration, 3 numerical failure.
"""

import argparse
import json
import os
import sys
import time

from . import __version__
from .errors import ConfigError, FormatError, NumericsError, UsageError

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _int_tuple(text):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}")


# ---------------------------------------------------------------------------
# run manifests


def _manifest_path(out):
    return f"{out}.manifest.json"


def _write_json_atomic(path, payload):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    os.replace(tmp, path)


def _start_manifest(out, command, args, configs, inputs=(), outputs=()):
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    payload = {
        "command": command,
        "version": __version__,
        "seed": resolved.get("seed"),
        "args": resolved,
        "configs": configs,
        "inputs": list(inputs),
        "outputs": list(outputs),
        "startedAt": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "completedAt": None,
        "status": "running",
    }
    _write_json_atomic(_manifest_path(out), payload)
    return payload


def _finish_manifest(out, payload, status="ok", **fields):
    payload.update(fields)
    payload["completedAt"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    payload["status"] = status
    _write_json_atomic(_manifest_path(out), payload)


# ---------------------------------------------------------------------------
# config assembly


def _channel_config(args):
    from .channel import ChannelConfig
    return ChannelConfig(
        n_tx=args.ntx, n_rx=args.nrx, n_rb=args.nrb,
        rb_per_subband=args.rb_per_subband, n_time=args.ntime,
        n_paths=args.paths, max_doppler_hz=args.doppler,
        carrier_hz=args.carrier, delay_spread_s=args.delay_spread,
        seed=args.seed,
    ).validate()


def _model_config(args, n_tx, n_sb):
    from .model import ModelConfig
    return ModelConfig(
        n_tx=n_tx, n_sb=n_sb, ph=args.patch_h, pw=args.patch_w,
        edim=args.edim, l_dim=args.ldim, d=_int_tuple(args.stages),
        u=_int_tuple(args.up), alpha=_int_tuple(args.alpha),
        heads=_int_tuple(args.heads), window=_int_tuple(args.window),
        b_bits=args.bits,
    ).validate()


def _check_dims(model_cfg, ds, where):
    got = (ds.config.n_tx, ds.config.n_sb)
    want = (model_cfg.n_tx, model_cfg.n_sb)
    if got != want:
        raise ConfigError(
            f"{where} expects (nTx, nSb) = {want} but dataset carries {got}"
        )


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args):
    import numpy as np
    from . import dataset as dsmod
    from .metrics import sgcs

    cfg = _channel_config(args)
    man = _start_manifest(args.out, "gen-data", args,
                          {"channel": cfg.__dict__.copy()}, outputs=[args.out])
    if args.samples == 0:
        print("warning: --samples 0 writes an empty dataset", file=sys.stderr)
    ds = dsmod.generate_dataset(cfg, args.samples, rank=args.rank, split=args.split)
    dsmod.write_dataset(ds, args.out)

    print(f"wrote {args.out}: M={args.samples} N={cfg.n_time} "
          f"rank={args.rank} nTx={cfg.n_tx} nSb={cfg.n_sb}")
    summary = {}
    if args.samples > 0:
        norms = np.linalg.norm(ds.v, axis=-2)
        corr = float(np.mean([
            sgcs(ds.v[i, 0], ds.v[i, -1]) for i in range(min(args.samples, 32))
        ]))
        summary = {"meanColumnNorm": float(norms.mean()),
                   "temporalCorrelation": corr}
        print(f"mean column norm {norms.mean():.6f} (expected 1.0)")
        print(f"temporal correlation first->last step {corr:.4f}")
    _finish_manifest(args.out, man, summary=summary)
    return EXIT_OK


def cmd_train(args):
    from . import training
    from .dataset import read_dataset
    from .model import SlateModel, load_checkpoint

    ds = read_dataset(args.data)
    val = read_dataset(args.val) if args.val else None

    optimizer = None
    if args.resume:
        model, header, moments = load_checkpoint(args.resume)
        _check_dims(model.cfg, ds, "checkpoint")
        params = [p for _, p in model.named_params()]
        optimizer = training.Adam(params, lr=args.lr)
        if moments is not None:
            optimizer.load_moments(moments, header["step"])
        else:
            optimizer.step_count = header["step"]
    else:
        mcfg = _model_config(args, ds.config.n_tx, ds.config.n_sb)
        model = SlateModel(mcfg, seed=args.seed)

    n_time = args.ntime or ds.v.shape[1]
    tcfg = training.TrainConfig(
        lr=args.lr, batch=args.batch, epochs=args.epochs, n_time=n_time,
        seed=args.seed, ckpt_every=args.ckpt_every, max_steps=args.max_steps,
    ).validate()
    man = _start_manifest(
        args.out, "train", args,
        {"model": model.cfg.to_json_dict(), "train": tcfg.__dict__.copy()},
        inputs=[args.data] + ([args.val] if args.val else []),
        outputs=[args.out] + ([args.metrics] if args.metrics else []),
    )
    records = training.train(model, ds, tcfg, val=val,
                             metrics_path=args.metrics, ckpt_path=args.out,
                             optimizer=optimizer)
    last = records[-1] if records else {}
    if last.get("valSGCS") is not None:
        print(f"final validation SGCS {last['valSGCS']:.4f}")
    elif last:
        print(f"final train loss {last['trainLoss']:.6f}")
    _finish_manifest(args.out, man, summary={"epochs": len(records),
                                             "final": last or None})
    return EXIT_OK


def _self_test_report(ds):
    # identity stub: the "decoder" returns the encoder input unchanged.
    from .metrics import sgcs
    vals = [sgcs(ds.v[i, n], ds.v[i, n])
            for i in range(len(ds.v)) for n in range(ds.v.shape[1])]
    mean = sum(vals) / len(vals) if vals else 1.0
    return {"lDim": 0, "bits": 0, "meanSGCS": mean, "p5SGCS": mean,
            "params": 0, "flopsMac1": 0, "flopsMac2": 0}


def cmd_eval(args):
    from . import analysis
    from .dataset import read_dataset
    from .model import load_checkpoint

    if args.from_manifest:
        with open(args.from_manifest) as f:
            stored = json.load(f)["args"]
        for key in ("data", "ckpt", "batch", "ablate_state", "self_test"):
            if key in stored:
                setattr(args, key, stored[key])
    if not args.data or not args.out:
        raise UsageError("eval requires --data and --out")

    ds = read_dataset(args.data)
    man = _start_manifest(args.out, "eval", args, {},
                          inputs=[p for p in (args.data, args.ckpt) if p],
                          outputs=[args.out])
    if args.self_test:
        report = _self_test_report(ds)
    else:
        if not args.ckpt:
            raise UsageError("eval requires --ckpt (or --self-test)")
        model, header, _ = load_checkpoint(args.ckpt)
        _check_dims(model.cfg, ds, "checkpoint")
        report = analysis.evaluate_model(model, ds, batch=args.batch,
                                         ablate_state=args.ablate_state)
    print(analysis.report_table([report]))
    analysis.write_report(args.out, [report])
    _finish_manifest(args.out, man, summary=report)
    return EXIT_OK


def _reconcile_report(args):
    from . import analysis
    from .model import SlateModel

    mcfg = _model_config(args, args.ntx, args.nsb)
    model = SlateModel(mcfg, seed=args.seed)
    return analysis.reconcile(model), mcfg


def cmd_params(args):
    from . import analysis

    rec, _ = _reconcile_report(args)
    print(analysis.report_table(rec["rows"],
                                ["name", "formula", "analytic", "structural",
                                 "deltaPct"]))
    print(f"analytic total   {rec['analyticTotal']}")
    print(f"structural total {rec['structuralTotal']}")
    print(f"delta            {rec['deltaPct']:.4f}%")
    if args.out:
        man = _start_manifest(args.out, "params", args, {}, outputs=[args.out])
        analysis.write_report(args.out, rec["rows"])
        _finish_manifest(args.out, man, summary={"deltaPct": rec["deltaPct"]})
    if args.check and rec["deltaPct"] > args.tolerance:
        print(f"check failed: delta {rec['deltaPct']:.4f}% > "
              f"{args.tolerance}%", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def cmd_flops(args):
    from . import analysis

    rec, mcfg = _reconcile_report(args)
    flops = analysis.flop_estimate(mcfg, rank=args.rank)
    print(analysis.report_table(flops["breakdown"], ["name", "macs", "other"]))
    print(f"macs {flops['macs']}  elementwise {flops['other']}")
    print(f"flops (MAC=1) {flops['flopsMac1']}")
    print(f"flops (MAC=2) {flops['flopsMac2']}")
    print(f"payload bits per report {analysis.payload_overhead(args.ldim, args.rank)}")
    if args.out:
        man = _start_manifest(args.out, "flops", args, {}, outputs=[args.out])
        analysis.write_report(args.out, flops["breakdown"])
        _finish_manifest(args.out, man, summary={"flopsMac1": flops["flopsMac1"],
                                                 "flopsMac2": flops["flopsMac2"]})
    if args.check and rec["deltaPct"] > args.tolerance:
        print(f"check failed: delta {rec['deltaPct']:.4f}% > "
              f"{args.tolerance}%", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=None,
                        help="cap numeric library threads (env SLATE_THREADS)")
    common.add_argument("--seed", type=int, default=0)

    arch = argparse.ArgumentParser(add_help=False)
    arch.add_argument("--ldim", type=int, default=64)
    arch.add_argument("--edim", type=int, default=32)
    arch.add_argument("--patch-h", type=int, default=1)
    arch.add_argument("--patch-w", type=int, default=4)
    arch.add_argument("--stages", default="1,1,2",
                      help="per-stage downscale factors d, comma separated")
    arch.add_argument("--up", default="2,1,1",
                      help="per-stage upscale factors u, comma separated")
    arch.add_argument("--alpha", default="2,4,2",
                      help="swin layers per cell, comma separated")
    arch.add_argument("--heads", default="2,4,8")
    arch.add_argument("--window", default="7,4")
    arch.add_argument("--bits", type=int, default=2)

    dims = argparse.ArgumentParser(add_help=False)
    dims.add_argument("--ntx", type=int, default=32)
    dims.add_argument("--nsb", type=int, default=14)

    p = argparse.ArgumentParser(prog="slate",
                                description="recurrent CSI autoencoder toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common],
                       help="generate a synthetic CSI dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--samples", type=int, required=True)
    g.add_argument("--split", choices=("train", "test"), default="train")
    g.add_argument("--rank", type=int, default=1)
    g.add_argument("--ntx", type=int, default=32)
    g.add_argument("--nrx", type=int, default=4)
    g.add_argument("--nrb", type=int, default=56)
    g.add_argument("--rb-per-subband", type=int, default=4)
    g.add_argument("--ntime", type=int, default=10)
    g.add_argument("--paths", type=int, default=8)
    g.add_argument("--doppler", type=float, default=11.1)
    g.add_argument("--carrier", type=float, default=4.0e9)
    g.add_argument("--delay-spread", type=float, default=300e-9)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", parents=[common, arch],
                       help="train a model on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--val")
    t.add_argument("--metrics", help="JSONL metrics log path")
    t.add_argument("--lr", type=float, default=0.0001)
    t.add_argument("--batch", type=int, default=128)
    t.add_argument("--epochs", type=int, default=650)
    t.add_argument("--ntime", type=int, default=0,
                   help="time steps per sequence; 0 means use the dataset's")
    t.add_argument("--ckpt-every", type=int, default=0)
    t.add_argument("--max-steps", type=int, default=0)
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", parents=[common],
                       help="evaluate a checkpoint on a dataset")
    e.add_argument("--data")
    e.add_argument("--ckpt")
    e.add_argument("--out", help="JSONL report path")
    e.add_argument("--batch", type=int, default=64)
    e.add_argument("--ablate-state", action="store_true",
                   help="also score with recurrent state zeroed every step")
    e.add_argument("--self-test", action="store_true",
                   help="score an identity stub instead of a checkpoint")
    e.add_argument("--from-manifest", help="re-run from a recorded manifest")
    e.set_defaults(func=cmd_eval)

    pp = sub.add_parser("params", parents=[common, arch, dims],
                        help="analytic vs structural parameter table")
    pp.add_argument("--check", action="store_true")
    pp.add_argument("--tolerance", type=float, default=5.0,
                    help="reconciliation tolerance in percent")
    pp.add_argument("--out", help="JSONL report path")
    pp.set_defaults(func=cmd_params)

    ff = sub.add_parser("flops", parents=[common, arch, dims],
                        help="analytic flop estimate")
    ff.add_argument("--rank", type=int, default=1)
    ff.add_argument("--check", action="store_true")
    ff.add_argument("--tolerance", type=float, default=5.0)
    ff.add_argument("--out", help="JSONL report path")
    ff.set_defaults(func=cmd_flops)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    threads = args.threads if args.threads else os.environ.get("SLATE_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(threads)
    try:
        return args.func(args)
    except (ConfigError, UsageError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except NumericsError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FormatError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
