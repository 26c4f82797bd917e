"""Command-line entry point: ``nestdeblur {synth,train,eval,ablate,triptych}``.

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""
import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import PROFILES, load_config
from .errors import DataError, NestDeblurError
from .harness import DEFAULT_GRID, evaluate_model, run_ablation, run_training
from .sim import PhantomSpec, PSFSpec, gen_dataset
from .triptych import export_triptych

log = logging.getLogger("nestdeblur")


def _floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _common(p):
    p.add_argument("--config", type=Path, help="INI config file; flags override its keys")
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk",
                   help="base settings the config file is applied on top of (default: desk)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--deterministic", action="store_true", default=None)


def _run_flags(p):
    p.add_argument("--manifest")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--train-count", type=int)
    p.add_argument("--levels", type=int)
    p.add_argument("--unet-depth", type=int)
    p.add_argument("--base-channels", type=int)
    p.add_argument("--mode", choices=("residual", "concat"))
    p.add_argument("--loss", choices=("l1", "l2"))


def build_parser():
    parser = argparse.ArgumentParser(prog="nestdeblur", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic defocus dataset")
    _common(p)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--size", type=int, nargs=2, default=(96, 96), metavar=("H", "W"))
    p.add_argument("--z", type=_floats, default=[10.0], help="comma-separated defocus distances (um)")
    p.add_argument("--sigma-per-um", type=float, default=0.2)
    p.add_argument("--noise", type=float, default=0.005)

    p = sub.add_parser("train", help="train a nested model")
    _common(p)
    _run_flags(p)
    p.add_argument("--resume", type=Path, help="checkpoint to resume from")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a manifest's test split")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--train-count", type=int)

    p = sub.add_parser("ablate", help="train/evaluate the levels x fusion-mode grid")
    _common(p)
    _run_flags(p)
    p.add_argument("--grid-levels", type=lambda s: [int(v) for v in s.split(",")], default=[1, 2, 3, 4])
    p.add_argument("--grid-modes", type=lambda s: s.split(","), default=["residual", "concat"])

    p = sub.add_parser("triptych", help="render input | prediction | ground truth")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--sharp", type=Path, required=True)
    p.add_argument("--blurred", type=Path, required=True)
    return parser


def resolve_run_config(args):
    base = PROFILES[args.profile]
    cfg = load_config(args.config, base) if args.config else base
    top = {
        "manifest": getattr(args, "manifest", None),
        "epochs": getattr(args, "epochs", None),
        "lr": getattr(args, "lr", None),
        "batch_size": getattr(args, "batch_size", None),
        "train_count": getattr(args, "train_count", None),
        "seed": args.seed,
        "deterministic": args.deterministic,
    }
    cfg = replace(cfg, **{k: v for k, v in top.items() if v is not None})
    model = {
        "levels": getattr(args, "levels", None),
        "unet_depth": getattr(args, "unet_depth", None),
        "base_channels": getattr(args, "base_channels", None),
        "fusion_mode": getattr(args, "mode", None),
        "loss_kind": getattr(args, "loss", None),
    }
    cfg = cfg.with_model(**{k: v for k, v in model.items() if v is not None})
    return cfg.validate()


def _cmd_synth(args):
    seed = args.seed if args.seed is not None else resolve_run_config(args).seed
    phantom = PhantomSpec(size=tuple(args.size))
    manifest = gen_dataset(phantom, args.z, PSFSpec(sigma_per_um=args.sigma_per_um), args.noise,
                           args.count, args.out, seed)
    print(f"wrote {len(manifest.records)} pairs to {args.out / 'manifest.tsv'}")


def _cmd_train(args):
    result = run_training(resolve_run_config(args), args.out, resume=args.resume)
    last = result.history[-1]
    print(f"epoch {last[0]}: train loss {last[1]:.6f}, val PSNR {last[2]:.3f} dB -> {result.checkpoint}")


def _cmd_eval(args):
    out = args.out / "report.csv" if args.out.is_dir() else args.out
    rows = evaluate_model(args.checkpoint, args.manifest, out, args.train_count)
    for r in rows:
        print(f"{r.tag}\t{r.model}\tPSNR {r.psnr_db:.3f}\tSSIM {r.ssim:.4f}")


def _cmd_ablate(args):
    cfg = resolve_run_config(args)
    grid = [(n, m) for n in args.grid_levels for m in args.grid_modes] or list(DEFAULT_GRID)
    rows = run_ablation(cfg, args.out, grid)
    print(f"{len(rows)} rows -> {args.out / 'ablation.csv'}")


def _cmd_triptych(args):
    export_triptych(args.checkpoint, args.sharp, args.blurred, args.out)
    print(f"wrote {args.out}")


COMMANDS = {
    "synth": _cmd_synth, "train": _cmd_train, "eval": _cmd_eval,
    "ablate": _cmd_ablate, "triptych": _cmd_triptych,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except NestDeblurError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
