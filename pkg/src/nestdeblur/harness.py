"""Training, evaluation and ablation runs over a synthetic-style manifest."""
import contextlib
import csv
import logging
import math
import shutil
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .errors import ConfigError, ContractError, DataError, NestDeblurError, NumericError
from .io import read_img16, read_manifest, split_manifest
from .metrics import ReportRow, psnr, ssim, write_report
from .model import build_nested, count_params, predict, train_step
from .nn import AdamState

log = logging.getLogger(__name__)

LATEST = "checkpoint_latest.nudc"
BEST = "checkpoint_best.nudc"
DIAGNOSTIC = "checkpoint_diagnostic.nudc"
LOSS_LOG = "loss_log.csv"


@dataclass
class Split:
    train: list
    test: list
    root: Path


def load_split(manifest_path, train_count):
    """Split manifest records positionally after sorting by blurred-image path."""
    manifest = read_manifest(manifest_path)
    by_blurred = {r.blurred: r for r in manifest.records}
    if train_count > len(manifest.records):
        raise ConfigError(f"train_count {train_count} exceeds the {len(manifest.records)} manifest records")
    split = split_manifest([(r.blurred, r.sharp) for r in manifest.records], train_count)
    return Split(
        [by_blurred[r.input] for r in split.train],
        [by_blurred[r.input] for r in split.test],
        manifest.root,
    )


def load_arrays(records, root):
    """Stack the blurred (input) and sharp (target) images of ``records`` as float32."""
    if not records:
        return None, None
    try:
        xs = [read_img16(root / r.blurred) for r in records]
        ys = [read_img16(root / r.sharp) for r in records]
    except OSError as exc:
        raise DataError(f"cannot read dataset image: {exc}") from exc
    return np.concatenate(xs).astype(np.float32), np.concatenate(ys).astype(np.float32)


def predict_batched(model, x, batch_size=8):
    out = [np.clip(predict(model, x[i:i + batch_size]), 0.0, 1.0) for i in range(0, len(x), batch_size)]
    return np.concatenate(out)


def mean_psnr(model, x, y, batch_size=8):
    if x is None:
        return math.nan
    pred = predict_batched(model, x, batch_size)
    return float(np.mean([psnr(pred[i:i + 1], y[i:i + 1]) for i in range(len(y))]))


def _determinism(cfg):
    return threadpool_limits(1) if cfg.deterministic else contextlib.nullcontext()


def _write_loss_log(path, history):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_psnr"])
        for epoch, loss, val in history:
            w.writerow([epoch, repr(loss), "inf" if math.isinf(val) else repr(val)])


def read_loss_log(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [(int(r["epoch"]), float(r["train_loss"]), float(r["val_psnr"])) for r in csv.DictReader(fh)]


@dataclass
class TrainResult:
    checkpoint: Path
    best_checkpoint: Path
    history: list
    model: object


def run_training(cfg, out_dir, resume=None):
    """Train per ``cfg``; write latest/best checkpoints and the loss log to ``out_dir``.

    Validation uses the test split of the manifest (mean PSNR of clipped
    predictions); the best checkpoint is the epoch with the highest value.
    """
    cfg = cfg.validate()
    out_dir = Path(out_dir)
    if not cfg.manifest:
        raise ConfigError("no manifest configured")
    split = load_split(cfg.manifest, cfg.train_count)
    if not split.train:
        raise ConfigError("training split is empty")
    x_train, y_train = load_arrays(split.train, split.root)
    x_test, y_test = load_arrays(split.test, split.root)
    out_dir.mkdir(parents=True, exist_ok=True)

    with _determinism(cfg):
        if resume is not None:
            ckpt = load_checkpoint(resume, expect_config=cfg.model)
            model, state = ckpt.model, ckpt.state
            state.lr, state.beta1, state.beta2, state.eps = cfg.lr, cfg.beta1, cfg.beta2, cfg.eps
            start = ckpt.epoch
            history = [tuple(h) for h in ckpt.extra.get("history", [])]
            best = ckpt.extra.get("best_val_psnr", -math.inf)
        else:
            model = build_nested(cfg.model, cfg.seed)
            state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
            start, history, best = 0, [], -math.inf
        run_dict = cfg.to_dict()

        n = len(x_train)
        for epoch in range(start + 1, cfg.epochs + 1):
            order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
            losses = []
            for b, s in enumerate(range(0, n, cfg.batch_size)):
                idx = order[s:s + cfg.batch_size]
                try:
                    losses.append(train_step(model, x_train[idx], y_train[idx], state, epoch, b))
                except NumericError:
                    save_checkpoint(model, state, run_dict, out_dir / DIAGNOSTIC, epoch - 1,
                                    {"history": history, "best_val_psnr": best})
                    raise
            val = mean_psnr(model, x_test, y_test, cfg.batch_size)
            history.append((epoch, float(np.mean(losses)), val))
            log.info("epoch %d  loss %.6f  val_psnr %.3f", epoch, history[-1][1], val)
            improved = not math.isnan(val) and val > best
            if improved:
                best = val
            extra = {"history": history, "best_val_psnr": best}
            save_checkpoint(model, state, run_dict, out_dir / LATEST, epoch, extra)
            if improved or not (out_dir / BEST).exists():
                shutil.copyfile(out_dir / LATEST, out_dir / BEST)
            _write_loss_log(out_dir / LOSS_LOG, history)

    return TrainResult(out_dir / LATEST, out_dir / BEST, history, model)


def model_tag(config):
    return f"nested-N{config.levels}-{config.fusion_mode}"


def _tag(z):
    return f"z={z:g}"


def evaluate_model(checkpoint, manifest, out=None, train_count=None):
    """Per-tag mean PSNR/SSIM of predictions and of the raw inputs on the test split."""
    ckpt = load_checkpoint(checkpoint)
    model = ckpt.model
    if train_count is None:
        train_count = ckpt.run_config.get("train_count", 0)
    split = load_split(manifest, train_count)
    if not split.test:
        raise ContractError("the manifest's test split is empty")
    params = count_params(model)
    cfg = model.config

    per_tag = {}
    for rec in split.test:
        x, y = load_arrays([rec], split.root)
        pred = predict_batched(model, x)
        entry = per_tag.setdefault(_tag(rec.z), {"pred": [], "input": []})
        entry["pred"].append((psnr(pred, y), ssim(pred, y)))
        entry["input"].append((psnr(x, y), ssim(x, y)))

    rows = []
    for tag, entry in per_tag.items():
        for kind, values in entry.items():
            p = float(np.mean([v[0] for v in values]))
            s = float(np.mean([v[1] for v in values]))
            if kind == "pred":
                rows.append(ReportRow(tag, model_tag(cfg), cfg.levels, cfg.fusion_mode, p, s, params))
            else:
                rows.append(ReportRow(tag, "input", 0, "-", p, s, 0))
    if out is not None:
        write_report(rows, out)
    return rows


DEFAULT_GRID = tuple((n, m) for n in (1, 2, 3, 4) for m in ("residual", "concat"))


def cell_seed(master_seed, levels):
    # Mode is excluded so both fusion modes at one N start from the same weights
    # and the two N=1 cells are the same run.
    return int(np.random.SeedSequence([master_seed, levels]).generate_state(1)[0])


def run_ablation(base, out_dir, grid=DEFAULT_GRID):
    """Train and evaluate each (levels, mode) cell; write ``ablation.csv``.

    A failing cell is reported with NaN metrics and does not stop the grid.
    """
    if not grid:
        raise ConfigError("ablation grid is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, done, failures = [], {}, []
    for levels, mode in grid:
        cfg = replace(base.with_model(levels=levels, fusion_mode=mode), seed=cell_seed(base.seed, levels))
        params = count_params(build_nested(cfg.model, 0))
        key = (levels, mode if levels > 1 else "-")
        try:
            if key not in done:
                cell_dir = out_dir / f"N{levels}-{key[1]}"
                result = run_training(cfg, cell_dir)
                done[key] = evaluate_model(result.checkpoint, cfg.manifest, train_count=cfg.train_count)
            for r in done[key]:
                if r.model != "input":
                    rows.append(replace(r, model=model_tag(cfg.model), mode=mode))
        except NestDeblurError as exc:
            failures.append(f"N={levels} mode={mode}: {exc}")
            log.error("ablation cell N=%d mode=%s failed: %s", levels, mode, exc)
            rows.append(ReportRow("-", model_tag(cfg.model) + ":failed", levels, mode, math.nan, math.nan, params))
    write_report(rows, out_dir / "ablation.csv")
    if failures:
        (out_dir / "ablation_failures.txt").write_text("\n".join(failures) + "\n", encoding="utf-8")
    return rows
