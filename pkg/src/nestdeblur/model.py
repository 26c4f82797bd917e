"""Nested multi-level U-Net with coarse-to-fine decoder-to-encoder feature transfer.

Level 1 is full resolution, level N the coarsest. Subnetwork ``n < N``
receives the blurred input at its scale concatenated with the upsampled
prediction of subnetwork ``n + 1``, and at every encoder stage ``i >= 1``
its feature map E_i is fused with decoder map D_{i-1} of subnetwork
``n + 1``. Decoder indexing is mirrored (D_i has the spatial size of E_i),
so D_{i-1} of the coarser level already matches E_i of the finer one.
"""
import math
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, NumericError, ShapeError
from .nn import (
    Param,
    adam_step,
    avg_pool2x,
    concat_channels,
    concat_channels_backward,
    conv2d,
    conv2d_backward,
    he_init,
    pool_down2x,
    pool_down2x_backward,
    relu,
    relu_backward,
    resize_bilinear,
    upsample2x,
    upsample2x_backward,
)

FUSION_MODES = ("residual", "concat")
LOSS_KINDS = ("l1", "l2")
MAX_LEVELS = 8


@dataclass(frozen=True)
class NestedConfig:
    levels: int = 2
    unet_depth: int = 2
    base_channels: int = 8
    in_channels: int = 2
    out_channels: int = 2
    fusion_mode: str = "residual"
    loss_kind: str = "l1"

    def validate(self):
        problems = []
        if not 1 <= self.levels <= MAX_LEVELS:
            problems.append(f"levels must be in [1, {MAX_LEVELS}], got {self.levels}")
        if self.unet_depth < 1:
            problems.append(f"unet_depth must be >= 1, got {self.unet_depth}")
        if self.base_channels < 1:
            problems.append(f"base_channels must be >= 1, got {self.base_channels}")
        if self.in_channels < 1 or self.out_channels < 1:
            problems.append("in_channels and out_channels must be >= 1")
        if self.fusion_mode not in FUSION_MODES:
            problems.append(f"fusion_mode must be one of {FUSION_MODES}, got {self.fusion_mode!r}")
        if self.loss_kind not in LOSS_KINDS:
            problems.append(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if problems:
            raise ConfigError("invalid NestedConfig: " + "; ".join(problems))
        return self

    @property
    def divisor(self):
        """Spatial dims of the full-resolution input must be multiples of this."""
        return 2 ** (self.levels - 1 + self.unet_depth)

    def to_dict(self):
        return asdict(self)


@dataclass
class SubnetTrace:
    encoder_feats: list
    decoder_feats: list
    prediction: np.ndarray
    cache: dict = field(default=None, repr=False)


# -- fusion -----------------------------------------------------------------

def _fuse(E, D, mode, projection):
    cache = {"mode": mode}
    if D.shape[2:] != E.shape[2:]:
        D, cache["resize"] = resize_bilinear(D, E.shape[2], E.shape[3])
    if mode == "concat":
        out, cache["sizes"] = concat_channels([E, D])
        return out, cache
    if mode != "residual":
        raise ConfigError(f"unknown fusion mode {mode!r}")
    if projection is not None:
        D, cache["proj"] = conv2d(D, projection)
    if D.shape[1] != E.shape[1]:
        raise ConfigError(
            f"residual fusion needs matching channels: E has {E.shape[1]}, D has {D.shape[1]} "
            "and no projection is configured"
        )
    return E + D, cache


def _fuse_backward(dout, cache):
    """Return ``(dE, dD, dprojection_weight)``."""
    dproj = None
    if cache["mode"] == "concat":
        dE, dD = concat_channels_backward(dout, cache["sizes"])
    else:
        dE, dD = dout, dout
        if "proj" in cache:
            dD, dproj, _ = conv2d_backward(dD, cache["proj"])
    if "resize" in cache:
        dD = upsample2x_backward(dD, cache["resize"])
    return dE, dD, dproj


def fuse_features(E, D_coarse, mode, projection=None):
    """Merge a coarse decoder map into an encoder map.

    Residual mode adds (after an optional bias-free 1x1 projection of
    ``D_coarse`` to E's channel count); concat mode stacks channels with E
    first. ``D_coarse`` is bilinearly resized if its spatial dims differ.
    """
    out, _ = _fuse(E, D_coarse, mode, projection)
    return out


# -- subnetwork -------------------------------------------------------------

class Subnet:
    """One U-Net of the nest. ``has_coarser`` is False only for the coarsest level."""

    def __init__(self, level, config, has_coarser):
        self.level = level
        self.config = config
        self.has_coarser = has_coarser
        self.params = {}

        depth = config.unet_depth
        c = [config.base_channels * 2 ** i for i in range(depth + 1)]
        self.widths = c
        concat = has_coarser and config.fusion_mode == "concat"
        # Encoder widths after fusion.
        ew = [c[0]] + [c[i] + (c[i - 1] if concat else 0) for i in range(1, depth + 1)]
        self.fused_widths = ew
        in_c = config.in_channels + (config.out_channels if has_coarser else 0)

        for i in range(depth + 1):
            self._conv(f"enc{i}.conv0", c[i], in_c if i == 0 else ew[i - 1], 3)
            self._conv(f"enc{i}.conv1", c[i], c[i], 3)
            if i >= 1 and has_coarser and config.fusion_mode == "residual" and c[i - 1] != c[i]:
                self._conv(f"fuse{i}.proj", c[i], c[i - 1], 1, bias=False)
        for i in reversed(range(depth)):
            self._conv(f"dec{i}.up", c[i], ew[depth] if i == depth - 1 else c[i + 1], 3)
            self._conv(f"dec{i}.conv0", c[i], c[i] + ew[i], 3)
            self._conv(f"dec{i}.conv1", c[i], c[i], 3)
        self._conv("out", config.out_channels, c[0], 3)

    @property
    def prefix(self):
        return f"sub{self.level}"

    @property
    def fusion_sites(self):
        return self.config.unet_depth if self.has_coarser else 0

    def _conv(self, name, c_out, c_in, k, bias=True):
        full = f"{self.prefix}.{name}"
        self.params[f"{name}.weight"] = Param(f"{full}.weight", np.zeros((c_out, c_in, k, k)))
        if bias:
            self.params[f"{name}.bias"] = Param(f"{full}.bias", np.zeros(c_out))

    def _w(self, name):
        p = self.params.get(f"{name}.weight")
        return None if p is None else p.value

    def _b(self, name):
        p = self.params.get(f"{name}.bias")
        return None if p is None else p.value

    def _conv_relu(self, name, h, caches):
        out, cc = conv2d(h, self._w(name), self._b(name), 1, 1)
        out, mask = relu(out)
        caches[name] = (cc, mask)
        return out

    def _conv_relu_backward(self, name, dout, caches):
        cc, mask = caches[name]
        dout = relu_backward(dout, mask)
        dx, dw, db = conv2d_backward(dout, cc)
        self.params[f"{name}.weight"].grad += dw
        self.params[f"{name}.bias"].grad += db
        return dx

    def forward(self, x, coarse_pred=None, coarse_trace=None, fuse=True, zero_transfer=False):
        if self.has_coarser != (coarse_pred is not None) or self.has_coarser != (coarse_trace is not None):
            raise ContractError(
                f"subnetwork {self.level}: coarse prediction and trace must both be "
                f"{'given' if self.has_coarser else 'absent'}"
            )
        if not fuse and self.config.fusion_mode != "residual":
            raise ContractError("fusion can only be disabled in residual mode")
        depth = self.config.unet_depth
        caches = {}

        h = x
        if self.has_coarser:
            up, caches["in_up"] = upsample2x(coarse_pred)
            if up.shape[2:] != x.shape[2:]:
                raise ShapeError(f"upsampled coarse prediction {up.shape[2:]} does not match input {x.shape[2:]}")
            h, caches["in_cat"] = concat_channels([x, up])

        enc = []
        for i in range(depth + 1):
            if i > 0:
                h, caches[f"pool{i}"] = pool_down2x(h)
            h = self._conv_relu(f"enc{i}.conv0", h, caches)
            h = self._conv_relu(f"enc{i}.conv1", h, caches)
            if i > 0 and self.has_coarser and fuse:
                D = coarse_trace.decoder_feats[i - 1]
                if zero_transfer:
                    D = np.zeros_like(D)
                h, caches[f"fuse{i}"] = _fuse(h, D, self.config.fusion_mode, self._w(f"fuse{i}.proj"))
                caches[f"fuse{i}"]["zeroed"] = zero_transfer
            enc.append(h)

        dec = [None] * (depth + 1)
        d = enc[depth]
        dec[depth] = d
        for i in reversed(range(depth)):
            u, caches[f"up{i}"] = upsample2x(d)
            u = self._conv_relu(f"dec{i}.up", u, caches)
            d, caches[f"cat{i}"] = concat_channels([u, enc[i]])
            d = self._conv_relu(f"dec{i}.conv0", d, caches)
            d = self._conv_relu(f"dec{i}.conv1", d, caches)
            dec[i] = d

        pred, caches["out"] = conv2d(dec[0], self._w("out"), self._b("out"), 1, 1)
        return SubnetTrace(enc, dec, pred, caches)

    def backward(self, trace, d_pred, d_dec=None):
        """Accumulate parameter gradients; return ``(d_coarse_pred, d_coarse_dec)``.

        ``d_dec`` maps decoder index to gradient flowing into D_i from the
        finer level's fusion sites. ``d_coarse_dec`` is the same kind of map
        for the coarser level (empty for the coarsest).
        """
        depth = self.config.unet_depth
        caches = trace.cache
        d_dec = d_dec or {}

        dd, dw, db = conv2d_backward(d_pred, caches["out"])
        self.params["out.weight"].grad += dw
        self.params["out.bias"].grad += db

        d_enc = [None] * (depth + 1)
        for i in range(depth):
            if i in d_dec:
                dd = dd + d_dec[i]
            dd = self._conv_relu_backward(f"dec{i}.conv1", dd, caches)
            dd = self._conv_relu_backward(f"dec{i}.conv0", dd, caches)
            du, d_enc[i] = concat_channels_backward(dd, caches[f"cat{i}"])
            du = self._conv_relu_backward(f"dec{i}.up", du, caches)
            dd = upsample2x_backward(du, caches[f"up{i}"])
        if depth in d_dec:
            dd = dd + d_dec[depth]
        d_enc[depth] = dd

        d_coarse_dec = {}
        dh = None
        for i in reversed(range(depth + 1)):
            dE = d_enc[i] if dh is None else d_enc[i] + dh
            if f"fuse{i}" in caches:
                dE, dD, dproj = _fuse_backward(dE, caches[f"fuse{i}"])
                if dproj is not None:
                    self.params[f"fuse{i}.proj.weight"].grad += dproj
                if not caches[f"fuse{i}"]["zeroed"]:
                    d_coarse_dec[i - 1] = dD
            dE = self._conv_relu_backward(f"enc{i}.conv1", dE, caches)
            dE = self._conv_relu_backward(f"enc{i}.conv0", dE, caches)
            if i > 0:
                dh = pool_down2x_backward(dE, caches[f"pool{i}"])
            else:
                dh = dE

        d_coarse_pred = None
        if self.has_coarser:
            _, dup = concat_channels_backward(dh, caches["in_cat"])
            d_coarse_pred = upsample2x_backward(dup, caches["in_up"])
        return d_coarse_pred, d_coarse_dec


# -- whole model ------------------------------------------------------------

class NestedModel:
    def __init__(self, config):
        self.config = config
        n_levels = config.levels
        self.subnets = [Subnet(n, config, has_coarser=n < n_levels) for n in range(1, n_levels + 1)]

    def parameters(self):
        return [p for s in self.subnets for p in s.params.values()]

    def named_parameters(self):
        return {p.name: p for p in self.parameters()}

    @property
    def fusion_sites(self):
        return sum(s.fusion_sites for s in self.subnets)

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def astype(self, dtype):
        for p in self.parameters():
            p.astype(dtype)
        return self

    @property
    def dtype(self):
        return self.subnets[0].params["out.weight"].value.dtype

    def forward(self, pyramid, fuse=True, zero_transfer=False):
        """Coarse-to-fine sweep. Returns ``(predictions, traces)``, both level-1-first."""
        if len(pyramid) != self.config.levels:
            raise ContractError(f"pyramid has {len(pyramid)} levels, model expects {self.config.levels}")
        traces = [None] * self.config.levels
        coarse = None
        for idx in reversed(range(self.config.levels)):
            sub = self.subnets[idx]
            if coarse is None:
                trace = sub.forward(pyramid[idx])
            else:
                trace = sub.forward(pyramid[idx], coarse.prediction, coarse, fuse=fuse, zero_transfer=zero_transfer)
            traces[idx] = coarse = trace
        return [t.prediction for t in traces], traces

    def backward(self, traces, d_preds):
        """Backpropagate per-level prediction gradients through all levels."""
        d_pred_extra = None
        d_dec = None
        for idx, sub in enumerate(self.subnets):
            d_pred = d_preds[idx] if d_pred_extra is None else d_preds[idx] + d_pred_extra
            d_pred_extra, d_dec = sub.backward(traces[idx], d_pred, d_dec)


def build_nested(config, seed):
    """Build an N-level nest with He-initialised weights and zero biases.

    Each weight's seed is derived from ``seed`` and the parameter's name, so
    a parameter shared by two configurations starts from the same values.
    """
    config = config.validate()
    model = NestedModel(config)
    for p in model.parameters():
        if p.name.endswith(".bias"):
            p.value = np.zeros(p.value.shape, dtype=np.float32)
        else:
            sub_seed = np.random.SeedSequence([seed, zlib.crc32(p.name.encode())])
            p.value = he_init(p.value.shape, sub_seed).astype(np.float32)
        p.grad = np.zeros_like(p.value)
    return model


def count_params(model):
    return sum(p.size for p in model.parameters() if p.trainable)


def subnet_forward(model, n, x_n, coarse_pred=None, coarse_trace=None, fuse=True, zero_transfer=False):
    """Run subnetwork ``n`` (1-based, 1 = finest) and return its trace."""
    if not 1 <= n <= model.config.levels:
        raise ContractError(f"level {n} outside 1..{model.config.levels}")
    return model.subnets[n - 1].forward(x_n, coarse_pred, coarse_trace, fuse=fuse, zero_transfer=zero_transfer)


def forward_nested(model, pyramid, fuse=True, zero_transfer=False):
    preds, _ = model.forward(pyramid, fuse=fuse, zero_transfer=zero_transfer)
    return preds


# -- pyramid, padding, loss --------------------------------------------------

def make_pyramid(x, levels):
    factor = 2 ** (levels - 1)
    if x.shape[2] % factor or x.shape[3] % factor:
        raise ShapeError(f"spatial dims {x.shape[2:]} not divisible by {factor} for {levels} levels")
    pyramid = [x]
    for _ in range(levels - 1):
        pyramid.append(avg_pool2x(pyramid[-1]))
    return pyramid


def pad_to_multiple(x, multiple):
    """Reflect-pad bottom/right so h and w are multiples of ``multiple``."""
    h, w = x.shape[2:]
    ph = (-h) % multiple
    pw = (-w) % multiple
    if ph == 0 and pw == 0:
        return x, (h, w)
    return np.pad(x, ((0, 0), (0, 0), (0, ph), (0, pw)), mode="reflect"), (h, w)


def crop_to(x, size):
    h, w = size
    return x[:, :, :h, :w]


def multiscale_loss(preds, targets, kind="l1"):
    """Sum over levels of the per-level mean absolute (l1) or squared (l2) error."""
    _check_pairs(preds, targets)
    total = 0.0
    for p, t in zip(preds, targets):
        diff = p.astype(np.float64) - t
        total += float(np.mean(np.abs(diff)) if kind == "l1" else np.mean(diff * diff))
    return total


def multiscale_loss_backward(preds, targets, kind="l1"):
    _check_pairs(preds, targets)
    grads = []
    for p, t in zip(preds, targets):
        diff = p - t.astype(p.dtype)
        g = np.sign(diff) if kind == "l1" else 2.0 * diff
        grads.append((g / diff.size).astype(p.dtype))
    return grads


def _check_pairs(preds, targets):
    if len(preds) != len(targets):
        raise ContractError(f"{len(preds)} predictions vs {len(targets)} targets")
    for i, (p, t) in enumerate(zip(preds, targets)):
        if p.shape != t.shape:
            raise ContractError(f"level {i + 1}: prediction {p.shape} vs target {t.shape}")


def loss_and_grads(model, x, y):
    """Forward + backward on one batch; gradients are accumulated into the params."""
    cfg = model.config
    x = x.astype(model.dtype, copy=False)
    y = y.astype(model.dtype, copy=False)
    xp, _ = pad_to_multiple(x, cfg.divisor)
    yp, _ = pad_to_multiple(y, cfg.divisor)
    inputs = make_pyramid(xp, cfg.levels)
    targets = make_pyramid(yp, cfg.levels)
    preds, traces = model.forward(inputs)
    loss = multiscale_loss(preds, targets, cfg.loss_kind)
    if not math.isfinite(loss):
        return loss
    model.backward(traces, multiscale_loss_backward(preds, targets, cfg.loss_kind))
    return loss


def train_step(model, x, y, state, epoch=None, batch_index=None):
    """One optimisation step on batch ``(x, y)``; returns the pre-step loss."""
    if x.shape != y.shape:
        raise ContractError(f"batch input {x.shape} and target {y.shape} differ")
    model.zero_grad()
    loss = loss_and_grads(model, x, y)
    if not math.isfinite(loss):
        raise NumericError(
            f"non-finite loss {loss} at epoch {epoch}, batch {batch_index}; "
            f"worst tensor {_worst_tensor(model)}"
        )
    adam_step(model.parameters(), state)
    return loss


def _worst_tensor(model):
    worst, worst_mag = None, -1.0
    for p in model.parameters():
        for arr in (p.value, p.grad):
            if not np.all(np.isfinite(arr)):
                return p.name
            mag = float(np.max(np.abs(arr))) if arr.size else 0.0
            if mag > worst_mag:
                worst, worst_mag = p.name, mag
    return worst


def predict(model, x):
    """Full-resolution prediction for an arbitrary-size batch (pad, sweep, crop)."""
    cfg = model.config
    xp, size = pad_to_multiple(x.astype(model.dtype, copy=False), cfg.divisor)
    preds, _ = model.forward(make_pyramid(xp, cfg.levels))
    return crop_to(preds[0], size)
