"""Activation and Gram statistics, activation tracks, PSNR and reference style loss.

Entropies are Shannon entropies of the softmax distribution over a tensor's
entries, divided by ``log(#entries)`` so that a uniform distribution scores
exactly 1.

Gram statistics are taken on ``G / (D * M)`` by default, the scale at which
the style loss compares Gram matrices (``L = 1/4 * ||G/(DM) - G_s/(DM)||^2``).
Pass ``gram_normalization="none"`` for the raw ``F F^T``; its softmax
saturates at any realistic spatial size ``M``.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, NumericFault
from .imageio import ImageBuffer

GRAM_NORMALIZATIONS = ("dm", "none")


def normalized_entropy(values) -> float:
    """Entropy of ``softmax(values)`` over all entries, scaled to [0, 1]."""
    z = np.asarray(values, dtype=np.float64).ravel()
    n = z.size
    if n == 1:
        return 1.0
    z = z - z.max()
    logp = z - np.log(np.exp(z).sum())
    h = -(np.exp(logp) * logp).sum() / math.log(n)
    return float(min(max(h, 0.0), 1.0))


def _softmax(values: np.ndarray) -> np.ndarray:
    z = values.astype(np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def _features(F) -> np.ndarray:
    data = F.data if isinstance(F, T.Tensor) else np.asarray(F)
    return data.astype(np.float64)


def normalized_gram(F, normalization: str = "dm") -> np.ndarray:
    f = _features(F)
    d = f.shape[1] if f.ndim == 4 else f.shape[0]
    f = f.reshape(d, -1)
    g = f @ f.T
    if normalization == "dm":
        g /= d * f.shape[1]
    elif normalization != "none":
        raise ConfigurationError(f"unknown gram normalization {normalization!r}")
    return g


@dataclass
class TapStats:
    tap: str
    depth_index: int
    max_activation: float | None = None
    activation_entropy: float | None = None
    gram_max: float | None = None
    gram_entropy: float | None = None


@dataclass
class StatsReport:
    taps: list[TapStats]
    arch: str = ""
    seed: int | None = None
    image: str = ""
    smoothed: bool = False

    def __getitem__(self, tap: str) -> TapStats:
        for t in self.taps:
            if t.tap == tap:
                return t
        raise KeyError(tap)

    def tap_names(self) -> list[str]:
        return [t.tap for t in self.taps]

    def rows(self) -> list[dict]:
        meta = {"arch": self.arch, "seed": self.seed, "image": self.image}
        return [{**meta, **asdict(t), "smoothed": self.smoothed} for t in self.taps]


def _prepared(taps: Mapping[str, T.Tensor], smoothed: bool):
    if not taps:
        raise ConfigurationError("statistics need at least one tap")
    for depth, (name, F) in enumerate(taps.items()):
        f = _features(F)
        if not np.isfinite(f).all():
            raise NumericFault("non-finite activations", tap=name)
        if smoothed:
            f = _softmax(f)
        yield depth, name, f


def tap_stats(taps: Mapping[str, T.Tensor], smoothed: bool = False, *,
              activations: bool = True, grams: bool = True,
              gram_normalization: str = "dm", **meta) -> StatsReport:
    """Per-tap maxima and entropies.

    With ``smoothed`` every map is first passed through the global softmax
    used by the SWAG losses, and the statistics describe that map.
    """
    rows = []
    for depth, name, f in _prepared(taps, smoothed):
        row = TapStats(name, depth)
        if activations:
            row.max_activation = float(f.max())
            row.activation_entropy = normalized_entropy(f)
        if grams:
            g = normalized_gram(f, gram_normalization)
            row.gram_max = float(g.max())
            row.gram_entropy = normalized_entropy(g)
        rows.append(row)
    return StatsReport(rows, smoothed=smoothed, **meta)


def activation_stats(taps: Mapping[str, T.Tensor], smoothed: bool = False, **meta) -> StatsReport:
    return tap_stats(taps, smoothed, grams=False, **meta)


def gram_stats(taps: Mapping[str, T.Tensor], smoothed: bool = False,
               gram_normalization: str = "dm", **meta) -> StatsReport:
    return tap_stats(taps, smoothed, activations=False,
                     gram_normalization=gram_normalization, **meta)


STAT_FIELDS = ("max_activation", "activation_entropy", "gram_max", "gram_entropy")


def aggregate(reports: Iterable[StatsReport]) -> "OrderedDict[str, dict[str, tuple[float, float]]]":
    """Mean and standard deviation of every statistic per tap across reports."""
    collected: OrderedDict[str, dict[str, list[float]]] = OrderedDict()
    for report in reports:
        for t in report.taps:
            slot = collected.setdefault(t.tap, {f: [] for f in STAT_FIELDS})
            for f in STAT_FIELDS:
                value = getattr(t, f)
                if value is not None:
                    slot[f].append(value)
    out = OrderedDict()
    for tap, fields in collected.items():
        out[tap] = {f: (float(np.mean(v)), float(np.std(v))) for f, v in fields.items() if v}
    return out


# ---------------------------------------------------------------------------
# activation tracks


def map_position(coord: int, src_size: int, dst_size: int) -> int:
    """Nearest-neighbour grid index: ``round(coord * dst / src)``, clamped."""
    idx = math.floor(coord * dst_size / src_size + 0.5)
    return min(max(idx, 0), dst_size - 1)


@dataclass
class TrackSet:
    positions: np.ndarray           # n x 2 integer (u, v) image coordinates
    taps: list[str]
    values: np.ndarray              # n x len(taps)
    rule: str = "nearest/channel-max"
    channels: dict[str, int] = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = []
        for pid, (u, v) in enumerate(self.positions):
            for j, tap in enumerate(self.taps):
                out.append({"position_id": pid, "u": int(u), "v": int(v), "tap": tap,
                            "value": float(self.values[pid, j])})
        return out


def tracks_from_taps(taps: Mapping[str, T.Tensor], image_size: tuple[int, int],
                     positions: np.ndarray, channel: str = "max",
                     rng: np.random.Generator | None = None) -> TrackSet:
    h0, w0 = image_size
    names = list(taps)
    values = np.zeros((len(positions), len(names)))
    chosen = {}
    for j, name in enumerate(names):
        f = _features(taps[name])[0]
        if channel == "random":
            chosen[name] = int((rng or np.random.default_rng(0)).integers(f.shape[0]))
        for i, (u, v) in enumerate(positions):
            col = map_position(int(u), w0, f.shape[2])
            row = map_position(int(v), h0, f.shape[1])
            cell = f[:, row, col]
            values[i, j] = cell.max() if channel == "max" else cell[chosen[name]]
    rule = "nearest/channel-max" if channel == "max" else "nearest/random-channel"
    return TrackSet(np.asarray(positions), names, values, rule, chosen)


def activation_tracks(net, image: T.Tensor, n_positions: int, seed: int,
                      taps: Iterable[str] | None = None, channel: str = "max") -> TrackSet:
    """Follow randomly sampled image positions through the tapped layers."""
    from .netzoo import forward_taps

    if n_positions < 1:
        raise ConfigurationError("n_positions must be >= 1")
    if channel not in ("max", "random"):
        raise ConfigurationError(f"unknown channel rule {channel!r}")
    rng = np.random.default_rng(seed)
    h0, w0 = image.shape[2], image.shape[3]
    positions = np.stack([rng.integers(0, w0, n_positions), rng.integers(0, h0, n_positions)], axis=1)
    names = list(net.spec.style_taps if taps is None else taps)
    feats = forward_taps(net, image.detach(), names)
    ordered = OrderedDict((n, feats[n]) for n in names)
    return tracks_from_taps(ordered, (h0, w0), positions, channel, rng)


# ---------------------------------------------------------------------------
# image-level metrics


def _as_unit_float(img) -> np.ndarray:
    if isinstance(img, ImageBuffer):
        return img.rgb.astype(np.float64) / 255.0
    return np.asarray(img, dtype=np.float64)


def psnr(a, b) -> float:
    """``10 log10(1 / MSE)`` for images in [0, 1]; ``inf`` when identical."""
    a, b = _as_unit_float(a), _as_unit_float(b)
    if a.shape != b.shape:
        raise ConfigurationError(f"psnr: shapes differ {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def reference_style_loss(image: T.Tensor, style: T.Tensor, reference_net) -> float:
    """Plain Gram style loss of ``image`` against ``style`` under a fixed reference network."""
    from .losses import LossConfig, style_loss
    from .netzoo import forward_taps

    taps = list(reference_net.spec.style_taps)
    if len(taps) != 5:
        raise ConfigurationError(f"reference network must have five style taps, has {len(taps)}")
    cfg = LossConfig(style_layer_weights={t: 1 for t in taps}, alpha=0.0, swag=False)
    fx = forward_taps(reference_net, image.detach(), taps)
    fs = forward_taps(reference_net, style.detach(), taps)
    return style_loss(fx, fs, cfg).item()
