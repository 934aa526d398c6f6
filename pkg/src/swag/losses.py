"""Gram matrices, content/style losses and their softmax-smoothed (SWAG) variants.

Feature maps are ``1 x D x H x W`` tensors; internally they are viewed as
``D x M`` matrices with ``M = H * W``. All losses are differentiable with
respect to the synthesized side; target activations are treated as constants.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import tensor as T
from .errors import ConfigurationError, UsageError
from .tensor import Tensor

VGG_BETA = 4e10
RESNET_BETA = 1e17


@dataclass
class LossConfig:
    """Weights of the stylization objective.

    ``style_layer_weights`` maps tap names to 0/1; ``content_tap`` names the
    layer used by the content term.
    """

    style_layer_weights: dict[str, float] = field(default_factory=dict)
    content_tap: str | None = None
    alpha: float = 1.0
    beta: float = VGG_BETA
    swag: bool = False
    temperature: float = 1.0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ConfigurationError("alpha and beta must be non-negative")
        if not self.temperature > 0:
            raise ConfigurationError("temperature must be > 0")
        for tap, w in self.style_layer_weights.items():
            if w not in (0, 1):
                raise ConfigurationError(f"style weight for {tap} must be 0 or 1, got {w}")

    @property
    def active_style_taps(self) -> list[str]:
        return [t for t, w in self.style_layer_weights.items() if w]

    @classmethod
    def for_arch(cls, spec, **overrides) -> "LossConfig":
        """Defaults for an architecture: its style/content taps and beta."""
        kwargs = dict(style_layer_weights={t: 1 for t in spec.style_taps},
                      content_tap=spec.content_tap, beta=spec.default_beta)
        kwargs.update(overrides)
        return cls(**kwargs)


def as_matrix(F: Tensor) -> Tensor:
    """``1 x D x H x W`` (or ``D x M``) -> ``D x M``."""
    if F.data.ndim == 2:
        return F
    if F.data.ndim != 4 or F.shape[0] != 1:
        raise ConfigurationError(f"expected a 1xDxHxW feature map, got {F.shape}")
    d = F.shape[1]
    return T.reshape(F, (d, F.size // d))


def _symmetrize(g: np.ndarray) -> np.ndarray:
    upper = np.triu(g)
    return upper + np.triu(g, 1).T


def gram(F: Tensor) -> Tensor:
    """``G = F F^T`` over the spatial index, mirrored so it is exactly symmetric."""
    Fm = as_matrix(F)
    f = Fm.data
    g = _symmetrize(f @ f.T)

    def back(dg):
        return ((dg + dg.T) @ f,)

    return T.custom_op(g, (Fm,), back, "gram")


@dataclass
class GramMatrix:
    values: np.ndarray
    layer: str
    d: int
    m: int

    @classmethod
    def of(cls, F, layer: str = "") -> "GramMatrix":
        data = F.data if isinstance(F, Tensor) else np.asarray(F)
        d = data.shape[1] if data.ndim == 4 else data.shape[0]
        f = data.reshape(d, -1).astype(np.float64)
        return cls(_symmetrize(f @ f.T), layer, d, f.shape[1])


def smooth(F: Tensor, temperature: float = 1.0) -> Tensor:
    """Softmax over all ``D * M`` entries of a feature map jointly."""
    return T.softmax_all(F, temperature)


def content_loss(Fx: Tensor, Fc: Tensor) -> Tensor:
    """``0.5 * ||Fx - Fc||^2``."""
    if Fx.shape != Fc.shape:
        raise UsageError(f"content_loss: shapes differ {Fx.shape} vs {Fc.shape}")
    diff = T.sub(Fx, Fc.detach())
    return T.scale(T.sum(T.mul(diff, diff)), 0.5)


def _gram_term(Fx: Tensor, target: np.ndarray) -> Tensor:
    Fm = as_matrix(Fx)
    d, m = Fm.shape
    diff = T.sub(gram(Fm), Tensor(target, dtype=Fx.dtype))
    return T.scale(T.sum(T.mul(diff, diff)), 1.0 / (4.0 * d * d * m * m))


def style_targets(tapsS: Mapping[str, Tensor], cfg: LossConfig) -> "OrderedDict[str, np.ndarray]":
    """Gram matrices of the style image at every active tap (smoothed under SWAG)."""
    out = OrderedDict()
    for tap in cfg.active_style_taps:
        if tap not in tapsS:
            raise ConfigurationError(f"style tap {tap!r} missing from style features")
        F = tapsS[tap].detach()
        if cfg.swag:
            F = smooth(F, cfg.temperature)
        out[tap] = gram(F).data
    return out


def style_loss_from_targets(tapsX: Mapping[str, Tensor], targets: Mapping[str, np.ndarray],
                            cfg: LossConfig) -> Tensor:
    if not targets:
        raise ConfigurationError("style loss needs at least one tap with weight 1")
    total = None
    for tap, target in targets.items():
        if tap not in tapsX:
            raise ConfigurationError(f"style tap {tap!r} missing from synthesized features")
        F = tapsX[tap]
        if cfg.swag:
            F = smooth(F, cfg.temperature)
        F = as_matrix(F)
        if F.shape[0] != target.shape[0]:
            raise ConfigurationError(f"style tap {tap!r}: channel counts differ")
        term = _gram_term(F, target)
        total = term if total is None else T.add(total, term)
    return total


def style_loss(tapsX: Mapping[str, Tensor], tapsS: Mapping[str, Tensor], cfg: LossConfig) -> Tensor:
    """``sum_l w_l / (4 D^2 M^2) ||G(Fx) - G(Fs)||^2``; SWAG when ``cfg.swag``."""
    return style_loss_from_targets(tapsX, style_targets(tapsS, cfg), cfg)


def swag_content_loss(Fx: Tensor, Fc: Tensor, temperature: float = 1.0) -> Tensor:
    return content_loss(smooth(Fx, temperature), smooth(Fc.detach(), temperature))


def swag_style_loss(tapsX: Mapping[str, Tensor], tapsS: Mapping[str, Tensor],
                    cfg: LossConfig) -> Tensor:
    if not cfg.swag:
        cfg = LossConfig(**{**cfg.__dict__, "swag": True})
    return style_loss(tapsX, tapsS, cfg)


@dataclass
class ObjectiveValue:
    total: Tensor
    content: Tensor | None
    style: Tensor | None

    def values(self) -> tuple[float, float, float]:
        c = self.content.item() if self.content is not None else 0.0
        s = self.style.item() if self.style is not None else 0.0
        return self.total.item(), c, s


class Objective:
    """``alpha * L_content + beta * L_style`` with targets computed once."""

    def __init__(self, cfg: LossConfig, content_taps: Mapping[str, Tensor] | None = None,
                 style_taps: Mapping[str, Tensor] | None = None):
        self.cfg = cfg
        self.content_target = None
        self.style_targets = None
        if cfg.alpha > 0:
            if content_taps is None or cfg.content_tap not in content_taps:
                raise ConfigurationError(f"content tap {cfg.content_tap!r} not available")
            Fc = content_taps[cfg.content_tap].detach()
            self.content_target = smooth(Fc, cfg.temperature) if cfg.swag else Fc
        if cfg.beta > 0:
            if style_taps is None:
                raise ConfigurationError("style features are required when beta > 0")
            self.style_targets = style_targets(style_taps, cfg)

    def needed_taps(self) -> list[str]:
        taps = []
        if self.style_targets is not None:
            taps += list(self.style_targets)
        if self.content_target is not None and self.cfg.content_tap not in taps:
            taps.append(self.cfg.content_tap)
        return taps

    def __call__(self, tapsX: Mapping[str, Tensor]) -> ObjectiveValue:
        cfg = self.cfg
        parts = []
        content = style = None
        if self.content_target is not None:
            Fx = tapsX[cfg.content_tap]
            if cfg.swag:
                Fx = smooth(Fx, cfg.temperature)
            content = content_loss(Fx, self.content_target)
            parts.append(T.scale(content, cfg.alpha))
        if self.style_targets is not None:
            style = style_loss_from_targets(tapsX, self.style_targets, cfg)
            parts.append(T.scale(style, cfg.beta))
        if not parts:
            raise ConfigurationError("objective is empty: alpha and beta are both zero")
        total = parts[0] if len(parts) == 1 else T.add(parts[0], parts[1])
        return ObjectiveValue(total, content, style)


def total_objective(tapsX: Mapping[str, Tensor], content_taps: Mapping[str, Tensor] | None,
                    style_taps: Mapping[str, Tensor] | None, cfg: LossConfig) -> ObjectiveValue:
    return Objective(cfg, content_taps, style_taps)(tapsX)
