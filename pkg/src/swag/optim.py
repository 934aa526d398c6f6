"""Image synthesis by gradient descent on the pixels of one image.

Three tasks share one loop: stylization (content + style), reconstruction
(content only, from noise) and texture synthesis (style only, from noise).
The network is a frozen feature extractor; only the image is updated.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .diagnostics import psnr
from .errors import ConfigurationError, DivergenceError, NumericFault
from .imageio import denormalize, denormalize_float, pixel_bounds
from .losses import LossConfig, Objective
from .netzoo import Network, forward_taps

TASKS = ("stylize", "reconstruct", "synthesize")
DIVERGENCE_FACTOR = 1e3
DIVERGENCE_PATIENCE = 50


@dataclass
class OptimConfig:
    task: str = "stylize"
    init: str = "content"          # "content" or "noise"
    seed: int = 0
    steps: int = 300
    optimizer: str = "adam"        # "adam" or "lbfgs"
    lr: float = 0.05
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    history: int = 10
    max_line_search: int = 20
    snapshot_every: int = 0
    clamp: bool = True

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}")
        if self.init not in ("content", "noise"):
            raise ConfigurationError(f"unknown init {self.init!r}")
        if self.optimizer not in ("adam", "lbfgs"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if self.steps < 0:
            raise ConfigurationError("steps must be >= 0")


@dataclass
class RunRecord:
    losses: np.ndarray                      # steps x 3: total, content, style
    image: np.ndarray                       # final 1x3xHxW normalized image
    wall_clock: float
    final_losses: tuple[float, float, float]
    snapshots: list[tuple[int, np.ndarray]] = field(default_factory=list)
    psnr: float | None = None

    @property
    def steps(self) -> int:
        return len(self.losses)

    def final_buffer(self):
        return denormalize(self.image)


def noise_image(shape, seed: int) -> np.ndarray:
    """Uniform noise over the valid normalized range of each channel."""
    lo, hi = pixel_bounds(np.float64)
    u = np.random.default_rng(seed).random(shape)
    return (lo + u * (hi - lo)).astype(T.get_dtype())


class _Evaluator:
    def __init__(self, net: Network, objective: Objective):
        self.net = net
        self.objective = objective
        self.taps = objective.needed_taps()

    def __call__(self, x: np.ndarray, grad: bool = True):
        xt = T.Tensor(x, requires_grad=grad)
        value = self.objective(forward_taps(self.net, xt, self.taps))
        values = value.values()
        if grad:
            T.backward(value.total)
            g = xt.grad
            if not np.isfinite(g.sum(dtype=np.float64)):
                raise NumericFault("non-finite gradient", op="backward")
            return values, g
        return values, None


def _check_loss(values, step: int, history: list[float], initial: float | None,
                bad_steps: int) -> int:
    if not all(math.isfinite(v) for v in values):
        raise NumericFault("non-finite loss", step=step)
    if initial is not None and initial > 0 and values[0] > DIVERGENCE_FACTOR * initial:
        bad_steps += 1
        if bad_steps >= DIVERGENCE_PATIENCE:
            raise DivergenceError(
                f"loss above {DIVERGENCE_FACTOR:g}x its initial value for "
                f"{DIVERGENCE_PATIENCE} consecutive steps", step=step)
        return bad_steps
    return 0


def _run_adam(evaluate: _Evaluator, x: np.ndarray, cfg: OptimConfig, bounds):
    b1, b2 = cfg.betas
    m = np.zeros(x.shape, np.float64)
    v = np.zeros(x.shape, np.float64)
    losses, snapshots = [], []
    initial = None
    bad = 0
    for step in range(cfg.steps):
        values, g = evaluate(x)
        bad = _check_loss(values, step, losses, initial, bad)
        if initial is None:
            initial = values[0]
        losses.append(values)
        g = g.astype(np.float64)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        t = step + 1
        update = cfg.lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + cfg.eps)
        x = (x - update).astype(x.dtype)
        if bounds is not None:
            x = np.clip(x, *bounds)
        if cfg.snapshot_every and t % cfg.snapshot_every == 0:
            snapshots.append((t, x.copy()))
    return x, losses, snapshots


def _run_lbfgs(evaluate: _Evaluator, x: np.ndarray, cfg: OptimConfig, bounds):
    from scipy.optimize import minimize

    shape, dtype = x.shape, x.dtype
    cache: dict[bytes, tuple] = {}
    losses, snapshots = [], []
    state = {"initial": None, "bad": 0}

    def fun(flat):
        xs = flat.reshape(shape).astype(dtype)
        values, g = evaluate(xs)
        cache.clear()
        cache[flat.tobytes()] = values
        return values[0], g.astype(np.float64).ravel()

    def callback(xk):
        values = cache.get(xk.tobytes())
        if values is None:
            values, _ = evaluate(xk.reshape(shape).astype(dtype), grad=False)
        step = len(losses)
        state["bad"] = _check_loss(values, step, losses, state["initial"], state["bad"])
        if state["initial"] is None:
            state["initial"] = values[0]
        losses.append(values)
        if cfg.snapshot_every and len(losses) % cfg.snapshot_every == 0:
            snapshots.append((len(losses), xk.reshape(shape).astype(dtype)))

    if cfg.steps == 0:
        return x, losses, snapshots
    box = None
    if bounds is not None:
        lo = np.broadcast_to(bounds[0], shape).ravel().astype(np.float64)
        hi = np.broadcast_to(bounds[1], shape).ravel().astype(np.float64)
        box = list(zip(lo, hi))
    result = minimize(fun, x.astype(np.float64).ravel(), jac=True, method="L-BFGS-B",
                      bounds=box, callback=callback,
                      options={"maxiter": cfg.steps, "maxcor": cfg.history,
                               "maxls": cfg.max_line_search, "ftol": 0.0, "gtol": 0.0})
    return result.x.reshape(shape).astype(dtype), losses, snapshots


def run(net: Network, objective: Objective, x0: np.ndarray, cfg: OptimConfig) -> RunRecord:
    """Minimize ``objective`` over the image starting from ``x0``."""
    start = time.perf_counter()
    evaluate = _Evaluator(net, objective)
    x = np.array(x0, dtype=T.get_dtype(), copy=True)
    bounds = pixel_bounds(x.dtype) if cfg.clamp else None
    if bounds is not None:
        x = np.clip(x, *bounds)
    runner = _run_adam if cfg.optimizer == "adam" else _run_lbfgs
    x, losses, snapshots = runner(evaluate, x, cfg, bounds)
    final, _ = evaluate(x, grad=False)
    return RunRecord(
        losses=np.array(losses, dtype=np.float64).reshape(-1, 3),
        image=x,
        wall_clock=time.perf_counter() - start,
        final_losses=final,
        snapshots=snapshots,
    )


def _initial_image(content, shape, cfg: OptimConfig) -> np.ndarray:
    if cfg.init == "content":
        if content is None:
            raise ConfigurationError("init=content requires a content image")
        return content.data
    return noise_image(shape, cfg.seed)


def stylize(net: Network, content: T.Tensor, style: T.Tensor, loss_cfg: LossConfig,
            optim_cfg: OptimConfig | None = None) -> RunRecord:
    optim_cfg = optim_cfg or OptimConfig()
    content_taps = forward_taps(net, content.detach(), [loss_cfg.content_tap]) if loss_cfg.alpha > 0 else None
    style_taps = (forward_taps(net, style.detach(), loss_cfg.active_style_taps)
                  if loss_cfg.beta > 0 else None)
    objective = Objective(loss_cfg, content_taps, style_taps)
    x0 = _initial_image(content, content.shape, optim_cfg)
    return run(net, objective, x0, optim_cfg)


def reconstruct(net: Network, content: T.Tensor, tap: str, optim_cfg: OptimConfig | None = None,
                swag: bool = False, temperature: float = 1.0) -> RunRecord:
    """Recover ``content`` from its activations at ``tap``; reports PSNR."""
    optim_cfg = optim_cfg or OptimConfig(task="reconstruct", init="noise", steps=500)
    cfg = LossConfig(style_layer_weights={}, content_tap=tap, alpha=1.0, beta=0.0,
                     swag=swag, temperature=temperature)
    objective = Objective(cfg, forward_taps(net, content.detach(), [tap]), None)
    x0 = _initial_image(content, content.shape, optim_cfg)
    record = run(net, objective, x0, optim_cfg)
    record.psnr = psnr(denormalize_float(record.image), denormalize_float(content))
    return record


def synthesize_texture(net: Network, style: T.Tensor, loss_cfg: LossConfig,
                       optim_cfg: OptimConfig | None = None) -> RunRecord:
    optim_cfg = optim_cfg or OptimConfig(task="synthesize", init="noise")
    if optim_cfg.init != "noise":
        raise ConfigurationError("texture synthesis starts from noise")
    cfg = LossConfig(**{**loss_cfg.__dict__, "alpha": 0.0})
    objective = Objective(cfg, None, forward_taps(net, style.detach(), cfg.active_style_taps))
    x0 = noise_image(style.shape, optim_cfg.seed)
    return run(net, objective, x0, optim_cfg)
