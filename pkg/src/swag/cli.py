"""Command-line front end: ``swag {stylize,probe,tracks,reconstruct,synthesize,replay}``.

Every run writes a ``manifest.json`` holding the fully resolved
configuration, the tool version, the scalar precision and the SHA-256 of
every input and output file. ``swag replay MANIFEST --out DIR`` re-runs it
and checks that the outputs come out byte-identical.

Exit codes: 0 success, 2 usage/configuration errors, 3 numeric faults,
4 I/O and file-format errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from . import assets
from . import tensor as T
from .diagnostics import activation_tracks, tap_stats
from .errors import FormatError, NumericFault, SwagError, UsageError
from .imageio import denormalize, load, normalize, resize, save
from .losses import LossConfig
from .netzoo import PRESETS, Network, forward_taps, init_random, preset
from .optim import OptimConfig, noise_image, reconstruct, stylize, synthesize_texture
from .weights import load_bundle

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

STATS_COLUMNS = ("arch", "seed", "image", "tap", "depth_index", "max_activation",
                 "activation_entropy", "gram_max", "gram_entropy", "smoothed")
TRACK_COLUMNS = ("position_id", "u", "v", "tap", "value")
LOSS_COLUMNS = ("step", "total", "content", "style")
IMAGE_SUFFIXES = (".ppm", ".png")


# ---------------------------------------------------------------------------
# helpers shared by the subcommands


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _parse_size(text: str) -> list[int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 128x128, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return [w, h]


def _image_ref(ref: str) -> dict:
    path = assets.resolve(ref)
    if not path.is_file():
        raise FileNotFoundError(f"no such image: {ref}")
    return {"ref": ref, "sha256": sha256_file(path)}


def _load_image(ref: str, size) -> T.Tensor:
    buf = load(assets.resolve(ref))
    if size is not None and (buf.width, buf.height) != tuple(size):
        buf = resize(buf, size[0], size[1])
    return normalize(buf)


def _spec(cfg: dict):
    return preset(cfg["arch"], width_scale=cfg["width_scale"], widen_factor=cfg["widen_factor"])


@lru_cache(maxsize=4)
def _cached_network(arch: str, width_scale: float, widen_factor: int, seed: int,
                    weights: str | None) -> Network:
    spec = preset(arch, width_scale=width_scale, widen_factor=widen_factor)
    if weights:
        return load_bundle(weights, spec)
    return init_random(spec, seed)


def _network(cfg: dict) -> Network:
    return _cached_network(cfg["arch"], cfg["width_scale"], cfg["widen_factor"],
                           cfg["seed"], cfg.get("weights"))


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_value(row[k]) for k in columns})


def _csv_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else v


def _loss_rows(losses: np.ndarray):
    for step, (total, content, style) in enumerate(losses):
        yield {"step": step, "total": float(total), "content": float(content), "style": float(style)}


def _json_float(x: float):
    return x if math.isfinite(x) else str(x)


def _optim_record(out: Path, record) -> dict:
    save(record.final_buffer(), out / "final.ppm")
    _write_csv(out / "loss.csv", LOSS_COLUMNS, _loss_rows(record.losses))
    return {"final_losses": [_json_float(v) for v in record.final_losses],
            "steps_run": record.steps}


# ---------------------------------------------------------------------------
# jobs: each takes a resolved config and an output directory


def _job_stylize(cfg: dict, out: Path) -> dict:
    net = _network(cfg)
    content = _load_image(cfg["content"], cfg["size"])
    style = _load_image(cfg["style"], cfg["size"])
    loss_cfg = LossConfig.for_arch(net.spec, **cfg["loss"])
    optim_cfg = OptimConfig(task="stylize", init=cfg["init"], **cfg["optim"])
    return _optim_record(out, stylize(net, content, style, loss_cfg, optim_cfg))


def _job_reconstruct(cfg: dict, out: Path) -> dict:
    net = _network(cfg)
    content = _load_image(cfg["content"], cfg["size"])
    optim_cfg = OptimConfig(task="reconstruct", init="noise", **cfg["optim"])
    record = reconstruct(net, content, cfg["tap"], optim_cfg, swag=cfg["loss"]["swag"],
                         temperature=cfg["loss"]["temperature"])
    result = _optim_record(out, record)
    result["psnr"] = _json_float(record.psnr)
    return result


def _job_synthesize(cfg: dict, out: Path) -> dict:
    net = _network(cfg)
    style = _load_image(cfg["style"], cfg["size"])
    loss_cfg = LossConfig.for_arch(net.spec, **cfg["loss"])
    optim_cfg = OptimConfig(task="synthesize", init="noise", **cfg["optim"])
    if optim_cfg.steps == 0:
        # nothing to optimize: the output is the seeded noise image itself
        x0 = noise_image(style.shape, optim_cfg.seed)
        save(denormalize(x0), out / "final.ppm")
        _write_csv(out / "loss.csv", LOSS_COLUMNS, [])
        return {"final_losses": None, "steps_run": 0}
    return _optim_record(out, synthesize_texture(net, style, loss_cfg, optim_cfg))


def _probe_one(cfg: dict, seed: int, name: str) -> list[dict]:
    T.set_precision(cfg["precision"])
    net = _network({**cfg, "seed": seed})
    x = _load_image(str(Path(cfg["images"]) / name), cfg["size"])
    taps = cfg["taps"] or list(net.spec.style_taps)
    found = forward_taps(net, x, taps)
    feats = OrderedDict((t, found[t]) for t in taps)
    meta = {"arch": cfg["arch"], "seed": seed, "image": name}
    rows = tap_stats(feats, smoothed=False, gram_normalization=cfg["gram_normalization"], **meta).rows()
    if cfg["swag_stats"]:
        rows += tap_stats(feats, smoothed=True, gram_normalization=cfg["gram_normalization"],
                          **meta).rows()
    return rows


def _probe_star(args) -> list[dict]:
    return _probe_one(*args)


def _job_probe(cfg: dict, out: Path) -> dict:
    pairs = [(cfg, seed, name) for seed in range(cfg["seeds"]) for name in cfg["image_names"]]
    if cfg["jobs"] > 1 and len(pairs) > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            chunks = list(pool.map(_probe_star, pairs))
    else:
        chunks = [_probe_one(*p) for p in pairs]
    rows = [row for chunk in chunks for row in chunk]
    _write_csv(out / "stats.csv", STATS_COLUMNS, rows)
    return {"rows": len(rows)}


def _job_tracks(cfg: dict, out: Path) -> dict:
    net = _network(cfg)
    x = _load_image(cfg["image"], cfg["size"])
    tracks = activation_tracks(net, x, cfg["n"], cfg["seed"], taps=cfg["taps"] or None,
                               channel=cfg["channel"])
    _write_csv(out / "tracks.csv", TRACK_COLUMNS, tracks.rows())
    return {"rule": tracks.rule, "rows": len(tracks.positions) * len(tracks.taps),
            "channels": tracks.channels}


JOBS = {
    "stylize": _job_stylize,
    "reconstruct": _job_reconstruct,
    "synthesize": _job_synthesize,
    "probe": _job_probe,
    "tracks": _job_tracks,
}


# ---------------------------------------------------------------------------
# config resolution


def _base_config(args) -> dict:
    if args.width_scale is not None and not 0 < args.width_scale <= 1:
        raise UsageError("--width-scale must lie in (0, 1]")
    cfg = {
        "arch": args.arch,
        "width_scale": 0.25 if args.width_scale is None else args.width_scale,
        "widen_factor": args.widen_factor,
        "seed": args.seed,
        "size": args.size,
        "precision": T.precision_name(),
        "weights": None,
    }
    weights = getattr(args, "weights", None)
    if weights:
        cfg["weights"] = os.path.abspath(weights)
    return cfg


def _loss_overrides(args, spec) -> dict:
    loss = {"swag": bool(args.swag), "temperature": args.temperature}
    if getattr(args, "alpha", None) is not None:
        loss["alpha"] = args.alpha
    loss["beta"] = spec.default_beta if getattr(args, "beta", None) is None else args.beta
    return loss


def _optim_overrides(args) -> dict:
    return {"steps": args.steps, "seed": args.seed, "optimizer": args.optimizer, "lr": args.lr}


def resolve_config(args) -> tuple[dict, dict]:
    """Turn parsed arguments into (config, inputs); the config alone drives the job."""
    cfg = _base_config(args)
    cfg["subcommand"] = args.command
    spec = _spec(cfg)
    cfg["style_taps"] = list(spec.style_taps)
    cfg["content_tap"] = spec.content_tap
    inputs = {}
    if cfg["weights"]:
        inputs["weights"] = {"ref": cfg["weights"], "sha256": sha256_file(cfg["weights"])}
    cmd = args.command
    if cmd in ("stylize", "reconstruct", "synthesize"):
        cfg["loss"] = _loss_overrides(args, spec)
        cfg["optim"] = _optim_overrides(args)
    if cmd == "stylize":
        cfg["init"] = args.init
        inputs["content"] = _image_ref(args.content)
        inputs["style"] = _image_ref(args.style)
        cfg["content"], cfg["style"] = args.content, args.style
    elif cmd == "reconstruct":
        cfg["tap"] = args.tap or ("conv3_4" if "conv3_4" in spec.taps() else spec.content_tap)
        if cfg["tap"] not in spec.taps():
            raise UsageError(f"{spec.name} has no tap {cfg['tap']!r}")
        inputs["content"] = _image_ref(args.content)
        cfg["content"] = args.content
    elif cmd == "synthesize":
        inputs["style"] = _image_ref(args.style)
        cfg["style"] = args.style
    elif cmd == "probe":
        if args.images.startswith(assets.PREFIX):
            root = assets.directory(args.images[len(assets.PREFIX):].strip("/"))
        else:
            root = Path(args.images)
        if not root.is_dir():
            raise UsageError(f"--images {args.images} is not a directory")
        names = sorted(p.name for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not names:
            raise UsageError(f"--images {args.images} holds no .ppm/.png images")
        if args.seeds < 1:
            raise UsageError("--seeds must be >= 1")
        cfg.update(images=str(root.resolve()), image_names=names, seeds=args.seeds,
                   swag_stats=bool(args.swag_stats), taps=_taps(args.taps),
                   gram_normalization=args.gram_normalization, jobs=max(1, args.jobs))
        inputs["images"] = {n: sha256_file(root / n) for n in names}
    elif cmd == "tracks":
        if args.n < 1:
            raise UsageError("--n must be >= 1")
        cfg.update(image=args.image, n=args.n, channel=args.channel, taps=_taps(args.taps))
        inputs["image"] = _image_ref(args.image)
    return cfg, inputs


def _taps(text: str | None) -> list[str]:
    return [t for t in text.split(",") if t] if text else []


# ---------------------------------------------------------------------------
# execution and manifests


def execute(cfg: dict, inputs: dict, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    T.set_precision(cfg["precision"])
    results = JOBS[cfg["subcommand"]](cfg, out)
    outputs = {p.name: sha256_file(p) for p in sorted(out.iterdir())
               if p.is_file() and p.name != "manifest.json"}
    manifest = {
        "tool": "swag",
        "version": __version__,
        "subcommand": cfg["subcommand"],
        "precision": cfg["precision"],
        "config": cfg,
        "inputs": inputs,
        "outputs": outputs,
        "results": results,
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def replay(manifest_path, out: Path) -> tuple[dict, list[str]]:
    """Re-run a manifest into ``out``; returns the new manifest and mismatching outputs."""
    with open(manifest_path) as f:
        old = json.load(f)
    try:
        cfg, inputs = old["config"], old["inputs"]
    except (KeyError, TypeError):
        raise UsageError(f"{manifest_path} is not a run manifest") from None
    for key, entry in inputs.items():
        if key == "images":
            for name, digest in entry.items():
                path = Path(cfg["images"]) / name
                if sha256_file(path) != digest:
                    raise FileNotFoundError(f"input {path} changed since the manifest was written")
        elif sha256_file(assets.resolve(entry["ref"])) != entry["sha256"]:
            raise FileNotFoundError(f"input {entry['ref']} changed since the manifest was written")
    _cached_network.cache_clear()
    new = execute(cfg, inputs, out)
    diff = sorted(k for k in set(old["outputs"]) | set(new["outputs"])
                  if old["outputs"].get(k) != new["outputs"].get(k))
    return new, diff


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser, arch_required: bool = True) -> None:
    p.add_argument("--arch", choices=PRESETS, required=arch_required, help="network preset")
    p.add_argument("--seed", type=int, default=0, help="single source of randomness")
    p.add_argument("--size", type=_parse_size, default=[128, 128], metavar="WxH",
                   help="resize inputs to this size (default 128x128)")
    p.add_argument("--width-scale", type=float, default=None,
                   help="channel shrink factor in (0, 1]; default 0.25")
    p.add_argument("--widen-factor", type=int, default=2, help="wrn only (default 2)")
    p.add_argument("--weights", default=None, metavar="FILE",
                   help="weight bundle to use instead of seeded random init")
    p.add_argument("--out", required=True, type=Path, metavar="DIR")


def _optim_flags(p: argparse.ArgumentParser, steps: int) -> None:
    p.add_argument("--steps", type=int, default=steps)
    p.add_argument("--optimizer", choices=("adam", "lbfgs"), default="adam")
    p.add_argument("--lr", type=float, default=0.05, help="adam learning rate")
    p.add_argument("--swag", action="store_true", help="softmax-smoothed losses")
    p.add_argument("--temperature", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swag",
        description="Style transfer, reconstruction, texture synthesis and activation "
                    "statistics on random or imported feature extractors.",
        epilog="exit codes: 0 ok, 2 usage, 3 numeric fault, 4 I/O or file format")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stylize", help="content + style optimization")
    p.add_argument("--content", required=True, help="image path or bundled:content/NN")
    p.add_argument("--style", required=True, help="image path or bundled:style/NN")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None, help="default depends on --arch")
    p.add_argument("--init", choices=("content", "noise"), default="content")
    _common(p)
    _optim_flags(p, 300)

    p = sub.add_parser("reconstruct", help="recover an image from one tap's activations")
    p.add_argument("--content", required=True)
    p.add_argument("--tap", default=None, help="default conv3_4")
    _common(p)
    _optim_flags(p, 500)

    p = sub.add_parser("synthesize", help="texture synthesis from noise")
    p.add_argument("--style", required=True)
    p.add_argument("--beta", type=float, default=None)
    _common(p)
    _optim_flags(p, 300)

    p = sub.add_parser("probe", help="activation and Gram statistics per tap")
    p.add_argument("--images", required=True, help="directory, or bundled:style / bundled:content")
    p.add_argument("--seeds", type=int, default=1, help="seeds 0..N-1")
    p.add_argument("--swag-stats", action="store_true",
                   help="also emit rows for the softmax-smoothed maps (smoothed=true)")
    p.add_argument("--taps", default=None, help="comma list; default the five stage taps")
    p.add_argument("--gram-normalization", choices=("dm", "none"), default="dm")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    _common(p)

    p = sub.add_parser("tracks", help="follow image positions through the taps")
    p.add_argument("--image", required=True)
    p.add_argument("--n", type=int, default=10, help="number of positions")
    p.add_argument("--channel", choices=("max", "random"), default="max")
    p.add_argument("--taps", default=None)
    _common(p)

    p = sub.add_parser("replay", help="re-run a manifest and compare outputs")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", required=True, type=Path, metavar="DIR")
    return parser


def _fail(code: int, message: str) -> int:
    print(f"swag: error: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 with usage text on bad flags
    try:
        if args.command == "replay":
            manifest, diff = replay(args.manifest, args.out)
            if diff:
                return _fail(EXIT_NUMERIC, f"replay differs in {', '.join(diff)}")
            print(f"replay identical: {len(manifest['outputs'])} outputs")
            return EXIT_OK
        cfg, inputs = resolve_config(args)
        manifest = execute(cfg, inputs, args.out)
    except NumericFault as exc:
        return _fail(EXIT_NUMERIC, str(exc))
    except (UsageError, ValueError, KeyError) as exc:
        parser.print_usage(sys.stderr)
        return _fail(EXIT_USAGE, str(exc).strip("'\""))
    except (OSError, FormatError) as exc:
        return _fail(EXIT_IO, str(exc))
    except SwagError as exc:  # pragma: no cover - every subclass is mapped above
        return _fail(EXIT_USAGE, str(exc))
    results = manifest["results"]
    extra = f" psnr={results['psnr']}" if "psnr" in results else ""
    print(f"wrote {args.out}{extra}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
