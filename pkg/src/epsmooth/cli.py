"""Command-line interface.

Subcommands: synth, addnoise, edges, denoise, bench.  Exit codes: 0 on
success, 1 on usage errors, 2 on I/O or data errors; diagnostics go to
stderr.  Every parameter resolves as flag > config file > default, where
the config file holds flat ``key = value`` lines with ``#`` comments.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import bench as bench_mod
from .cluster import ClusterParams
from .edges import EdgeDetectParams, detect_edges
from .grid import ImageGrid, NoiseSpec, SceneSpec, add_noise, synth
from .io import read_image, write_image
from .kernelfit import KERNEL_SHAPES, KernelSpec
from .pipeline import MODES, default_params, denoise, denoise_debug

__all__ = ["main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _scene_text(text: str) -> str:
    SceneSpec.parse(text, n=1 << 20)  # syntax check only; real n applied later
    return text


def _scene_list(text: str) -> list[str]:
    """Split a scene list on commas that are not inside parentheses."""
    items, depth, cur = [], 0, []
    for ch in text:
        if ch == "," and depth == 0:
            items.append("".join(cur))
            cur = []
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur.append(ch)
    items.append("".join(cur))
    return [_scene_text(item.strip()) for item in items if item.strip()]


def _int_list(text: str) -> list[int]:
    return [int(p) for p in text.split(",") if p.strip()]


def _float_list(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def _method_list(text: str) -> list[str]:
    methods = [p.strip() for p in text.split(",") if p.strip()]
    for m in methods:
        if m not in MODES:
            raise ValueError(f"unknown method {m!r}")
    return methods


def load_config(path) -> dict[str, str]:
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_").lower()] = value.strip()
    return values


def _resolve(args, config: dict[str, str], known: dict[str, object]):
    """Apply flag > config > default for every known key; reject others."""
    unknown = set(config) - set(known)
    if unknown:
        raise _UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    out = {}
    for key, (conv, default) in known.items():
        flag_value = getattr(args, key)
        if flag_value is not None:
            out[key] = flag_value
        elif key in config:
            out[key] = conv(config[key])
        else:
            out[key] = default
    return out


def build_parser() -> _Parser:
    parser = _Parser(prog="epsmooth", description="Edge-preserving image denoiser")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="render a noiseless synthetic scene")
    p.add_argument("--scene", type=_scene_text, default="square-circle",
                   help="square-circle | constant(LEVEL) | step(COL,LOW,HIGH)")
    p.add_argument("--n", type=int, required=True, help="image side in pixels")
    p.add_argument("--out", required=True, help="output image (.pgm or .png)")

    p = sub.add_parser("addnoise", help="add seeded Gaussian noise")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--sd", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("edges", help="detect edge pixels")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--k", type=int, default=None, help="window half-width")
    p.add_argument("--alpha", type=float, default=None, help="detection level in (0,1)")
    p.add_argument("--sigma", type=float, default=None, help="pin the noise sd estimate")
    p.add_argument("--out-mask", dest="out_mask", default=None, help="PGM mask, 255 = edge")
    p.add_argument("--out-delta", dest="out_delta", default=None, help="CSV matrix of the statistic")
    p.add_argument("--config", default=None)

    p = sub.add_parser("denoise", help="denoise an image")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=MODES, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--max-axis", dest="max_axis", type=float, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--order", type=int, choices=(0, 1, 2), default=None)
    p.add_argument("--kernel-shape", dest="kernel_shape", choices=KERNEL_SHAPES, default=None)
    p.add_argument("--bn", type=float, default=None, help="patch-weight bandwidth multiplier")
    p.add_argument("--patch-radius", dest="patch_radius", type=int, default=None)
    p.add_argument("--hn", type=float, default=None, help="clustering radius (default: gamma)")
    p.add_argument("--threads", type=int, default=None, help="0 = one per CPU")
    p.add_argument("--debug-dump", dest="debug_dump", default=None,
                   help="write the per-pixel dispatch table as CSV")
    p.add_argument("--config", default=None)

    p = sub.add_parser("bench", help="run the Monte-Carlo benchmark")
    p.add_argument("--scenes", type=_scene_list, default=None)
    p.add_argument("--sizes", type=_int_list, default=None)
    p.add_argument("--sds", type=_float_list, default=None)
    p.add_argument("--L", dest="replicates", type=int, default=None, help="replicates per cell")
    p.add_argument("--methods", type=_method_list, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--plots", default=None, help="also render figures into this directory")
    p.add_argument("--config", default=None)
    return parser


def _cmd_synth(args) -> int:
    spec = SceneSpec.parse(args.scene, args.n)
    write_image(synth(spec), args.out)
    return 0


def _cmd_addnoise(args) -> int:
    img = read_image(args.input)
    write_image(add_noise(img, NoiseSpec(sd=args.sd, seed=args.seed)), args.out)
    return 0


def _cmd_edges(args, config) -> int:
    img = read_image(args.input)
    n = max(img.height, img.width)
    defaults = default_params(max(n, 16))
    resolved = _resolve(
        args,
        config,
        {
            "k": (int, defaults.k),
            "alpha": (float, defaults.alpha),
            "sigma": (float, None),
        },
    )
    edge_map = detect_edges(
        img,
        EdgeDetectParams(resolved["k"], resolved["alpha"], sigma_override=resolved["sigma"]),
    )
    count = int(edge_map.flags.sum())
    print(
        f"flagged {count} pixels (sigma_hat={edge_map.sigma_hat:.4g}, "
        f"threshold={edge_map.threshold:.6g})",
        file=sys.stderr,
    )
    if args.out_mask:
        write_image(ImageGrid(np.where(edge_map.flags, 255.0, 0.0)), args.out_mask)
    if args.out_delta:
        np.savetxt(args.out_delta, edge_map.delta, fmt="%.10g", delimiter=",")
    return 0


def _cmd_denoise(args, config) -> int:
    img = read_image(args.input)
    n = max(img.height, img.width)
    base = default_params(max(n, 16))
    resolved = _resolve(
        args,
        config,
        {
            "mode": (str, "integrated"),
            "gamma": (float, base.gamma),
            "max_axis": (float, base.max_axis),
            "k": (int, base.k),
            "alpha": (float, base.alpha),
            "order": (int, base.kernel.order),
            "kernel_shape": (str, base.kernel.shape),
            "bn": (float, base.cluster.b_n),
            "patch_radius": (int, base.cluster.patch_radius),
            "hn": (float, None),
            "threads": (int, 0),
        },
    )
    if resolved["mode"] not in MODES:
        raise _UsageError(f"unknown mode {resolved['mode']!r}")
    h_n = resolved["hn"] if resolved["hn"] is not None else resolved["gamma"]
    params = dataclasses.replace(
        base,
        mode=resolved["mode"],
        gamma=resolved["gamma"],
        max_axis=resolved["max_axis"],
        k=resolved["k"],
        alpha=resolved["alpha"],
        kernel=KernelSpec(shape=resolved["kernel_shape"], order=resolved["order"]),
        cluster=ClusterParams(
            h_n=h_n,
            patch_radius=resolved["patch_radius"],
            b_n=resolved["bn"],
            sigma_hat=None,
        ),
    )
    if args.debug_dump:
        restored, debug = denoise_debug(img, params, threads=resolved["threads"])
        debug.to_csv(args.debug_dump)
    else:
        restored = denoise(img, params, threads=resolved["threads"])
    write_image(restored, args.out)
    return 0


def _cmd_bench(args, config) -> int:
    resolved = _resolve(
        args,
        config,
        {
            "scenes": (_scene_list, ["square-circle"]),
            "sizes": (_int_list, [64]),
            "sds": (_float_list, [5.0, 10.0, 20.0]),
            "replicates": (int, 10),
            "methods": (_method_list, ["integrated", "box3"]),
            "seed": (int, 0),
            "threads": (int, 0),
        },
    )
    rows = []
    for scene in resolved["scenes"]:
        rows.extend(
            bench_mod.run_bench(
                scene,
                resolved["sizes"],
                resolved["sds"],
                resolved["replicates"],
                resolved["methods"],
                base_seed=resolved["seed"],
                threads=resolved["threads"],
            )
        )
    bench_mod.write_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}", file=sys.stderr)
    if args.plots:
        from .report import render_bench_figures

        for path in render_bench_figures(rows, args.plots):
            print(f"wrote {path}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        config = load_config(args.config) if getattr(args, "config", None) else {}
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "addnoise":
            return _cmd_addnoise(args)
        if args.command == "edges":
            return _cmd_edges(args, config)
        if args.command == "denoise":
            return _cmd_denoise(args, config)
        if args.command == "bench":
            return _cmd_bench(args, config)
        raise _UsageError(f"unknown command {args.command!r}")
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
