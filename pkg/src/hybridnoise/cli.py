"""Command-line pipeline: truncate -> generate -> fit -> capacity -> compare.

Every subcommand is a pure function of its flags, optional TOML config file,
and input files; given the same inputs it writes byte-identical outputs.
Exit codes: 0 success, 1 runtime/data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import capacity as cap
from . import em
from . import noise_model as nm
from .errors import HybridNoiseError


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _cfg_default(config: dict, section: str, key: str, fallback):
    return config.get(section, {}).get(key, fallback)


def _parse_grid(spec: str) -> np.ndarray:
    """Parse a dB grid given as 'min:max:step'."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"grid must be min:max:step, got {spec!r}")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric grid bound in {spec!r}") from None
    if step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"grid {spec!r} must increase with positive step")
    n = int(round((hi - lo) / step)) + 1
    grid = lo + step * np.arange(n)
    return grid[grid <= hi + 1e-9 * max(1.0, abs(hi))]


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {text!r}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
    return value


def _tol_float(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"tolerance must lie in (0, 1), got {text!r}")
    return value


def cmd_truncate(args, config) -> int:
    skeleton = nm.truncate(args.lam, args.tol)
    print(f"lambda   {args.lam:g}")
    print(f"tol      {args.tol:g}")
    print(f"K        {len(skeleton)}")
    print(f"coverage {skeleton.coverage:.5f}")
    print("k  weight")
    for k, w in zip(skeleton.shift_indices, skeleton.weights):
        print(f"{k:<2d} {w:.6f}")
    if args.out:
        doc = {
            "lambda": args.lam,
            "tol": args.tol,
            "K": len(skeleton),
            "coverage": skeleton.coverage,
            "components": [
                {"k": int(k), "weight": float(w)}
                for k, w in zip(skeleton.shift_indices, skeleton.weights)
            ],
        }
        Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_generate(args, config) -> int:
    spec = nm.HybridNoiseSpec(
        lam=args.lam, mu_z2=args.mu_z2, sigma2_z2=args.sigma2_z2, dim=args.dim
    )
    skeleton = nm.truncate(args.lam, args.tol)
    dataset = nm.sample(spec, skeleton, args.n, args.seed)
    nm.save_dataset(dataset, args.out)
    print(f"wrote {dataset.n} samples of dimension {dataset.dim} to {args.out}")
    return 0


def cmd_fit(args, config) -> int:
    data = nm.load_dataset(args.data)
    spec = nm.HybridNoiseSpec(
        lam=args.lam, mu_z2=args.mu_z2, sigma2_z2=args.sigma2_z2, dim=data.dim
    )
    skeleton = nm.truncate(args.lam, args.tol)
    init = nm.build_mixture(spec, skeleton)
    cfg = em.EmConfig(
        max_iters=args.max_iters,
        ll_rel_tol=args.ll_rel_tol,
        cov_floor=args.cov_floor,
        snapshot_every=args.snapshot_every,
        snapshot_dir=Path(args.snapshot_dir) if args.snapshot_dir else None,
    )
    report = em.fit(data, init, cfg, threads=args.threads)
    doc = em.report_to_json_dict(report)
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    status = "converged" if report.converged else "not converged"
    print(
        f"{status} after {report.iterations_run} iterations, "
        f"final ll {report.iterations[-1].log_likelihood:.6f}"
    )
    if report.lambda_estimate is not None:
        print(
            f"lambda_hat {report.lambda_estimate.from_w0:.4f} "
            f"(moment {report.lambda_estimate.moment:.4f})"
        )
    return 0


def cmd_capacity(args, config) -> int:
    skeleton = nm.truncate_top_k(args.lam, args.k) if args.k else nm.truncate(args.lam, args.tol)
    curve = cap.sweep(
        skeleton,
        args.sigma2_z2,
        args.snr_db,
        fingerprint=f"lambda={args.lam:g} K={len(skeleton)} sigma2_z2={args.sigma2_z2:g}",
    )
    cap.save_curve(curve, args.out)
    print(f"wrote {curve.snr_db.size} capacity points to {args.out}")
    return 0


def cmd_compare(args, config) -> int:
    curve_a = cap.load_curve(args.curve_a)
    curve_b = cap.load_curve(args.curve_b)
    report = cap.compare(curve_a, curve_b)
    doc = cap.comparison_to_json_dict(report)
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    if args.plot:
        _write_overlay_svg(curve_a, curve_b, args.plot)
    print(f"verdict: {report.verdict}")
    print(
        "deltas: {positive} positive, {negative} negative, {zero} zero".format(
            **report.sign_summary
        )
    )
    return 0


def _write_overlay_svg(curve_a, curve_b, path) -> None:
    width, height, margin = 560.0, 400.0, 45.0
    xs = curve_a.snr_db
    ys = np.concatenate([curve_a.capacity_bits, curve_b.capacity_bits])
    ymin, ymax = float(ys.min()), float(ys.max())
    yspan = max(ymax - ymin, 1e-9)
    xspan = max(float(xs.max() - xs.min()), 1e-9)

    def pts(curve):
        out = []
        for x, y in zip(curve.snr_db, curve.capacity_bits):
            px = margin + (x - xs.min()) / xspan * (width - 2 * margin)
            py = height - margin - (y - ymin) / yspan * (height - 2 * margin)
            out.append(f"{px:.2f},{py:.2f}")
        return " ".join(out)

    svg = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height:g}" '
        f'viewBox="0 0 {width:g} {height:g}">',
        f'<rect width="{width:g}" height="{height:g}" fill="white"/>',
        f'<polyline points="{pts(curve_a)}" fill="none" stroke="#1f77b4" stroke-width="2"/>',
        f'<polyline points="{pts(curve_b)}" fill="none" stroke="#ff7f0e" stroke-width="2"/>',
        f'<text x="{margin}" y="20" font-size="12" fill="#1f77b4">curve A</text>',
        f'<text x="{margin + 70}" y="20" font-size="12" fill="#ff7f0e">curve B</text>',
        f'<text x="{width / 2:.0f}" y="{height - 8:.0f}" font-size="12" '
        'text-anchor="middle">SNR (dB)</text>',
        "</svg>",
    ]
    Path(path).write_text("\n".join(svg) + "\n", encoding="utf-8")


def build_parser(config: dict) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridnoise",
        description="Hybrid quantum noise mixtures: truncation, EM fitting, capacity sweeps.",
    )
    parser.add_argument("--config", help="TOML config file with per-subcommand defaults")
    parser.add_argument(
        "--threads",
        type=_positive_int,
        default=_cfg_default(config, "global", "threads", 1),
        help="worker threads for row-parallel stages (results are identical for any count)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("truncate", help="print the Poisson truncation table")
    p.add_argument("--lambda", dest="lam", type=_positive_float, required=True)
    p.add_argument("--tol", type=_tol_float, default=_cfg_default(config, "truncate", "tol", 0.15))
    p.add_argument("--out", help="optional JSON output path")
    p.set_defaults(func=cmd_truncate)

    p = sub.add_parser("generate", help="sample a ground-truth noise dataset to CSV")
    p.add_argument("--lambda", dest="lam", type=_positive_float, required=True)
    p.add_argument("--mu-z2", dest="mu_z2", type=float, default=0.0)
    p.add_argument("--sigma2-z2", dest="sigma2_z2", type=_positive_float, default=1.0)
    p.add_argument("--dim", type=_positive_int, default=2)
    p.add_argument("--tol", type=_tol_float, default=0.15)
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument(
        "--seed", type=int, required=True,
        help="mandatory generation seed; there is no wall-clock default",
    )
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("fit", help="fit the mixture to a dataset with EM")
    p.add_argument("--data", required=True, help="dataset CSV from 'generate'")
    p.add_argument("--lambda", dest="lam", type=_positive_float, required=True)
    p.add_argument("--mu-z2", dest="mu_z2", type=float, default=0.0)
    p.add_argument("--sigma2-z2", dest="sigma2_z2", type=_positive_float, default=1.0)
    p.add_argument("--tol", type=_tol_float, default=0.15)
    p.add_argument("--max-iters", type=_positive_int, default=200)
    p.add_argument("--ll-rel-tol", type=float, default=1e-8)
    p.add_argument("--cov-floor", type=float, default=1e-6)
    p.add_argument("--snapshot-every", type=int, default=0)
    p.add_argument("--snapshot-dir")
    p.add_argument("--out", required=True, help="fit report JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("capacity", help="sweep channel capacity over an SNR grid")
    p.add_argument("--lambda", dest="lam", type=_positive_float, required=True)
    p.add_argument("--k", type=_positive_int, help="use exactly the K most probable components")
    p.add_argument("--tol", type=_tol_float, default=0.15)
    p.add_argument("--sigma2-z2", dest="sigma2_z2", type=_positive_float, required=True)
    p.add_argument("--snr-db", type=_parse_grid, required=True, metavar="MIN:MAX:STEP")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("compare", help="compare two capacity curves")
    p.add_argument("curve_a")
    p.add_argument("curve_b")
    p.add_argument("--out", required=True, help="comparison report JSON path")
    p.add_argument("--plot", help="optional SVG overlay path")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    config_path = None
    for i, token in enumerate(argv):
        if token == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif token.startswith("--config="):
            config_path = token.split("=", 1)[1]
    try:
        config = _load_config(config_path)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1

    parser = build_parser(config)
    args = parser.parse_args(argv)  # exits 2 on usage errors
    try:
        return args.func(args, config)
    except HybridNoiseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
