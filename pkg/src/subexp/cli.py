"""Command-line frontend: reproducible experiments with CSV/JSON outputs.

Every run writes a manifest echoing the fully resolved configuration
(defaults included) next to its outputs, so a run can be reproduced
byte-for-byte from the manifest alone (``subexp rerun manifest.json``).

Exit codes: 0 requested checks pass, 1 usage/configuration/IO errors,
2 a check failed, 3 inconclusive.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (
    KestenFit,
    certified_bound_propagation,
    kesten_fit,
    kesten_verify,
    multi_d_kesten_verify,
    ratio_diagnostic,
    write_kesten_json,
    write_ratio_csv,
)
from .densities import (
    DensitySpec,
    Domain,
    default_metadata,
    l1_norm,
    load_spec,
    normalize,
    spec_to_dict,
)
from .errors import AlphaTooSmallError, SubexpError
from .grids import normalize_grid, sample, self_convolve_n, write_grid
from .heat import compute_phi, tail_asymptotic_check, write_heat_csv
from .membership import ClassReport, Verdict, classify
from .radial import normalize_radial, radial_self_convolve_n, sample_radial

EXIT_PASS, EXIT_ERROR, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2, 3


class CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract wants 1
        raise CliUsageError(message)


def _add_common(p: _Parser) -> None:
    p.add_argument("--density", required=True, help="density spec JSON path")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--grid-m", type=int, default=2**16, dest="grid_m")
    p.add_argument("--window", type=float, nargs=2, default=None,
                   metavar=("LO", "HI"))
    p.add_argument("--tol", type=float, default=None, help="tolerance override")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plot", action="store_true", help="emit line plots of evidence curves")


def build_parser() -> _Parser:
    parser = _Parser(prog="subexp", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="class-membership report")
    _add_common(p)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--s-max", type=float, default=1e8, dest="s_max")
    p.add_argument("--require", default="ClassS",
                   help="comma list of conditions that must PASS for exit 0")

    p = sub.add_parser("ratio", help="n-fold ratio diagnostics")
    _add_common(p)
    p.add_argument("--n-max", type=int, default=5, dest="n_max")
    p.add_argument("--normalize", action="store_true",
                   help="normalize the density to unit whole-line mass first")

    p = sub.add_parser("kesten", help="uniform-in-n bound fit on the line")
    _add_common(p)
    p.add_argument("--n-max", type=int, default=10, dest="n_max")
    p.add_argument("--delta", type=float, required=True)

    p = sub.add_parser("radial-kesten", help="alpha-power bound fit in R^d")
    _add_common(p)
    p.add_argument("--n-max", type=int, default=6, dest="n_max")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--dim", type=int, required=True)

    p = sub.add_parser("heat", help="nonlocal heat-kernel series")
    _add_common(p)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--n-max", type=int, default=12, dest="n_max",
                   help="fold count for the envelope fit")

    p = sub.add_parser("convolve", help="n-fold self-convolution to CSV")
    _add_common(p)
    p.add_argument("--n-max", type=int, default=2, dest="n_max")

    p = sub.add_parser("rerun", help="re-run a saved manifest")
    p.add_argument("manifest", help="manifest.json from a previous run")
    return parser


def _resolved_config(args: argparse.Namespace, spec: DensitySpec) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("command",)}
    cfg["density"] = str(cfg["density"])
    cfg["out"] = str(cfg["out"])
    return {
        "tool": "subexp",
        "version": __version__,
        "command": args.command,
        "config": cfg,
        "density_spec": spec_to_dict(spec),
    }


def _write_manifest(outdir: Path, manifest: dict) -> None:
    with open(outdir / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _maybe_plot(outdir: Path, name: str, curves: dict, enable: bool) -> None:
    if not enable:
        return
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (xs, ys) in curves.items():
        ax.loglog(xs, np.abs(ys), label=label)
    ax.set_xlabel("s")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(outdir / f"{name}.png", dpi=110)
    plt.close(fig)


def _default_window(spec: DensitySpec, args) -> tuple[float, float]:
    if args.window is not None:
        return float(args.window[0]), float(args.window[1])
    return (0.0, 1000.0) if spec.supported_on_half_line else (-1000.0, 1000.0)


def cmd_classify(args) -> int:
    spec = load_spec(args.density)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    report = classify(spec, d=args.dim, s_max=args.s_max, seed=args.seed)
    _write_json(outdir / "class_report.json", report.to_json_dict())
    _write_manifest(outdir, _resolved_config(args, spec))
    if args.plot:
        curves = {}
        for c in report.checks:
            if c.evidence:
                xs = [p[0] for p in c.evidence]
                ys = [p[1] for p in c.evidence]
                curves[c.condition] = (xs, ys)
        _maybe_plot(outdir, "class_evidence", curves, True)
    requested = [c.strip() for c in args.require.split(",") if c.strip()]
    verdicts = []
    for cond in requested:
        try:
            verdicts.append(report.verdict_for(cond))
        except KeyError:
            raise CliUsageError(f"unknown condition {cond!r} in --require")
    for cond, v in zip(requested, verdicts):
        print(f"{cond}: {v.value}")
    if any(v is Verdict.FAIL for v in verdicts):
        return EXIT_FAIL
    if any(v is Verdict.INCONCLUSIVE for v in verdicts):
        return EXIT_INCONCLUSIVE
    return EXIT_PASS


def cmd_ratio(args) -> int:
    spec = load_spec(args.density)
    if args.normalize:
        spec = normalize(spec, Domain.POSITIVE_HALF_LINE
                         if spec.supported_on_half_line else Domain.WHOLE_LINE)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    lo, hi = args.window if args.window else (10.0, 1e6)
    tol = args.tol if args.tol is not None else 5e-2
    diags = ratio_diagnostic(spec, args.n_max, window=(lo, hi), assume_classes=True)
    write_ratio_csv(diags, outdir / "ratio_curves.csv")
    summary = [
        {
            "n": d.n,
            "predicted_limit": d.predicted_limit,
            "last_decade_deviation": d.last_decade_deviation,
            "decades_decreasing": d.decades_decreasing,
        }
        for d in diags
    ]
    _write_json(outdir / "ratio_summary.json", summary)
    _write_manifest(outdir, _resolved_config(args, spec))
    _maybe_plot(
        outdir, "ratio_curves",
        {f"n={d.n}": ([p[0] for p in d.curve], [p[1] for p in d.curve]) for d in diags},
        args.plot,
    )
    for d in diags:
        print(f"n={d.n}: limit {d.predicted_limit:.6g}, "
              f"last-decade dev {d.last_decade_deviation:.3g}")
    worst = max(d.last_decade_deviation for d in diags)
    if worst <= tol and all(d.decades_decreasing for d in diags):
        return EXIT_PASS
    if worst > 10 * tol:
        return EXIT_FAIL
    return EXIT_INCONCLUSIVE


def cmd_kesten(args) -> int:
    if not (0.0 < args.delta < 1.0):
        raise CliUsageError(f"--delta must lie in (0, 1); got {args.delta}")
    spec = load_spec(args.density)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    window = _default_window(spec, args)
    fit = kesten_fit(spec, args.delta, args.n_max, window=window,
                     grid_m=args.grid_m, assume_classes=True)
    verified = kesten_verify(fit, spec, window=window, grid_m=args.grid_m)
    write_kesten_json(fit, outdir / "kesten_fit.json")
    with open(outdir / "kesten_residuals.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("n,residual\n")
        for n, rn in enumerate(fit.residuals, start=1):
            fh.write(f"{n},{rn:.17g}\n")
    _write_manifest(outdir, _resolved_config(args, spec))
    print(f"c = {fit.c_delta:.6g} at s* = {fit.s_delta:.6g}, "
          f"stabilized={fit.stabilized}, verified={verified}")
    if not verified:
        return EXIT_FAIL
    return EXIT_PASS if fit.stabilized else EXIT_INCONCLUSIVE


def cmd_radial_kesten(args) -> int:
    if not (0.0 < args.delta < 1.0):
        raise CliUsageError(f"--delta must lie in (0, 1); got {args.delta}")
    if not (0.0 < args.alpha <= 1.0):
        raise CliUsageError(f"--alpha must lie in (0, 1]; got {args.alpha}")
    spec = load_spec(args.density)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    hi = args.window[1] if args.window else 200.0
    m = min(args.grid_m, 4096)
    profile = normalize_radial(sample_radial(spec, args.dim, hi, m))
    try:
        fit = multi_d_kesten_verify(profile, spec, args.alpha, args.delta,
                                    args.n_max, window=2.0 * hi)
    except AlphaTooSmallError as exc:
        print(f"FAIL: {exc}")
        _write_manifest(outdir, _resolved_config(args, spec))
        return EXIT_FAIL
    write_kesten_json(fit, outdir / "radial_kesten_fit.json")
    _write_manifest(outdir, _resolved_config(args, spec))
    print(f"c2 = {fit.c_delta:.6g} at r* = {fit.s_delta:.6g}, alpha={fit.alpha}, "
          f"stabilized={fit.stabilized}")
    return EXIT_PASS if fit.stabilized else EXIT_INCONCLUSIVE


def cmd_heat(args) -> int:
    if args.kappa <= 0 or args.t < 0:
        raise CliUsageError("need --kappa > 0 and --t >= 0")
    spec = load_spec(args.density)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    window = _default_window(spec, args)
    mass = l1_norm(spec, Domain.WHOLE_LINE)
    if abs(mass - 1.0) > 1e-6:
        spec = normalize(spec, Domain.WHOLE_LINE)
    lo, hi = window
    m = args.grid_m + 1 if (lo < 0 and args.grid_m % 2 == 0) else args.grid_m
    a = normalize_grid(sample(spec, lo, hi, m))
    fit = kesten_fit(spec, args.delta, args.n_max, window=window,
                     grid_m=args.grid_m, assume_classes=True)
    tol = args.tol if args.tol is not None else 1e-6
    result = compute_phi(a, args.kappa, args.t, fit, target_tol=tol, spec=spec)
    write_heat_csv(result, spec, outdir / "heat.csv")
    _write_manifest(outdir, _resolved_config(args, spec))
    mass_dev = result.mass() - math.expm1(args.kappa * args.t)
    print(f"n_trunc = {result.n_trunc}, mass(phi) = {result.mass():.9g} "
          f"(identity deviation {mass_dev:+.3g})")
    if result.t == 0 or not result.tail_ratio_curve:
        return EXIT_PASS
    curve, verdict = tail_asymptotic_check(result, spec)
    _maybe_plot(outdir, "heat_tail_ratio",
                {"phi/a": ([p[0] for p in curve], [p[1] for p in curve])}, args.plot)
    print(f"tail ratio check: {verdict.value}")
    return {Verdict.PASS: EXIT_PASS, Verdict.FAIL: EXIT_FAIL}.get(verdict, EXIT_INCONCLUSIVE)


def cmd_convolve(args) -> int:
    spec = load_spec(args.density)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    lo, hi = _default_window(spec, args)
    m = args.grid_m + 1 if (lo < 0 and args.grid_m % 2 == 0) else args.grid_m
    f = sample(spec, lo, hi, m)
    folds = self_convolve_n(f, args.n_max)
    for k, g in enumerate(folds, start=1):
        write_grid(g, outdir / f"fold_{k}.csv")
    _write_manifest(outdir, _resolved_config(args, spec))
    print(f"wrote folds 1..{args.n_max}; mass(f) = {f.mass():.9g}")
    return EXIT_PASS


def cmd_rerun(args) -> int:
    with open(args.manifest, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    argv = [manifest["command"]]
    for key, val in sorted(manifest["config"].items()):
        if val is None or val is False:
            continue
        flag = "--" + key.replace("_", "-")
        if val is True:
            argv.append(flag)
        elif isinstance(val, (list, tuple)):
            argv.append(flag)
            argv.extend(str(v) for v in val)
        else:
            argv.extend([flag, str(val)])
    return main(argv)


_COMMANDS = {
    "classify": cmd_classify,
    "ratio": cmd_ratio,
    "kesten": cmd_kesten,
    "radial-kesten": cmd_radial_kesten,
    "heat": cmd_heat,
    "convolve": cmd_convolve,
    "rerun": cmd_rerun,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except CliUsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (SubexpError, OSError, json.JSONDecodeError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
