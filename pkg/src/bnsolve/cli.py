"""Command-line front end.

Subcommands: run, sweep-alpha, stability, theory, verify. Flags mirror
manifest keys and override file values. Exit codes: 0 success, 2 validation
failure, 3 blow-up report, 4 numerical failure.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import _backend
from .equilibria import compute_moments
from .manifest import (ManifestError, RunManifest, emit_snapshot,
                       emit_timeseries, load_manifest, load_snapshot,
                       perturbed_copy)
from .solver import (alpha_cauchy_study, guaranteed_window, run,
                     stability_study, verify_density_bounds)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BLOWUP = 3
EXIT_NUMERICAL = 4

_FLAG_MAP = {
    "alpha": "solver.alpha",
    "dt": "solver.dt",
    "t_end": "solver.t_end",
    "b0": "kernel.b0",
    "gamma": "kernel.gamma",
    "n_v": "grid.n_v",
    "n_x": "grid.n_x",
    "v_max": "grid.v_max",
    "big_l": "solver.L",
    "output_dir": "output.directory",
    "cadence": "output.cadence",
}


def _add_override_flags(p):
    p.add_argument("--alpha")
    p.add_argument("--dt")
    p.add_argument("--t-end", dest="t_end")
    p.add_argument("--b0")
    p.add_argument("--gamma")
    p.add_argument("--n-v", dest="n_v")
    p.add_argument("--n-x", dest="n_x")
    p.add_argument("--v-max", dest="v_max")
    p.add_argument("--L", dest="big_l")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--cadence")
    p.add_argument("--set", dest="sets", action="append", default=[],
                   metavar="SECTION.KEY=VALUE",
                   help="override any manifest key")


def _collect_overrides(args) -> dict:
    overrides = {}
    for flag, target in _FLAG_MAP.items():
        val = getattr(args, flag, None)
        if val is not None:
            overrides[target] = val
    for item in getattr(args, "sets", []):
        key, sep, value = item.partition("=")
        if not sep:
            raise ManifestError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    return overrides


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bnsolve",
        description="Deterministic solver and verification bench for the "
                    "bosonic Boltzmann-Nordheim equation on the torus")
    sub = p.add_subparsers(dest="command", required=True)

    for name, helptext in (
            ("run", "single time evolution from a manifest"),
            ("sweep-alpha", "L1 Cauchy study over a descending alpha list"),
            ("stability", "perturbed-pair L1 growth study"),
            ("theory", "print the theory constants and guaranteed windows")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("manifest", help="path to the run manifest")
        _add_override_flags(sp)

    sv = sub.add_parser("verify", help="re-run the invariant suite on a snapshot")
    sv.add_argument("snapshot", help="path to a .bnkf snapshot")
    return p


def _write_run_outputs(m: RunManifest, state) -> None:
    outdir = m.output_dir
    emit_timeseries(state.history, outdir / "timeseries.csv")
    if m.snapshots or state.status == "blowup":
        emit_snapshot(state.field, state.time, outdir / "final.bnkf")
    if state.threshold_history:
        lines = ["time,window_n,threshold"]
        lines += [f"{t:.17g},{n},{thr:.17g}" for t, n, thr in state.threshold_history]
        (outdir / "thresholds.csv").write_text("\n".join(lines) + "\n")


def _cmd_run(args) -> int:
    m = load_manifest(args.manifest, _collect_overrides(args))
    state = run(m.cfg, m.f0)
    m.output_dir.mkdir(parents=True, exist_ok=True)
    _write_run_outputs(m, state)
    bounds = verify_density_bounds(state, m.constants,
                                   m.cfg.alpha if m.cfg.alpha > 0 else None)
    print(f"status: {state.status}  t = {state.time:.6g}  "
          f"steps = {state.step_count}  window_n = {state.window_index}")
    print(f"density bounds: M1 pass = {bounds['M1']['passed']}, "
          f"M2 pass = {bounds['M2']['passed']}")
    if state.status == "blowup":
        print("blow-up report:", state.message)
        for t, n, thr in state.threshold_history:
            print(f"  t = {t:.6g}  n = {n}  threshold = {thr:.6g}")
        return EXIT_BLOWUP
    if state.status == "numfail":
        print("numerical failure:", state.message)
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_sweep_alpha(args) -> int:
    m = load_manifest(args.manifest, _collect_overrides(args))
    if len(m.alphas) < 2:
        raise ManifestError("key 'study.alphas': sweep-alpha needs >= 2 values")
    report = alpha_cauchy_study(m.f0, m.alphas, m.cfg)
    m.output_dir.mkdir(parents=True, exist_ok=True)
    lines = ["alpha_hi,alpha_lo,distance,forcing"]
    for p in report["pairs"]:
        lines.append(f"{p['alpha_hi']:.17g},{p['alpha_lo']:.17g},"
                     f"{p['distance']:.17g},{p['forcing']:.17g}")
    (m.output_dir / "alpha_cauchy.csv").write_text("\n".join(lines) + "\n")
    print(f"fitted C = {report['C']:.6g}  status: {report['status']}")
    return EXIT_OK if report["status"] == "ok" else EXIT_NUMERICAL


def _cmd_stability(args) -> int:
    m = load_manifest(args.manifest, _collect_overrides(args))
    f0_b = perturbed_copy(m)
    if f0_b.linf() > 2.0 ** m.cfg.L:
        raise ManifestError("key 'study.perturbation': perturbed data "
                            "exceeds the 2^L bound")
    report = stability_study(m.f0, f0_b, m.cfg, m.constants)
    m.output_dir.mkdir(parents=True, exist_ok=True)
    if report["identical"]:
        print("identical initial data: distance stays "
              f"{max(report['distances']):.3g}")
        return EXIT_OK
    lines = ["time,ratio"]
    lines += [f"{t:.17g},{r:.17g}" for t, r in zip(report["times"],
                                                   report["ratios"])]
    (m.output_dir / "stability.csv").write_text("\n".join(lines) + "\n")
    print(f"fitted rate = {report['fitted_rate']:.6g}  "
          f"envelope rate = {report['envelope_rate']:.6g}  "
          f"within envelope: {report['within_envelope']}")
    return EXIT_OK


def _cmd_theory(args) -> int:
    m = load_manifest(args.manifest, _collect_overrides(args))
    tc = m.constants
    alpha = m.cfg.alpha if m.cfg.alpha > 0 else None
    win = guaranteed_window(tc, alpha)
    print("theory constants:")
    print(f"  c0       = {tc.c0:.10g}   (initial sup-density moment)")
    print(f"  B0       = {tc.b0:.10g}   gamma = {tc.gamma:.10g}   L = {tc.L}")
    print(f"  beta_max = {tc.beta_max:.10g}   (heuristic Jacobian bound)")
    print(f"  c = 4 pi B0        = {tc.c:.10g}")
    print(f"  c3 = 2^8 pi B0     = {tc.c3:.10g}")
    print(f"  c_bar              = {tc.c_bar:.10g}   (heuristic)")
    print(f"  c1 = {tc.c1:.10g}   c2 = {tc.c2:.10g}")
    print("guaranteed windows:")
    print(f"  T_uniform = {win['T_uniform']:.10g}   (heuristic: uses beta_max)")
    print(f"  T_alpha   = {win['T_alpha']:.10g}   (heuristic: uses beta_max)")
    print(f"  t_M1      = {win['t_M1']:.10g}")
    print(f"  t_M2      = {win['t_M2']:.10g}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    f = load_snapshot(args.snapshot)
    f.validate()
    m = compute_moments(f)
    checks = {
        "nonnegative": bool(np.all(f.values >= 0)),
        "finite": bool(np.all(np.isfinite(f.values))),
        "entropy_nonnegative": m.entropy >= 0,
        "mass_nonnegative": m.mass >= 0,
    }
    print(f"snapshot: n_x = {f.tgrid.n_x}, n_v = {f.vgrid.n_v}, "
          f"v_max = {f.vgrid.v_max:.6g}, time = {f.time:.6g}")
    print(f"mass = {m.mass:.10g}  energy = {m.energy:.10g}  "
          f"entropy = {m.entropy:.10g}  linf = {m.linf:.10g}")
    ok = all(checks.values())
    for name, passed in checks.items():
        print(f"  {name}: {'pass' if passed else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VALIDATION


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "sweep-alpha": _cmd_sweep_alpha,
        "stability": _cmd_stability,
        "theory": _cmd_theory,
        "verify": _cmd_verify,
    }
    try:
        return handlers[args.command](args)
    except ManifestError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # numerical failures surface with exit code 4
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
