"""gridform-ssa command line.

Exit status: 0 success, 1 validation error, 2 numerical failure, 64 usage.
"""

from __future__ import annotations

import argparse
import io
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .. import __version__
from ..design import design_report
from ..devices import timescale_check
from ..errors import CaseError, NumericalError
from ..modal import eigen_modes
from ..model import GridModel, resolve_case
from ..netmodel import validate_assumptions
from ..ringdown import default_dt, estimate_mode, simulate
from ..sensitivity import sensitivity_report
from ..sweep import (detect_reversal, geometric_grid, linear_grid, locus_csv, reversal_json,
                     sweep_droop, sweep_inertia, sweep_size, worker_count)
from .config import RunConfig, header_lines, meta, write_json, write_text

EXIT_OK, EXIT_CASE, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2, 64

log = logging.getLogger("gridform_ssa")


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _band(s):
    try:
        lo, hi = (float(x) for x in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError("band must be 'f_lo,f_hi' in Hz") from None
    return lo, hi


def build_parser() -> Parser:
    p = Parser(prog="gridform-ssa", description="Small-signal analysis of grids with grid-forming storage.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def common(sp):
        sp.add_argument("case", nargs="?", default="toy2x3.json",
                        help="case JSON (bundled names such as toy2x3.json also work)")
        sp.add_argument("--band", type=_band, default=(0.1, 1.0), help="inter-area band 'f_lo,f_hi' in Hz")
        sp.add_argument("--out", default=".", help="output directory (default: current)")
        sp.add_argument("--mp-hat", type=float, default=None, help="override the droop setting (fraction)")

    sp = sub.add_parser("analyze", help="modes and assumption report")
    common(sp)

    sp = sub.add_parser("sweep", help="root-locus sweep")
    common(sp)
    sp.add_argument("--param", choices=("droop", "size", "inertia"), required=True)
    sp.add_argument("--from", dest="start", type=float, required=True)
    sp.add_argument("--to", dest="stop", type=float, required=True)
    sp.add_argument("--points", type=int, required=True)
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--log", action="store_true", help="geometric grid")
    g.add_argument("--linear", action="store_true", help="linear grid")

    sp = sub.add_parser("sensitivity", help="d(lambda)/d(m_p), analytic and finite-difference")
    common(sp)
    sp.add_argument("--mode", default=None, help="mode id (default: every inter-area mode)")
    sp.add_argument("--fd-step", type=float, default=None, help="absolute step in m_p")

    sp = sub.add_parser("check-design", help="damping-design conditions per inter-area mode")
    common(sp)
    sp.add_argument("--mode", default=None, help="mode id (default: every inter-area mode)")

    sp = sub.add_parser("ringdown", help="nonlinear ringdown and modal estimate")
    common(sp)
    sp.add_argument("--perturb", action="append", default=[], metavar="STATE=AMP",
                    help="initial offset, e.g. omega_G1=1e-3 (repeatable)")
    sp.add_argument("--horizon", type=float, default=20.0)
    sp.add_argument("--dt", type=float, default=None)
    sp.add_argument("--stride", type=int, default=1, help="write every n-th sample")

    sp = sub.add_parser("selftest", help="run the built-in example suite")
    sp.add_argument("--out", default=None, help="also write the report as JSON here")
    return p


def _model(args) -> GridModel:
    case = resolve_case(args.case)
    gm = GridModel.from_case(case)
    if args.mp_hat is not None:
        gm = gm.with_droop_setting(args.mp_hat)
    return gm


def _select(modes, mode_id):
    if mode_id is None:
        sel = [m for m in modes if m.cls == "inter-area"]
        if not sel:
            raise CaseError("no inter-area modes in the band; pass --mode or widen --band")
        return sel
    for m in modes:
        if str(m.index) == str(mode_id):
            return [m]
    raise CaseError(f"unknown mode id {mode_id!r}; ids run 0..{len(modes) - 1}")


def _config(args, options=None, **extra) -> RunConfig:
    opts = {k: v for k, v in vars(args).items()
            if k not in ("command", "case", "band", "out") and v is not None}
    opts.update(options or {})
    return RunConfig(command=args.command, case=getattr(args, "case", ""),
                     band=tuple(getattr(args, "band", (0.1, 1.0))), out=args.out or ".",
                     options=opts, **extra)


def cmd_analyze(args) -> int:
    gm = _model(args)
    cfg = _config(args)
    modes = eigen_modes(gm.state_matrix(), cfg.band, gm.jac, gm.park)
    buf = io.StringIO()
    for line in header_lines(cfg, gm.case.sha256):
        buf.write(f"# {line}\n")
    buf.write("mode_id,re,im,freq_hz,damping_pct,zeta,class,slow_ratio,residual\n")
    for m in modes:
        buf.write(",".join([str(m.index), repr(m.lam.real), repr(m.lam.imag), repr(m.freq_hz),
                            repr(m.damping_pct), repr(m.zeta), m.cls, repr(float(m.slow_ratio)),
                            repr(m.residual)]) + "\n")
    out = Path(args.out)
    write_text(out / "modes.csv", buf.getvalue())
    report = validate_assumptions(gm.jac).as_dict()
    ts = timescale_check(gm.park)
    report.update(timescale_margin=ts.margin, timescale_warning=ts.warning, m_p=gm.m_p,
                  kron_condition=gm.reduced.cond)
    write_json(out / "assumptions.json", {"_meta": meta(cfg, gm.case.sha256), "report": report})
    print(f"{'id':>3} {'Re':>12} {'Im':>12} {'f (Hz)':>9} {'zeta (%)':>9}  class")
    for m in modes:
        print(f"{m.index:>3} {m.lam.real:>12.6g} {m.lam.imag:>12.6g} {m.freq_hz:>9.4f} "
              f"{m.damping_pct:>9.4f}  {m.cls}")
    print(f"assumptions {'pass' if report['passed'] else 'FAIL'}; "
          f"gamma_l={report['gamma_l']:.6g} gamma_u={report['gamma_u']:.6g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.points < 1:
        raise CaseError("--points must be at least 1")
    gm = _model(args)
    geometric = args.log or (args.param == "droop" and not args.linear)
    grid = (geometric_grid if geometric else linear_grid)(args.start, args.stop, args.points)
    spec = {"param": args.param, "from": args.start, "to": args.stop, "points": args.points,
            "grid": "geometric" if geometric else "linear"}
    cfg = _config(args, sweep=spec)
    kw = dict(band=cfg.band, log_axis=geometric)
    if args.param == "droop":
        if args.points < 3:
            raise CaseError("a droop sweep needs at least three points")
        sr = sweep_droop(gm, grid, **kw)
    elif args.param == "size":
        sr = sweep_size(gm, grid, mp_hat=0.03 if args.mp_hat is None else args.mp_hat, **kw)
    else:
        sr = sweep_inertia(gm, grid, **kw)
    rev = detect_reversal(sr)
    out = Path(args.out)
    hdr = header_lines(cfg, gm.case.sha256)
    write_text(out / "locus.csv", locus_csv(sr, hdr))
    write_json(out / "reversal.json", {"_meta": meta(cfg, gm.case.sha256),
                                       "warnings": sr.warnings, "modes": reversal_json(rev)})
    for w in sr.warnings:
        print(f"warning: {w}", file=sys.stderr)
    for c in sr.inter_area:
        z = 100 * c.zeta
        r = rev[c.mode_id]
        tail = f"reversal at {r.critical:.6g}" if r.interior else r.note
        print(f"mode {c.mode_id}: f {c.freq_hz[0]:.4f}->{c.freq_hz[-1]:.4f} Hz, "
              f"zeta {z[0]:.4f}->{z[-1]:.4f} %, {tail}")
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    gm = _model(args)
    cfg = _config(args)
    modes = eigen_modes(gm.state_matrix(), cfg.band, gm.jac, gm.park)
    sel = _select(modes, args.mode)
    with ThreadPoolExecutor(max_workers=worker_count()) as ex:
        reports = list(ex.map(lambda m: sensitivity_report(gm.jac, gm.park, m, args.fd_step), sel))
    buf = io.StringIO()
    for line in header_lines(cfg, gm.case.sha256):
        buf.write(f"# {line}\n")
    buf.write("mode_id,dre_dmp,dim_dmp,fd_re,fd_im,rel_err,cond\n")
    for r in reports:
        a, f = r.analytic.value, r.fd.value
        buf.write(",".join([str(r.mode.index), repr(a.real), repr(a.imag), repr(f.real), repr(f.imag),
                            repr(r.rel_err), repr(r.cond)]) + "\n")
        print(f"mode {r.mode.index}: dlam/dmp = {a:.6g} (fd {f:.6g}, rel err {r.rel_err:.2e})")
    write_text(Path(args.out) / "sensitivity.csv", buf.getvalue())
    return EXIT_OK


def cmd_check_design(args) -> int:
    gm = _model(args)
    cfg = _config(args)
    modes = eigen_modes(gm.state_matrix(), cfg.band, gm.jac, gm.park)
    sel = _select(modes, args.mode)
    rep = design_report(gm.jac, gm.park, sel)
    write_json(Path(args.out) / "design.json", {"_meta": meta(cfg, gm.case.sha256), **rep})
    for mid, r in rep["modes"].items():
        print(f"mode {mid}: f={r['freq_hz']:.4f} Hz zeta={r['zeta']:.5f} ({r['damping_pct']:.3f} %) "
              f"theorem1 lhs={r['theorem1_lhs']:.6g} -> {r['verdict']}; "
              f"m*={r['m_star']:.6g} (preconditions {'hold' if r['preconditions_hold'] else 'fail'}), "
              f"m_p={r['m_p']:.6g}")
    return EXIT_OK


def _perturbation(items, labels):
    out = {}
    for it in items:
        name, sep, amp = it.partition("=")
        if not sep:
            raise CaseError(f"--perturb expects STATE=AMP, got {it!r}")
        try:
            out[name] = float(amp)
        except ValueError:
            raise CaseError(f"bad amplitude in --perturb {it!r}") from None
    if not out:
        out[next(lb for lb in labels if lb.startswith("omega_"))] = 1e-3
    return out


def cmd_ringdown(args) -> int:
    gm = _model(args)
    sm = gm.state_matrix()
    pert = _perturbation(args.perturb, sm.labels)
    dt = args.dt if args.dt is not None else default_dt(gm)
    cfg = _config(args, options={"perturb": pert, "dt": dt})
    traj = simulate(gm, pert, horizon=args.horizon, dt=dt)
    hdr = header_lines(cfg, gm.case.sha256)
    stride = max(1, args.stride)
    sub = type(traj)(t=traj.t[::stride], x=traj.x[::stride], labels=traj.labels, n_g=traj.n_g,
                     n_i=traj.n_i, eq=traj.eq, events=traj.events)
    write_text(Path(args.out) / "trajectory.csv", sub.to_csv(hdr))
    modes = [m for m in eigen_modes(sm, cfg.band) if m.cls == "inter-area"]
    est = {}
    for ch in traj.labels:
        e = estimate_mode(traj, ch)
        est[ch] = {"oscillatory": e.oscillatory, "freq_hz": e.freq_hz, "zeta": e.zeta,
                   "freq_err": e.freq_err, "zeta_err": e.zeta_err, "note": e.note}
    write_json(Path(args.out) / "ringdown.json", {
        "_meta": meta(cfg, gm.case.sha256), "events": traj.events, "estimates": est,
        "linear_inter_area": [{"mode_id": str(m.index), "freq_hz": m.freq_hz, "zeta": m.zeta}
                              for m in modes]})
    for ev in traj.events:
        print(f"event: {ev}", file=sys.stderr)
    for ch, e in est.items():
        if e["oscillatory"]:
            print(f"{ch}: f={e['freq_hz']:.4f} Hz zeta={e['zeta']:.4f}")
        else:
            print(f"{ch}: {e['note']}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    from .selftest import run_selftest
    results = run_selftest()
    for r in results:
        print(f"{r.status:5} {r.name}: {r.detail}")
    failed = [r for r in results if r.status == "FAIL"]
    xfail = [r for r in results if r.status == "XFAIL"]
    print(f"{len(results) - len(failed) - len(xfail)} passed, {len(xfail)} known failures, "
          f"{len(failed)} failed")
    if args.out:
        write_json(Path(args.out) / "selftest.json", {
            "tool_version": __version__,
            "results": [{"name": r.name, "status": r.status, "detail": r.detail} for r in results]})
    return EXIT_NUMERIC if failed else EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze, "sweep": cmd_sweep, "sensitivity": cmd_sensitivity,
    "check-design": cmd_check_design, "ringdown": cmd_ringdown, "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CaseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CASE
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except np.linalg.LinAlgError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CASE


if __name__ == "__main__":
    sys.exit(main())
