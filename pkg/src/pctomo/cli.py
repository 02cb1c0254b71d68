"""Command-line front end: phantom -> simulate -> reconstruct -> metrics.

Every flag may also be given in a flat ``key=value`` file passed with
``--config``; flags on the command line win.  Keys are the long flag names
with or without leading dashes (``theta-max=160`` and ``theta_max=160`` are
both accepted).  ``--dump-config`` prints the resolved configuration and
exits.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure.

Files written by ``simulate --out D``:

    D             PCT1 real64 intensities (n_angles, ky, kx)
    D.weights     PCT1 real64 fit weights, same shape
    D.angles      PCT1 real64 incident angles in radians
    D.txt         key=value sidecar (geometry, noise, realized err_norm)
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import transforms
from .grids import GridSpec, ObjectVolume, PCT1Error, emit_grayscale, norm, read_array, write_array

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# config handling


def read_config(path) -> dict:
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        cfg[key.lstrip("-").replace("-", "_")] = val
    return cfg


def _dump(args, skip=("func", "config", "dump_config", "command")) -> str:
    lines = [f"command={args.command}"]
    for k, v in sorted(vars(args).items()):
        if k in skip or v is None:
            continue
        lines.append(f"{k.replace('_', '-')}={v}")
    return "\n".join(lines) + "\n"


def _parse_grid(text: str) -> GridSpec:
    try:
        mx, my, mz = (int(v) for v in str(text).split(","))
        return GridSpec(mx=mx, my=my, mz=mz)
    except (ValueError, TypeError) as exc:
        raise UsageError(f"invalid grid {text!r}: expected MX,MY,MZ positive integers") from exc


def _read_sidecar(path) -> dict:
    p = Path(str(path) + ".txt")
    return read_config(p) if p.exists() else {}


def _load_volume(path, grid: GridSpec | None = None) -> np.ndarray:
    arr = read_array(path)
    if arr.ndim != 3:
        raise UsageError(f"{path}: expected a 3D volume")
    if grid is not None and arr.shape != grid.shape:
        raise UsageError(f"{path}: shape {arr.shape} does not match grid {grid.shape}")
    return arr.astype(np.complex128)


# ---------------------------------------------------------------------------
# commands


def cmd_phantom(args) -> int:
    from .simulate import PhantomSpec, phantom_ellipsoids, phantom_reference

    grid = _parse_grid(args.grid)
    kind = args.kind.replace("-", "_")
    if args.magnitude is None:
        raise UsageError("--magnitude is required")
    if args.out is None:
        raise UsageError("--out is required")
    mag = float(args.magnitude)
    if kind == "ellipsoids":
        spec = PhantomSpec(
            seed=int(args.seed),
            n_ellipsoids=int(args.count),
            c_beta_delta=float(args.cbd),
            target_magnitude=mag,
        )
        vol = phantom_ellipsoids(grid, spec)
    elif kind in ("rectangle", "sphere", "bullet", "exp_ramp"):
        vol = phantom_reference(grid, kind, mag)
    else:
        raise UsageError(f"unknown phantom kind {args.kind!r}")
    write_array(args.out, vol.data, "complex128")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .forward import intensity, make_model
    from .simulate import add_gaussian_noise, add_poisson_noise, equispaced_angles, make_masks

    if args.object is None or args.out is None:
        raise UsageError("--object and --out are required")
    if args.mode == "nearfield" and args.nf is None:
        raise UsageError("nearfield mode requires --nf")
    vol = read_array(args.object)
    if vol.ndim != 3:
        raise UsageError("object must be a 3D volume")
    my, mx, mz = vol.shape
    grid = GridSpec(mx=mx, my=my, mz=mz)
    n = int(args.angles)
    if n < 1:
        raise UsageError("--angles must be positive")
    angles = equispaced_angles(n, float(args.angle_range))
    truncate = str(args.truncate).lower() in ("1", "true", "yes")
    nf = float(args.nf) if args.nf is not None else None
    model = make_model(grid, angles, args.mode, nf, pad_factor=int(args.pad), truncate=truncate)
    I = intensity(model, vol)

    keep = None
    theta_max = float(args.theta_max) if args.theta_max is not None else None
    if theta_max is not None and theta_max < float(args.angle_range):
        keep = (0.0, math.radians(theta_max))
    stop = float(args.beamstop) if args.beamstop else None
    if stop and args.mode != "farfield":
        raise UsageError("--beamstop only applies to farfield data")
    weights = make_masks(I.shape, angles, keep, stop)

    err_norm, i0, noise = 0.0, 1.0, str(args.noise or "none")
    if noise != "none":
        kind, _, eps = noise.partition(":")
        try:
            eps = float(eps)
        except ValueError as exc:
            raise UsageError(f"invalid --noise {noise!r}") from exc
        if kind == "gaussian":
            d = add_gaussian_noise(I, eps, seed=int(args.seed))
        elif kind == "poisson":
            d, i0 = add_poisson_noise(I, eps, seed=int(args.seed))
        else:
            raise UsageError(f"unknown noise kind {kind!r}")
        I, err_norm = d.data, d.err_norm

    write_array(args.out, I, "real64")
    write_array(str(args.out) + ".weights", weights, "real64")
    write_array(str(args.out) + ".angles", angles, "real64")
    side = {
        "mode": args.mode,
        "nf": nf if nf is not None else "",
        "pad": args.pad,
        "truncate": int(truncate),
        "grid": f"{mx},{my},{mz}",
        "n_angles": n,
        "angle_range": args.angle_range,
        "theta_max": theta_max if theta_max is not None else args.angle_range,
        "beamstop": stop or 0,
        "noise": noise,
        "seed": args.seed,
        "i0": repr(i0),
        "err_norm": repr(err_norm),
    }
    Path(str(args.out) + ".txt").write_text("".join(f"{k}={v}\n" for k, v in side.items()))
    return EXIT_OK


def _build_constraint(text, grid):
    from .regularization import Constraint

    text = str(text)
    if text == "none":
        return Constraint()
    if text == "purephase":
        return Constraint.pure_phase()
    if text.startswith("singlematerial:"):
        try:
            re_, im_ = (float(v) for v in text.split(":", 1)[1].split(","))
        except ValueError as exc:
            raise UsageError(f"invalid constraint {text!r}") from exc
        return Constraint(complex(re_, im_))
    if text.startswith("support:"):
        mask = read_array(text.split(":", 1)[1])
        if mask.shape != grid.shape:
            raise UsageError("support mask shape does not match the grid")
        return Constraint.support(np.real(mask) > 0.5)
    raise UsageError(f"unknown constraint {text!r}")


def cmd_reconstruct(args) -> int:
    from .forward import make_model
    from .regularization import DataGramian, ObjectGramian
    from .solver import CGPolicy, SolverConfig, StopRule, run, write_log

    if args.data is None or args.out is None:
        raise UsageError("--data and --out are required")
    side = _read_sidecar(args.data)
    mode = args.mode or side.get("mode", "nearfield")
    nf = args.nf if args.nf is not None else side.get("nf") or None
    if mode == "nearfield" and nf is None:
        raise UsageError("nearfield mode requires --nf")
    nf = float(nf) if nf is not None else None
    grid_text = args.grid or side.get("grid")
    if grid_text is None:
        raise UsageError("object grid unknown: pass --grid")
    grid = _parse_grid(grid_text)
    data = read_array(args.data)
    if data.ndim != 3:
        raise UsageError("data must be a 3D array")
    angles_path = Path(str(args.data) + ".angles")
    if args.angles_file:
        angles = np.ravel(read_array(args.angles_file))
    elif angles_path.exists():
        angles = np.ravel(read_array(angles_path))
    else:
        angles = np.arange(data.shape[0]) * (np.pi / data.shape[0])
    weights_path = Path(str(args.data) + ".weights")
    mask = read_array(weights_path) if weights_path.exists() else None
    pad = int(args.pad or side.get("pad", 2))
    truncate = str(side.get("truncate", "0")) in ("1", "true")
    model = make_model(grid, angles, mode, nf, pad_factor=pad, truncate=truncate)
    if data.shape != model.data_shape:
        raise UsageError(f"data shape {data.shape} does not match geometry {model.data_shape}")

    reg = str(args.reg)
    if reg == "l2":
        gram_x = ObjectGramian.l2()
    elif reg.startswith("sobolev:"):
        gram_x = ObjectGramian.sobolev(float(reg.split(":", 1)[1]))
    else:
        raise UsageError(f"unknown regularization {reg!r}")

    gy = str(args.gram_y)
    if gy == "l2":
        gram_y = DataGramian("identity", mask=mask)
    elif gy.startswith("poisson:"):
        gram_y = DataGramian("poisson", i_err=data, i_min=float(gy.split(":", 1)[1]), mask=mask)
    else:
        raise UsageError(f"unknown data metric {gy!r}")

    constraint = _build_constraint(args.constraint, grid)
    init = None if str(args.init) == "zero" else _load_volume(args.init, grid)

    stop_txt = str(args.stop)
    kind, _, val = stop_txt.partition(":")
    truth = None
    if kind == "fixed":
        stop = StopRule.fixed(int(val))
    elif kind == "discrepancy":
        err = args.err_norm if args.err_norm is not None else side.get("err_norm")
        if err is None or float(err) <= 0:
            raise UsageError("discrepancy stop needs a noise estimate (--err-norm or simulate sidecar)")
        stop = StopRule.discrepancy(float(val or 1.0), float(err))
    elif kind == "best":
        truth = _load_volume(val, grid)
        stop = StopRule.best(truth)
    else:
        raise UsageError(f"unknown stop rule {stop_txt!r}")

    alpha0 = "auto" if str(args.alpha0).lower() == "auto" else float(args.alpha0)
    ref = None
    if alpha0 == "auto":
        if args.ref_norm is not None:
            ref = float(args.ref_norm)
        elif init is not None:
            ref = init
        elif truth is not None:
            ref = truth
        else:
            raise UsageError("--alpha0 auto needs a reference: --init FILE, best:TRUTH or --ref-norm")
    cfg = SolverConfig(
        alpha0=alpha0,
        r_alpha=float(args.ralpha),
        max_newton=int(args.max_newton),
        min_newton=int(args.min_newton),
        stop=stop,
        cg=CGPolicy(max_iter=int(args.cg_max_iter)),
        gram_x=gram_x,
        gram_y=gram_y,
        constraint=constraint,
        initial_guess=init,
        alpha_ref=ref,
    )
    result = run(model, data, cfg)
    write_array(args.out, result.volume, "complex128")
    if args.log:
        write_log(args.log, result.history)
    if args.slices:
        vol = result.volume
        my, mx, mz = vol.shape
        emit_grayscale(f"{args.slices}_xz.pgm", vol[my // 2].real)
        emit_grayscale(f"{args.slices}_yz.pgm", vol[:, mx // 2, :].real)
        emit_grayscale(f"{args.slices}_yx.pgm", vol[:, :, mz // 2].real)
    print(f"stop_index={result.index} newton_steps={len(result.history) - 1} alpha0={result.alpha0!r}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    if args.recon is None or args.truth is None:
        raise UsageError("--recon and --truth are required")
    rec = read_array(args.recon)
    tru = read_array(args.truth)
    if rec.shape != tru.shape:
        raise UsageError(f"shape mismatch {rec.shape} vs {tru.shape}")
    tn = norm(tru)
    if tn == 0:
        raise UsageError("truth has zero norm")
    print(f"rho={norm(rec - tru) / tn!r}")
    if args.subtract_reference:
        ref = read_array(args.subtract_reference)
        if ref.shape != tru.shape:
            raise UsageError("reference shape mismatch")
        print(f"rho_ref={norm(rec - tru) / norm(tru - ref)!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file; flags override it")
    common.add_argument("--dump-config", action="store_true", help="print resolved configuration and exit")
    common.add_argument("--threads", type=int, default=1, help="FFT worker threads")

    p = argparse.ArgumentParser(prog="pctomo", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("phantom", parents=[common], help="write a phantom volume")
    s.add_argument("--kind", default="ellipsoids")
    s.add_argument("--grid", default="32,32,32")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--magnitude", type=float)
    s.add_argument("--cbd", type=float, default=0.0, help="beta/delta ratio for ellipsoids")
    s.add_argument("--count", type=int, default=10, help="number of ellipsoids")
    s.add_argument("--out")
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("simulate", parents=[common], help="simulate intensity data")
    s.add_argument("--object")
    s.add_argument("--mode", choices=["nearfield", "farfield"], default="nearfield")
    s.add_argument("--nf", type=float)
    s.add_argument("--angles", type=int, default=64)
    s.add_argument("--angle-range", type=float, default=180.0, help="angles equispaced in [0, RANGE) degrees")
    s.add_argument("--theta-max", type=float, help="mask angles at or beyond this value (degrees)")
    s.add_argument("--pad", type=int, default=2)
    s.add_argument("--truncate", default="0", help="cut holograms to the projection size")
    s.add_argument("--noise", default="none", help="none | gaussian:EPS | poisson:EPS")
    s.add_argument("--beamstop", type=float, default=0.0, help="far-field beam stop radius in |xi_dis|")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("reconstruct", parents=[common], help="run the regularized Newton solver")
    s.add_argument("--data")
    s.add_argument("--mode", choices=["nearfield", "farfield"])
    s.add_argument("--nf", type=float)
    s.add_argument("--grid", help="object grid MX,MY,MZ (default from data sidecar)")
    s.add_argument("--pad", type=int)
    s.add_argument("--angles-file", help="PCT1 vector of angles in radians")
    s.add_argument("--reg", default="l2", help="l2 | sobolev:S")
    s.add_argument("--gram-y", default="l2", help="l2 | poisson:IMIN")
    s.add_argument("--alpha0", default="auto")
    s.add_argument("--ref-norm", type=float, help="||N_ref|| for --alpha0 auto")
    s.add_argument("--ralpha", type=float, default=2.0 / 3.0)
    s.add_argument("--stop", default="fixed:10", help="discrepancy:TAU | fixed:K | best:TRUTHFILE")
    s.add_argument("--err-norm", type=float, help="noise norm for the discrepancy rule")
    s.add_argument("--max-newton", type=int, default=30)
    s.add_argument("--min-newton", type=int, default=0)
    s.add_argument("--cg-max-iter", type=int, default=200)
    s.add_argument("--constraint", default="none", help="none | purephase | singlematerial:RE,IM | support:FILE")
    s.add_argument("--init", default="zero", help="zero | FILE")
    s.add_argument("--out")
    s.add_argument("--log", help="CSV iteration log")
    s.add_argument("--slices", help="prefix for central-slice PGM images")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("metrics", parents=[common], help="relative reconstruction error")
    s.add_argument("--recon")
    s.add_argument("--truth")
    s.add_argument("--subtract-reference")
    s.set_defaults(func=cmd_metrics)
    return p


def _apply_config(parser, argv):
    """Parse twice: once to find --config, then with file values as defaults."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = read_config(args.config)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, val in cfg.items():
        if key == "command":
            continue
        if key not in known:
            raise UsageError(f"{args.config}: unknown key {key!r} for {args.command}")
        act = known[key]
        if act.type is not None:
            try:
                val = act.type(val)
            except ValueError as exc:
                raise UsageError(f"{args.config}: bad value for {key}: {val!r}") from exc
        elif isinstance(act, argparse._StoreTrueAction):
            val = val.lower() in ("1", "true", "yes")
        defaults[key] = val
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        transforms.set_workers(args.threads)
        if args.dump_config:
            sys.stdout.write(_dump(args))
            return EXIT_OK
        return args.func(args)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except (UsageError, PCT1Error, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
