"""Command-line entry point: ``sntrap <subcommand> [options]``.

Every subcommand writes one CSV (stdout, or ``--out``) and, with ``--out``,
a ``<out>.meta`` JSON manifest holding the resolved parameters;
``sntrap replay <out>.meta`` regenerates the CSV byte for byte.

Exit codes: 0 success, 1 numerical failure (rows carry diagnostics in the
``error`` column), 2 usage or input error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
import warnings
from fractions import Fraction

import numpy as np

from . import __version__, constants
from .config import ConfigError, apply_config
from .params import DomainError, Family, alpha_of, crystal_params, get_material, mass_for_alpha
from .results import SweepResult

FIGURES = ("fig3", "fig4", "fig5", "fig6", "fig7")
_NOT_PARAMS = {"handler", "config", "out", "out_dir", "threads", "check", "manifest"}


class UsageError(Exception):
    pass


# --- argument grammars ----------------------------------------------------------------

def int_range(text):
    """``"0:4"`` (inclusive), ``"3"`` or ``"0,2,5"``."""
    text = text.strip()
    try:
        if ":" in text:
            lo, hi = (int(s) for s in text.split(":"))
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(s) for s in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer range {text!r}") from None


def grid(text):
    """``"start:stop:count"``, with ``":log"`` (or ``"|log"``) for log spacing, a list, or one value."""
    t = text.strip().replace("|", ":")
    try:
        if ":" in t:
            parts = t.split(":")
            log = parts[-1].lower() == "log"
            if log:
                parts = parts[:-1]
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
            if len(parts) != 3 or count < 1:
                raise ValueError
            if log:
                if start <= 0 or stop <= 0:
                    raise ValueError
                return np.geomspace(start, stop, count).tolist()
            return np.linspace(start, stop, count).tolist()
        return [float(s) for s in t.split(",")]
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None


def _grid_arg(text):
    grid(text)  # validate now, keep the text for the manifest
    return text


def _range_arg(text):
    int_range(text)
    return text


def positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {text!r}")
    return v


# --- output -----------------------------------------------------------------------------

def atomic_write(path, data: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    return str(v)


def manifest(command, params, csv_text, meta):
    return {
        "tool": "sntrap",
        "version": __version__,
        "subcommand": command,
        "parameters": _jsonable(params),
        "seed": params.get("seed"),
        "constants": {"G": constants.G, "hbar": constants.HBAR, "u": constants.AMU,
                      "release": constants.CODATA_RELEASE},
        "constants_digest": constants.digest(),
        "run_meta": _jsonable(meta),
        "csv_sha256": hashlib.sha256(csv_text.encode()).hexdigest(),
    }


def emit(result: SweepResult, command, params, out, stdout):
    text = result.to_csv()
    if out:
        atomic_write(out, text)
        body = json.dumps(manifest(command, params, text, result.meta), indent=2, sort_keys=True)
        atomic_write(out + ".meta", body + "\n")
    else:
        stdout.write(text)
    return 0 if result.ok else 1


# --- shared physical setup -------------------------------------------------------------------

def _material(args):
    return get_material(args.material, sigma=getattr(args, "sigma", None))


def _mass_and_alpha(args, default_alpha):
    """Resolve the sphere mass (kg) and spectral alpha from the mass or alpha flags."""
    mat = _material(args)
    if args.m_kg is not None:
        m = args.m_kg
    elif args.m_u is not None:
        m = args.m_u * constants.AMU
    else:
        a = args.alpha_value if args.alpha_value is not None else default_alpha
        m = mass_for_alpha(mat, a, args.omega0)
    return mat, m, alpha_of(mat.sigma, m, args.omega0)


def _add_material(p, mass=True):
    p.add_argument("--material", default="silicon", help="preset name (silicon, osmium)")
    p.add_argument("--sigma", type=positive, default=None, help="override the atomic localisation length, m")
    if mass:
        g = p.add_mutually_exclusive_group()
        g.add_argument("--m-kg", type=positive, default=None, help="total mass in kg")
        g.add_argument("--m-u", type=positive, default=None, help="total mass in atomic mass units")


def _add_common(p):
    p.add_argument("--out", default=None, help="CSV path; a .meta manifest is written alongside")
    p.add_argument("--config", default=None, help="INI file with a section per subcommand")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default SN_TRAP_THREADS or 1)")


# --- subcommands ---------------------------------------------------------------------------------

def cmd_kernels(args):
    from .kernels import dynamics_combo, i_dimensionless, i_prime

    mat = _material(args)
    m = args.m_kg if args.m_kg is not None else (args.m_u or 1e15) * constants.AMU
    lat = crystal_params(mat, m).lattice
    fam = Family.parse(args.family)
    z = np.asarray(grid(args.zeta_grid))
    if np.any(z < 0):
        raise DomainError("zeta must be non-negative")
    out = SweepResult(("zeta", "i", "i_prime", "combo"))
    cols = [np.atleast_1d(f(z, lat, fam)) for f in (i_dimensionless, i_prime, dynamics_combo)]
    for k, zk in enumerate(z):
        out.append((float(zk),) + tuple(float(c[k]) for c in cols))
    out.meta = {"N": lat.N, "varrho": lat.varrho, "family": fam.value}
    return out


def cmd_polys(args):
    from .polynomials import P_MAX, p_polynomial, wide_coefficient

    out = SweepResult(("n", "power", "coefficient"))
    for n in int_range(args.n):
        if not 0 <= n <= P_MAX:
            raise DomainError(f"n must lie in [0, {P_MAX}]")
        for j, c in enumerate(p_polynomial(n).coeffs):
            out.append((n, 2 * j, str(Fraction(c))))
    out.meta = {"wide_coefficients": {str(n): str(wide_coefficient(n)) for n in int_range(args.n)}}
    return out


def cmd_spectrum(args):
    from .spectrum import SpectrumQuery, RegimeWarning, sweep_spectrum, transition_energy
    from .params import spectral_prefactor

    levels = int_range(args.levels)
    alphas = grid(args.alpha) if args.alpha else None
    if alphas is not None and len(alphas) > 1:
        if args.m_kg is not None or args.m_u is not None:
            raise UsageError("an alpha grid cannot be combined with a fixed mass")
        return sweep_spectrum(alphas, levels, args.family, args.regime, varrho=args.varrho,
                              retention=args.retention, threads=args.threads)
    args.alpha_value = alphas[0] if alphas else None
    mat, m, alpha = _mass_and_alpha(args, default_alpha=10.0)
    params = crystal_params(mat, m)
    q = SpectrumQuery(params, alpha, args.family, args.regime, retention=args.retention)
    out = SweepResult(("n1", "n2", "alpha", "m_kg", "omega0", "prefactor", "f_tilde",
                       "gravitational_part", "transition_energy", "quad_error"))
    notes = []
    for n1, n2 in zip(levels, levels[1:]):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", RegimeWarning)
            te = transition_energy(n1, n2, q)
        notes += [str(w.message) for w in caught]
        f = te.f_tilde if te.f_tilde is not None else math.nan
        out.append((n1, n2, alpha, m, args.omega0, spectral_prefactor(mat, args.omega0), f,
                    te.gravitational_part, te.value, te.error))
    out.meta = {"family": Family.parse(args.family).value, "regime": args.regime,
                "retention": args.retention, "warnings": sorted(set(notes))}
    return out


def cmd_dynamics(args):
    from .dynamics import GaussianTrapRun, evolve_moments, sweep_omega_sn, IntegrationError

    if args.action == "sweep":
        alphas = grid(args.alpha or "1:100:41:log")
        return sweep_omega_sn(alphas, args.family, _material(args), args.retention, threads=args.threads)
    args.alpha_value = grid(args.alpha)[0] if args.alpha else None
    mat, m, alpha = _mass_and_alpha(args, default_alpha=10.0)
    params = crystal_params(mat, m)
    run = GaussianTrapRun(params, args.omega0, args.family, kappa=args.kappa, x0=args.x0, p0=args.p0,
                          t_end=args.t_end, samples=args.samples, gravity_scale=args.lambda_g,
                          retention=args.retention)
    err = ""
    try:
        traj = evolve_moments(run)
    except IntegrationError as exc:
        traj, err = exc.partial, str(exc)
    out = SweepResult(("t", "x_mean", "u1", "u2", "u3"))
    for k in range(len(traj.t)):
        out.append((float(traj.t[k]), float(traj.x_mean[k]), float(traj.u1[k]), float(traj.u2[k]),
                    float(traj.u3[k])), err if k == len(traj.t) - 1 else "")
    out.meta = {"alpha": alpha, "m_kg": m}
    return out


def cmd_axial(args):
    from .axial import sweep_axial
    from .quadrature import McConfig

    mc = McConfig(seed=args.seed, target_rel_error=args.target_rel_err, max_samples=args.max_samples,
                  strata_per_dim=args.strata, stratify_dims=(0, 1))
    return sweep_axial(int_range(args.n), grid(args.alpha), args.mu, mc, threads=args.threads)


def cmd_oracle(args):
    from .oracle import (OracleConfig, OracleError, bracket_shift, ground_state, propagate,
                         squeezed_state, verify_h_identity, write_snapshot)

    args.alpha_value = grid(args.alpha)[0] if args.alpha else None
    mat, m, alpha = _mass_and_alpha(args, default_alpha=50.0)
    params = crystal_params(mat, m)
    mode = {"it": "imaginary-time", "rt": "real-time"}[args.mode]
    dt = args.dt if args.dt is not None else 0.01 / args.omega0
    cfg = OracleConfig(params, args.omega0, args.family, args.lambda_g, dt=dt, steps=args.steps, mode=mode,
                       grid_points=args.grid_points, box_widths=args.box_widths,
                       record_every=args.record_every)
    if mode == "imaginary-time":
        out = SweepResult(("level", "alpha", "lambda_G", "energy", "functional", "gravitational",
                           "gravitational_variable", "bracket", "bracket_variable", "iterations"))
        try:
            gs = ground_state(cfg, args.level, max_steps=args.steps)
            err = ""
        except OracleError as exc:
            gs, err = None, str(exc)
        tot, var = bracket_shift(cfg, args.level)
        if gs is None:
            out.append((args.level, alpha, args.lambda_g) + (math.nan,) * 4 + (tot, var, args.steps), err)
        else:
            out.append((args.level, alpha, args.lambda_g, gs.energy, gs.functional, gs.gravitational,
                        gs.gravitational_variable, tot, var, gs.iterations))
            if args.snapshot:
                write_snapshot(args.snapshot, gs.psi, cfg.dt, gs.iterations)
        out.meta = {"units": "hbar*omega0", "m_kg": m, "dt": cfg.dt}
        return out
    state = squeezed_state(cfg, args.kappa)
    out = SweepResult(("t", "x_mean", "u1", "u2", "u3"))
    try:
        tr = propagate(cfg, state, snapshot_every=args.steps if args.snapshot else 0)
    except OracleError as exc:
        out.append((math.nan,) * 5, str(exc))
        return out
    mt = tr.moments
    for k in range(len(mt.t)):
        out.append((float(mt.t[k]), float(mt.x_mean[k]), float(mt.u1[k]), float(mt.u2[k]), float(mt.u3[k])))
    if args.snapshot and tr.snapshots:
        step, wf = tr.snapshots[-1]
        write_snapshot(args.snapshot, wf, cfg.dt, step)
    out.meta = {"alpha": alpha, "m_kg": m, "dt": cfg.dt, "norm_drift": tr.norm_drift,
                "h_identity_residual": verify_h_identity(tr)}
    return out


# --- figures ---------------------------------------------------------------------------------------

def figure(name, args):
    from .spectrum import mass_frequency_table, sweep_spectrum, wide_transition_table
    from .dynamics import sweep_omega_sn
    from .axial import sweep_axial
    from .quadrature import McConfig

    pts = args.points
    if name == "fig3":
        return sweep_spectrum(np.geomspace(1.0, 10.0, pts), (0, 1, 2, 3, 4), args.family,
                              "intermediate", threads=args.threads)
    if name == "fig4":
        return mass_frequency_table(np.geomspace(1.0, 1e3, pts))
    if name == "fig5":
        return sweep_omega_sn(np.geomspace(1.0, 100.0, pts), args.family, "silicon", "intermediate",
                              threads=args.threads)
    if name == "fig6":
        mc = McConfig(seed=args.seed, target_rel_error=args.target_rel_err, max_samples=args.max_samples,
                      strata_per_dim=24, stratify_dims=(0, 1))
        return sweep_axial((0, 1, 2, 3), np.linspace(1.0, 6.0, 6), 0.5, mc, threads=args.threads)
    if name == "fig7":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return wide_transition_table(np.geomspace(1e-24, 1e-18, pts), omegas=(0.1, 1.0, 10.0))
    raise UsageError(f"unknown figure {name!r}")


def figure_filename(name, family):
    return f"{name}_{Family.parse(family).value}.csv" if name in ("fig3", "fig5") else f"{name}.csv"


def cmd_figures(args, stdout):
    names = FIGURES if args.name == "all" else (args.name,)
    if len(names) > 1 and not args.out_dir:
        raise UsageError("'figures all' needs --out-dir")
    code = 0
    for name in names:
        res = figure(name, args)
        params = dict(_params(args), name=name)
        if args.out_dir:
            path = os.path.join(args.out_dir, figure_filename(name, args.family))
        else:
            path = args.out
        code = max(code, emit(res, "figures", params, path, stdout))
    return code


# --- parser ------------------------------------------------------------------------------------------

HANDLERS = {
    "kernels": cmd_kernels,
    "polys": cmd_polys,
    "spectrum": cmd_spectrum,
    "dynamics": cmd_dynamics,
    "axial": cmd_axial,
    "oracle": cmd_oracle,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="sntrap", description="Schroedinger-Newton trap phenomenology")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    subs = {}

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        subs[name] = p
        return p

    p = add("kernels", "tabulate the dimensionless crystal kernel")
    p.add_argument("--family", default="sphere", type=Family.parse)
    p.add_argument("--zeta-grid", default="0:5:101", type=_grid_arg)
    _add_material(p)
    _add_common(p)

    p = add("polys", "exact coefficients of the pair-density polynomials")
    p.add_argument("--n", default="0:5", type=_range_arg)
    _add_common(p)

    p = add("spectrum", "transition energies or f~ sweeps")
    p.add_argument("--family", default="sphere", type=Family.parse)
    p.add_argument("--regime", default="intermediate", choices=("full", "narrow", "intermediate", "wide"))
    p.add_argument("--retention", default="complete", choices=("complete", "truncated"))
    p.add_argument("--levels", default="0:4", type=_range_arg)
    p.add_argument("--alpha", default=None, type=_grid_arg, help="one value or a grid")
    p.add_argument("--omega0", default=2 * math.pi * 10, type=positive, help="trap frequency, rad/s")
    p.add_argument("--varrho", default=1e4, type=positive, help="R/sigma for full-regime sweeps")
    _add_material(p)
    _add_common(p)

    p = add("dynamics", "moment dynamics of a squeezed Gaussian; 'sweep' tabulates omega_SN^2")
    p.add_argument("action", nargs="?", default="run", choices=("run", "sweep"))
    p.add_argument("--family", default="sphere", type=Family.parse)
    p.add_argument("--retention", default=None, choices=("full", "intermediate", "truncated"))
    p.add_argument("--alpha", default=None, type=_grid_arg,
                   help="trap alpha for a run; packet alpha grid for a sweep")
    p.add_argument("--omega0", default=2 * math.pi * 10, type=positive)
    p.add_argument("--kappa", default=1.2, type=positive)
    p.add_argument("--x0", default=0.0, type=float, help="initial displacement, m")
    p.add_argument("--p0", default=0.0, type=float, help="initial momentum, kg m/s")
    p.add_argument("--t-end", default=1.0, type=positive, help="s")
    p.add_argument("--samples", default=1001, type=int)
    p.add_argument("--lambda-g", default=1.0, type=float, help="gravitational boost")
    _add_material(p)
    _add_common(p)

    p = add("axial", "Monte-Carlo spectrum of the axially symmetric trap")
    p.add_argument("--n", default="0:3", type=_range_arg)
    p.add_argument("--alpha", default="1:6:6", type=_grid_arg)
    p.add_argument("--mu", default=0.5, type=positive)
    p.add_argument("--seed", default=20240607, type=int)
    p.add_argument("--max-samples", default=8_000_000, type=int)
    p.add_argument("--target-rel-err", default=1e-3, type=positive)
    p.add_argument("--strata", default=24, type=int, help="strata per stratified dimension")
    _add_common(p)

    p = add("oracle", "grid solver for the nonlinear equation")
    p.add_argument("--mode", default="it", choices=("it", "rt"))
    p.add_argument("--family", default="gaussian", type=Family.parse)
    p.add_argument("--alpha", default=None, type=_grid_arg)
    p.add_argument("--omega0", default=2 * math.pi * 10, type=positive)
    p.add_argument("--lambda-g", default=1e5, type=float)
    p.add_argument("--grid-points", default=4096, type=int)
    p.add_argument("--box-widths", default=12.0, type=positive)
    p.add_argument("--dt", default=None, type=positive, help="s (default 0.01/omega0)")
    p.add_argument("--steps", default=629, type=int)
    p.add_argument("--record-every", default=5, type=int)
    p.add_argument("--kappa", default=1.2, type=positive, help="initial squeeze (rt)")
    p.add_argument("--level", default=0, type=int, choices=(0, 1), help="parity sector (it)")
    p.add_argument("--snapshot", default=None, help="write the final state to this file")
    _add_material(p)
    _add_common(p)

    p = add("figures", "canonical sweeps behind the published plots")
    p.add_argument("name", choices=FIGURES + ("all",))
    p.add_argument("--family", default="sphere", type=Family.parse)
    p.add_argument("--points", default=41, type=int)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--seed", default=20240607, type=int)
    p.add_argument("--max-samples", default=8_000_000, type=int)
    p.add_argument("--target-rel-err", default=1e-3, type=positive)
    _add_common(p)

    p = add("replay", "rerun a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", default=None, help="write here instead of next to the manifest")
    p.add_argument("--check", action="store_true", help="compare against the recorded digest")
    subs["replay"] = p
    return parser, subs


def _params(args):
    return {k: (v.value if isinstance(v, Family) else v) for k, v in sorted(vars(args).items())
            if k not in _NOT_PARAMS and not k.startswith("_") and k != "alpha_value"}


def _finalize(args):
    if args.command == "dynamics" and args.retention is None:
        args.retention = "intermediate" if args.action == "sweep" else "full"
    if getattr(args, "family", None) is not None:
        args.family = Family.parse(args.family)


def _run(command, args, stdout):
    if command == "figures":
        return cmd_figures(args, stdout)
    args.alpha_value = None
    result = HANDLERS[command](args)
    return emit(result, command, _params(args), args.out, stdout)


def _replay(args, stdout):
    with open(args.manifest, encoding="utf-8") as fh:
        man = json.load(fh)
    command = man["subcommand"]
    params = dict(man["parameters"])
    ns = argparse.Namespace(**params)
    ns.command = command
    ns.threads = None
    if args.out:
        out = args.out
    else:
        out = args.manifest[: -len(".meta")] if args.manifest.endswith(".meta") else args.manifest + ".csv"
    if command == "figures":
        name = params.pop("name")
        params.pop("command", None)
        ns = argparse.Namespace(**params, command=command, threads=None, name=name, out_dir=None, out=out)
        _finalize(ns)
        res = figure(name, ns)
        code = emit(res, command, dict(params, name=name), out, stdout)
    else:
        ns.out = out
        _finalize(ns)
        code = _run(command, ns, stdout)
    if args.check:
        with open(out, encoding="utf-8", newline="") as fh:
            digest = hashlib.sha256(fh.read().encode()).hexdigest()
        if digest != man["csv_sha256"]:
            sys.stderr.write("replay output differs from the recorded digest\n")
            return 1
    return code


def _config_path(argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    return known.config


def main(argv=None, stdout=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    stdout = stdout or sys.stdout
    parser, subs = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        path = _config_path(argv)
        if path:
            apply_config(path, {k: v for k, v in subs.items() if k != "replay"})
    except ConfigError as exc:
        sys.stderr.write(f"sntrap: error: {exc}\n")
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        if args.command == "replay":
            return _replay(args, stdout)
        _finalize(args)
        return _run(args.command, args, stdout)
    except (UsageError, DomainError, argparse.ArgumentTypeError, FileNotFoundError, KeyError) as exc:
        sys.stderr.write(f"sntrap: error: {exc}\n")
        return 2


def entry():
    sys.exit(main())
