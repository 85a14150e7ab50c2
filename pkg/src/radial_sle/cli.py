"""Command-line front end: ``radial-sle <command> [options]``.

Option values resolve as built-in defaults, then the JSON ``--config`` file,
then explicit flags.  Every run writes a manifest with the resolved options;
``radial-sle --config manifest.json`` re-runs it.

Exit codes: 0 success, 2 invalid input, 3 a verification missed its
tolerance, 4 a simulation blew up.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from importlib import metadata
from typing import Any, Callable

import numpy as np

EXIT_OK, EXIT_INVALID, EXIT_TOLERANCE, EXIT_HALT = 0, 2, 3, 4
MANIFEST_SCHEMA = "radial-sle-manifest/1"


class UsageError(Exception):
    pass


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(",", " ").split()]


def _bool(v):
    if isinstance(v, bool):
        return v
    if str(v).lower() in ("1", "true", "yes"):
        return True
    if str(v).lower() in ("0", "false", "no"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


# option name -> (type, default, help); None default means "required" when REQUIRED says so
COMMON = {
    "out": (str, ".", "output directory"),
    "manifest": (str, None, "manifest path (default OUT/manifest.json)"),
    "seed": (int, None, "master seed (fallback: $RADIAL_SLE_SEED)"),
    "jobs": (int, 1, "worker processes for ensembles"),
}

PSI = {
    "family": (str, "ground", "ground, excited, spin or chordal"),
    "n": (int, 2, "number of curves"),
    "m": (int, 0, "number of screening charges"),
    "kappa": (float, None, "SLE parameter"),
    "eta": (float, 0.0, "spin parameter"),
    "pattern": (str, None, "link pattern in canonical text form"),
}

VERIFY_COMMON = dict(PSI, samples=(int, 10, "random chamber points"),
                     step=(float, None, "finite-difference step (default by family)"),
                     tol=(float, None, "tolerance on the checked quantity"))

OPTIONS: dict[str, dict[str, tuple]] = {
    "params": {"kappa": (float, None, "SLE parameter"),
               "sigma": (_floats, [], "charges whose dimensions to report"),
               "half_square": (_bool, False, "use sigma^2/2 + 2 sigma for the kappa = 0 dimension")},
    "patterns": {"kind": (str, "radial", "radial or chordal"), "n": (int, None, "points"),
                 "m": (int, None, "links")},
    "meander": {"kind": (str, "radial", "radial or chordal"), "n": (int, None, "points"),
                "m": (int, None, "links"), "kappa": (float, None, "SLE parameter"),
                "check_invertible": (_bool, False, "fail (exit 3) if the matrix is singular")},
    "eval-psi": dict(PSI, theta=(_floats, None, "angles, comma separated")),
    "verify nullvec": VERIFY_COMMON,
    "verify rotation": VERIFY_COMMON,
    "verify cs": VERIFY_COMMON,
    "verify commutators": dict(VERIFY_COMMON, samples=(int, 3, "random chamber points")),
    "verify ward": {"n": (int, 2, "real points"), "m": (int, 0, "screening charges"),
                    "kappa": (float, None, "SLE parameter"), "tol": (float, 1e-5, "residual tolerance")},
    "simulate": {
        "n": (int, 1, "curves"), "kappa": (float, None, "SLE parameter"),
        "T": (float, 0.2, "capacity horizon"), "dt": (float, 2e-5, "time step"),
        "drift_mode": (str, None, "closed_form_fermionic, rational, sle_kappa_rho, kappa_zero, numeric_psi"),
        "theta0": (_floats, None, "initial angles (default equally spaced)"),
        "nu": (_floats, None, "capacity rates"),
        "marked": (_floats, [], "marked boundary angles"),
        "marked_charges": (_floats, [], "charges of the marked points"),
        "rho": (_floats, None, "SLE(kappa, rho) weights"),
        "rho_convention": (str, "measured", "measured (factor 1/2) or unit (factor 1)"),
        "family": (str, "ground", "family for numeric_psi"), "m": (int, 0, "screening charges for numeric_psi"),
        "n_tips": (int, 50, "tip samples per curve"),
        "collision_eps": (float, 1e-3, "collision distance"), "tip_offset": (float, 1e-4, "tip offset"),
        "ensemble": (int, 1, "number of independent runs"), "prefix": (str, "sim", "output file prefix"),
    },
    "calibrate pochhammer": {"pairs": (int, 10, "random exponent pairs"),
                             "tol": (float, 1e-8, "relative tolerance for the Beta case")},
    "calibrate fd-order": {"kappa": (float, 3.0, "SLE parameter"), "n": (int, 3, "curves"),
                           "step": (float, 0.1, "coarse step")},
}

REQUIRED = {
    "params": ["kappa"], "patterns": ["n", "m"], "meander": ["n", "m", "kappa"],
    "eval-psi": ["kappa", "theta"], "verify nullvec": ["kappa"], "verify rotation": ["kappa"],
    "verify cs": ["kappa"], "verify commutators": ["kappa"], "verify ward": ["kappa"],
    "simulate": ["kappa"],
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="radial-sle", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON file of option values (or a manifest to re-run)")
    sub = ap.add_subparsers(dest="command")

    def add_opts(p, opts):
        for name, (typ, _default, help_) in {**COMMON, **opts}.items():
            flag = "--" + name.replace("_", "-")
            if typ is _bool:
                p.add_argument(flag, dest=name, type=typ, nargs="?", const=True, default=None, help=help_)
            else:
                p.add_argument(flag, dest=name, type=typ, default=None, help=help_)
        p.add_argument("--config", dest="sub_config", help=argparse.SUPPRESS)

    for cmd in ("params", "patterns", "meander", "eval-psi", "simulate"):
        add_opts(sub.add_parser(cmd), OPTIONS[cmd])
    for group, modes in (("verify", ("nullvec", "rotation", "ward", "cs", "commutators")),
                         ("calibrate", ("pochhammer", "fd-order"))):
        gp = sub.add_parser(group)
        gsub = gp.add_subparsers(dest="mode", required=True)
        for mode in modes:
            add_opts(gsub.add_parser(mode), OPTIONS[f"{group} {mode}"])
    return ap


def _key_line(text: str, key: str) -> int:
    for i, line in enumerate(text.splitlines(), start=1):
        if f'"{key}"' in line:
            return i
    return 0


def load_config(path: str, command: str | None) -> tuple[str | None, dict]:
    """Read a config or manifest; returns (command, options).  Raises UsageError."""
    try:
        text = open(path).read()
    except OSError as exc:
        raise UsageError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}:1: top level must be an object")
    if "options" in data:
        extra = set(data) - {"options", "command", "schema_id", "version", "exit_code", "outputs",
                             "elapsed_s", "result"}
        if extra:
            key = sorted(extra)[0]
            raise UsageError(f"{path}:{_key_line(text, key)}: unknown key {key!r}")
        file_cmd = data.get("command")
        opts = data["options"]
    else:
        file_cmd, opts = None, data
    cmd = command or file_cmd
    if cmd is None:
        raise UsageError(f"{path}: no command given on the command line or in the file")
    if file_cmd and command and file_cmd != command:
        raise UsageError(f"{path}:{_key_line(text, 'command')}: file is for {file_cmd!r}, not {command!r}")
    allowed = {**COMMON, **OPTIONS[cmd]}
    out = {}
    for key, val in opts.items():
        if key not in allowed:
            raise UsageError(f"{path}:{_key_line(text, key)}: unknown option {key!r} for {cmd!r}")
        try:
            out[key] = None if val is None else allowed[key][0](val)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"{path}:{_key_line(text, key)}: bad value for {key!r}: {exc}") from None
    return cmd, out


def resolve_options(cmd: str, ns: argparse.Namespace, file_opts: dict) -> dict:
    spec = {**COMMON, **OPTIONS[cmd]}
    opts = {k: (list(v[1]) if isinstance(v[1], list) else v[1]) for k, v in spec.items()}
    opts.update({k: v for k, v in file_opts.items()})
    for k in spec:
        v = getattr(ns, k, None)
        if v is not None:
            opts[k] = v
    missing = [k for k in REQUIRED.get(cmd, []) if opts.get(k) is None]
    if missing:
        raise UsageError(f"{cmd}: missing required option(s) " + ", ".join("--" + m.replace("_", "-") for m in missing))
    if opts["seed"] is None:
        from .loewner import resolve_seed

        opts["seed"] = resolve_seed(None)
    return opts


# ---------------------------------------------------------------- commands


def _spec(o):
    from .screening import make_spec

    kw = {"eta": o["eta"]}
    if o.get("pattern"):
        kw["pattern"] = o["pattern"]
    return make_spec(o["family"], o["n"], o["m"], o["kappa"], **kw)


def _psi(o):
    from .screening import PartitionEvaluator, fermionic_ground

    if o["family"] == "ground" and o["m"] == 0:
        k = o["kappa"]
        return lambda th: fermionic_ground(th, k), True
    return PartitionEvaluator(_spec(o)), False


def _samples(o):
    from .nullvec import random_chamber_points

    rng = np.random.default_rng(o["seed"])
    gap = min(0.5, 2 * math.pi / (2 * o["n"]))
    return random_chamber_points(o["n"], o["samples"], rng, min_gap=gap)


def _scheme(o, closed):
    from .finite_diff import FiniteDiffScheme

    step = o["step"] if o["step"] is not None else (1e-3 if closed else 1e-2)
    return FiniteDiffScheme(step=step)


def cmd_params(o):
    from .params import classical_dimension, derive_params

    p = derive_params(o["kappa"])
    dims = [{"sigma": s, "lambda": p.dimension(s),
             "lambda_classical": classical_dimension(s, o["half_square"])} for s in o["sigma"]]
    res = {"kappa": p.kappa, "a": p.a, "b": p.b, "central_charge": p.central_charge,
           "fugacity": p.fugacity, "screening_charges": list(p.screening_charges), "dimensions": dims}
    return EXIT_OK, res


def cmd_patterns(o):
    from .linkpatterns import enumerate_patterns

    pats = enumerate_patterns(o["kind"], o["n"], o["m"])
    for p in pats:
        print(p.to_text())
    return EXIT_OK, {"count": len(pats), "patterns": [p.to_text() for p in pats]}


def cmd_meander(o):
    from .linkpatterns import meander_matrix
    from .params import derive_params

    M = meander_matrix(derive_params(o["kappa"]), o["n"], o["m"], o["kind"])
    det = M.determinant()
    res = json.loads(M.to_json())
    res.update(determinant=det, condition_number=M.condition_number(), symmetric=M.is_symmetric())
    code = EXIT_OK
    if o["check_invertible"]:
        res["invertible"] = bool(det != 0 and M.condition_number() < 1e14)
        code = EXIT_OK if res["invertible"] else EXIT_TOLERANCE
    return code, res


def cmd_eval_psi(o):
    psi, _ = _psi(o)
    v = complex(psi(np.array(o["theta"])))
    return EXIT_OK, {"theta": o["theta"], "value": [v.real, v.imag]}


def _verdict(res, ok):
    res["pass"] = bool(ok)
    return (EXIT_OK if ok else EXIT_TOLERANCE), res


def cmd_verify_nullvec(o):
    from .nullvec import ResidualReport, estimate_h
    from .targets import lookup

    psi, closed = _psi(o)
    if not closed:
        _spec(o)
    report = ResidualReport(kappa=o["kappa"], family=o["family"])
    sch = _scheme(o, closed)
    h, spread = estimate_h(psi, _samples(o), o["kappa"], sch, report)
    t = lookup("h", o["family"])
    target = t.value(o["n"], o["m"], o["kappa"], o["eta"])
    tol = o["tol"] if o["tol"] is not None else (1e-6 if closed else 1e-3)
    res = {"h": h, "spread": spread, "target": target, "formula": t.formula, "tol": tol,
           "report": json.loads(report.to_json())}
    return _verdict(res, abs(h - target) < tol and spread < 10 * tol)


def cmd_verify_rotation(o):
    from .nullvec import ResidualReport, estimate_omega
    from .targets import lookup

    psi, closed = _psi(o)
    report = ResidualReport(kappa=o["kappa"], family=o["family"])
    om, spread = estimate_omega(psi, _samples(o), _scheme(o, closed), report)
    t = lookup("omega", o["family"])
    target = t.value(o["n"], o["m"], o["kappa"], o["eta"])
    tol = o["tol"] if o["tol"] is not None else (1e-6 if closed else 1e-4)
    res = {"omega": om, "spread": spread, "shift_estimate": report.omega_shift_estimate,
           "target": target, "formula": t.formula, "tol": tol,
           "convention": "psi(theta + s) = exp(omega s) psi(theta)"}
    return _verdict(res, abs(om - target) < tol)


def cmd_verify_ward(o):
    from .nullvec import check_ward
    from .params import derive_params
    from .screening import HalfPlaneMaster

    J = HalfPlaneMaster(o["n"], o["m"], derive_params(o["kappa"]))
    rng = np.random.default_rng(o["seed"])
    z = np.sort(rng.uniform(-1.5, 1.5, o["n"]))
    while o["n"] > 1 and np.diff(z).min() < 0.3:
        z = np.sort(rng.uniform(-1.5, 1.5, o["n"]))
    u = complex(rng.uniform(-1, 1), rng.uniform(0.6, 1.5))
    dims = J.dimensions()
    r = check_ward(J, z, u, u.conjugate(), dims)
    res = {"z": z.tolist(), "u": [u.real, u.imag], "dimensions": list(dims),
           "translation": r.translation, "dilation": r.dilation, "special": r.special, "tol": o["tol"]}
    return _verdict(res, r.max() < o["tol"])


def cmd_verify_cs(o):
    from .calogero import CSParams, cs_eigencheck
    from .nullvec import estimate_h
    from .targets import lookup

    psi, closed = _psi(o)
    sch = _scheme(o, closed)
    samples = _samples(o)
    h = lookup("h", o["family"]).value(o["n"], o["m"], o["kappa"], o["eta"])
    h_meas, _ = estimate_h(psi, samples, o["kappa"], sch)
    rep = cs_eigencheck(psi, CSParams.from_kappa(o["kappa"], o["n"]), samples, h, sch, family=o["family"])
    tol = o["tol"] if o["tol"] is not None else (1e-5 if closed else 1e-3)
    res = json.loads(rep.to_json())
    res.update(h=h, h_measured=h_meas, tol=tol)
    return _verdict(res, abs(rep.E_measured - rep.E_theory) < tol)


def cmd_verify_commutators(o):
    from .nullvec import commutator_check_generators, commutator_check_nullvec, drift_from_psi

    psi, closed = _psi(o)
    tol = o["tol"] if o["tol"] is not None else (1e-4 if closed else 1e-3)
    drift = drift_from_psi(psi, o["kappa"], _scheme(o, closed))
    nv, gen = [], []
    for th in _samples(o):
        for j in range(o["n"]):
            for k in range(j + 1, o["n"]):
                nv.append(commutator_check_nullvec(psi, th, (j, k), o["kappa"]))
        gen.append(commutator_check_generators(drift, lambda t: math.cos(t[0]) * t[-1], th, o["kappa"]))
    res = {"nullvec_max": max(nv, default=0.0), "generator_max": max(gen), "tol": tol}
    return _verdict(res, res["nullvec_max"] < tol and res["generator_max"] < tol)


def cmd_simulate(o):
    from .loewner import SimConfig, run_ensemble, run_simulation

    n = o["n"]
    theta0 = o["theta0"] or [2 * math.pi * j / n for j in range(n)]
    mode = o["drift_mode"] or ("kappa_zero" if o["kappa"] == 0 else
                               "closed_form_fermionic" if n > 1 else "rational")
    psi_spec = None
    if mode == "numeric_psi":
        psi_spec = _spec({**o, "eta": 0.0, "pattern": None})
    cfg = SimConfig(
        kappa=o["kappa"], n=n, theta0=tuple(theta0), drift_mode=mode,
        nu=tuple(o["nu"]) if o["nu"] else None, dt=o["dt"], T=o["T"], seed=o["seed"],
        collision_eps=o["collision_eps"], tip_offset=o["tip_offset"], psi_spec=psi_spec,
        marked=tuple(o["marked"]), marked_charges=tuple(o["marked_charges"]),
        rho=tuple(o["rho"]) if o["rho"] is not None else None, rho_convention=o["rho_convention"],
        n_tips=o["n_tips"],
    ).validate()
    os.makedirs(o["out"], exist_ok=True)
    base = os.path.join(o["out"], o["prefix"])
    if o["ensemble"] > 1:
        results = run_ensemble(cfg, o["ensemble"], o["jobs"])
        files = []
        for i, r in enumerate(results):
            files.extend(r.write(f"{base}_{i:04d}"))
    else:
        results = [run_simulation(cfg)]
        files = list(results[0].write(base))
    halts = [r.halt_reason for r in results]
    res = {"outputs": files, "halt_reasons": halts,
           "capacity_slopes": [r.capacity_slope() for r in results]}
    return (EXIT_HALT if "blowup" in halts else EXIT_OK), res


def cmd_calibrate_pochhammer(o):
    from .contour import beta_calibration

    beta = beta_calibration(-0.5, -0.5)
    rel = abs(beta.contour - 4 * math.pi) / (4 * math.pi)
    rng = np.random.default_rng(o["seed"])
    rows = []
    for _ in range(o["pairs"]):
        p = complex(rng.uniform(-0.95, 1.5), rng.uniform(-1, 1))
        q = complex(rng.uniform(-0.95, 1.5), rng.uniform(-1, 1))
        c = beta_calibration(p, q)
        rows.append({"p": [p.real, p.imag], "q": [q.real, q.imag], "difference": abs(c.contour - c.reduction),
                     "combined_err": c.combined_err, "agree": c.agree})
    res = {"beta_case": [beta.contour.real, beta.contour.imag], "beta_relative_error": rel,
           "pairs": rows, "tol": o["tol"]}
    return _verdict(res, rel < o["tol"] and all(r["agree"] for r in rows))


def cmd_calibrate_fd_order(o):
    from .nullvec import fd_order_check, random_chamber_points
    from .screening import fermionic_ground

    k, n = o["kappa"], o["n"]
    th = random_chamber_points(n, 1, np.random.default_rng(o["seed"]), min_gap=1.0)[0]
    coarse, fine, ratio = fd_order_check(lambda t: fermionic_ground(t, k), th, k, (1 - n * n) / (2 * k), o["step"])
    res = {"theta": th.tolist(), "coarse": coarse, "fine": fine, "ratio": ratio, "min_ratio": 12.0}
    return _verdict(res, ratio >= 12.0)


COMMANDS: dict[str, Callable[[dict], tuple[int, Any]]] = {
    "params": cmd_params,
    "patterns": cmd_patterns,
    "meander": cmd_meander,
    "eval-psi": cmd_eval_psi,
    "verify nullvec": cmd_verify_nullvec,
    "verify rotation": cmd_verify_rotation,
    "verify ward": cmd_verify_ward,
    "verify cs": cmd_verify_cs,
    "verify commutators": cmd_verify_commutators,
    "simulate": cmd_simulate,
    "calibrate pochhammer": cmd_calibrate_pochhammer,
    "calibrate fd-order": cmd_calibrate_fd_order,
}


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _jsonable(x):
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(type(x))


def write_manifest(path: str, cmd: str, opts: dict, code: int, result: Any, elapsed: float) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    body = {"schema_id": MANIFEST_SCHEMA, "version": _version(), "command": cmd,
            "options": opts, "exit_code": code, "elapsed_s": elapsed, "result": result}
    with open(path, "w") as fh:
        json.dump(body, fh, indent=1, sort_keys=True, default=_jsonable)


def dispatch(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    cmd = ns.command
    if cmd in ("verify", "calibrate"):
        cmd = f"{cmd} {ns.mode}"
    cfg_path = getattr(ns, "sub_config", None) or ns.config
    try:
        file_opts = {}
        if cfg_path:
            cmd, file_opts = load_config(cfg_path, cmd)
        if cmd is None:
            parser.print_usage(sys.stderr)
            raise UsageError("no command given")
        opts = resolve_options(cmd, ns, file_opts)
    except UsageError as exc:
        print(f"radial-sle: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    t0 = time.perf_counter()
    try:
        code, result = COMMANDS[cmd](opts)
    except (ValueError, KeyError, TypeError) as exc:
        print(f"radial-sle: error: {exc}", file=sys.stderr)
        code, result = EXIT_INVALID, {"error": str(exc)}
    elapsed = time.perf_counter() - t0
    if cmd != "patterns":
        print(json.dumps(result, indent=1, default=_jsonable))
    manifest = opts["manifest"] or os.path.join(opts["out"], "manifest.json")
    write_manifest(manifest, cmd, opts, code, result, elapsed)
    return code


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
