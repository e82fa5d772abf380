"""Command-line front end.

Every subcommand reads its inputs, calls module operations and writes a JSON
(or CSV) report.  Reports are written with sorted keys and no timestamps, so
identical (config, seed, version) gives byte-identical files.

Exit codes: 0 success, 1 invalid input, 2 certification or regression failure,
3 resource cap.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from importlib import resources

import numpy as np

from . import __version__, analytic, clifford, dynamics, golden, lattice, pulse, qudit
from .errors import LaceprepError

CODE_PROTOCOLS = tuple(clifford.CODES)
QUDIT_PROTOCOLS = ("z3tc", "s3", "d4")


class ConfigError(LaceprepError):
    exit_code = 1


# ---------------------------------------------------------------------------
# schema and serialisation


def load_schema() -> dict:
    text = resources.files("laceprep").joinpath("schemas/config.schema.json").read_text()
    return json.loads(text)


def validate(instance, definition: str | None = None) -> None:
    """Validate against the shipped schema (or one of its ``$defs``); raise ConfigError with the schema path."""
    import jsonschema

    schema = load_schema()
    if definition is not None:
        schema = {"$schema": schema["$schema"], "$defs": schema["$defs"], "$ref": f"#/$defs/{definition}"}
    validator = jsonschema.Draft202012Validator(schema)
    err = jsonschema.exceptions.best_match(validator.iter_errors(instance))
    if err is not None:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        spath = "/".join(str(p) for p in err.absolute_schema_path)
        raise ConfigError(f"config invalid at {where} (schema path {spath}): {err.message}")


def clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars, non-finite floats, complex numbers, sets, fractions."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted(clean(v) for v in obj)
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": clean(obj.real), "im": clean(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def dumps(obj) -> str:
    return json.dumps(clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def config_hash(config) -> str:
    canon = json.dumps(clean(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def provenance(config, seeds) -> dict:
    return {"version": __version__, "config_sha256": config_hash(config), "seed": seeds}


def emit(report: dict, path: str | None) -> None:
    text = dumps(report)
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def read_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None


def parse_extents(text: str) -> tuple[int, ...]:
    try:
        ext = tuple(int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"extents look like 4x4 or 3x3x2, got {text!r}") from None
    if not ext or any(e < 1 for e in ext):
        raise argparse.ArgumentTypeError("extents must be positive")
    return ext


def load_schedule(path: str | None, scheme: str | None):
    if path and scheme:
        raise ConfigError("give either --schedule or --scheme, not both")
    if scheme:
        if scheme not in pulse.NAMED_SCHEMES:
            raise ConfigError(f"unknown scheme {scheme!r}; known: {', '.join(pulse.NAMED_SCHEMES)}")
        return pulse.NAMED_SCHEMES[scheme][0]()
    if path:
        data = read_json(path)
        validate(data, "schedule")
        return pulse.PulseSchedule.from_dict(data)
    return None


def schedule_from_config(ref: dict | None):
    if ref is None:
        return None
    if "scheme" in ref:
        return pulse.NAMED_SCHEMES[ref["scheme"]][0]()
    return pulse.PulseSchedule.from_dict(ref)


def pool_map(fn, items, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# report builders shared by the subcommands and ``run``


def certification_report(protocol: str, L: int, seed: int, extents, basis: str, convention: str) -> dict:
    run, rep = clifford.certify_run(protocol, L, seed, extents, basis, convention)
    lat = run.lattice
    return {
        "lattice": {"kind": lat.kind, "extents": list(lat.extents), "n_sites": lat.n},
        "record": run.record.to_dict(),
        "frame": run.frame.to_dict(),
        "checks": [
            {"kind": c.kind, "x": sorted(c.x), "z": sorted(c.z), "value": v} for c, v in zip(run.checks, rep.check_values)
        ],
        "k": rep.k,
        "k_expected": rep.k_expected,
        "code": rep.to_dict(),
    }


def qudit_report(protocol: str, L: int, seed: int, post_select: bool, shots: int = 0, cap: int = qudit.DEFAULT_CAP):
    if protocol == "z3tc":
        rep = qudit.prepare_z3_toric(L, post_select, seed, cap)
        _, info = qudit.z3_tableau_protocol(L, seed)
        out = rep.to_dict()
        out["tableau"] = {"k": info["k"], "ground_space_dimension": info["ground_space_dimension"]}
    elif protocol == "s3":
        rep = qudit.prepare_s3(L, post_select, seed, cap)
        out = rep.to_dict()
    elif protocol == "d4":
        rep = qudit.prepare_d4(L, post_select, seed, shots)
        out = rep.to_dict()
    else:
        raise ConfigError(f"unknown qudit protocol {protocol!r}")
    out["protocol"] = protocol
    out["post_select"] = post_select
    return rep, out


def dynamics_params(data: dict | None) -> dynamics.PhysicalParams:
    data = data or {}
    validate(data, "params")
    return dynamics.PhysicalParams(**data)


def dynamics_steps(data, params: dynamics.PhysicalParams, corrective: bool = True):
    if data is None:
        return dynamics.methods_recipe(params, corrective)
    validate(data, "steps")
    return [dynamics.ScheduleStep.from_dict(d) for d in data]


# ---------------------------------------------------------------------------
# subcommands


def cmd_lattice(args) -> int:
    lat = lattice.build_lattice(args.kind, args.extents, args.boundary)
    shells = lattice.coupling_shells(lat, args.rmax, args.reference, args.level)
    opts = {"kind": args.kind, "extents": list(args.extents), "boundary": args.boundary,
            "r_max": args.rmax, "level": args.level, "reference": args.reference}
    emit({**opts, "n_sites": lat.n, "shells": [s.to_dict() for s in shells], "provenance": provenance(opts, None)}, args.out)
    return 0


def cmd_analytic(args) -> int:
    sched = load_schedule(args.schedule, args.scheme)
    rep = analytic.analyze(args.lattice, args.species, sched, args.initial, args.rmax)
    opts = {"lattice": args.lattice, "species": args.species, "initial": args.initial, "r_max": args.rmax,
            "schedule": sched.to_dict() if sched is not None else None}
    out = rep.to_dict()
    out["schedule"] = opts["schedule"]
    out["provenance"] = provenance(opts, None)
    emit(out, args.out)
    return 0


def cmd_prepare(args) -> int:
    opts = {k: getattr(args, k) for k in ("lattice", "extents", "L", "measure", "level", "basis", "convention", "seed", "certify")}
    if args.certify:
        if args.measure != "A" or args.level != "species":
            raise ConfigError("certification measures the A species; drop --measure/--level")
        if args.lattice and args.lattice != clifford.CODES[args.certify][0]:
            raise ConfigError(f"{args.certify} is prepared on {clifford.CODES[args.certify][0]}, not {args.lattice}")
        out = certification_report(args.certify, args.L, args.seed, args.extents, args.basis, args.convention)
    else:
        if not args.lattice or not args.extents:
            raise ConfigError("--lattice and --extents are required without --certify")
        if args.basis == "auto":
            raise ConfigError("--basis auto needs --certify")
        lat = lattice.build_lattice(args.lattice, args.extents, args.boundary)
        tab = clifford.prepare_cluster(lat, "plus", args.convention)
        tab, rec = clifford.measure_sublattice(tab, lat, args.measure, args.basis, args.seed, args.level)
        out = {"lattice": {"kind": lat.kind, "extents": list(lat.extents), "n_sites": lat.n}, "record": rec.to_dict()}
    out["provenance"] = provenance(opts, args.seed)
    emit(out, args.out)
    return 0


def _scheme_lattice(name: str, kind: str | None, extents):
    want = pulse.NAMED_SCHEMES[name][1]
    kind = kind or want
    if extents is None:
        return analytic.bulk_lattice(kind) if kind in analytic.BULK_EXTENTS else lattice.build_lattice(kind, (16,))
    return lattice.build_lattice(kind, extents)


def cmd_pulse(args) -> int:
    if args.scheme not in pulse.NAMED_SCHEMES:
        raise ConfigError(f"unknown scheme {args.scheme!r}; known: {', '.join(pulse.NAMED_SCHEMES)}")
    if args.action == "show":
        emit(pulse.NAMED_SCHEMES[args.scheme][0]().to_dict(), args.out)
        return 0
    lat = _scheme_lattice(args.scheme, args.lattice, args.extents)
    rep = pulse.verify_scheme(args.scheme, lat)
    opts = {"scheme": args.scheme, "lattice": lat.kind, "extents": list(lat.extents)}
    emit({"scheme": rep.name, "passed": rep.passed, "failures": rep.failures, "residuals": rep.residuals,
          "schedule": rep.schedule.to_dict(), "lattice": opts, "provenance": provenance(opts, None)}, args.out)
    if not rep.passed:
        print(f"scheme {rep.name} failed: {'; '.join(rep.failures[:5])}", file=sys.stderr)
        return 2
    return 0


def cmd_qudit(args) -> int:
    rep, out = qudit_report(args.protocol, args.L, args.seed, args.post_select, args.shots, args.cap)
    opts = {k: getattr(args, k) for k in ("protocol", "L", "seed", "post_select", "shots", "cap")}
    if args.dump:
        rep.register.dump(args.dump)
        out["dump"] = {"path": os.path.basename(args.dump), "dims": list(rep.register.dims), "format": "LPAMP"}
    out["provenance"] = provenance(opts, args.seed)
    emit(out, args.out)
    return 0


def cmd_synth(args) -> int:
    _, rep = qudit.synthesize_gate_from_hamiltonian(args.gate, args.U, args.tol)
    out = rep.to_dict()
    out["provenance"] = provenance({"gate": args.gate, "U": args.U, "tol": args.tol}, None)
    emit(out, args.out)
    return 0


def cmd_dynamics(args) -> int:
    pdata = read_json(args.params) if args.params else {}
    params = dynamics_params(pdata)
    sdata = read_json(args.steps) if args.steps else None
    steps = dynamics_steps(sdata, params, not args.no_corrective)
    res = dynamics.evolve_chain(params, steps, N=args.N, tol=args.tol)
    text = res.csv()
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    if args.report:
        out = res.to_dict()
        out["steps"] = [s.to_dict() for s in steps]
        out["provenance"] = provenance({"params": pdata, "steps": sdata, "N": args.N, "tol": args.tol,
                                        "corrective": not args.no_corrective}, None)
        emit(out, args.report)
    return 0


def run_config(config: dict, threads: int = 1) -> tuple[dict, str | None]:
    """Execute a validated config; returns the report and an optional CSV table."""
    validate(config)
    proto = config["protocol"]
    seeds = config.get("seeds", [0])
    L = config.get("L", 2)
    report: dict = {"protocol": proto}
    csv = None
    if proto in CODE_PROTOCOLS:
        meas = config.get("measurement", {})
        lat_cfg = config.get("lattice")
        if lat_cfg and lat_cfg["kind"] != clifford.CODES[proto][0]:
            raise ConfigError(f"{proto} is prepared on {clifford.CODES[proto][0]}, not {lat_cfg['kind']}")
        extents = tuple(lat_cfg["extents"]) if lat_cfg and "extents" in lat_cfg else None
        runs = pool_map(
            lambda s: certification_report(proto, L, s, extents, meas.get("basis", "X"), meas.get("convention", "cz")),
            seeds, threads,
        )
        report["certification"] = [{"seed": s, **r} for s, r in zip(seeds, runs)]
        kind = clifford.CODES[proto][0]
        if proto == "ghz" or "cat" in config:
            cat = config.get("cat", {})
            n = cat.get("n", runs[0]["lattice"]["n_sites"] // 2)
            report["xi"] = analytic.cat_xi_report(cat.get("t_over_tspt", 0.9), n, cat.get("trials", 10000), seeds[0])
        if "species" in config or "schedule" in config:
            sched = schedule_from_config(config.get("schedule"))
            report["analytic"] = analytic.analyze(kind, config.get("species", "dual"), sched).to_dict()
    elif proto in QUDIT_PROTOCOLS:
        q = config.get("qudit", {})
        reps = pool_map(lambda s: qudit_report(proto, L, s, q.get("post_select", False), q.get("shots", 0))[1],
                        seeds, threads)
        report["runs"] = [{"seed": s, **r} for s, r in zip(seeds, reps)]
    else:
        d = config.get("dynamics", {})
        params = dynamics_params(d.get("params"))
        steps = dynamics_steps(d.get("steps"), params)
        res = dynamics.evolve_chain(params, steps, N=d.get("N", 14), tol=d.get("tol", 1e-9))
        report["dynamics"] = res.to_dict()
        csv = res.csv()
    report["provenance"] = provenance(config, seeds)
    return report, csv


def cmd_run(args) -> int:
    config = read_json(args.config)
    report, csv = run_config(config, args.threads)
    out = config.get("output", {})
    emit(report, args.out or out.get("report"))
    if csv is not None and out.get("csv"):
        with open(out["csv"], "w") as fh:
            fh.write(csv)
    return 0


def cmd_regress(args) -> int:
    if args.suite != "paper":
        raise ConfigError(f"unknown suite {args.suite!r}")
    rows = golden.run_suite(args.key or None)
    if not rows:
        raise ConfigError("no golden numbers selected")
    for r in rows:
        rel = {"close": "+/-", "ge": ">=", "lt": "<"}[r["relation"]]
        mark = "PASS" if r["pass"] else "FAIL"
        print(f"{mark} [{r['criterion']:>2}] {r['key']:<36} {r['value']:.10g} (quoted {r['quoted']:g} {rel} {r['tol']:g})")
    missed = [r["key"] for r in rows if not r["pass"]]
    if args.out:
        emit({"suite": args.suite, "results": rows, "missed": missed,
              "provenance": provenance({"suite": args.suite, "keys": args.key}, None)}, args.out)
    print(f"{len(rows) - len(missed)}/{len(rows)} golden numbers reproduced", file=sys.stderr)
    return 2 if missed else 0


# ---------------------------------------------------------------------------
# parser


class Parser(argparse.ArgumentParser):
    """Usage errors are validation errors: exit 1, not argparse's 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = Parser(prog="laceprep", description="Rydberg-array state-preparation toolkit.")
    p.add_argument("--version", action="version", version=f"laceprep {__version__}")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="cap on worker threads for per-seed work (default: available cores)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("lattice", help="coupling-shell table of a lattice")
    s.add_argument("--kind", required=True, choices=lattice.KINDS)
    s.add_argument("--extents", required=True, type=parse_extents, help="e.g. 4x4 or 3x3x2")
    s.add_argument("--boundary", default="periodic", choices=["periodic", "open"])
    s.add_argument("--rmax", type=float, default=lattice.DEFAULT_RMAX, help="radius cutoff in units of a")
    s.add_argument("--level", default="species", choices=["species", "sublattice"])
    s.add_argument("--reference", type=int, default=None, help="reference site (needed for open boundaries)")
    s.add_argument("--out", help="output JSON (default stdout)")
    s.set_defaults(func=cmd_lattice)

    s = sub.add_parser("analytic", help="closed-form stabilizer expectations and bounds")
    s.add_argument("--lattice", required=True, choices=lattice.KINDS)
    s.add_argument("--species", default="dual", choices=["single", "dual"])
    s.add_argument("--schedule", help="schedule JSON file {segments: [...]}")
    s.add_argument("--scheme", help="named pulse scheme instead of a file")
    s.add_argument("--initial", default="minus", choices=["minus", "plus"])
    s.add_argument("--rmax", type=float, default=lattice.DEFAULT_RMAX)
    s.add_argument("--out")
    s.set_defaults(func=cmd_analytic)

    s = sub.add_parser("prepare", help="prepare a cluster state, measure a sublattice, optionally certify a code")
    s.add_argument("--lattice", choices=lattice.KINDS)
    s.add_argument("--extents", type=parse_extents)
    s.add_argument("--boundary", default="periodic", choices=["periodic", "open"])
    s.add_argument("--L", type=int, default=3, help="linear size used with --certify when --extents is absent")
    s.add_argument("--measure", default="A", help="label of the measured sites")
    s.add_argument("--level", default="species", choices=["species", "sublattice"])
    s.add_argument("--basis", default="X", choices=["X", "Y", "Z", "auto"])
    s.add_argument("--convention", default="cz", choices=["cz", "ising"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--certify", choices=CODE_PROTOCOLS, help="expected code")
    s.add_argument("--out")
    s.set_defaults(func=cmd_prepare)

    s = sub.add_parser("pulse", help="named pulse schemes")
    s.add_argument("action", choices=["verify", "show"])
    s.add_argument("--scheme", required=True)
    s.add_argument("--lattice", choices=lattice.KINDS, help="override the scheme's lattice kind")
    s.add_argument("--extents", type=parse_extents)
    s.add_argument("--out")
    s.set_defaults(func=cmd_pulse)

    s = sub.add_parser("qudit", help="qutrit/qubit register protocols")
    s.add_argument("--protocol", required=True, choices=QUDIT_PROTOCOLS)
    s.add_argument("--L", type=int, default=2)
    s.add_argument("--post-select", action="store_true", help="keep only the trivial outcome branch")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--shots", type=int, default=0, help="d4 only: sampled outcome strings for the frequency test")
    s.add_argument("--cap", type=int, default=qudit.DEFAULT_CAP, help="largest register dimension")
    s.add_argument("--dump", help="write the final amplitudes in the LPAMP binary format")
    s.add_argument("--out")
    s.set_defaults(func=cmd_qudit)

    s = sub.add_parser("synth", help="gate synthesis from native qutrit interactions")
    s.add_argument("--gate", required=True, choices=["AB", "BC", "CD"])
    s.add_argument("--U", type=float, default=1.0)
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--out")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("dynamics", help="finite-pulse ring dynamics, CSV trace")
    s.add_argument("--params", help="physical parameters JSON")
    s.add_argument("--steps", help="step list JSON (default: the preparation recipe)")
    s.add_argument("--no-corrective", action="store_true", help="drop the weak corrective X pulse from the default recipe")
    s.add_argument("--N", type=int, default=14)
    s.add_argument("--tol", type=float, default=1e-9)
    s.add_argument("--out", help="CSV with time_ns, fidelity_per_site, stabilizer (default stdout)")
    s.add_argument("--report", help="summary JSON")
    s.set_defaults(func=cmd_dynamics)

    s = sub.add_parser("run", help="execute a protocol config file")
    s.add_argument("config")
    s.add_argument("--out", help="report path (overrides output.report)")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("regress", help="recompute the golden numbers")
    s.add_argument("--suite", default="paper")
    s.add_argument("--key", action="append", help="restrict to these keys (repeatable)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_regress)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return int(exc.code or 0)
    if args.threads < 1:
        print("laceprep: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except LaceprepError as exc:
        print(f"laceprep: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, KeyError) as exc:
        print(f"laceprep: invalid input: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
