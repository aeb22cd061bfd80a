"""``sphkern`` command line: certify, build Gram matrices, interpolate, probe.

Exit codes: 0 SPD certified (or success), 1 PD only, 2 indeterminate,
3 not strictly positive definite (or a singular Gram / found witness),
4 input error. ``verify-witness`` exits 0 when the witness holds and 2 when
it does not.
"""

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import fileio
from . import interp_engine as ie
from .exceptions import (
    DuplicatePointsError,
    NotApplicableError,
    SingularGramError,
    SphKernError,
)
from .kernel_model import summability_bound
from .pd_certify import Verdict, certify

EXIT_OK = 0
EXIT_PD = 1
EXIT_INDETERMINATE = 2
EXIT_NOT_SPD = 3
EXIT_INPUT = 4


class InputError(Exception):
    pass


def _say(msg):
    print(msg, file=sys.stderr)


def _sidecar(path, suffix):
    path = Path(path)
    return path.with_name(path.stem + suffix)


def _load_points(path, scheme):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        polar, values, _ = fileio.load_points(path, scheme.ambient_dim)
    for w in caught:
        _say(f"warning: {w.message}")
    return polar, values


def _duplicate_message(exc):
    i, j = exc.pair
    return f"data rows {i + 1} and {j + 1} are not distinct (geodesic distance {exc.distance:.3e})"


# ---------------------------------------------------------------------------
# subcommands


def cmd_check(args):
    scheme, doc = fileio.load_spec(args.spec)
    cert = certify(scheme, tol=args.tol, sigma=args.sigma, progression_cap=args.progression_cap)
    report = cert.to_dict()
    report["spec"] = {"path": Path(args.spec).name, "ambient_dim": scheme.ambient_dim,
                      "truncation_degree": scheme.truncation_degree,
                      "type": doc["scheme"]["type"]}
    report["exit_code"] = cert.exit_code
    if args.json_out:
        if args.json_out == "-":
            sys.stdout.write(fileio.dumps(report))
        else:
            fileio.write_json(args.json_out, report)
    if args.json_out != "-":
        print(f"verdict: {cert.verdict.value}")
        for c in cert.conditions:
            print(f"  {c.name:<22} {c.role:<15} {c.status}")
        if cert.witness is not None:
            print(f"witness: {cert.witness.description} "
                  f"({len(cert.witness.coeffs)} points, residual {cert.witness.residual:.3e})")
        elif cert.verdict is Verdict.NOT_SPD:
            failing = next(c for c in cert.conditions if c.refutes)
            print(f"violated: {failing.name} {failing.evidence.get('reason', '')}".rstrip())
    return cert.exit_code


def cmd_gram(args):
    scheme, _ = fileio.load_spec(args.spec)
    polar, _ = _load_points(args.points, scheme)
    try:
        gs = ie.assemble_gram(scheme, polar)
    except DuplicatePointsError as exc:
        raise InputError(_duplicate_message(exc)) from None
    fileio.atomic_write(args.out, fileio.gram_csv(gs.gram))
    meta = {"n_points": int(polar.shape[0]), "lambda_min": gs.lambda_min,
            "trace": gs.trace, "asymmetry": gs.asymmetry}
    fileio.write_json(_sidecar(args.out, ".meta.json"), meta)
    print(f"wrote {args.out} ({polar.shape[0]}x{polar.shape[0]}), lambda_min {gs.lambda_min:.6e}")
    return EXIT_OK


def cmd_interp(args):
    scheme, doc = fileio.load_spec(args.spec)
    polar, values = _load_points(args.data, scheme)
    if values is None:
        raise InputError(f"{args.data}: interpolation data needs value_re,value_im columns")
    try:
        gs = ie.assemble_gram(scheme, polar)
        gs = ie.solve_interpolation(gs, values)
    except DuplicatePointsError as exc:
        raise InputError(_duplicate_message(exc)) from None
    except SingularGramError as exc:
        path = _sidecar(args.out_model, ".witness.json")
        body = {"lambda_min": exc.lambda_min, "witness": exc.witness.to_dict(),
                "spec": doc}
        fileio.write_json(path, body)
        _say(f"singular Gram matrix (lambda_min {exc.lambda_min:.3e}); witness written to {path}")
        return EXIT_NOT_SPD
    model = {
        "spec": doc,
        "points_polar": gs.points,
        "coefficients_re": np.real(gs.coefficients),
        "coefficients_im": np.imag(gs.coefficients),
        "values_re": np.real(gs.values),
        "values_im": np.imag(gs.values),
        "residual": gs.residual,
        "lambda_min": gs.lambda_min,
    }
    fileio.write_json(args.out_model, model)
    print(f"wrote {args.out_model}: {polar.shape[0]} sites, residual {gs.residual:.3e}")
    return EXIT_OK


def load_model(path):
    data = fileio.read_json(path)
    try:
        scheme, _ = fileio.parse_spec(json.dumps(data["spec"]))
        points = np.asarray(data["points_polar"], dtype=float)
        coeffs = np.asarray(data["coefficients_re"], float) + 1j * np.asarray(
            data["coefficients_im"], float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: malformed model ({exc})") from None
    return scheme, points, coeffs


def cmd_eval(args):
    scheme, points, coeffs = load_model(args.model)
    zeta, _ = _load_points(args.points, scheme)
    vals = ie.eval_interpolant(scheme, points, coeffs, zeta)
    text = fileio.values_csv(np.atleast_1d(vals))
    if args.out:
        fileio.atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_probe(args):
    scheme, _ = fileio.load_spec(args.spec)
    if args.sets < 0 or args.points < 1:
        raise InputError("--sets must be >= 0 and --points >= 1")
    report = ie.probe_spd(scheme, args.sets, args.points, seed=args.seed,
                          antipodal=args.antipodal)
    body = report.to_dict()
    body["exit_code"] = EXIT_NOT_SPD if report.witnesses else EXIT_OK
    if args.json_out:
        fileio.write_json(args.json_out, body)
    mn = report.min_normalized
    mn_text = "n/a" if mn is None else f"{mn:.6e}"
    print(f"probe: {args.sets} sets x {args.points} points, seed {args.seed}, "
          f"min normalized lambda_min {mn_text}, witnesses {len(report.witnesses)}")
    return body["exit_code"]


def cmd_verify_witness(args):
    scheme, _ = fileio.load_spec(args.spec)
    data = fileio.read_json(args.witness)
    data = data.get("witness", data)
    try:
        wit = ie.Witness.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{args.witness}: malformed witness ({exc})") from None
    q = wit.recompute(scheme)
    ok = wit.verify(scheme)
    print(f"witness {'verified' if ok else 'REJECTED'}: quadratic form {q:.6e}, "
          f"tolerance {wit.tolerance(scheme):.3e}, bound {summability_bound(scheme):.6e}")
    # a rejected witness refutes nothing
    return EXIT_OK if ok else EXIT_INDETERMINATE


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(
        prog="sphkern",
        description="Positive definiteness certificates and interpolation for kernels on spheres.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="certify (strict) positive definiteness of a kernel spec")
    c.add_argument("spec")
    c.add_argument("--tol", type=float, default=1e-10)
    c.add_argument("--progression-cap", type=int, default=16)
    c.add_argument("--sigma", type=float, default=0.5)
    c.add_argument("--json-out", help="write the certificate as JSON ('-' for stdout)")
    c.set_defaults(func=cmd_check)

    g = sub.add_parser("gram", help="write the Gram matrix of a point set")
    g.add_argument("spec")
    g.add_argument("points")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gram)

    i = sub.add_parser("interp", help="solve the interpolation problem for sampled data")
    i.add_argument("spec")
    i.add_argument("data")
    i.add_argument("--out-model", required=True)
    i.set_defaults(func=cmd_interp)

    e = sub.add_parser("eval", help="evaluate an interpolation model at points")
    e.add_argument("model")
    e.add_argument("points")
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("probe", help="search random point sets for singular Gram matrices")
    r.add_argument("spec")
    r.add_argument("--sets", type=int, default=100)
    r.add_argument("--points", type=int, default=20)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--antipodal", action="store_true")
    r.add_argument("--json-out")
    r.set_defaults(func=cmd_probe)

    v = sub.add_parser("verify-witness", help="recompute the quadratic form of a witness file")
    v.add_argument("spec")
    v.add_argument("witness")
    v.set_defaults(func=cmd_verify_witness)
    return p


def _format_warning(message, category, filename, lineno, line=None):
    return f"warning: {message}\n"


def main(argv=None):
    warnings.formatwarning = _format_warning
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (InputError, SphKernError) as exc:
        if isinstance(exc, NotApplicableError):
            _say(f"error: not applicable: {exc}")
        else:
            _say(f"error: {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
