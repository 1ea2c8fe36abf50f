"""Command-line surface: problem ingestion from JSON files, solver dispatch,
machine-readable reports, region traces.

Subcommands: solve, verify, member, trace, check, oracle.  Reports are a
single JSON document on stdout carrying {kind, value(s), witness, certified,
iterations, margins, seed, version, input_digest}.  All numbers are in nats;
``--bits`` converts the displayed values only.

Exit codes: 0 success; 1 a verified inequality was violated (a genuine
finding); 2 invalid input; 3 solver non-convergence under --strict.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys

import numpy as np

from . import __version__, forward, frbl, gaussian_opt, properties, special
from .measures import (
    DiscreteDistribution,
    DiscreteMeasure,
    GaussianChannel,
    GaussianMeasure,
    Kernel,
)

SCHEMA_VERSION = 1

KINDS = {
    "forward_bl",
    "frbl",
    "sdpi",
    "hc_discrete",
    "rhc",
    "rhcn",
    "gaussian_f0",
    "gaussian_bl",
    "wyner",
    "hc_gaussian",
    "keygen",
    "cr_onecom",
    "t2_gaussian",
    "transport",
    "shearer",
    "renyi",
}


class InputError(Exception):
    pass


def _matrix(payload, key):
    try:
        m = np.asarray(payload[key], dtype=float)
    except KeyError:
        raise InputError(f"missing field {key!r}")
    except (TypeError, ValueError):
        raise InputError(f"field {key!r} is not numeric")
    return m


def _vector(payload, key):
    v = _matrix(payload, key)
    if v.ndim != 1:
        raise InputError(f"field {key!r} must be a flat array")
    return v


def _forward_problem(payload):
    try:
        nu = DiscreteMeasure(_vector(payload, "nu"))
        d = payload.get("d")
        d = np.zeros(nu.n) if d is None else np.asarray(d, dtype=float)
        channels = []
        for ch in payload["channels"]:
            K = Kernel(np.asarray(ch["kernel"], dtype=float))
            mu = DiscreteMeasure(np.asarray(ch["mu"], dtype=float))
            channels.append((K, mu, float(ch["c"])))
        return forward.ForwardBLProblem(nu, d, channels)
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(str(e))


def _frbl_problem(payload):
    try:
        reverse = [
            (DiscreteMeasure(np.asarray(r["nu"], dtype=float)), float(r["b"]))
            for r in payload["reverse"]
        ]
        fwd = [
            (
                Kernel(np.asarray(f["kernel"], dtype=float)),
                DiscreteMeasure(np.asarray(f["mu"], dtype=float)),
                float(f["c"]),
            )
            for f in payload["forward"]
        ]
        return frbl.FRBLProblem(reverse, fwd, d=float(payload.get("d", 0.0)))
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(str(e))


def _gaussian_channels(payload):
    chans = []
    for ch in payload["channels"]:
        B = np.atleast_2d(np.asarray(ch["B"], dtype=float))
        N = np.atleast_2d(np.asarray(ch["noise_cov"], dtype=float))
        chans.append((GaussianChannel(B, N), float(ch["c"])))
    return chans


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _scale_for_bits(report, bits):
    if not bits:
        return report
    ln2 = math.log(2.0)

    def conv(x):
        if isinstance(x, float):
            return x / ln2
        if isinstance(x, list):
            return [conv(v) for v in x]
        return x

    for key in ("value", "values", "margins", "rates"):
        if key in report and report[key] is not None:
            report[key] = conv(report[key])
    report["units"] = "bits"
    return report


# ---------------------------------------------------------------------------
# subcommand handlers: each returns (report_body, failed, nonconverged)
# ---------------------------------------------------------------------------


def _run_solve(kind, payload, args):
    opts = forward.BASolverOptions(
        tol=args.tol, restarts=args.restarts, rng_seed=args.seed
    )
    if kind == "forward_bl":
        prob = _forward_problem(payload)
        rep = forward.best_constant(prob, opts)
        return {
            "value": rep.value,
            "witness": rep.argmax_PX.weights,
            "iterations": rep.iterations,
            "certified": False,
            "converged": rep.converged,
        }, False, not rep.converged
    if kind == "frbl":
        prob = _frbl_problem(payload)
        rep = frbl.best_frbl_constant(prob, grid_step=args.grid, rng_seed=args.seed)
        return {
            "value": rep.value,
            "witness": (
                [m.weights for m in rep.argmax_marginals]
                if rep.argmax_marginals
                else None
            ),
            "certified": rep.method == "grid",
            "method": rep.method,
        }, False, False
    if kind == "sdpi":
        QX = DiscreteDistribution(_vector(payload, "QX"))
        K = Kernel(_matrix(payload, "kernel"))
        c = special.sdpi_constant(QX, K, tol=min(args.tol, 1e-4) if args.tol else 1e-4)
        return {"value": c, "certified": QX.n <= 3, "witness": None}, False, False
    if kind == "gaussian_f0":
        chans = _gaussian_channels(payload)
        prob = gaussian_opt.GaussianF0Problem(
            chans,
            c0=float(payload.get("c0", 0.0)),
            M=None if payload.get("M") is None else _matrix(payload, "M"),
            cap=None if payload.get("cap") is None else _matrix(payload, "cap"),
        )
        S, v = gaussian_opt.maximize_f0(prob, rng_seed=args.seed)
        return {"value": v, "witness": S, "certified": False}, False, False
    if kind == "gaussian_bl":
        chans = _gaussian_channels(payload)
        ref = payload.get("reference", "lebesgue")
        if ref != "lebesgue":
            cov = np.asarray(ref["cov"], dtype=float)
            mean = np.asarray(ref.get("mean", np.zeros(cov.shape[0])), dtype=float)
            ref = GaussianMeasure(mean, cov)
        value, S = gaussian_opt.gaussian_bl_constant(
            ref, [ch for ch, _ in chans], [c for _, c in chans], rng_seed=args.seed
        )
        return {"value": value, "witness": S, "certified": False}, False, False
    if kind == "wyner":
        Sigma = _matrix(payload, "Sigma")
        C, Lam = gaussian_opt.wyner_ci(Sigma)
        return {
            "value": C,
            "witness": np.diag(Lam),
            "certified": Sigma.shape[0] <= 3,
        }, False, False
    raise InputError(f"kind {kind!r} has no solve action")


def _run_verify(kind, payload, args):
    if kind == "forward_bl":
        prob = _forward_problem(payload)
        opts = forward.BASolverOptions(
            tol=args.tol, restarts=args.restarts, rng_seed=args.seed
        )
        rep = forward.verify_duality(prob, opts)
        return {
            "passed": rep.passed,
            "margins": [rep.margin],
            "value": rep.details.get("value"),
            "details": rep.details,
            "certified": rep.certified,
        }, not rep.passed, False
    if kind == "renyi":
        Q = _vector(payload, "Q")
        R = _vector(payload, "R")
        g = _vector(payload, "g")
        slack = special.renyi_variational_slack(Q, R, g, float(payload["alpha"]))
        return {
            "value": slack,
            "passed": bool(slack >= -1e-10),
            "margins": [slack],
            "certified": True,
        }, slack < -1e-10, False
    if kind == "t2_gaussian":
        P = GaussianMeasure(_vector(payload, "mean"), _matrix(payload, "cov"))
        lam = float(payload.get("lambda", 1.0))
        margin = gaussian_opt.gaussian_t2_margin(P, lam)
        ok = margin >= -1e-9 or lam < 1.0
        return {
            "value": margin,
            "passed": bool(ok),
            "margins": [margin],
            "certified": True,
        }, not ok, False
    if kind == "transport":
        space = special.MetricSpaceSample(
            _matrix(payload, "dist"), DiscreteDistribution(_vector(payload, "Q"))
        )
        P = DiscreteDistribution(_vector(payload, "P"))
        lhs, rhs = special.transport_vs_entropy(
            space, P, float(payload.get("p", 2.0)), float(payload.get("lambda", 1.0))
        )
        return {
            "values": [lhs, rhs],
            "margins": [rhs - lhs],
            "passed": True,
            "certified": True,
        }, False, False
    if kind == "shearer":
        rep = special.shearer_check([tuple(p) for p in payload["A"]])
        return {
            "passed": rep.passed,
            "margins": [rep.margin],
            "details": rep.details,
            "certified": True,
        }, not rep.passed, False
    if kind == "sdpi":
        QX = DiscreteDistribution(_vector(payload, "QX"))
        K = Kernel(_matrix(payload, "kernel"))
        slack = special.sdpi_functional_slack(
            QX, K, _vector(payload, "f"), float(payload["c"])
        )
        return {
            "value": slack,
            "margins": [slack],
            "passed": bool(slack >= -1e-9),
            "certified": True,
        }, slack < -1e-9, False
    if kind == "frbl":
        prob = _frbl_problem(payload)
        rep = frbl.frbl_functional_check(
            prob,
            [np.asarray(gi, dtype=float) for gi in payload["g"]],
            [np.asarray(fj, dtype=float) for fj in payload["f"]],
        )
        return {
            "passed": rep.passed,
            "margins": [rep.margin],
            "details": rep.details,
            "certified": True,
        }, not rep.passed, False
    if kind == "cr_onecom":
        joint = gaussian_opt.GaussianJointSource(
            _matrix(payload, "Sigma"),
            [(b["name"], b["indices"]) for b in payload["blocks"]],
        )
        R, rates = gaussian_opt.cr_onecom_rates(joint, _matrix(payload, "SigmaPrime"))
        return {
            "values": [R] + rates,
            "rates": [R] + rates,
            "passed": True,
            "certified": True,
        }, False, False
    raise InputError(f"kind {kind!r} has no verify action")


def _run_member(kind, payload, args):
    if kind == "hc_gaussian":
        rep = gaussian_opt.gaussian_hc_member(
            _matrix(payload, "Sigma"), _vector(payload, "p")
        )
    elif kind == "hc_discrete":
        rep = special.hc_member_discrete(
            _matrix(payload, "Q"), float(payload["p1"]), float(payload["p2"])
        )
    elif kind == "rhc":
        rep = special.rhc_member_discrete(
            _matrix(payload, "Q"),
            float(payload["b1"]),
            float(payload["b2"]),
            grid_step=max(args.grid, 0.02),
        )
    elif kind == "rhcn":
        rep = special.rhcn_member_discrete(
            _matrix(payload, "Q"),
            float(payload["b1"]),
            float(payload["c2"]),
            grid_step=max(args.grid, 0.02),
        )
    elif kind == "keygen":
        rep, point = gaussian_opt.keygen_region_member(
            _matrix(payload, "Sigma"),
            float(payload["R"]),
            [float(x) for x in payload["Rlist"]],
            step=args.grid,
            rng_seed=args.seed,
        )
        return {
            "member": rep.member,
            "margins": [rep.margin],
            "witness": point.witness,
            "certified": rep.certified,
        }, False, False
    else:
        raise InputError(f"kind {kind!r} has no member action")
    return {
        "member": rep.member,
        "margins": [rep.margin],
        "certified": rep.certified,
    }, False, False


def _run_trace(kind, payload, args):
    if kind != "keygen":
        raise InputError(f"kind {kind!r} has no trace action")
    Sigma = _matrix(payload, "Sigma")
    pts = gaussian_opt.keygen_region_trace(
        Sigma, n_samples=int(payload.get("n_samples", 30)), seed=args.seed
    )
    m = Sigma.shape[0]
    header = ["R_nats"] + [f"R{l + 1}_nats" for l in range(m)]
    rows = [",".join(header)]
    for p in pts:
        rows.append(",".join(f"{x:.12g}" for x in p.rates))
    csv_text = "\n".join(rows) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv_text)
    return {
        "values": [list(p.rates) for p in pts],
        "csv": None if args.out else csv_text,
        "out": args.out,
        "certified": True,
    }, False, False


def _run_check(kind, payload, args):
    if kind != "forward_bl":
        raise InputError("check files carry kind 'forward_bl'")
    which = payload.get("check")
    if which == "tensorization":
        rep = properties.tensorization_check(
            _forward_problem(payload["prob1"]), _forward_problem(payload["prob2"])
        )
    elif which == "convexity":
        rep = properties.convexity_check(
            _forward_problem(payload["base"]),
            [np.asarray(c, dtype=float) for c in payload["c_samples"]],
        )
    elif which == "data_processing":
        rep = properties.data_processing_check(
            _forward_problem(payload["prob"]),
            [Kernel(np.asarray(k, dtype=float)) for k in payload["post_channels"]],
        )
    else:
        raise InputError("payload.check must name a property suite")
    return {
        "passed": rep.passed,
        "margins": [rep.margin],
        "details": rep.details,
        "certified": rep.certified,
    }, not rep.passed, False


def _run_oracle(kind, payload, args):
    if kind == "forward_bl":
        prob = _forward_problem(payload)
        value = forward.best_constant_bruteforce(prob, args.grid)
        return {"value": value, "certified": True}, False, False
    if kind == "wyner":
        Sigma = _matrix(payload, "Sigma")
        if Sigma.shape[0] != 2:
            raise InputError("the wyner grid oracle is implemented for m = 2")
        step = min(args.grid, 1e-3)
        lam = np.arange(step, 1.0 + step / 2, step)
        l1, l2 = np.meshgrid(lam * Sigma[0, 0], lam * Sigma[1, 1], indexing="ij")
        feas = (Sigma[0, 0] - l1) * (Sigma[1, 1] - l2) >= Sigma[0, 1] ** 2
        prod = np.where(feas, l1 * l2, 0.0)
        best = float(prod.max())
        det = float(np.linalg.det(Sigma))
        value = 0.5 * math.log(det / best) if best > 0 else math.inf
        return {"value": value, "certified": True}, False, False
    if kind == "keygen":
        margin, _ = gaussian_opt.keygen_margin_grid(
            _matrix(payload, "Sigma"),
            float(payload["R"]),
            [float(x) for x in payload["Rlist"]],
            step=args.grid,
        )
        return {
            "member": bool(margin >= -1e-6),
            "margins": [margin],
            "certified": True,
        }, False, False
    raise InputError(f"kind {kind!r} has no oracle action")


_DISPATCH = {
    "solve": _run_solve,
    "verify": _run_verify,
    "member": _run_member,
    "trace": _run_trace,
    "check": _run_check,
    "oracle": _run_oracle,
}


def run(subcommand, path, args):
    """Load, validate, dispatch; returns (report, exit_code)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as e:
        return {"error": str(e)}, 2
    digest = hashlib.sha256(raw).hexdigest()
    try:
        doc = json.loads(raw)
        if not isinstance(doc, dict):
            raise InputError("input must be a JSON object")
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise InputError("schema_version must be 1")
        kind = doc.get("kind")
        if kind not in KINDS:
            raise InputError(f"unknown kind {kind!r}")
        payload = doc.get("payload")
        if not isinstance(payload, dict):
            raise InputError("payload must be an object")
        body, failed, nonconv = _DISPATCH[subcommand](kind, payload, args)
    except InputError as e:
        return {"error": f"invalid input: {e}"}, 2
    except json.JSONDecodeError as e:
        return {"error": f"invalid input: {e}"}, 2
    except (ValueError, TypeError) as e:
        return {"error": f"invalid input: {e}"}, 2
    report = {
        "kind": kind,
        "version": __version__,
        "seed": args.seed,
        "input_digest": digest,
        "units": "nats",
    }
    report.update(_jsonable(body))
    report = _scale_for_bits(report, args.bits)
    code = 0
    if failed:
        code = 1
    elif nonconv and args.strict:
        code = 3
    return report, code


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="blkit",
        description="Brascamp-Lieb-type constants and entropic duality checks",
    )
    parser.add_argument("subcommand", choices=sorted(_DISPATCH))
    parser.add_argument("input", help="problem file (JSON, schema_version 1)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--tol", type=float, default=1e-9)
    parser.add_argument("--restarts", type=int, default=8)
    parser.add_argument("--grid", type=float, default=0.01)
    parser.add_argument("--strict", action="store_true",
                        help="exit 3 on solver non-convergence")
    parser.add_argument("--bits", action="store_true",
                        help="display values in bits (internal state stays in nats)")
    parser.add_argument("--out", default=None, help="CSV output path for traces")
    args = parser.parse_args(argv)
    report, code = run(args.subcommand, args.input, args)
    print(json.dumps(report, sort_keys=True, indent=2))
    return code


if __name__ == "__main__":
    sys.exit(main())
