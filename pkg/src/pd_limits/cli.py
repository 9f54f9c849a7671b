"""``pd-limits`` command line.

Exit codes: 0 success, 1 a verification check failed, 2 invalid input or
usage, 3 a cost guard refused the request.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from fractions import Fraction

import numpy as np

from .errors import DomainError, GuardError, PDLimitsError
from .families import builtin_family
from .intensity import IntervalFamily, mc_intensity, mertens_sum
from .moments import brute_force_moment, moment_result
from .pdcore import PDParams, sample_pd_batch, solve_dickman, solve_gtheta
from .samplers import sample_prime_factor_batch, sample_structures
from .stats import ecdf_csv, ecdf_table, ks_largest_part

SCHEMA = 1


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(record: dict) -> str:
    record = {"schema": SCHEMA, **record}
    return json.dumps(record, sort_keys=True, indent=2) + "\n"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, Fraction):
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _family(args):
    return builtin_family(args.family, phi=Fraction(args.phi), q=args.q, kind=args.kind,
                          path=args.path, c=args.c)


def _add_family(p, default="permutation"):
    p.add_argument("--family", default=default,
                   help="permutation, polynomial-multiset-Fq, polynomial-selection-Fq, "
                        "uniform, custom-csv")
    p.add_argument("--phi", default="1", help="tilt (rational, e.g. 1/2)")
    p.add_argument("--q", type=int, help="field size when not part of the family name")
    p.add_argument("--kind", choices=("assembly", "multiset", "selection"),
                   help="construction for uniform and custom-csv families")
    p.add_argument("--path", help="CSV of i,m_i rows for custom-csv")
    p.add_argument("--c", type=int, help="m_i = c for the uniform family")


def _table_cmd(args, table):
    if args.format == "json":
        rec = {"kind": table.kind, "theta": table.theta, "step": table.step,
               "t": [float(f"{v:.12g}") for v in table.grid],
               "value": [float(f"{v:.12g}") if math.isfinite(v) else None
                         for v in table.values]}
        _emit(_json(rec), args.out)
    else:
        _emit(table.to_csv(), args.out)


def cmd_dickman(args):
    _table_cmd(args, solve_dickman(args.tmax, args.step))


def cmd_gtheta(args):
    _table_cmd(args, solve_gtheta(PDParams(args.theta), args.tmax, args.step))


def cmd_coeffs(args):
    fam = _family(args)
    s = fam.series(args.N)
    if args.format == "json":
        rec = {"family": fam.descriptor(), "normalization": s.normalization,
               "q_phi": [_fmt(v) for _, v in s.to_csv_rows()]}
        _emit(_json(rec), args.out)
    else:
        _emit(_csv(["n", "q_phi_n"], s.to_csv_rows()), args.out)


def _indices(text):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise DomainError(f"bad index list {text!r}") from None


def cmd_moments(args):
    fam = _family(args)
    idx = _indices(args.indices)
    res = moment_result(fam, args.n, idx)
    rec = res.to_record(fam, args.n, idx)
    if args.brute:
        bf = brute_force_moment(fam, args.n, idx)
        rec["brute_force"] = _fmt(bf)
        rec["brute_force_matches"] = bf == res.exact
    if args.format == "csv":
        keys = sorted(k for k in rec if k not in ("family", "schema"))
        _emit(_csv(keys, [[_fmt(rec[k]) if not isinstance(rec[k], list)
                           else ",".join(map(str, rec[k])) for k in keys]]), args.out)
    else:
        rec.pop("schema")
        _emit(_json(rec), args.out)


def _scaled_sample(args):
    """(replicates, pad) scaled sizes plus a label, for structures, PD or primes."""
    if args.family == "pd":
        return sample_pd_batch(PDParams(args.theta), args.pad, args.replicates, args.seed), None
    if args.family == "primes":
        fs = sample_prime_factor_batch(args.n, args.replicates, args.seed)
        return fs.scaled_sizes(args.pad), None
    s = sample_structures(_family(args), args.n, args.replicates, args.seed, args.threads)
    return s.scaled_sizes(args.pad), s


def cmd_sample(args):
    if args.sparse:
        if args.family in ("pd", "primes"):
            raise DomainError("sparse dumps are for combinatorial families")
        s = sample_structures(_family(args), args.n, args.replicates, args.seed, args.threads)
        rows = zip(s.rep.tolist(), s.size.tolist(), s.count.tolist())
        if args.format == "json":
            _emit(_json({"n": args.n, "replicates": args.replicates, "seed": args.seed,
                         "entries": [list(r) for r in rows]}), args.out)
        else:
            _emit(_csv(["replicate", "i", "C_i"], rows), args.out)
        return
    arr, _ = _scaled_sample(args)
    if args.format == "json":
        _emit(_json({"n": args.n, "replicates": args.replicates, "seed": args.seed,
                     "L": [[float(f"{v:.12g}") for v in row] for row in arr.tolist()]}),
              args.out)
    else:
        header = ["replicate"] + [f"L_{j}" for j in range(1, args.pad + 1)]
        rows = ([r] + [f"{v:.12g}" for v in row] for r, row in enumerate(arr.tolist()))
        _emit(_csv(header, rows), args.out)


def cmd_intensity(args):
    iv = IntervalFamily.parse(args.intervals)
    if args.family == "pd":
        sampler = PDParams(args.theta)
    elif args.family == "primes":
        sampler = "primes"
    else:
        sampler = _family(args)
    rep = mc_intensity(sampler, args.n, iv, args.replicates, args.seed, args.threads,
                       with_exact=not args.no_exact)
    rec = rep.to_record()
    if args.format == "csv":
        header = ["n", "k", "intervals", "empirical", "sigma", "rhs_theta_lo",
                  "rhs_theta_hi", "rhs_master", "exact"]
        row = [rep.n, iv.k, ";".join(f"{a}:{b}" for a, b in rec["intervals"]),
               _fmt(rep.empirical), _fmt(rep.stderr), _fmt(rep.rhs_theta_lo),
               _fmt(rep.rhs_theta_hi), _fmt(rep.rhs_master) if rep.rhs_master is not None else "",
               _fmt(rep.exact) if rep.exact is not None else ""]
        _emit(_csv(header, [row]), args.out)
    else:
        rec.pop("schema")
        _emit(_json(rec), args.out)


def cmd_ks(args):
    arr, _ = _scaled_sample(args)
    theta = args.reference_theta
    if theta is None:
        if args.family == "pd":
            theta = args.theta
        elif args.family == "primes":
            theta = 1.0
        else:
            theta = _family(args).tilted_theta
            if theta is None:
                raise DomainError("custom families need --reference-theta")
    params = PDParams(theta)
    res = ks_largest_part(arr, params)
    if args.format == "csv":
        grid = np.linspace(0.01, 1.0, 100)
        _emit(ecdf_csv(ecdf_table(arr, params, grid)), args.out)
    else:
        _emit(_json({"statistic": res.statistic, "sample_size": res.sample_size,
                     "reference": res.reference, "n": args.n, "seed": args.seed}), args.out)


def cmd_billingsley(args):
    iv = IntervalFamily.parse(args.intervals)
    if iv.k != 1:
        raise DomainError("billingsley takes a single interval")
    (a, b), = iv.intervals
    fs = sample_prime_factor_batch(args.n, args.replicates, args.seed)
    counts = fs.interval_counts(iv.intervals)[:, 0].astype(float)
    L1 = fs.scaled_sizes(1)[:, 0]
    t = float(args.t)
    rho = solve_dickman(max(2.0, 1.0 / t + 1))
    rec = {
        "n": args.n, "replicates": args.replicates, "seed": args.seed,
        "interval": [str(a), str(b)],
        "mertens_sum": mertens_sum(args.n, a, b),
        "log_ratio": math.log(b / a),
        "empirical_intensity": float(counts.mean()),
        "empirical_stderr": float(counts.std(ddof=1) / math.sqrt(args.replicates)),
        "t": t,
        "pr_L1_le_t": float(np.mean(L1 <= t)),
        "rho_inv_t": float(rho(1.0 / t)),
    }
    if args.format == "csv":
        keys = sorted(k for k in rec if k != "interval")
        _emit(_csv(keys, [[_fmt(rec[k]) for k in keys]]), args.out)
    else:
        _emit(_json(rec), args.out)


def cmd_verify_all(args):
    from .verify import run_all
    lines = []

    def echo(line):
        lines.append(line)
        print(line, flush=True)

    results = run_all(seed=args.seed, budget=args.budget, echo=echo)
    if args.out:
        rec = {"budget": args.budget, "seed": args.seed,
               "criteria": [{"number": r.number, "title": r.title, "passed": r.passed,
                             "checks": r.checks, "report": r.report} for r in results]}
        _emit(_json(rec), args.out)
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pd-limits",
                                     description="Poisson-Dirichlet limits of combinatorial "
                                                 "structures and prime factors")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help, fmt="json"):
        # common flags are added per subcommand: argparse parents share actions,
        # so a per-subcommand default would leak into the others
        p = sub.add_parser(name, help=help)
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=fmt)
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        return p

    p = add("dickman", "tabulate Dickman's rho", "csv")
    p.add_argument("--tmax", type=float, default=5.0)
    p.add_argument("--step", type=float, default=1e-3)
    p.set_defaults(func=cmd_dickman)

    p = add("gtheta", "tabulate g_theta", "csv")
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--tmax", type=float, default=5.0)
    p.add_argument("--step", type=float, default=1e-3)
    p.set_defaults(func=cmd_gtheta)

    p = add("coeffs", "exact object-series coefficients", "csv")
    _add_family(p)
    p.add_argument("--N", type=int, required=True)
    p.set_defaults(func=cmd_coeffs)

    p = add("moments", "exact mixed moments")
    _add_family(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--indices", required=True, help="comma-separated, e.g. 3,7")
    p.add_argument("--brute", action="store_true", help="also run the enumeration oracle")
    p.set_defaults(func=cmd_moments)

    def stochastic(p):
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--replicates", type=int, default=10_000)
        p.add_argument("--n", type=int)
        p.add_argument("--theta", type=float, default=1.0, help="PD parameter for --family pd")

    p = add("sample", "dump sampled scaled sizes", "csv")
    _add_family(p)
    stochastic(p)
    p.add_argument("--pad", type=int, default=5)
    p.add_argument("--sparse", action="store_true", help="(replicate, i, C_i) rows")
    p.set_defaults(func=cmd_sample)

    p = add("intensity", "multi-intensity report")
    _add_family(p)
    stochastic(p)
    p.add_argument("--intervals", required=True, help="e.g. 0.1:0.2,0.3:0.4")
    p.add_argument("--no-exact", action="store_true", help="skip the exact summation")
    p.set_defaults(func=cmd_intensity)

    p = add("ks", "KS distance of L_1 to PD(theta)")
    _add_family(p)
    stochastic(p)
    p.add_argument("--reference-theta", type=float)
    p.set_defaults(func=cmd_ks, pad=1)

    p = add("billingsley", "prime-factor statistics")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, default=10 ** 6)
    p.add_argument("--replicates", type=int, default=100_000)
    p.add_argument("--intervals", default="0.2:0.5")
    p.add_argument("--t", default="0.5", help="threshold for Pr(L_1 <= t)")
    p.set_defaults(func=cmd_billingsley)

    p = add("verify-all", "run every acceptance check")
    p.add_argument("--budget", choices=("fast", "full"), default="fast")
    p.add_argument("--seed", type=int, default=20240601)
    p.set_defaults(func=cmd_verify_all)
    return parser


def _needs_n(args):
    if args.command in ("sample", "intensity", "ks") and args.family != "pd" and args.n is None:
        raise DomainError("--n is required for this family")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _needs_n(args)
        rc = args.func(args)
    except GuardError as exc:
        print(f"pd-limits: refused: {exc}", file=sys.stderr)
        return 3
    except (PDLimitsError, ValueError, ZeroDivisionError, OSError) as exc:
        print(f"pd-limits: error: {exc}", file=sys.stderr)
        return 2
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())
