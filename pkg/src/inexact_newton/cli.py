"""Command-line front end.

Subcommands ``solve``, ``rate-study``, ``count-study``, ``filter-check`` and
``verify``. Exit status is 0 on success, 2 when a study or check fails and 3
on invalid arguments.
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import oracle_lab
from .exceptions import ConfigError, InexactNewtonError, StudyError
from .forward_models import PROBLEMS, make_problem, rescale_model
from .hilbert_scale import ScaleBasis
from .inner_solvers import PATHS, InnerProblem, solve_inner
from .newton_driver import SolverConfig, StopReason
from .spectral_filters import FilterKind, check_filter_inequalities
from .studies import (DEFAULT_DELTAS, DEFAULT_SEEDS, STUDY_K_MAX, STUDY_T_MAX_ASYMPTOTIC,
                      StudySpec, run_cells, run_count_study, run_rate_study, run_single)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 2, 3
SOLVE_DEFAULT_N = {"diagonal": 256, "hammerstein": 128}
LIST_KEYS = ("delta", "seed", "r")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def read_config_file(path):
    """Flat ``key = value`` lines; ``#`` starts a comment. Lists are comma separated."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            if key in LIST_KEYS:
                out[key] = [v.strip() for v in value.split(",") if v.strip()]
            else:
                out[key] = value
    return out


def _common(p, study):
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--problem", choices=PROBLEMS, default="diagonal")
    p.add_argument("--method", type=FilterKind.parse, default=FilterKind.TIKHONOV,
                   help="landweber | implicit | asymptotic | tikhonov")
    p.add_argument("--n", type=int, help="discretization size")
    p.add_argument("--a", type=float, default=1.0, help="smoothing index of the operator")
    p.add_argument("--s", type=float, default=0.0, help="Hilbert scale index of the method")
    p.add_argument("--mu", type=float, default=1.0, help="smoothness index of the initial error")
    p.add_argument("--tau", type=float, default=2.5)
    p.add_argument("--eta", type=float, default=0.85)
    p.add_argument("--theta", type=float, default=0.9)
    p.add_argument("--beta", type=float, default=0.1, help="cubic coefficient (hammerstein)")
    p.add_argument("--delta", type=float, action="append", help="noise level (repeatable)")
    p.add_argument("--seed", type=int, action="append", help="seed (repeatable)")
    p.add_argument("--omega-norm", type=float, help="||x0 - x_true||_mu")
    p.add_argument("--inner", choices=PATHS, default="spectral" if study else "matrix-free")
    p.add_argument("--max-outer", type=int, default=200)
    p.add_argument("--no-enforce-tau-eta", dest="enforce_tau_eta", action="store_false")
    p.add_argument("--out", help="output file (solve) or directory (studies)")
    if study:
        p.add_argument("--r", type=float, action="append", help="error norm index (repeatable)")
        p.add_argument("--workers", type=int, default=1)


def build_parser():
    parser = _Parser(prog="inexact-newton",
                     description="Inexact Newton regularization in Hilbert scales.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("solve", help="single run; writes a trace CSV"), study=False)
    _common(sub.add_parser("rate-study", help="fit error rates over a delta sweep"), study=True)
    _common(sub.add_parser("count-study", help="fit outer counts over a delta sweep"), study=True)
    fc = sub.add_parser("filter-check", help="randomized check of the filter inequalities")
    fc.add_argument("--method", type=FilterKind.parse, action="append")
    fc.add_argument("--samples", type=int, default=10_000)
    fc.add_argument("--seed", type=int, default=0)
    fc.add_argument("--tol", type=float, default=1e-10)
    ver = sub.add_parser("verify", help="oracle checks on small dense problems")
    ver.add_argument("--n", type=int, default=64)
    ver.add_argument("--instances", type=int, default=20)
    ver.add_argument("--seed", type=int, default=0)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if path:
        values = read_config_file(path)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        for key, value in values.items():
            if key not in known or key in ("config", "help"):
                raise UsageError(f"unknown config key {key!r}")
            action = known[key]
            conv = action.type or (lambda v: v)
            if key in LIST_KEYS:
                value = [conv(v) for v in value]
            elif isinstance(action, argparse._StoreFalseAction):
                value = value.lower() in ("1", "true", "yes")
            else:
                value = conv(value)
            sub.set_defaults(**{key: value})
        args = parser.parse_args(argv)
    return args


def _config(args, study):
    kw = dict(tau=args.tau, eta=args.eta, s=args.s, kind=args.method, theta=args.theta,
              inner_path=args.inner, max_outer=args.max_outer,
              enforce_tau_eta=args.enforce_tau_eta)
    if study:
        kw.update(k_max=STUDY_K_MAX, t_max_asymptotic=STUDY_T_MAX_ASYMPTOTIC)
    return SolverConfig(**kw)


def _spec(args, study):
    n = args.n if args.n is not None or study else SOLVE_DEFAULT_N[args.problem]
    return StudySpec(problem=args.problem, mu=args.mu, a=args.a,
                     r_list=tuple(args.r) if study and args.r else (0.0,),
                     delta_list=tuple(args.delta) if args.delta else
                     (DEFAULT_DELTAS if study else (DEFAULT_DELTAS[4],)),
                     seeds=tuple(args.seed) if args.seed else (DEFAULT_SEEDS if study else (0,)),
                     config=_config(args, study), n=n, omega_norm=args.omega_norm,
                     beta_cubic=args.beta, out_dir=args.out if study else None,
                     workers=getattr(args, "workers", 1), require_min_grid=study)


def cmd_solve(args):
    spec = _spec(args, study=False)
    code = EXIT_OK
    for delta in spec.delta_list:
        for seed in spec.seeds:
            path = None
            if args.out:
                path = args.out
                if len(spec.delta_list) * len(spec.seeds) > 1:
                    root, ext = os.path.splitext(args.out)
                    path = f"{root}_delta{delta:g}_seed{seed}{ext or '.csv'}"
            trace, line = run_single(spec, delta, seed, path)
            print(line)
            if trace.stop_reason is not StopReason.DISCREPANCY:
                code = EXIT_FAILED
    return code


def cmd_rate_study(args):
    spec = _spec(args, study=True)
    report = run_rate_study(spec)
    print(f"method={spec.method} problem={spec.problem} N={spec.n} s={spec.s:g} a={spec.a:g} "
          f"mu={spec.mu:g}")
    print(f"{'r':>6} {'slope':>9} {'theory':>9} {'R^2':>7}")
    for r, fit in report.fits.items():
        print(f"{r:>6g} {fit.slope:>9.4f} {fit.theory:>9.4f} {fit.r_squared:>7.4f}")
    return EXIT_OK


def cmd_count_study(args):
    spec = _spec(args, study=True)
    report = run_count_study(spec)
    print(f"method={spec.method} problem={spec.problem} N={spec.n}")
    for d, n in zip(spec.delta_list, report.n_delta):
        print(f"delta={d:<8g} n_delta={n:g}")
    print(f"n_delta ~ {report.alpha:.4g} + {report.beta:.4g} log(1/delta)  "
          f"R^2={report.r_squared:.4f}")
    return EXIT_OK


def filter_check_samples(kind, samples, seed, tol=1e-10):
    """Worst slack over random positive sequences, nu, j < n and lambda grids."""
    rng = np.random.default_rng(seed)
    worst, failures = -np.inf, 0
    for _ in range(samples):
        length = int(rng.integers(1, 9))
        if kind.discrete_t:
            t_seq = rng.integers(1, 20, size=length).astype(float)
        else:
            t_seq = np.exp(rng.uniform(-3.0, 4.0, size=length))
        n = int(rng.integers(1, length + 1))
        j = int(rng.integers(0, n))
        nu = float(rng.uniform(0.0, 1.0))
        lam = np.concatenate([[0.0, 1.0], np.exp(rng.uniform(-12.0, 0.0, size=14))])
        rep = check_filter_inequalities(kind, t_seq, nu, lam, j, n, tol)
        worst = max(worst, rep.max_slack)
        failures += not rep.passed
    return worst, failures


def cmd_filter_check(args):
    kinds = args.method or list(FilterKind)
    code = EXIT_OK
    for kind in kinds:
        worst, failures = filter_check_samples(kind, args.samples, args.seed, args.tol)
        status = "PASS" if failures == 0 else "FAIL"
        print(f"{status} {kind}: {args.samples} samples, max slack {worst:.3e}, "
              f"violations {failures}")
        if failures:
            code = EXIT_FAILED
    return code


def oracle_equivalence(n=64, instances=20, seed=0, kinds=None):
    """Matrix-free inner solvers against :func:`spectral_inner` on random diagonal instances.

    The asymptotic flow is integrated numerically on the matrix-free side.
    Returns rows ``(kind, t_free, t_spectral, rel_diff_u)``.
    """
    rng = np.random.default_rng(seed)
    basis = ScaleBasis.default(n)
    rows = []
    for kind in kinds or list(FilterKind):
        for _ in range(instances):
            a = float(rng.uniform(0.5, 1.0))
            s = float(rng.choice([0.0, 0.5]))
            model, _ = rescale_model(make_problem("diagonal", n, a, basis=basis), basis, s,
                                     float(rng.uniform(0.5, 0.95)))
            b = rng.standard_normal(n) * basis.powers(-float(rng.uniform(1.0, 2.5)))
            p = InnerProblem(model, basis, np.zeros(n), b, s, float(rng.uniform(0.5, 0.95)))
            free = solve_inner(p, kind, "matrix-free")
            spec = solve_inner(p, kind, "spectral")
            diff = np.linalg.norm(free.u - spec.u) / np.linalg.norm(spec.u)
            rows.append((kind, free.t_n, spec.t_n, float(diff)))
    return rows


def cmd_verify(args):
    code = EXIT_OK

    def report(ok, text):
        nonlocal code
        print(("PASS " if ok else "FAIL ") + text)
        if not ok:
            code = EXIT_FAILED

    basis = ScaleBasis.default(args.n)
    for s in (0.0, 1.0):
        model = make_problem("diagonal", args.n, 1.0, basis=basis)
        svd = oracle_lab.build_dense(model, basis, np.zeros(args.n), s)
        expect = basis.powers(-1.0 - s)
        err = np.max(np.abs(np.sort(svd.singular_values) - np.sort(expect)))
        report(err <= 1e-14, f"diagonal singular values, s={s:g}: max error {err:.2e}")
        for nu in (-1.0, -0.5, 0.0, 0.5, 1.0):
            rep = oracle_lab.check_norm_equivalence(svd, basis, 1.0, s, nu, samples=100,
                                                    seed=args.seed)
            report(rep.passed, f"norm equivalence s={s:g} nu={nu:g}: "
                               f"max violation {rep.max_violation:.2e}")
    ham = make_problem("hammerstein", args.n, 1.0, 0.1, basis)
    dense = oracle_lab.DenseSVD.from_matrix(oracle_lab.dense_matrix(ham, basis, ham.reference_solution, 0.0))
    rel = dense.reconstruction_error() / dense.singular_values[0]
    report(rel <= 1e-10, f"hammerstein SVD reconstruction: relative error {rel:.2e}")
    for kind in FilterKind:
        rows = oracle_equivalence(args.n, args.instances, args.seed, [kind])
        same_t = all(tf == ts for _, tf, ts, _ in rows) if kind.discrete_t else True
        worst = max(d for *_, d in rows)
        tol = 1e-6 if kind is FilterKind.ASYMPTOTIC else 1e-8
        report(same_t and worst <= tol,
               f"oracle equivalence {kind}: {len(rows)} instances, max rel diff {worst:.2e}")
    xs, zs = oracle_lab.sample_pairs(basis, ham.reference_solution, ham.domain_ball_radius, 100,
                                     args.seed)
    probe = oracle_lab.taylor_remainder_probe(ham, basis, xs, zs, 0.0, 0.0, 1.0)
    print(f"INFO taylor remainder probe (hammerstein, 100 pairs): max ratio {probe.max_ratio:.4g}")
    return code


COMMANDS = {
    "solve": cmd_solve,
    "rate-study": cmd_rate_study,
    "count-study": cmd_count_study,
    "filter-check": cmd_filter_check,
    "verify": cmd_verify,
}


def main(argv=None):
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"inexact-newton: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except StudyError as exc:
        print(f"study failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except (ConfigError, ValueError) as exc:
        print(f"inexact-newton: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InexactNewtonError as exc:
        print(f"inexact-newton: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
