"""Command-line entry point.

Subcommands: ``gen`` (instance files), ``estimate`` (named constants of an
instance), ``verify`` (theorem suites), ``counterexample`` (growth table).
Every randomized command requires an explicit --seed; reports are pure
functions of (config, inputs, seed), with worker threads controlled by
DYADLAB_THREADS never affecting output bytes.

Exit codes: 0 success, 1 operational error (bad arguments, I/O, malformed
instances), 2 assertion failure (a suite check or recheck did not hold).
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .constants import (
    one_weight_pack,
    quadratic_constant,
    quadratic_constant_disjoint,
    r_bound,
    r_bound_instance_value,
    shift_testing_constant,
    simple_constant,
    stein_constant,
    testing_instance_value,
    two_weight_norm,
)
from .functions import ExponentPair, Measure
from .lattice import DyadicLattice
from .ratio import ConstantEstimate
from .serialize import (
    Instance,
    ParseError,
    canonical_json,
    estimate_record,
    format_instance,
    read_instance,
)
from .shifts import adjoint_spec
from .experiments import (
    SuiteReport,
    build_counterexample,
    counterexample_growth,
    one_weight_stein_experiment,
    random_measure,
    random_shift_family,
    random_step_function,
    verify_lower_bound_lemma,
    verify_shift_theorem,
    verify_specific_form,
    verify_square_theorem,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ASSERTION = 2

ESTIMATOR_NAMES = (
    "simple",
    "quadratic",
    "quadratic-disjoint",
    "stein",
    "norm",
    "testing-direct",
    "testing-dual",
    "rbound",
    "one-weight",
)

THEOREM_KEYS = ("shift", "square", "lower-bound", "specific-form", "stein-one-weight")

RANDOMIZED_COMMANDS = ("estimate", "verify", "counterexample")


class CliError(Exception):
    """Operational failure: message for stderr, exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for assertion failures
    def error(self, message):
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dim", type=int, default=1, help="lattice dimension N")
    parser.add_argument("--top", type=int, default=1, help="doubling generations above the unit scale")
    parser.add_argument("--leaf", type=int, default=3, help="bisection generations below the unit scale")
    parser.add_argument("--p", type=float, default=2.0, help="input exponent p in (1, inf)")
    parser.add_argument("--q", type=float, default=2.0, help="output exponent q in (1, inf)")
    parser.add_argument("--seed", type=int, default=None, help="rng seed (mandatory for randomized commands)")
    parser.add_argument("--restarts", type=int, default=None, help="random ascent restarts per problem")
    parser.add_argument("--suite-size", type=int, default=None, help="instances per suite / family size / scale count")
    parser.add_argument("--out", default=None, help="write output to this file instead of stdout")
    parser.add_argument(
        "--format",
        choices=("csv", "structured"),
        default="structured",
        help="output format for reports",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="dyadlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[], help="generate an instance file")
    gen.add_argument("kind", choices=("random", "counterexample"), help="instance family")
    _add_common(gen)

    est = sub.add_parser("estimate", help="estimate named constants of an instance")
    est.add_argument("instance", help="instance file to read")
    est.add_argument(
        "which",
        nargs="+",
        choices=ESTIMATOR_NAMES,
        metavar="constant",
        help="constants to estimate: " + ", ".join(ESTIMATOR_NAMES),
    )
    est.add_argument(
        "--recheck",
        action="store_true",
        help="re-run each estimator and re-evaluate replayable witnesses",
    )
    _add_common(est)

    ver = sub.add_parser("verify", help="run a theorem suite")
    ver.add_argument("theorem", choices=THEOREM_KEYS, help="which suite to run")
    ver.add_argument(
        "--bracket-bound",
        type=float,
        default=64.0,
        help="conservative threshold for two-sided comparability checks",
    )
    _add_common(ver)

    cex = sub.add_parser("counterexample", help="growth table along doubling scales")
    _add_common(cex)

    return parser


def _exponents(args) -> ExponentPair:
    if not (1.0 < args.p < float("inf")) or not (1.0 < args.q < float("inf")):
        raise CliError("exponents must lie strictly between 1 and infinity")
    return ExponentPair(args.p, args.q)


def _require_seed(args) -> int:
    if args.seed is None:
        raise CliError(f"--seed is mandatory for the randomized command {args.command!r}")
    return args.seed


def _emit(args, text: str) -> None:
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            raise CliError(f"cannot write {args.out}: {exc}") from None
    else:
        sys.stdout.write(text)


def _config_echo(args, **extra) -> dict:
    config = {
        "command": args.command,
        "dimension": args.dim,
        "top": args.top,
        "leaf": args.leaf,
        "p": args.p,
        "q": args.q,
        "seed": args.seed,
        "restarts": args.restarts,
        "suite_size": getattr(args, "suite_size", None),
        "exact_tolerance": 1e-9,
    }
    config.update(extra)
    return config


# ---------------------------------------------------------------------------
# gen
# ---------------------------------------------------------------------------


def _cmd_gen(args) -> int:
    if args.kind == "random":
        seed = _require_seed(args)
        lattice = DyadicLattice(args.dim, args.top, args.leaf)
        rng = np.random.default_rng(seed)
        members = args.suite_size if args.suite_size is not None else 2
        if members < 0:
            raise CliError("--suite-size must be nonnegative")
        instance = Instance(lattice)
        instance.measures["sigma"] = random_measure(lattice, rng)
        instance.measures["w"] = random_measure(lattice, rng)
        instance.functions["f"] = random_step_function(lattice, rng)
        depth = min(1, lattice.top + lattice.leaf)
        family = random_shift_family(lattice, rng, count=members, max_depth=2)
        instance.shifts["zero"] = random_shift_family(
            lattice, rng, count=1, max_depth=depth, density=0.0
        )[0]
        for i, member in enumerate(family):
            instance.shifts[f"s{i}"] = member
    else:
        scales = args.top
        if scales < 1:
            raise CliError("counterexample generation needs --top >= 1 ancestor generations")
        instance = build_counterexample(args.dim, _exponents(args), scales).materialize()
    _emit(args, format_instance(instance))
    return EXIT_OK


# ---------------------------------------------------------------------------
# estimate
# ---------------------------------------------------------------------------


def _two_weight_pair(instance: Instance) -> tuple[Measure, Measure]:
    try:
        return instance.measures["sigma"], instance.measures["w"]
    except KeyError as exc:
        raise CliError(f"instance is missing the measure named {exc.args[0]!r}") from None


def _shift_family(instance: Instance) -> list:
    if not instance.shifts:
        raise CliError("this constant needs at least one shift in the instance")
    return [instance.shifts[name] for name in sorted(instance.shifts)]


def _run_estimator(name: str, instance: Instance, pq: ExponentPair, restarts: int, seed: int):
    """One (record-name, estimate) list per requested constant."""
    out: list[tuple[str, ConstantEstimate]] = []
    if name == "simple":
        sigma, w = _two_weight_pair(instance)
        out.append((name, simple_constant(sigma, w, pq)))
    elif name == "quadratic":
        sigma, w = _two_weight_pair(instance)
        out.append((name, quadratic_constant(sigma, w, pq, restarts=restarts, seed=seed)))
    elif name == "quadratic-disjoint":
        sigma, w = _two_weight_pair(instance)
        out.append(
            (name, quadratic_constant_disjoint(sigma, w, pq, restarts=restarts, seed=seed))
        )
    elif name == "stein":
        sigma, w = _two_weight_pair(instance)
        out.append((name, stein_constant(sigma, w, pq, restarts=restarts, seed=seed)))
    elif name == "norm":
        sigma, w = _two_weight_pair(instance)
        for shift_name in sorted(instance.shifts):
            est = two_weight_norm(
                instance.shifts[shift_name], sigma, w, pq, restarts=restarts, seed=seed
            )
            out.append((f"norm:{shift_name}", est))
        if not instance.shifts:
            raise CliError("norm estimation needs at least one shift in the instance")
    elif name in ("testing-direct", "testing-dual"):
        sigma, w = _two_weight_pair(instance)
        direction = "direct" if name == "testing-direct" else "dual"
        est = shift_testing_constant(
            _shift_family(instance), sigma, w, pq, direction=direction, restarts=restarts, seed=seed
        )
        out.append((name, est))
    elif name == "rbound":
        sigma, w = _two_weight_pair(instance)
        out.append(
            (name, r_bound(_shift_family(instance), sigma, w, pq, restarts=restarts, seed=seed))
        )
    elif name == "one-weight":
        if "w" not in instance.measures:
            raise CliError("one-weight packaging needs a measure named 'w'")
        try:
            pack = one_weight_pack(instance.measures["w"], pq.p)
        except ValueError as exc:
            raise CliError(str(exc)) from None
        est = ConstantEstimate(
            pack.characteristic,
            "exact",
            witness={"cube": repr(pack.witness_cube), "source": "cube-supremum"},
            diagnostics={
                "p": pack.p,
                "characteristic_root": pack.characteristic ** (1.0 / pack.p),
                "dual_total": float(pack.dual.total()),
            },
        )
        out.append((name, est))
    else:  # pragma: no cover - argparse restricts choices
        raise CliError(f"unknown constant name {name!r}")
    return out


def _recheck_estimate(
    name: str, estimate: ConstantEstimate, instance: Instance, pq: ExponentPair, restarts: int, seed: int
) -> dict:
    """Deterministic re-run plus witness replay where the witness is replayable."""
    rerun = _run_estimator(name.split(":")[0], instance, pq, restarts, seed)
    rerun_value = dict(rerun)[name].value if name in dict(rerun) else None
    result = {
        "deterministic": rerun_value == estimate.value,
        "rerun_value": rerun_value,
        "witness_value": None,
        "witness_consistent": None,
    }
    witness = estimate.witness
    if witness and name == "testing-direct":
        sigma, w = _two_weight_pair(instance)
        value = testing_instance_value(
            _shift_family(instance),
            sigma,
            w,
            pq,
            witness["members"],
            witness["cubes"],
            witness["squared_coefficients"],
        )
    elif witness and name == "testing-dual":
        sigma, w = _two_weight_pair(instance)
        value = testing_instance_value(
            [adjoint_spec(s) for s in _shift_family(instance)],
            w,
            sigma,
            pq.swapped_dual(),
            witness["members"],
            witness["cubes"],
            witness["squared_coefficients"],
        )
    elif witness and name == "rbound" and witness.get("coefficients"):
        sigma, w = _two_weight_pair(instance)
        members = witness["members"]
        stacked = np.asarray(witness["coefficients"], dtype=float).reshape(
            len(members), instance.lattice.n_leaves
        )
        value = r_bound_instance_value(_shift_family(instance), sigma, w, pq, members, stacked)
    else:
        return result
    result["witness_value"] = value
    result["witness_consistent"] = abs(value - estimate.value) <= 1e-9 * max(abs(estimate.value), 1e-300)
    return result


def _cmd_estimate(args) -> int:
    seed = _require_seed(args)
    restarts = args.restarts if args.restarts is not None else 4
    pq = _exponents(args)
    try:
        instance = read_instance(args.instance)
    except OSError as exc:
        raise CliError(f"cannot read {args.instance}: {exc}") from None
    except ParseError as exc:
        raise CliError(f"{args.instance}: {exc}") from None

    records = []
    rechecks = {}
    for name in args.which:
        for record_name, estimate in _run_estimator(name, instance, pq, restarts, seed):
            records.append(estimate_record(record_name, estimate))
            if args.recheck:
                rechecks[record_name] = _recheck_estimate(
                    record_name, estimate, instance, pq, restarts, seed
                )

    lat = instance.lattice
    report = {
        "config": _config_echo(
            args,
            instance=args.instance,
            lattice={"dimension": lat.dimension, "top": lat.top, "leaf": lat.leaf},
        ),
        "estimates": records,
    }
    if args.recheck:
        report["recheck"] = rechecks
    if args.format == "csv":
        lines = ["name,value,kind"]
        lines.extend(f"{r['name']},{r['value']!r},{r['kind']}" for r in records)
        _emit(args, "\n".join(lines) + "\n")
    else:
        _emit(args, canonical_json(report))
    if args.recheck:
        bad = [
            name
            for name, rc in rechecks.items()
            if not rc["deterministic"] or rc["witness_consistent"] is False
        ]
        if bad:
            print(f"recheck failed for: {', '.join(sorted(bad))}", file=sys.stderr)
            return EXIT_ASSERTION
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify / counterexample
# ---------------------------------------------------------------------------


def _report_exit(args, report: SuiteReport) -> int:
    if args.format == "csv":
        _emit(args, report.to_csv())
    else:
        _emit(args, report.to_json())
    failed = [c for c in report.checks if c["kind"] in ("exact", "bound") and not c["passed"]]
    for check in report.checks:
        if check["kind"] == "observe":
            print(
                f"observe: {check['name']}: {check['observed']!r} ({check['detail']})",
                file=sys.stderr,
            )
    for check in failed:
        print(
            f"failed: {check['name']}: observed {check['observed']!r}"
            f" threshold {check['threshold']!r} ({check['detail']})",
            file=sys.stderr,
        )
    return EXIT_ASSERTION if failed else EXIT_OK


def _cmd_verify(args) -> int:
    seed = _require_seed(args)
    pq = _exponents(args)
    size = args.suite_size if args.suite_size is not None else 8
    restarts = args.restarts if args.restarts is not None else 2
    if args.theorem == "shift":
        report = verify_shift_theorem(
            pq,
            size=size,
            seed=seed,
            dimension=args.dim,
            top=args.top,
            leaf=args.leaf,
            restarts=restarts,
            bracket_bound=args.bracket_bound,
        )
    elif args.theorem == "square":
        report = verify_square_theorem(
            pq,
            size=size,
            seed=seed,
            dimension=args.dim,
            top=args.top,
            leaf=args.leaf,
            restarts=restarts,
            bracket_bound=args.bracket_bound,
        )
    elif args.theorem == "lower-bound":
        report = verify_lower_bound_lemma(
            1,
            1,
            pq,
            size=size,
            seed=seed,
            dimension=args.dim,
            top=args.top,
            leaf=min(args.leaf, 2),
            restarts=restarts,
        )
    elif args.theorem == "specific-form":
        report = verify_specific_form(
            pq,
            size=size,
            seed=seed,
            dimension=args.dim,
            top=args.top,
            leaf=args.leaf,
            restarts=restarts,
            bracket_bound=args.bracket_bound,
        )
    else:
        report = one_weight_stein_experiment(
            count=size,
            seed=seed,
            dimension=args.dim,
            top=min(args.top, 1),
            leaf=args.leaf,
            restarts=restarts,
        )
    return _report_exit(args, report)


def _cmd_counterexample(args) -> int:
    seed = _require_seed(args)
    scales = args.suite_size if args.suite_size is not None else 5
    if scales < 2:
        raise CliError("--suite-size must be at least 2 scales for a growth table")
    restarts = args.restarts if args.restarts is not None else 6
    k_values = [4 * (1 << i) for i in range(scales)]
    report = counterexample_growth(
        args.dim, _exponents(args), k_values=k_values, restarts=restarts, seed=seed
    )
    if args.format == "csv":
        lines = ["K,simple,quadratic,ratio"]
        for row, simple, quad, ratio in zip(
            report.rows,
            report.summary["simple_values"],
            report.summary["quadratic_values"],
            report.summary["quad_over_simple"],
        ):
            lines.append(f"{row[0]},{simple!r},{quad!r},{ratio!r}")
        _emit(args, "\n".join(lines) + "\n")
        failed = [
            c for c in report.checks if c["kind"] in ("exact", "bound") and not c["passed"]
        ]
        for check in failed:
            print(f"failed: {check['name']}: observed {check['observed']!r}", file=sys.stderr)
        return EXIT_ASSERTION if failed else EXIT_OK
    return _report_exit(args, report)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "gen":
            return _cmd_gen(args)
        if args.command == "estimate":
            return _cmd_estimate(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "counterexample":
            return _cmd_counterexample(args)
        raise CliError(f"unknown command {args.command!r}")
    except CliError as exc:
        print(f"dyadlab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ParseError, ValueError) as exc:
        print(f"dyadlab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"dyadlab: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
