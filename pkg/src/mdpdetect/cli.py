"""Command-line surface: validation, classification, synthesis, simulation, metrics.

Exit codes: 0 success, 1 usage error, 2 invalid model or spec, 3 no detection
policy exists (a valid analysis outcome, not a failure), 4 runtime contract
breach.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from .analysis import bounds_csv, curve_csv, error_bounds_multi, pairwise_bc_curve
from .binary import classify_pairs, informative_mecs, informative_structure, preprocess
from .errors import ContractError, DetectionError, ModelError
from .general import general_apd, pairwise_isa
from .graphs import mec_decompose
from .models import induced_transition_system, mmdp_to_json, parse_mmdp, validate_mmdp
from .policy import parse_policy, policy_to_json, serialize_policy
from .scenarios import gen_grid, gen_recsys, grid_spec_from_json, recsys_spec_from_json
from .simulate import batch_summary, simulate, trace_to_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_NO_POLICY = 3
EXIT_CONTRACT = 4


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mdpdetect", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a model file against the schema and invariants")
    p.add_argument("model")

    p = sub.add_parser("classify", help="informative/revealing pairs and states")
    p.add_argument("model")
    p.add_argument("--out", default="-")

    p = sub.add_parser("mec", help="maximal end components of a model's structure")
    p.add_argument("model")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--model", dest="model_index", type=int, default=None)
    group.add_argument("--informative", action="store_true")
    p.add_argument("--out", default="-")

    p = sub.add_parser("synthesize", help="decide existence and synthesize a detection policy")
    p.add_argument("model")
    p.add_argument("--initial", default=None)
    p.add_argument("--out", default="-")
    p.add_argument("--diagnostics", default=None)

    p = sub.add_parser("simulate", help="run seeded detection episodes")
    p.add_argument("model")
    p.add_argument("policy")
    p.add_argument("--truth", type=int, default=None)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threshold", type=float, default=0.98)
    p.add_argument("--max-steps", type=int, default=10_000)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--out", default="-")

    p = sub.add_parser("bc", help="Bhattacharyya curves / error bounds under a policy")
    p.add_argument("model")
    p.add_argument("policy")
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--pair", default=None, help="i,j (1-based model indices)")
    p.add_argument("--bounds", default=None, help="q1,..,qN:theta1,..,thetaN")
    p.add_argument("--out", default="-")

    p = sub.add_parser("gen", help="generate a scenario model")
    p.add_argument("kind", choices=("grid", "recsys"))
    p.add_argument("spec")
    p.add_argument("--out", default="-")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _dispatch(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ContractError as exc:
        print(f"contract breach: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    except DetectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "validate":
        mmdp = _load_mmdp(args.model)
        report = validate_mmdp(mmdp)
        if report:
            for line in report:
                print(line, file=sys.stderr)
            return EXIT_INVALID
        print("valid")
        return EXIT_OK

    if args.command == "classify":
        mmdp = _load_mmdp(args.model)
        if mmdp.n == 2:
            cls = classify_pairs(mmdp.models[0], mmdp.models[1])
            pair = preprocess(mmdp.models[0], mmdp.models[1])
            payload = {
                "informative_pairs": sorted(pair.isa_original),
                "revealing_pairs": sorted(cls.revealing_pairs),
                "revealing_states": sorted(cls.states_labeled("revealing")),
                "informative_states": sorted(cls.states_labeled("informative")),
                "chosen_revealing_action": dict(sorted(cls.chosen_revealing.items())),
            }
        else:
            payload = {
                "pairwise_isa": {
                    f"{i},{j}": sorted(pairwise_isa(mmdp, i, j))
                    for i in range(1, mmdp.n + 1)
                    for j in range(i + 1, mmdp.n + 1)
                }
            }
        _write(args.out, _json(payload))
        return EXIT_OK

    if args.command == "mec":
        mmdp = _load_mmdp(args.model)
        if args.informative:
            if mmdp.n != 2:
                raise ModelError("--informative applies to binary models only")
            pair = preprocess(mmdp.models[0], mmdp.models[1])
            ts = informative_structure(pair)
            mecs = informative_mecs(ts, pair.isa)
        else:
            index = args.model_index if args.model_index is not None else 1
            ts = induced_transition_system(mmdp.model(index))
            mecs = mec_decompose(ts)
        _write(args.out, _json([c.as_dict() for c in mecs]))
        return EXIT_OK

    if args.command == "synthesize":
        mmdp = _load_mmdp(args.model)
        outcome = general_apd(mmdp, initial=args.initial)
        if args.diagnostics:
            _write(args.diagnostics, _json(outcome.diagnostics))
        if not outcome.exists:
            print("no detection policy exists from the requested initial state", file=sys.stderr)
            return EXIT_NO_POLICY
        _write(args.out, policy_to_json(outcome.policy))
        return EXIT_OK

    if args.command == "simulate":
        mmdp = _load_mmdp(args.model)
        policy = parse_policy(_read(args.policy))
        if args.trials is None:
            if args.truth is None:
                raise _UsageError("--truth is required for a single trace")
            trace = simulate(
                mmdp, args.truth, policy, seed=args.seed,
                max_steps=args.max_steps, threshold=args.threshold,
            )
            _write(args.out, trace_to_csv(trace))
        else:
            summary = batch_summary(
                mmdp, policy, trials=args.trials, seed=args.seed, truth=args.truth,
                max_steps=args.max_steps, threshold=args.threshold,
            )
            _write(args.out, _json(summary))
        return EXIT_OK

    if args.command == "bc":
        mmdp = _load_mmdp(args.model)
        policy = parse_policy(_read(args.policy))
        pairs = None
        if args.pair:
            pairs = [_parse_pair(args.pair)]
        curves = pairwise_bc_curve(mmdp, policy, horizon=args.horizon, pairs=pairs)
        if args.bounds:
            q, theta = _parse_priors(args.bounds, mmdp.n)
            rows = []
            for t in range(args.horizon + 1):
                b = [[0.0] * mmdp.n for _ in range(mmdp.n)]
                for (i, j), curve in curves.items():
                    b[i - 1][j - 1] = b[j - 1][i - 1] = curve.values[t]
                rows.append((t, error_bounds_multi(b, q, theta)))
            _write(args.out, bounds_csv(rows))
        else:
            _write(args.out, curve_csv(curves))
        return EXIT_OK

    if args.command == "gen":
        raw = _read(args.spec)
        if args.kind == "grid":
            mmdp = gen_grid(grid_spec_from_json(raw))
        else:
            mmdp = gen_recsys(recsys_spec_from_json(raw))
        _write(args.out, mmdp_to_json(mmdp))
        return EXIT_OK

    raise _UsageError(f"unknown command {args.command!r}")


def _load_mmdp(path: str):
    return parse_mmdp(_read(path))


def _read(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise _UsageError(f"cannot read {path}: {exc}") from exc


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _json(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _parse_pair(raw: str) -> tuple[int, int]:
    try:
        i, j = (int(x) for x in raw.split(","))
    except ValueError as exc:
        raise _UsageError(f"--pair must look like 'i,j', got {raw!r}") from exc
    if i == j:
        raise _UsageError("--pair needs two distinct model indices")
    return (min(i, j), max(i, j))


def _parse_priors(raw: str, n: int) -> tuple[list[float], list[float]]:
    parts = raw.split(":")
    if len(parts) != 2:
        raise _UsageError("--bounds must look like 'q1,..,qN:theta1,..,thetaN'")
    try:
        q = [float(x) for x in parts[0].split(",")]
        theta = [float(x) for x in parts[1].split(",")]
    except ValueError as exc:
        raise _UsageError(f"--bounds contains a non-number: {raw!r}") from exc
    if len(q) != n or len(theta) != n:
        raise _UsageError(f"--bounds needs {n} entries on each side")
    return q, theta


if __name__ == "__main__":
    sys.exit(main())
