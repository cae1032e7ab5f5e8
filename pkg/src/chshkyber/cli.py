"""Command-line entry point.

Exit codes: 0 success, 1 verification reject, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import chsh, evolution, hamiltonian, mlwe, security, session
from .rng import make_rng

EXIT_OK, EXIT_REJECT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _epsilon(text: str) -> float:
    """Accepts plain floats and ``2^-32`` style powers."""
    try:
        if "^" in text:
            base, exp = text.split("^", 1)
            value = float(base) ** float(exp)
        else:
            value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid epsilon {text!r}") from None
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("epsilon must lie in (0, 1)")
    return value


def _seed(text: str):
    return int(text) if text.lstrip("-").isdigit() else text


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv(rows, header) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _emit(args, text: str):
    if args.out and args.out != "-":
        path = Path(args.out)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    else:
        sys.stdout.write(text)


def _load_config(args) -> dict:
    if not args.config:
        return {}
    try:
        return json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from None


def _session_config(args) -> session.SessionConfig:
    data = _load_config(args)
    if getattr(args, "paramset", None):
        data["paramset"] = args.paramset
        data.pop("params", None)
    if "paramset" not in data and "params" not in data:
        data["paramset"] = "toy"
    if getattr(args, "m", None) is not None:
        data.setdefault("params", {})
        data["params"]["m"] = args.m
    for key in ("channel", "epsilon", "sessions"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    if getattr(args, "evolution", None):
        data["evolution"] = {"mode": args.evolution}
    try:
        return session.SessionConfig.from_json(data, seed=args.seed)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"invalid session configuration: {exc}") from None


def _params(args) -> mlwe.Params:
    data = _load_config(args)
    name = args.paramset or data.get("paramset")
    seed = args.seed if args.seed is not None else data.get("seed", 0)
    try:
        if name:
            params = mlwe.paramset(name)
        elif "params" in data:
            params = mlwe.Params.from_json(data["params"])
        else:
            params = mlwe.paramset("toy")
    except (mlwe.ParameterError, KeyError) as exc:
        raise UsageError(str(exc)) from None
    return params.replace(seed=session.derive_seed(seed, "params"))


# --- subcommands -----------------------------------------------------------------

def cmd_keygen(args) -> int:
    params = _params(args)
    kp = mlwe.keygen(params)
    out = {
        "params": params.to_json(),
        "public_key_hex": kp.public.to_bytes().hex(),
        "pk_hash_hex": session.pk_hash(kp.public).hex(),
        "secret_key_hex": kp.secret.s.to_bytes().hex(),
        "reject_seed_hex": kp.secret.z.hex(),
    }
    _emit(args, _dump_json(out))
    return EXIT_OK


def cmd_session(args) -> int:
    config = _session_config(args)
    result = session.run_session(config)
    out = result.transcript.to_json()
    out["verification"] = result.verification.to_json()
    out["hardness_premises"] = result.hardness_premises.to_json()
    _emit(args, _dump_json(out))
    return EXIT_OK if result.accepted and result.shared_secret_match else EXIT_REJECT


def cmd_campaign(args) -> int:
    config = _session_config(args)
    if config.sessions < 2:
        raise UsageError("campaign needs --sessions >= 2")
    campaign = session.run_campaign(config)
    if args.format == "csv":
        rows = [(sid, int(acc), int(match), f"{e:.6f}") for sid, acc, match, e in campaign.summary_rows()]
        _emit(args, _csv(rows, ("session_id", "accepted", "match", "e_hat")))
    else:
        out = {"config": config.to_json(), "summary": campaign.summary,
               "sessions": [{"session_id": r.session_id, "accepted": r.accepted,
                             "match": r.shared_secret_match, "e_hat": r.chsh_estimate.e_hat}
                            for r in campaign.results]}
        _emit(args, _dump_json(out))
    return EXIT_OK if campaign.summary["accepted"] == config.sessions else EXIT_REJECT


def cmd_chsh(args) -> int:
    try:
        strategy = chsh.parse_strategy(args.strategy)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    seed = args.seed if args.seed is not None else 0
    transcript, est = chsh.run_game(strategy, args.m, make_rng(seed, "chsh-cli"), args.epsilon)
    verdict = chsh.verify_session(transcript, args.epsilon)
    out = {"strategy": strategy.tag, "m": args.m, "epsilon": args.epsilon,
           "transcript": transcript.to_json(), "estimate": est.to_json(),
           "verification": verdict.to_json()}
    _emit(args, _dump_json(out))
    return EXIT_OK if verdict.accepted else EXIT_REJECT


def cmd_markov(args) -> int:
    try:
        M = session.parse_matrix(args.M, args.n)
        noise = session.parse_noise(args.noise, args.q)
        spec = evolution.ChainSpec(M, noise)
        kernel = evolution.build_kernel(spec)
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None
    report = evolution.spectral_report(kernel, args.epsilon)
    threshold = args.poly_threshold if args.poly_threshold is not None else 1 / args.n
    erg = evolution.verify_ergodicity(spec, threshold)
    out = {"chain": spec.to_json(), "spectral": report.to_json(max_eigenvalues=args.max_eigenvalues),
           "ergodicity": erg.to_json()}
    _emit(args, _dump_json(out))
    if args.kernel_csv:
        header = ["state"] + [f"s{j}" for j in range(kernel.size)]
        rows = [[i] + [repr(float(p)) for p in kernel.rows[i]] for i in range(kernel.size)]
        Path(args.kernel_csv).write_text(_csv(rows, header))
    return EXIT_OK


def _load_transcript(path: str) -> chsh.ChshTranscript:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read transcript {path}: {exc}") from None
    if isinstance(data, dict):
        data = data.get("chsh", data.get("transcript"))
    if not isinstance(data, list) or not data:
        raise UsageError("transcript JSON must be a non-empty array of {a,b,x,y,c} rounds")
    return chsh.ChshTranscript.from_json(data)


def cmd_hamiltonian(args) -> int:
    transcript = _load_transcript(args.transcript)
    inst = hamiltonian.instance_from_transcript(transcript)
    try:
        promise = hamiltonian.PromiseInstance(inst, args.alpha, args.beta)
    except hamiltonian.InvalidPromise as exc:
        raise UsageError(str(exc)) from None
    energies = hamiltonian.pair_energies(inst)
    out = {"ground_energy": sum(energies.values()),
           "decision": hamiltonian.decide_promise(promise),
           "alpha": args.alpha, "beta": args.beta, "pair_count": inst.pair_count,
           "norm_check": inst.norm_check,
           "per_pair_energies": [energies[k] for k in sorted(energies)],
           "correlation_energy": hamiltonian.correlation_energy_link(transcript).to_json()}
    _emit(args, _dump_json(out))
    return EXIT_OK


def cmd_estimate(args) -> int:
    try:
        variant = security.Variant(args.variant, args.beta)
        family = security.AttackFamily(args.family)
        est = security.estimate(args.paramset, variant, family, args.model)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = est.to_json()
    out["delta_blocksize"] = security.delta_blocksize(variant.beta_tilde)
    out["effective_variance"] = security.effective_variance(
        security.NAMED_SHAPES[args.paramset]["eta"] / 2, variant.beta_tilde)
    if args.format == "csv":
        _emit(args, _csv([[out[k] for k in sorted(out)]], sorted(out)))
    else:
        _emit(args, _dump_json(out))
    return EXIT_OK


def table2_csv() -> str:
    rows = [r.csv_row() for r in security.table_report()]
    return _csv(rows, security.TableRow.CSV_COLUMNS)


def table1_csv(params: mlwe.Params) -> str:
    rows = [(r.metric, r.classical, r.enhanced, "" if r.value is None else r.value)
            for r in security.resource_report(params)]
    return _csv(rows, ("metric", "classical", "chsh_enhanced", "value"))


def cmd_report(args) -> int:
    params = _params(args)
    if args.m is not None:
        params = params.replace(m=args.m)
    t2 = table2_csv()
    t1 = table1_csv(params)
    if args.out and args.out != "-":
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "table2.csv").write_text(t2)
        (outdir / "table1.csv").write_text(t1)
        if not args.no_figures:
            from . import plotting
            plotting.render_all(outdir / "figures")
        if args.format == "json":
            (outdir / "report.json").write_text(_dump_json(_report_json(params)))
        return EXIT_OK
    if args.format == "json":
        sys.stdout.write(_dump_json(_report_json(params)))
    else:
        sys.stdout.write(t2)
    return EXIT_OK


def _report_json(params) -> dict:
    return {
        "table2": [r.__dict__ for r in security.table_report()],
        "table1": [r.__dict__ for r in security.resource_report(params)],
        "delta_blocksize": {tag: security.delta_blocksize(b) for tag, b in security.DEFAULT_BETA.items()},
        "delta_blocksize_calibration": {
            "constant": security.DELTA_B_CONSTANT,
            "kyber512_bit_gap": security.BASE_BITS["kyber512"] * security.ROW_BETA["kyber512"][security.CHSH],
        },
    }


# --- parser ----------------------------------------------------------------------

def _global_flags(parser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=_seed, default=default, help="root seed (int or string)")
    parser.add_argument("--config", default=default, help="JSON session configuration")
    parser.add_argument("--out", default=default, help="output file (directory for report)")
    parser.add_argument("--format", choices=("json", "csv"), default=argparse.SUPPRESS if suppress else "json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chshkyber", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    p = sub.add_parser("keygen", parents=[common], help="generate a KEM key pair")
    p.add_argument("--paramset", choices=sorted(mlwe.PARAMSETS))
    p.set_defaults(func=cmd_keygen)

    for name, func, helptext in (("session", cmd_session, "run one gated session"),
                                 ("campaign", cmd_campaign, "run chained sessions")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--paramset", choices=sorted(mlwe.PARAMSETS))
        p.add_argument("--channel", help="ideal | noisy:<v> | lhv[:<table>|:random]")
        p.add_argument("--evolution", choices=("markov", "prf"))
        p.add_argument("--m", type=int, help="EPR pairs per session")
        p.add_argument("--epsilon", type=_epsilon)
        if name == "campaign":
            p.add_argument("--sessions", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("chsh", parents=[common], help="play the CHSH game")
    p.add_argument("--strategy", default="quantum", help="quantum | noisy:<v> | lhv:<table> | lhv:random")
    p.add_argument("--m", type=int, default=4096)
    p.add_argument("--epsilon", type=_epsilon, default=chsh.DEFAULT_EPSILON)
    p.set_defaults(func=cmd_chsh)

    p = sub.add_parser("markov", parents=[common], help="spectral analysis of a key-evolution chain")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--q", type=int, default=5)
    p.add_argument("--M", default="2", help="comma-separated row-major matrix")
    p.add_argument("--noise", default="uniform", help="cbd:<eta> | uniform | uniform-on:<offsets> | table:<file>")
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--poly-threshold", type=float)
    p.add_argument("--max-eigenvalues", type=int, default=16)
    p.add_argument("--kernel-csv", help="also write the kernel matrix as CSV")
    p.set_defaults(func=cmd_markov)

    p = sub.add_parser("hamiltonian", parents=[common], help="ground energy of a transcript's Hamiltonian")
    p.add_argument("transcript", help="transcript JSON (session output or array of rounds)")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.set_defaults(func=cmd_hamiltonian)

    p = sub.add_parser("estimate", parents=[common], help="bit-security estimate")
    p.add_argument("--paramset", choices=security.PARAMSET_NAMES, default="kyber768")
    p.add_argument("--variant", choices=security.VARIANT_TAGS, default=security.CHSH)
    p.add_argument("--family", choices=security.FAMILIES, default=security.BKZ)
    p.add_argument("--model", choices=security.MODELS, default=security.MULTIPLICATIVE)
    p.add_argument("--beta", type=float, help="override the variant's inflation factor")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("report", parents=[common], help="comparison tables and figures")
    p.add_argument("--paramset", choices=sorted(mlwe.PARAMSETS))
    p.add_argument("--m", type=int, help="EPR pairs for the resource table")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    if not hasattr(args, "paramset"):
        args.paramset = None
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"chshkyber {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
