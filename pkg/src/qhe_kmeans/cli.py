"""Command-line entry point: ``qhe-kmeans <subcommand> ...``.

Every subcommand prints one JSON document (and writes it to ``--output`` when
given). Usage errors exit with 2, runtime failures with 1; both emit a JSON
error record on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import groveropt, keyledger, kmeans, protocol, swaptest
from .keyledger import TGateMode
from .qotp import KeySet, random_keyset
from .statevector import Circuit, prepare

DEFAULT_SHOTS = 8192
T_MODE_CHOICES = ("fresh", "same-key", "algebraic")
# demo keys for the three-qubit encrypted search and the encrypted SwapTest data qubits
DEMO_GROVER_KEYS = "{1,1},{0,1},{0,1}"
DEMO_SWAPTEST_KEYS = "{1,1},{0,0}"


class UsageError(ValueError):
    pass


def _read_text_or_inline(value: str) -> str:
    p = Path(value)
    if p.is_file():
        return p.read_text()
    return value


def _keys(value: str) -> KeySet:
    try:
        return KeySet.parse(_read_text_or_inline(value))
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad --keys: {exc}") from exc


def _load_circuit(path: str) -> Circuit:
    try:
        return Circuit.from_json(Path(path).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load circuit {path!r}: {exc}") from exc


def _emit(args, payload: dict) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    sys.stdout.write(text)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--shots", type=int, default=DEFAULT_SHOTS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0, help="bit-flip probability per measured bit")
    p.add_argument("--output", help="also write the JSON result here")


def _t_mode(p: argparse.ArgumentParser) -> None:
    p.add_argument("--t-mode", choices=T_MODE_CHOICES, default="same-key")


def cmd_swaptest(args) -> dict:
    prep_a = _load_circuit(args.state_a) if args.state_a else swaptest.basis_prep("1")
    prep_b = _load_circuit(args.state_b) if args.state_b else swaptest.basis_prep("0")
    rng = np.random.default_rng(args.seed)
    analytic = swaptest.swaptest_p0(prepare(prep_a), prepare(prep_b))
    out = {"analytic_p0": analytic, "encrypted": bool(args.encrypted)}
    if args.encrypted:
        r = prep_a.qubit_count
        if args.keys:
            keys = _keys(args.keys)
        elif r == 1:
            keys = KeySet.parse(DEMO_SWAPTEST_KEYS)
        else:
            keys = random_keyset(r, rng)
        est, session = swaptest.similarity_encrypted(
            prep_a, prep_b, keys, args.shots, args.t_mode, rng, args.noise
        )
        out["keys"] = keys.to_dict()["pairs"]
        out["t_mode"] = TGateMode.parse(args.t_mode).value
        out["ciphertext"] = session.ciphertext.to_dict()
        out["final_keys"] = session.final_keys.to_dict()["pairs"]
        out["t_assists"] = session.transcript.kinds().count("TAssistRequest")
    else:
        est = swaptest.similarity_plain(prepare(prep_a), prepare(prep_b), args.shots, rng, args.noise)
    out["estimate"] = est.to_dict()
    return out


def _parse_marked(text: str, m: int | None) -> tuple[set[str], int]:
    marked = {s.strip() for s in text.split(",") if s.strip()}
    if not marked:
        raise UsageError("--marked is empty")
    widths = {len(s) for s in marked}
    if len(widths) != 1:
        raise UsageError("--marked entries differ in length")
    width = widths.pop()
    if m is not None and m != width:
        raise UsageError(f"--m {m} does not match marked bitstrings of width {width}")
    return marked, width


def cmd_grover(args) -> dict:
    marked, m = _parse_marked(args.marked, args.m)
    rng = np.random.default_rng(args.seed)
    iterations = args.iterations
    if iterations is None:
        iterations = groveropt.optimal_iterations(2**m, len(marked))
    out = {
        "marked": sorted(marked),
        "m": m,
        "iterations": iterations,
        "analytic_marked_probability": groveropt.marked_probability(marked, m, iterations),
    }
    if args.dump_circuit:
        prep, ev = groveropt.grover_circuits(marked, m, iterations, decomposed=args.encrypted)
        Path(args.dump_circuit).write_text(json.dumps(ev.to_dict(), indent=2) + "\n")
    if args.encrypted:
        if args.keys:
            keys = _keys(args.keys)
        elif m == 3:
            keys = KeySet.parse(DEMO_GROVER_KEYS)
        else:
            keys = random_keyset(m, rng)
        res = groveropt.encrypted_grover(
            marked, m, keys, args.shots, args.t_mode, rng, iterations, args.noise
        )
        out.update(
            {
                "keys": keys.to_dict()["pairs"],
                "t_mode": TGateMode.parse(args.t_mode).value,
                "ciphertext": res.ciphertext.to_dict(),
                "decrypted": res.decrypted.to_dict(),
                "final_keys": res.final_keys.to_dict()["pairs"],
            }
        )
    else:
        from .statevector import apply_bitflip_noise

        hist = groveropt.grover_search(marked, m, iterations, args.shots, rng)
        if args.noise:
            hist = apply_bitflip_noise(hist, args.noise, rng)
        out["histogram"] = hist.to_dict()
    return out


def cmd_minfind(args) -> dict:
    if args.table:
        try:
            table = groveropt.ValueTable.from_json(_read_text_or_inline(args.table))
        except (ValueError, KeyError) as exc:
            raise UsageError(f"bad --table: {exc}") from exc
    else:
        table = groveropt.reference_table()
    rng = np.random.default_rng(args.seed)
    search = None
    if args.encrypted:
        search = groveropt.encrypted_search(np.random.default_rng(args.seed + 1), args.t_mode)
    res = groveropt.durr_hoyer_min(
        table,
        budget_rounds=args.budget,
        shots_per_round=args.shots_per_round,
        rng=rng,
        start=args.start,
        iteration_rule=args.iteration_rule,
        search=search,
    )
    a_true, b_true = table.argmin()
    return {
        "table": table.to_dict(),
        "result": res.to_dict(),
        "exhaustive_min": {"a": a_true, "b": b_true},
        "found_minimum": res.b_min == b_true,
    }


def cmd_ledger(args) -> dict:
    if args.circuit:
        circuit = _load_circuit(args.circuit)
    else:
        _, circuit = groveropt.grover_000_111_circuits()
    keys = _keys(args.keys) if args.keys else KeySet.parse(DEMO_GROVER_KEYS)
    mode = TGateMode.parse(args.t_mode)
    rng = np.random.default_rng(args.seed)
    try:
        entries, final = keyledger.run_ledger(circuit, keys, mode, rng)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if args.csv:
        Path(args.csv).write_text(keyledger.ledger_to_csv(keys, entries))
    out = keyledger.ledger_to_dict(keys, entries, final, mode)
    out["final_a_bits"] = final.a_mask()
    return out


def cmd_kmeans(args) -> dict:
    cfg: dict = {}
    if args.config:
        try:
            cfg = json.loads(_read_text_or_inline(args.config))
        except json.JSONDecodeError as exc:
            raise UsageError(f"bad --config: {exc}") from exc
    for key in ("k", "tau", "max_iters", "mode", "levels", "seed", "shots"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if not args.data:
        raise UsageError("--data is required")
    try:
        points = kmeans.load_points_csv(Path(args.data).read_text())
        mode = kmeans.PipelineMode(
            mode=cfg.get("mode", "exact"),
            shots=int(cfg.get("shots", DEFAULT_SHOTS)),
            quantization_levels=int(cfg.get("levels", 8)),
            t_mode=cfg.get("t_mode", args.t_mode),
        )
        k = int(cfg["k"])
        kmeans.check_run_args(points, k, float(cfg.get("tau", 1e-4)), int(cfg.get("max_iters", 20)))
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"bad k-means configuration: {exc}") from exc
    seed = int(cfg.get("seed", 0))
    state, history = kmeans.run_kmeans(
        points,
        k,
        float(cfg.get("tau", 1e-4)),
        int(cfg.get("max_iters", 20)),
        mode,
        np.random.default_rng(seed),
        cfg.get("initial_centroids"),
    )
    return {
        "config": {**cfg, "k": k, "mode": mode.mode},
        "assignments": state.assignments,
        "centroids": [c.tolist() for c in state.centroids],
        "iterations": state.iteration,
        "converged": state.converged,
        "history": history,
    }


def cmd_protocol_demo(args) -> dict:
    if args.transcript:
        try:
            transcript = protocol.Transcript.from_jsonl(Path(args.transcript).read_text())
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot load transcript: {exc}") from exc
    else:
        prep, ev = groveropt.grover_000_111_circuits()
        keys = _keys(args.keys) if args.keys else KeySet.parse(DEMO_GROVER_KEYS)
        session = protocol.run_delegated(
            prep, ev, keys, args.shots, args.t_mode, np.random.default_rng(args.seed), args.noise
        )
        transcript = session.transcript
        if args.save_transcript:
            Path(args.save_transcript).write_text(transcript.to_jsonl())
    report = protocol.audit(transcript)
    try:
        view = protocol.evaluator_view(transcript)
    except protocol.ProtocolError as exc:
        view = None
        report.violations.append(str(exc))
        report.ok = False
    return {
        "audit": {"ok": report.ok, "violations": report.violations},
        "messages": len(transcript),
        "message_types": transcript.kinds(),
        "evaluator_view": view,
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qhe-kmeans", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("swaptest", help="SwapTest similarity of two prepared states")
    _common(p)
    _t_mode(p)
    p.add_argument("--state-a", help="preparation circuit JSON (default |1>)")
    p.add_argument("--state-b", help="preparation circuit JSON (default |0>)")
    p.add_argument("--encrypted", action="store_true")
    p.add_argument("--keys", help="data-register keys, inline or file (default {1,1},{0,0})")
    p.set_defaults(func=cmd_swaptest)

    p = sub.add_parser("grover", help="Grover search for a marked set")
    _common(p)
    _t_mode(p)
    p.add_argument("--marked", default="000,111")
    p.add_argument("--m", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--encrypted", action="store_true")
    p.add_argument("--keys", help="initial keys (default {1,1},{0,1},{0,1} for m=3, else random)")
    p.add_argument("--dump-circuit", help="write the evaluation circuit JSON here")
    p.set_defaults(func=cmd_grover)

    p = sub.add_parser("minfind", help="Durr-Hoyer minimum over a value table")
    _common(p)
    _t_mode(p)
    p.add_argument("--table", help="ValueTable JSON (default: built-in eight-entry table)")
    p.add_argument("--start", help="starting index bitstring (default random)")
    p.add_argument("--budget", type=int, help="round budget (default ceil(sqrt(N)))")
    p.add_argument("--shots-per-round", type=int, default=8)
    p.add_argument("--iteration-rule", choices=("best", "optimal", "random"), default="best")
    p.add_argument("--encrypted", action="store_true")
    p.set_defaults(func=cmd_minfind)

    p = sub.add_parser("ledger", help="key ledger of a Clifford+T circuit")
    _common(p)
    _t_mode(p)
    p.add_argument("--circuit", help="circuit JSON (default: built-in encrypted {000,111} search)")
    p.add_argument("--keys", help="initial keys (default {1,1},{0,1},{0,1})")
    p.add_argument("--csv", help="write the qubit-by-step ledger grid as CSV")
    p.set_defaults(func=cmd_ledger)

    p = sub.add_parser("kmeans", help="quantum k-means pipeline")
    _common(p)
    _t_mode(p)
    p.add_argument("--data", help="CSV, one point per row")
    p.add_argument("--config", help="JSON {k, tau, max_iters, mode, shots, levels, seed, initial_centroids}")
    p.add_argument("--k", type=int)
    p.add_argument("--tau", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--mode", choices=kmeans.MODES)
    p.add_argument("--levels", type=int)
    p.set_defaults(func=cmd_kmeans, shots=None, seed=None)

    p = sub.add_parser("protocol-demo", help="run or replay a delegated session and audit it")
    _common(p)
    _t_mode(p)
    p.add_argument("--transcript", help="JSONL transcript to replay and audit")
    p.add_argument("--save-transcript", help="write the demo session transcript as JSONL")
    p.add_argument("--keys")
    p.set_defaults(func=cmd_protocol_demo)
    return parser


def _error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        payload = args.func(args)
    except UsageError as exc:
        _error("usage", str(exc))
        return 2
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON record
        _error(type(exc).__name__, str(exc))
        return 1
    _emit(args, payload)
    return 0


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
