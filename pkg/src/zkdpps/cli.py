"""Command-line entry point: ``zkdpps run|sweep|bench|dkg-demo``."""

from __future__ import annotations

import argparse
import sys
from typing import Sequence, TextIO

from .config import RunConfig, load_file, merge
from .dkg import dkg_deal, dkg_verify_share, run_dkg
from .errors import ConfigError, TaintViolation, ZkDppsError
from .ledger import write_dump
from .metrics import emit_csv
from .scenarios import Mode, run_scenario, run_sweep, timing_bench

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_CONFIG = 2
EXIT_TAINT = 3

_D = RunConfig()


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON file with any of the options below; flags take precedence")
    common.add_argument("--scenario", type=int, choices=(1, 2, 3), help=f"1 hazmat insurance, 2 shelf life, 3 price analysis (default {_D.scenario})")
    common.add_argument("--mode", choices=[m.value for m in Mode], help=f"zk or plain baseline (default {_D.mode})")
    common.add_argument("--validators", type=int, help=f"validators, each paired with one manager (default {_D.validators})")
    common.add_argument("--threshold", type=int, help=f"shares needed to decrypt (default {_D.threshold})")
    common.add_argument("--block-period-ms", dest="block_period_ms", type=int, help=f"mempool period; one block per second (default {_D.block_period_ms})")
    common.add_argument("--refresh-s", dest="refresh_s", type=int, help=f"key round lifetime; five minutes (default {_D.refresh_s})")
    common.add_argument("--inter-task-ms", dest="inter_task_ms", type=int, help=f"gap between task releases (default {_D.inter_task_ms})")
    common.add_argument("--runs", type=int, help=f"task releases per scenario (default {_D.runs})")
    common.add_argument("--byzantine-computers", dest="byzantine_computers", type=int, help="computers that corrupt their output (default 0)")
    common.add_argument("--computers", type=int, help="computer pool size (default: one per validator)")
    common.add_argument("--seed", type=int, help=f"master seed (default {_D.seed})")
    common.add_argument("--periods-ms", dest="periods_ms", type=lambda s: [int(x) for x in s.split(",")], help="sweep periods, comma separated (default 500,1000,5000,10000)")
    common.add_argument("--iterations", type=int, help=f"benchmark iterations (default {_D.iterations})")
    common.add_argument("--out", help="CSV report path")
    common.add_argument("--dump-ledger", dest="dump_ledger", help="ledger dump path")

    parser = argparse.ArgumentParser(prog="zkdpps", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run one scenario")
    sub.add_parser("sweep", parents=[common], help="sweep inter-task periods in both modes")
    sub.add_parser("bench", parents=[common], help="wall-clock split/reconstruct benchmark")
    sub.add_parser("dkg-demo", parents=[common], help="run one DKG round and show share checks")
    return parser


def parse_and_validate(argv: Sequence[str], file: str | None = None) -> RunConfig:
    ns = vars(build_parser().parse_args(list(argv)))
    path = ns.pop("config", None) or file
    file_values = load_file(path) if path else {}
    return merge(file_values, ns)


def _run(cfg: RunConfig, out: TextIO) -> int:
    rep = run_scenario(cfg.scenario_config())
    print(rep.summary_line(), file=out)
    for run, text in sorted(rep.summaries.items()):
        print(f"  run {run}: {text}", file=out)
    if rep.oracle_mismatches:
        print(f"  oracle mismatches: {rep.oracle_mismatches}", file=out)
    if cfg.out:
        emit_csv(rep, cfg.out)
    if cfg.dump_ledger:
        write_dump(rep.ledger_lines, cfg.dump_ledger)
    if rep.taint_violations:
        return EXIT_TAINT
    bad = rep.rejected or rep.oracle_mismatches or any(r.deliver_t is None for r in rep.records)
    return EXIT_REJECTED if bad else EXIT_OK


def _sweep(cfg: RunConfig, out: TextIO) -> int:
    sweep = run_sweep(cfg.scenario_config(), cfg.periods_ms)
    for rep in sweep.ordered():
        print(rep.summary_line(), file=out)
    for p in cfg.periods_ms:
        print(f"overhead period={p / 1000:g}s zk/plain={sweep.overhead_ratio(p):.3f}", file=out)
    if cfg.out:
        emit_csv(sweep.ordered(), cfg.out)
    return EXIT_REJECTED if any(r.rejected for r in sweep.ordered()) else EXIT_OK


def _bench(cfg: RunConfig, out: TextIO) -> int:
    keygen_ms, recon_ms = timing_bench(cfg.iterations, cfg.seed)
    print(f"keygen mean {keygen_ms:.3f} ms over {cfg.iterations} iterations", file=out)
    print(f"reconstruct mean {recon_ms:.3f} ms over {cfg.iterations} iterations", file=out)
    return EXIT_OK


def _dkg_demo(cfg: RunConfig, out: TextIO) -> int:
    run = run_dkg("demo", cfg.validators, cfg.threshold, cfg.seed)
    tr = run.transcript
    print(f"round {tr.round_id}: n={cfg.validators} t={tr.threshold}", file=out)
    print(f"verified dealers {sorted(tr.verified)} faulty {sorted(tr.faulty)}", file=out)
    print(f"public key {tr.public_key:x}", file=out)
    print("dealer -> receiver : share check", file=out)
    for i, st in sorted(run.dealers.items()):
        for j in range(1, cfg.validators + 1):
            ok = dkg_verify_share(dkg_deal(st, j), st.commitments, tr.params)
            print(f"  {i} -> {j} : {'ok' if ok else 'FAIL'}", file=out)
    return EXIT_OK


HANDLERS = {"run": _run, "sweep": _sweep, "bench": _bench, "dkg-demo": _dkg_demo}


def dispatch(cfg: RunConfig, out: TextIO | None = None) -> int:
    out = out or sys.stdout
    try:
        return HANDLERS[cfg.command](cfg, out)
    except TaintViolation as exc:
        print(f"taint violation: {exc}", file=sys.stderr)
        return EXIT_TAINT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ZkDppsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_REJECTED


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg = parse_and_validate(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"config error in {exc.field}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return dispatch(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
