"""Command line: ``run``, ``sweep`` and ``verify``.

Exit codes: 0 on success, 2 when a run fails (too many failed or
infeasible trials), 1 on any other error.  The output directory defaults
to ``$CRAN_OUT_DIR`` (or ``./results``).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, apply_param, load_scenario
from .montecarlo import (CutSetViolation, RunFailedError, default_out_dir, run_monte_carlo, write_csv,
                         write_summary_csv)
from .scenarios import ScenarioError

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2

log = logging.getLogger("multihop_cran")


def _common(p: argparse.ArgumentParser):
    p.add_argument("config", type=Path, help="scenario TOML file")
    p.add_argument("--trials", type=int, help="override [mc] trials")
    p.add_argument("--seed", type=int, help="override [mc] seed")
    p.add_argument("--out", type=Path, help="output directory (default $CRAN_OUT_DIR or ./results)")
    p.add_argument("--threads", type=int, default=1, help="worker processes")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="multihop-cran", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="Monte Carlo run of one scenario"))
    sw = sub.add_parser("sweep", help="run a scenario for several values of one parameter")
    _common(sw)
    sw.add_argument("--param", required=True,
                    help="capacity, p_tx_db, delay, inter_cu_capacity, trials, seed or edge:TAIL-HEAD")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sub.add_parser("verify", help="run the invariant and property checks")
    return ap


def _scenario(args):
    sc = load_scenario(args.config)
    if args.trials is not None:
        sc = sc.with_(trials=args.trials)
    if args.seed is not None:
        sc = sc.with_(seed=args.seed)
    return sc


def _print_summary(res):
    tag = f" [{res.param}]" if res.param else ""
    for s in res.summaries.values():
        print(f"{s.scheme:>16}{tag}: {s.mean_rate:.4f} +- {s.stderr:.4f} bits "
              f"({s.n_trials} trials, {s.n_failed} failed)")


def cmd_run(args) -> int:
    sc = _scenario(args)
    out = args.out or default_out_dir()
    res = run_monte_carlo(sc, out, workers=args.threads)
    _print_summary(res)
    print(f"wrote {out}/trials.csv and {out}/summary.csv")
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = _scenario(args)
    out = args.out or default_out_dir()
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values is empty")
    results = []
    for v in values:
        sc = apply_param(base, args.param, v)
        tag = f"{args.param}={v}"
        res = run_monte_carlo(sc, None, workers=args.threads, param=tag)
        write_csv(res, out, stem=f"{args.param}_{v}_".replace(":", "-"))
        _print_summary(res)
        results.append(res)
    Path(out).mkdir(parents=True, exist_ok=True)
    write_summary_csv(results, Path(out) / "sweep_summary.csv")
    print(f"wrote {out}/sweep_summary.csv")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_checks
    results = run_checks()
    return EXIT_OK if all(r.passed for r in results) else EXIT_ERROR


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify}
    try:
        return handlers[args.command](args)
    except RunFailedError as err:
        print(f"run failed: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ScenarioError, CutSetViolation, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as err:  # noqa: BLE001
        log.debug("unexpected failure", exc_info=True)
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
