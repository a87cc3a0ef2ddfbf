"""
warmswap command line.

Exit codes: 0 success, 1 validation, 2 network, 3 protocol.
Log verbosity comes from --log or WARMSWAP_LOG (off|info|debug).
"""
import argparse
import asyncio
import json
import logging
import signal
import sys
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd
import uvicorn
from pydantic import ValidationError

from src import app_state
from src.configs.logging_config import setup_logging
from src.configs.settings import LOG_LEVELS, get_settings
from src.image.codec import write_checkpoint
from src.image.dump_service import dump, load_spec
from src.image.errors import ImageError
from src.image.pool import DependencyPool, restore_image_from_checkpoint_into_pool
from src.main import app
from src.protocol.errors import ProtocolError, SessionClosedError, parse_endpoint
from src.protocol.page_client import PageClient
from src.protocol.page_server import serve
from src.restore.errors import RestoreError
from src.restore.model import EnvironmentManifest, RestorePolicy
from src.restore.restore_service import generate_access_trace, restore
from src.restore.trace_io import read_access_trace
from src.simulator.calibration import calibrate
from src.simulator.errors import SimulationError
from src.simulator.experiment import load_experiment
from src.simulator.model import CostModel
from src.simulator.simulator_service import (
    compare_strategies,
    load_cost_model,
    simulate,
    write_breakdown_csv,
    write_comparison_csv,
    write_report_json,
)
from src.workload.model import RateParams
from src.workload.trace_io import read_rates_csv, read_trace_csv
from src.workload.workload_service import (
    analyze,
    bucket_histogram,
    cold_start_curve,
    count_cold_starts,
    grid_argmax,
    rate_grid,
    split_by_tuning,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NETWORK = 2
EXIT_PROTOCOL = 3


class NetworkFailure(Exception):
    """Bind, connect or transport failure."""


def _emit(payload) -> None:
    print(json.dumps(payload, indent=2, default=str))


# -- dump ---------------------------------------------------------------------

def cmd_dump(args: argparse.Namespace) -> int:
    image = dump(load_spec(args.spec))
    size = write_checkpoint(image, args.out)
    print(f"label={image.dep_label} pages={image.metadata.total_pages} bytes={size}")
    return EXIT_OK


# -- serve --------------------------------------------------------------------

async def _serve(args: argparse.Namespace) -> int:
    settings = get_settings()
    pool = DependencyPool()
    for path in args.checkpoints:
        restore_image_from_checkpoint_into_pool(pool, path)

    try:
        handle = await serve(
            pool,
            args.listen or settings.listen,
            batch_pages=args.batch_pages or settings.stream_batch_pages,
            stream_delay=(args.stream_delay_ms if args.stream_delay_ms is not None else settings.stream_delay_ms) / 1e3,
        )
    except OSError as e:
        raise NetworkFailure(f"cannot listen on {args.listen or settings.listen}: {e}") from e
    previous_pool = app_state.pool
    app_state.pool, app_state.page_server = pool, handle
    print(f"listening on {handle.endpoint}", flush=True)

    stop = asyncio.Event()
    loop = asyncio.get_running_loop()
    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            loop.add_signal_handler(sig, stop.set)
        except (NotImplementedError, RuntimeError):
            pass

    http_task = None
    http_server = None
    http = args.http or settings.http
    if http:
        host, port = parse_endpoint(http)
        http_server = uvicorn.Server(uvicorn.Config(app, host=host, port=port, log_level="warning"))
        http_task = asyncio.create_task(http_server.serve())
        logger.info(f"✅ Control API on http://{host}:{port}")

    try:
        if args.duration is not None:
            try:
                await asyncio.wait_for(stop.wait(), timeout=args.duration)
            except asyncio.TimeoutError:
                pass
        else:
            await stop.wait()
    finally:
        if http_server is not None:
            http_server.should_exit = True
            await http_task
        stats_file = args.stats_file or settings.stats_file
        await handle.close()
        if stats_file:
            handle.dump_stats(stats_file)
        app_state.pool, app_state.page_server = previous_pool, None
    print(handle.stats_json())
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    return asyncio.run(_serve(args))


# -- run ----------------------------------------------------------------------

async def _run(args: argparse.Namespace) -> int:
    policy = RestorePolicy(args.policy)
    env = EnvironmentManifest.load(args.env) if args.env else None
    client = None
    if policy.networked:
        if not args.connect or not args.label:
            raise ValueError(f"--connect and --label are required for {policy.value}")
        try:
            client = await PageClient.connect(args.connect)
        except OSError as e:
            raise NetworkFailure(f"cannot connect to {args.connect}: {e}") from e
        source = client
    else:
        if not args.checkpoint:
            raise ValueError("--checkpoint is required for file-copy")
        source = args.checkpoint

    try:
        proc = await restore(source, policy, env, dep_label=args.label, realtime=args.realtime)
        try:
            if args.trace:
                trace = read_access_trace(args.trace)
            else:
                trace = generate_access_trace(proc.metadata, args.accesses, args.distinct, args.seed)
            reports = [await proc.execute(trace)]
            if args.again:
                if policy == RestorePolicy.BULK:
                    await proc.wait_for_stream()
                reports.append(await proc.execute_again(trace))
        finally:
            await proc.close()
    finally:
        if client is not None:
            await client.close()

    payload = {"runs": [r.dict() for r in reports]}
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    _emit(payload)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    return asyncio.run(_run(args))


# -- simulate -----------------------------------------------------------------

def cmd_simulate(args: argparse.Namespace) -> int:
    experiment = load_experiment(args.config)
    profiles = experiment.profiles()
    cost = experiment.cost()
    traces = experiment.traces()
    strategies = experiment.strategies if args.compare else experiment.strategies[:1]
    out = Path(args.out) if args.out else experiment.output_dir
    out.mkdir(parents=True, exist_ok=True)
    keep_alive = experiment.config.keep_alive

    summary = {}
    for strategy in strategies:
        report = simulate(traces, profiles, strategy, cost, keep_alive)
        stem = strategy.label.replace(":", "-")
        write_report_json(report, out / f"report-{stem}.json")
        write_breakdown_csv(report, out / f"breakdown-{stem}.csv")
        summary[strategy.label] = {
            "cold": report.cold_count,
            "warm": report.warm_count,
            "accumulated_cold_latency_s": report.accumulated_cold_latency_s,
            "memory_bytes": report.memory_bytes,
        }
    if args.compare:
        rows = compare_strategies(traces, profiles, strategies, cost, keep_alive)
        write_comparison_csv(rows, out / "comparison.csv")
        print(pd.DataFrame([r.dict() for r in rows]).to_string(index=False))
    else:
        _emit(summary)
    return EXIT_OK


# -- analyze ------------------------------------------------------------------

def cmd_analyze(args: argparse.Namespace) -> int:
    rows = []
    if args.trace:
        for trace in read_trace_csv(args.trace):
            rate = len(trace) / args.D
            row = analyze(RateParams(rate=rate, keep_alive=args.T, horizon=args.D), args.w, args.c).dict()
            row["function_id"] = trace.function_id
            row["observed_cold_starts"] = count_cold_starts(trace, args.T)
            rows.append(row)
    for rate in args.rate or []:
        rows.append(analyze(RateParams(rate=rate, keep_alive=args.T, horizon=args.D), args.w, args.c).dict())

    payload = {"keep_alive": args.T, "horizon": args.D, "rows": rows}
    if args.grid:
        grid = rate_grid()
        payload["grid_argmax"] = grid_argmax(args.T, args.D, grid)
    if args.histogram:
        rates = read_rates_csv(args.histogram)
        hist = bucket_histogram(rates, args.bucket_width)
        split = split_by_tuning(rates, args.w, args.c, args.T, args.D)
        payload["histogram"] = {
            "bucket_width": hist.bucket_width,
            "buckets": [{"bucket": k, "density": v} for k, v in sorted(hist.buckets.items())],
        }
        payload["tuning_split"] = {
            "tuned": len(split.tuned),
            "long_tail": len(split.long_tail),
            "long_tail_share": split.long_tail_share,
        }

    if args.csv_dir:
        out = Path(args.csv_dir)
        out.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(rows).to_csv(out / "analysis.csv", index=False)
        if args.grid:
            pd.DataFrame({"rate": grid, "expected_cold_starts": cold_start_curve(args.T, args.D, grid)}).to_csv(
                out / "curve.csv", index=False
            )
        if args.histogram:
            pd.DataFrame(payload["histogram"]["buckets"], columns=["bucket", "density"]).to_csv(
                out / "histogram.csv", index=False
            )
    _emit(payload)
    return EXIT_OK


# -- calibrate ----------------------------------------------------------------

def cmd_calibrate(args: argparse.Namespace) -> int:
    start = load_cost_model(args.start) if args.start else CostModel()
    result = calibrate(start)
    if args.out:
        Path(args.out).write_text(result.cost.json(indent=2) + "\n", encoding="utf-8")
    _emit(result.dict())
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _non_negative(value: str) -> float:
    v = float(value)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="warmswap", description="Dependency-image migration and cold-start experiments")
    parser.add_argument("--log", choices=LOG_LEVELS, help="log verbosity (default: WARMSWAP_LOG or info)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dump", help="dump a process spec into a checkpoint file")
    p.add_argument("spec", help="ProcessSpec JSON file")
    p.add_argument("out", help="checkpoint file to write")
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("serve", help="serve checkpoints from a page server")
    p.add_argument("checkpoints", nargs="+", help="checkpoint files to load into the pool")
    p.add_argument("--listen", help="host:port (default: WARMSWAP_LISTEN or 127.0.0.1:7070)")
    p.add_argument("--http", help="host:port for the control API")
    p.add_argument("--stats-file", help="write server statistics JSON here on shutdown")
    p.add_argument("--batch-pages", type=int, help="pages per PageData frame while streaming (1..256)")
    p.add_argument("--stream-delay-ms", type=_non_negative, help="pause between stream batches")
    p.add_argument("--duration", type=_non_negative, help="stop after this many seconds")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("run", help="restore a dependency image and execute an access trace")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--connect", help="page server host:port")
    src.add_argument("--checkpoint", help="checkpoint file (file-copy policy)")
    p.add_argument("--label", help="dependency label to migrate (network policies)")
    p.add_argument("--policy", choices=[x.value for x in RestorePolicy], default=RestorePolicy.BULK.value)
    p.add_argument("--trace", help="access trace CSV (page_id,compute_us)")
    p.add_argument("--accesses", type=int, default=500, help="generated trace length when --trace is absent")
    p.add_argument("--distinct", type=int, default=64, help="distinct pages in the generated trace")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--env", help="environment manifest JSON (path -> version)")
    p.add_argument("--again", action="store_true", help="run the trace a second time as a warm start")
    p.add_argument("--realtime", action="store_true", help="sleep for each access's compute_us")
    p.add_argument("--out", help="also write the report JSON here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("simulate", help="run a simulation experiment")
    p.add_argument("config", help="experiment config JSON")
    p.add_argument("--compare", action="store_true", help="simulate every configured strategy and compare")
    p.add_argument("--out", help="output directory (default: the config's output_dir)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="cold-start expectation analysis")
    p.add_argument("--lambda", dest="rate", type=float, action="append", help="rate in calls/min (repeatable)")
    p.add_argument("--trace", help="invocation trace CSV (function_id,timestamp_minutes)")
    p.add_argument("--T", type=float, default=15.0, help="keep-alive time in minutes")
    p.add_argument("--D", type=float, default=1440.0, help="horizon in minutes")
    p.add_argument("--w", type=float, default=1.0, help="benefit per avoided cold start")
    p.add_argument("--c", type=float, default=0.0, help="tuning cost per function")
    p.add_argument("--grid", action="store_true", help="also scan the rate grid 0.0001..1.0")
    p.add_argument("--histogram", help="rates CSV to bucket")
    p.add_argument("--bucket-width", type=float, default=0.001)
    p.add_argument("--csv-dir", help="write plot-ready CSV tables here")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("calibrate", help="fit the cost model to the reference measurements")
    p.add_argument("--start", help="cost model JSON to start from")
    p.add_argument("--out", help="write the fitted cost model JSON here")
    p.set_defaults(func=cmd_calibrate)
    return parser


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (NetworkFailure, SessionClosedError, ConnectionError, TimeoutError)):
        return EXIT_NETWORK
    if isinstance(exc, ProtocolError):
        return EXIT_PROTOCOL
    return EXIT_VALIDATION


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        setup_logging(args.log)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        return args.func(args)
    except (ImageError, RestoreError, SimulationError, ProtocolError, NetworkFailure,
            ValueError, OSError) as e:
        code = exit_code_for(e)
        logger.error(f"❌ {args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
