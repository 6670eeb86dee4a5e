"""Command line entry point: train, eval, predict, serve, simulate.

Machine-readable results go to stdout as one JSON line; logs go to stderr.
Exit codes: 0 ok, 1 user error, 2 internal error.
"""
from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import threading
import traceback
from pathlib import Path

from . import nn, simulator
from .datamodel import FlocError, WaterSample
from .dataset import load_csv
from .service import Service, ServiceConfig

log = logging.getLogger("flocwatch")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _hidden(text: str) -> tuple:
    try:
        dims = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated widths, got {text!r}") from None
    return dims


def _emit(doc) -> None:
    sys.stdout.write(json.dumps(doc, separators=(",", ":")) + "\n")
    sys.stdout.flush()


def cmd_train(args) -> int:
    ds = load_csv(args.data)
    config = nn.TrainConfig(
        epochs=args.epochs, batch_size=args.batch, learning_rate=args.lr,
        momentum=args.momentum, seed=args.seed, hidden_dims=args.hidden,
    )
    params, report = nn.train(ds, config)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    nn.save_model(params, args.out)
    log.info("model written to %s", args.out)
    _emit({"model": str(args.out), **report.summary()})
    return 0


def cmd_eval(args) -> int:
    params = nn.load_model(args.model)
    ds = load_csv(args.data, edges=params.bin_edges)
    _emit(nn.evaluate(params, ds))
    return 0


def cmd_predict(args) -> int:
    params = nn.load_model(args.model)
    sample = WaterSample(args.temp, args.ph, args.tds, args.floc).validate()
    cls, probs = nn.predict(params, sample)
    _emit({"class": int(cls), "label": cls.label, "probabilities": [float(p) for p in probs]})
    return 0


def cmd_serve(args) -> int:
    config = ServiceConfig.load(args.config)
    svc = Service(config)
    stop = threading.Event()

    def on_signal(signum, frame):
        stop.set()

    signal.signal(signal.SIGTERM, on_signal)
    signal.signal(signal.SIGINT, on_signal)
    host, port = svc.start()
    # announce the bound address so callers using port 0 can connect
    print(f"listening on {host}:{port}", file=sys.stderr, flush=True)
    try:
        while not stop.wait(0.2):
            pass
    finally:
        svc.shutdown()
        log.info("shutdown: %s", svc.stats())
    return 0


def cmd_simulate(args) -> int:
    scenario = simulator.Scenario(
        kind=args.scenario.replace("-", "_"), devices=args.devices, rate=args.rate,
        duration=args.duration, corrupt_prob=args.corrupt_prob, seed=args.seed,
        start_time=args.start_time,
    )
    if args.target == "-":
        for lines in simulator.generate(scenario).values():
            sys.stdout.writelines(lines)
        sys.stdout.flush()
        return 0
    sent = simulator.stream(scenario, args.target, paced=not args.fast)
    log.info("sent %d frames to %s", sent, args.target)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flocwatch", description="Biofloc water-quality pipeline")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a DO classifier from CSV")
    t.add_argument("--data", required=True)
    t.add_argument("--epochs", type=int, default=150)
    t.add_argument("--batch", type=int, default=32)
    t.add_argument("--lr", type=float, default=0.05)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--seed", type=int, default=7)
    t.add_argument("--hidden", type=_hidden, default=nn.DEFAULT_HIDDEN)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a model on labeled CSV")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="classify one reading")
    pr.add_argument("--model", required=True)
    pr.add_argument("--temp", type=float, required=True)
    pr.add_argument("--ph", type=float, required=True)
    pr.add_argument("--tds", type=float, required=True)
    pr.add_argument("--floc", type=float, required=True)
    pr.set_defaults(func=cmd_predict)

    s = sub.add_parser("serve", help="run the ingestion service")
    s.add_argument("--config", help="JSON config (default: $FLOC_CONFIG)")
    s.set_defaults(func=cmd_serve)

    m = sub.add_parser("simulate", help="stream simulated device frames")
    m.add_argument("--target", required=True, help="host:port, or - for stdout")
    m.add_argument("--scenario", choices=("normal", "do-crash", "ph-drift"), default="normal")
    m.add_argument("--devices", type=int, default=1)
    m.add_argument("--rate", type=float, default=1.0)
    m.add_argument("--duration", type=float, default=60.0)
    m.add_argument("--corrupt-prob", type=float, default=0.0)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--start-time", type=int, default=simulator.DEFAULT_START_TIME)
    m.add_argument("--fast", action="store_true", help="send without pacing")
    m.set_defaults(func=cmd_simulate)
    return p


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: no such file: {exc.filename}", file=sys.stderr)
        return 1
    except (FlocError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


def main() -> None:
    sys.exit(run())
