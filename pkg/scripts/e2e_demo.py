"""Run the whole pipeline in one process: train, serve, stream a DO crash.

Alerts go to stdout; readings land in a temporary JSONL store.
"""
import argparse
import json
import tempfile
from pathlib import Path

from flocwatch import nn, simulator
from flocwatch.notify import SinkConfig
from flocwatch.service import Service, ServiceConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--devices", type=int, default=2)
    ap.add_argument("--duration", type=float, default=120)
    ap.add_argument("--corrupt-prob", type=float, default=0.05)
    args = ap.parse_args()

    params, report = nn.train(simulator.gen_labeled(2000, seed=0), nn.TrainConfig())
    print(f"trained: test accuracy {report.test_accuracy:.3f}")
    with tempfile.TemporaryDirectory() as tmp:
        store = Path(tmp) / "readings.jsonl"
        config = ServiceConfig(model="-", store=str(store), listen="127.0.0.1:0",
                               sinks=(SinkConfig("stdout"),), cooldown=300)
        scenario = simulator.Scenario("do_crash", devices=args.devices, duration=args.duration,
                                      corrupt_prob=args.corrupt_prob, seed=1)
        with Service(config, model=params) as svc:
            host, port = svc.start()
            sent = simulator.stream(scenario, f"{host}:{port}", paced=False)
            stats = svc.stats()
        rows = store.read_text().splitlines()
        print(json.dumps({"sent": sent, **stats, "stored": len(rows)}))


if __name__ == "__main__":
    main()
