#!/usr/bin/env python3
"""Drive the whole pipeline into one output directory.

The quick profile shrinks the corpus and the model so a full pass finishes in
about a minute; the full profile reproduces the reference run (600 scenarios,
default widths) and can take tens of minutes on a laptop CPU.
"""

import argparse
import json
import os
import sys

from cornergraph.cli import main as cli

QUICK = {
    "count": 24,
    "train": [
        "epochs=25",
        "learning_rate=0.003",
        "early_stop_patience=99",
        "encoder_hidden=16",
        "gat1_out=16",
        "mid_hidden=24",
        "mid_out=32",
        "triple_hidden=4",
    ],
}
FULL = {"count": 600, "train": []}


def run(argv):
    code = cli(argv)
    if code != 0:
        print(f"step failed with exit code {code}: {' '.join(argv)}", file=sys.stderr)
        raise SystemExit(code)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="runs/pipeline")
    parser.add_argument("--seed", type=int, default=42, help="corpus seed")
    parser.add_argument("--quick", action="store_true", help="small corpus and model")
    parser.add_argument("--workers", type=int, default=1)
    args = parser.parse_args()

    profile = QUICK if args.quick else FULL
    os.makedirs(args.out_dir, exist_ok=True)
    path = lambda name: os.path.join(args.out_dir, name)

    # training stays on its stock defaults; --seed only varies the corpus
    train_cfg = path("train.cfg")
    with open(train_cfg, "w") as fh:
        for line in profile["train"]:
            fh.write(line + "\n")

    run([
        "gen-data", "--count", str(profile["count"]), "--seed", str(args.seed),
        "--workers", str(args.workers), "--out", path("corpus.json"),
    ])
    run([
        "train", "--config", train_cfg, "--data", path("corpus.json"),
        "--out", path("model.json"), "--log", path("train_log.csv"),
    ])
    run([
        "eval", "--data", path("corpus.json"), "--model", path("model.json"),
        "--subset", "test", "--roc", path("roc.csv"), "--pr", path("pr.csv"),
        "--out", path("eval.json"),
    ])
    run([
        "perturb", "--data", path("corpus.json"), "--model", path("model.json"),
        "--mode", "argmax", "--out", path("decoded.jsonl"),
    ])
    run([
        "simulate", "--data", path("corpus.json"),
        "--predicted", path("decoded.jsonl"), "--table",
        "--out", path("scr.json"),
    ])
    run([
        "report", "--eval", path("eval.json"), "--scr", path("scr.json"),
        "--out", path("report.json"),
    ])

    with open(path("report.json")) as fh:
        report = json.load(fh)
    ev = report["evaluation"]
    print(
        f"\ndone: auc {ev['auc']:.4f}, best f1 {ev['best_f1']:.4f}, "
        f"report at {path('report.json')}"
    )


if __name__ == "__main__":
    main()
