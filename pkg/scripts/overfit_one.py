#!/usr/bin/env python3
"""Overfit the edge scorer on a single labeled frame.

A graph model that cannot memorize one instance has a wiring bug somewhere in
the gradient path, so this is the fastest end-to-end sanity check we have.
Prints the loss trail and exits nonzero if it never drops below the target.
"""

import argparse
import sys

from cornergraph.model import ModelDims
from cornergraph.scenarios import ScenarioTemplate, generate, to_instances
from cornergraph.training import TrainConfig, fit

SMALL = ModelDims(
    encoder_hidden=16, gat1_out=16, mid_hidden=24, mid_out=32, triple_hidden=4
)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=42, help="scenario seed")
    parser.add_argument("--param-seed", type=int, default=0)
    parser.add_argument("--frame", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=500)
    parser.add_argument("--learning-rate", type=float, default=1e-2)
    parser.add_argument("--target", type=float, default=0.05)
    args = parser.parse_args()

    scenario = generate(ScenarioTemplate.ONCOMING_CYCLIST_CUT_IN, args.seed, 1)[0]
    instance = to_instances(scenario)[args.frame]
    config = TrainConfig(
        seed=args.param_seed,
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        early_stop_patience=args.epochs,
    )

    _, log = fit([instance], [], config, SMALL)
    hit = None
    last_epoch = log.rows[-1][0]
    for epoch, train_loss, _val in log.rows:
        if hit is None and train_loss < args.target:
            hit = epoch
        if epoch % 25 == 0 or epoch == last_epoch:
            print(f"epoch {epoch:4d}  bce {train_loss:.6f}")

    final = log.rows[-1][1]
    if hit is None:
        print(f"FAIL: never reached {args.target} (final bce {final:.4f})")
        sys.exit(1)
    print(f"ok: bce < {args.target} first at epoch {hit}, final {final:.6f}")


if __name__ == "__main__":
    main()
