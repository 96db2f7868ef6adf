import argparse
import json
import sys

from .train import TrainConfig, train_and_export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="namtrain", description="Train an additive model and export it")
    parser.add_argument("--dataset", default="breast-cancer", help="'breast-cancer' or a CSV path")
    parser.add_argument("--label-column", default=None)
    parser.add_argument("--out", required=True, help="model JSON output path")
    parser.add_argument("--metrics", default=None, help="metrics JSON output path")
    parser.add_argument("--hidden", default="64,64,32")
    parser.add_argument("--epochs", type=int, default=60)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--test-fraction", type=float, default=0.2)
    args = parser.parse_args(argv)
    config = TrainConfig(
        dataset=args.dataset,
        label_column=args.label_column,
        hidden=tuple(int(v) for v in args.hidden.split(",")),
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
        test_fraction=args.test_fraction,
    )
    metrics = train_and_export(config, args.out, args.metrics)
    json.dump(metrics, sys.stdout, indent=1)
    print()
    return 0


if __name__ == "__main__":
    sys.exit(main())
