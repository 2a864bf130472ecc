"""Write the bundled diamonds-like CSV used by the real-data benchmark."""
import argparse
from pathlib import Path

from cqrd.dataset import save_csv
from cqrd.simulate import generate_diamonds_like

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "data" / "diamonds_like.csv"


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", type=Path, default=DEFAULT_OUT)
    args = p.parse_args()
    args.output.parent.mkdir(parents=True, exist_ok=True)
    save_csv(generate_diamonds_like(args.n, args.seed), args.output)
    print(f"wrote {args.n} rows to {args.output}")


if __name__ == "__main__":
    main()
