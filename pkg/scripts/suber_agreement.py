"""Agreement of greedy SubER shifts with an exhaustive depth-2 shift search.

Draws random token streams (words from a small alphabet plus breaks) and
lists the disagreements. Uses the test oracle in tests/oracles.py.

    python3 scripts/suber_agreement.py --pairs 2000 --max-len 8
"""

import argparse
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from oracles import exhaustive_suber_total  # noqa: E402
from subext.metrics import Break, Word, suber_streams  # noqa: E402


def draw(rng, max_len, alphabet, breaks):
    length = rng.randint(1, max_len)
    return [("|" if rng.random() < breaks else rng.choice(alphabet)) for _ in range(length)]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--pairs", type=int, default=1000)
    parser.add_argument("--max-len", type=int, default=8)
    parser.add_argument("--alphabet", default="abc")
    parser.add_argument("--breaks", type=float, default=0.2, help="chance a token is a break")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--show", type=int, default=10)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    agree = under = over = 0
    shown = []
    for _ in range(args.pairs):
        hyp = draw(rng, args.max_len, args.alphabet, args.breaks)
        ref = draw(rng, args.max_len, args.alphabet, args.breaks)
        got = suber_streams([Break() if x == "|" else Word(x) for x in hyp],
                            [Break() if x == "|" else Word(x) for x in ref]).edits
        best = exhaustive_suber_total([(x == "|", x, None, None) for x in hyp],
                                      [(x == "|", x, None, None) for x in ref])
        agree += got == best
        under += got < best
        over += got > best
        if got != best and len(shown) < args.show:
            shown.append(f"  hyp={''.join(hyp):<{args.max_len}} ref={''.join(ref):<{args.max_len}} "
                         f"greedy={got} oracle={best}")
    print(f"pairs={args.pairs} agree={agree / args.pairs:.4f} over={over} under={under}")
    print("\n".join(shown))


if __name__ == "__main__":
    main()
