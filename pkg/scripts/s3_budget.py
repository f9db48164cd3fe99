"""Token counts and timing of the adapter forward pass, plus gradient checks.

    python3 scripts/s3_budget.py --frames 1 5 30 --seeds 10
"""

import argparse
import time

import numpy as np

from subext.s3 import S3Config, S3Params, grad_check, random_instance, s3_forward


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--frames", type=int, nargs="+", default=[1, 5, 30])
    parser.add_argument("--side", type=int, default=16, help="feature map height and width")
    parser.add_argument("--seeds", type=int, default=10)
    args = parser.parse_args()

    cfg = S3Config()
    params = S3Params.init(cfg)
    rng = np.random.default_rng(0)
    print("frames\ttokens\traw_patches\tms")
    for n in args.frames:
        frames = [rng.normal(size=(args.side, args.side, cfg.C)) for _ in range(n)]
        t0 = time.perf_counter()
        out = s3_forward(frames, params, cfg)
        ms = 1000 * (time.perf_counter() - t0)
        print(f"{n}\t{out.shape[0]}\t{n * args.side ** 2}\t{ms:.1f}")

    print("\nseed\tmax_rel_error")
    for seed in range(args.seeds):
        print(f"{seed}\t{grad_check(*random_instance(seed)):.2e}")


if __name__ == "__main__":
    main()
