"""Boundary accuracy of OCR refinement on synthetic videos.

Sweeps frame rate, OCR character noise and prediction jitter (in sampled
frames) and prints the share of boundaries within 0, 1 and 3 full-rate frames.

    python3 scripts/refine_sweep.py --videos 50
"""

import argparse
import itertools

from subext.align import RefineConfig, ocr_index, refine_all
from subext.pipeline import predictions_from_truth, synthetic_video
from subext.srt import timestamp_to_frame


def errors_for(seed, fps, char_noise, jitter, sim):
    video = synthetic_video(seed, fps, n_cues=8, char_noise=char_noise)
    preds = predictions_from_truth(video.truth, fps, 2, noise=jitter, seed=seed)
    doc = refine_all(preds, ocr_index(video.ocr), RefineConfig(fps, sim=sim, sampling_rate=2))
    out = []
    for cue, (start, end) in zip(doc, video.frame_spans):
        out.append(abs(timestamp_to_frame(cue.start, fps) - start))
        out.append(abs(timestamp_to_frame(cue.end, fps) - end))
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--videos", type=int, default=30)
    parser.add_argument("--sim", type=float, default=0.8)
    args = parser.parse_args()
    print("fps\tnoise\tjitter\t<=0\t<=1\t<=3")
    for fps, noise, jitter in itertools.product((24, 30, 60), (0.0, 0.05, 0.1, 0.2), (0, 1)):
        errors = []
        for seed in range(args.videos):
            errors += errors_for(seed, fps, noise, jitter, args.sim)
        shares = [sum(e <= k for e in errors) / len(errors) for k in (0, 1, 3)]
        print(f"{fps}\t{noise}\t{jitter}\t" + "\t".join(f"{s:.3f}" for s in shares))


if __name__ == "__main__":
    main()
