"""End-to-end smoke run: synthesize a corpus, preprocess it, train LOSO folds.

Everything runs at toy scale (tiny frames, two epochs, the small CNN-LSTM)
so the full chain finishes in well under a minute on a laptop. Use this to
sanity-check an install or as a template for real runs; scale the config up
via a JSON file and the vidmood CLI for anything serious.
"""

import json
import sys
import tempfile
from argparse import ArgumentParser
from pathlib import Path

from vidmood.cli import main as cli


def run(out_dir: Path, subjects: int, seed: int) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    config = out_dir / "config.json"
    config.write_text(json.dumps({
        "data": {"side": 16, "length": 16, "clip_len": 8},
        "model": {"name": "cnn_lstm", "channels": [2], "proj_dim": 8, "hidden": 8},
        "train": {"max_epochs": 2, "lr": 0.01, "batch_size": 4},
        "experiment": {"task": "binary", "aggregation": "subject"},
        "seed": seed,
    }, indent=2))

    steps = [
        ["synth", "--subjects", str(subjects), "--frame-size", "16",
         "--video-frames", "16", "--seed", str(seed),
         "--out", str(out_dir / "corpus")],
        ["preprocess", "--config", str(config),
         "--manifest", str(out_dir / "corpus" / "manifest.json"),
         "--out", str(out_dir / "prep")],
        ["loso", "--config", str(config),
         "--manifest", str(out_dir / "prep" / "manifest.json"),
         "--out", str(out_dir / "run")],
        ["report", str(out_dir / "run" / "metrics.json"),
         str(out_dir / "run" / "metrics_clip.json"),
         "--out", str(out_dir / "report")],
    ]
    for argv in steps:
        print(f"$ vidmood {' '.join(argv)}")
        code = cli(argv)
        if code != 0:
            print(f"step failed with exit code {code}", file=sys.stderr)
            return code
    print(f"\nartifacts under {out_dir}")
    return 0


def main() -> int:
    parser = ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=None,
                        help="output directory (default: a fresh temp dir)")
    parser.add_argument("--subjects", type=int, default=3)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    out = args.out or Path(tempfile.mkdtemp(prefix="vidmood_demo_"))
    return run(out, args.subjects, args.seed)


if __name__ == "__main__":
    sys.exit(main())
