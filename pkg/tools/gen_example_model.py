#!/usr/bin/env python3
"""Generate the example sine-predictor-shaped model under models/.

The topology is 1 -> 16 -> 16 -> 1 fully connected with ReLU fused on
the first two layers; weights are random but fixed by seed, so the file
is reproducible.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from conftest import sine_model  # noqa: E402

from tinyaot.model_format import save_model  # noqa: E402


def main():
    out = Path(__file__).resolve().parents[1] / "models"
    out.mkdir(exist_ok=True)
    path = out / "sine.json"
    save_model(sine_model(seed=0), path)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
