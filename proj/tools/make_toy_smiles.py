#!/usr/bin/env python3
# Copyright 2026 The ADKL Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Writes the bundled toy SMILES collection (tests/data/toy_smiles.jsonl).

Twenty tasks of small synthetic molecules. Each task scores molecules with
its own random weighting of atom and ring counts, so targets are learnable
from the strings. Task sizes range from 6 to 40 samples; several tasks are
smaller than twice the default support size. No split labels are written,
so the loader assigns splits from data.split_seed.
"""

import argparse
import json
import random

FRAGMENTS = ["C", "CC", "CCC", "O", "N", "C(=O)", "C(=O)O", "c1ccccc1", "C1CC1", "Cl", "F", "C#N", "S", "OC"]
FEATURES = ["C", "c", "O", "N", "Cl", "F", "S", "=", "#", "1"]


def molecule(rng):
    return "".join(rng.choice(FRAGMENTS) for _ in range(rng.randint(1, 5)))


def counts(smiles):
    out = []
    for f in FEATURES:
        out.append(smiles.count(f))
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--output", default="tests/data/toy_smiles.jsonl")
    ap.add_argument("--seed", type=int, default=2026)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    sizes = [6, 8, 9, 12, 14, 15, 17, 18, 19, 22, 24, 26, 28, 30, 32, 34, 36, 38, 40, 11]
    rng.shuffle(sizes)
    with open(args.output, "w") as f:
        for t, n in enumerate(sizes):
            weights = [rng.gauss(0.0, 1.0) for _ in FEATURES]
            seen = set()
            rows = 0
            while rows < n:
                s = molecule(rng)
                if s in seen:
                    continue
                seen.add(s)
                y = sum(w * c for w, c in zip(weights, counts(s))) + rng.gauss(0.0, 0.1)
                f.write(json.dumps({"task_id": "toy%02d" % t, "x": s, "y": round(y, 6)}) + "\n")
                rows += 1


if __name__ == "__main__":
    main()
