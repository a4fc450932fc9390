"""Generate the bundled corpora under data/.

The full-size test splits are synthetic stand-ins that reproduce the
published size and step-count statistics of the two public benchmarks
(340 entailment samples averaging 3.3 proof steps with an 11-step maximum;
1319 word problems averaging 3.7 solution steps, same maximum). Train/dev
splits are small; they exist to exercise indexing and training end to
end, not to match full-scale statistics.

Deterministic: running this twice produces byte-identical files.

Usage: python tools/make_corpora.py [--out data/]
"""

import argparse
import json
from pathlib import Path

import numpy as np

# step-count histograms for the test splits: {length: sample count}
# EB test: 340 samples, mean exactly 3.3, max 11
EB_TEST_LENGTHS = {1: 28, 2: 107, 3: 85, 4: 55, 5: 30, 6: 15, 7: 8, 8: 5, 9: 3, 10: 2, 11: 2}
# GSM8K test: 1319 samples, mean 4880/1319 = 3.6998, max 11
GSM_TEST_LENGTHS = {2: 214, 3: 476, 4: 350, 5: 160, 6: 60, 7: 30, 8: 15, 9: 8, 10: 4, 11: 2}

KINDS = [
    "creature", "organism", "vertebrate", "animal", "mammal", "carnivore",
    "feline", "predator", "being", "lifeform", "dweller", "specimen",
]

NATALIA = {
    "id": "gsm-test-0000",
    "question": (
        "Natalia sold clips to 48 of her friends in April, and then she sold half "
        "as many clips in May. How many clips did Natalia sell altogether in April and May?"
    ),
    "answer": 72,
    "solution_steps": ["48 / 2 = 24", "48 + 24 = 72"],
}


def _lengths(histogram):
    out = []
    for length in sorted(histogram):
        out.extend([length] * histogram[length])
    assert max(out) == 11
    return out


def make_logic_sample(split: str, i: int, n_steps: int) -> dict:
    """A taxonomy-chain entailment: the theory names each link, the proof
    walks the chain one combination per step, and the goal is the
    end-to-end membership claim. n_steps proof steps need n_steps+1 links."""
    links = n_steps + 1
    levels = [f"specimen {split}-{i}"] + [
        f"{KINDS[(i + j) % len(KINDS)]} grade {(i * 7 + j) % 97}" for j in range(links)
    ]
    theory = [f"{levels[j]} is a kind of {levels[j + 1]}" for j in range(links)]
    theory.append(f"the habitat of region {i} is temperate")
    theory.append(f"region {i} borders region {i + 1}")
    goal = f"{levels[0]} is a kind of {levels[-1]}"
    steps = [{"premises": [0, 1], "conclusion": f"{levels[0]} is a kind of {levels[2]}"}]
    for j in range(1, n_steps):
        prev_conclusion = len(theory) + j - 1
        steps.append(
            {
                "premises": [prev_conclusion, j + 1],
                "conclusion": f"{levels[0]} is a kind of {levels[j + 2]}",
            }
        )
    assert steps[-1]["conclusion"] == goal
    return {
        "id": f"eb-{split}-{i:04d}",
        "goal": goal,
        "theory": theory,
        "proof_steps": steps,
        "provable": True,
    }


_OPS = ("gains", "loses", "doubles to", "adds")


def make_math_sample(split: str, i: int, length: int, rng: np.random.Generator) -> dict:
    value = int(rng.integers(5, 60))
    phrases = [f"starts with {value} tokens"]
    steps = []
    for k in range(length):
        op = _OPS[int(rng.integers(len(_OPS)))]
        if op == "gains" or op == "adds":
            delta = int(rng.integers(2, 30))
            new = value + delta
            phrases.append(f"{op} {delta}")
            steps.append(f"{value} + {delta} = {new}")
        elif op == "loses":
            delta = int(rng.integers(1, max(2, value)))
            new = value - delta
            phrases.append(f"loses {delta}")
            steps.append(f"{value} - {delta} = {new}")
        else:
            new = value * 2
            phrases.append("doubles its total")
            steps.append(f"{value} * 2 = {new}")
        value = new
    question = (
        f"A player {phrases[0]}, then " + ", then ".join(phrases[1:]) +
        ". How many tokens does the player have at the end?"
    )
    return {
        "id": f"gsm-{split}-{i:04d}",
        "question": question,
        "answer": value,
        "solution_steps": steps,
    }


def _write(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False))
            fh.write("\n")
    print(f"wrote {len(rows):>5} rows -> {path}")


def make_prm_rows(rng: np.random.Generator, n: int = 8):
    rows = []
    for i in range(n):
        a = int(rng.integers(3, 40))
        b = int(rng.integers(2, 30))
        rows.append(
            {
                "question": f"What is {a} plus {b}, then doubled?",
                "steps": [
                    {"text": f"{a} + {b} = {a + b}", "label": "correct"},
                    {"text": f"doubling gives {2 * (a + b)}", "label": "correct"},
                    {"text": f"{a} + {b} is roughly {a + b + 1}, close enough", "label": "ambiguous"},
                    {"text": f"{a} + {b} = {a * b}", "label": "wrong"},
                ],
            }
        )
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="data")
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    eb_lengths = _lengths(EB_TEST_LENGTHS)
    _write(out / "eb.test.jsonl", [make_logic_sample("test", i, n) for i, n in enumerate(eb_lengths)])
    _write(out / "eb.train.jsonl", [make_logic_sample("train", i, 1 + i % 5) for i in range(40)])
    _write(out / "eb.dev.jsonl", [make_logic_sample("dev", i, 1 + i % 4) for i in range(12)])

    rng = np.random.default_rng(20240401)
    gsm_lengths = _lengths(GSM_TEST_LENGTHS)
    gsm_test = [NATALIA] + [
        make_math_sample("test", i, n, rng) for i, n in enumerate(gsm_lengths[1:], start=1)
    ]
    assert gsm_lengths[0] == len(NATALIA["solution_steps"])  # keeps the histogram intact
    _write(out / "gsm8k.test.jsonl", gsm_test)
    _write(out / "gsm8k.train.jsonl", [make_math_sample("train", i, 2 + i % 3, rng) for i in range(40)])
    _write(out / "gsm8k.dev.jsonl", [make_math_sample("dev", i, 2 + i % 3, rng) for i in range(12)])

    _write(out / "prm_negatives.jsonl", make_prm_rows(np.random.default_rng(7)))


if __name__ == "__main__":
    main()
