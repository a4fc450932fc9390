"""Build a self-contained demo world under demo/.

Emits everything the CLI needs for a fully offline, reproducible run with
planted gold decompositions:

    demo/eb.synthetic.jsonl   - logic corpus (goals, theories, proofs)
    demo/script.json          - scripted-backend replay file
    demo/index.jsonl          - retrieval index over the world's patterns
    demo/items.jsonl          - labeled training items from the world
    demo/scorer.json          - verdict head trained on those items

Afterwards:

    cogtree eval --dataset demo/eb.synthetic.jsonl --mode logic \
        --scorer demo/scorer.json --index demo/index.jsonl \
        --backend script:demo/script.json --seed 0 --report demo/report.json

scores a clean 1.0 on the planted world.

Usage: python tools/make_demo_world.py [--out demo/] [--samples 12] [--seed 0]
"""

import argparse
from pathlib import Path

from cogtree.datasets import save_logic
from cogtree.reflective import ScorerParams
from cogtree.synthetic import build_logic_world
from cogtree.trainer import TrainConfig, save_items, train


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="demo")
    parser.add_argument("--samples", type=int, default=12)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    world = build_logic_world(n_samples=args.samples, seed=args.seed)
    save_logic(world.samples, out / "eb.synthetic.jsonl")
    world.backend.save_script(out / "script.json")
    world.index.save(out / "index.jsonl")

    items = world.training_items(seed=args.seed)
    save_items(items, out / "items.jsonl")
    params, trace = train(
        ScorerParams.random(d=world.backend.dim, h=32, seed=args.seed),
        items,
        TrainConfig(lam=0.5, learning_rate=1e-2, epochs=60, batch_size=4, seed=args.seed),
    )
    params.save(out / "scorer.json")
    print(
        f"demo world: {len(world.samples)} samples, {len(items)} training items, "
        f"final train loss {trace[-1].train_loss:.4f} -> {out}/"
    )


if __name__ == "__main__":
    main()
