"""Train the toy two-blob classifier used by the end-to-end tests.

Writes ``tests/data/toy_net.json`` and ``tests/data/toy_dataset.json``.
Plain full-batch gradient descent on softmax cross-entropy; deterministic.
"""
import argparse
import json
from pathlib import Path

import numpy as np

from dualverify.network import TANH, IDENTITY, Layer, Network, save_network


def make_blobs(rng, n):
    labels = np.arange(n) % 2
    centres = np.array([[-1.0, -0.5], [1.0, 0.5]])
    x = centres[labels] + 0.6 * rng.normal(size=(n, 2))
    return x, labels


def train(x, y, hidden, steps, lr, rng):
    w1 = rng.normal(scale=0.5, size=(hidden, 2))
    b1 = np.zeros(hidden)
    w2 = rng.normal(scale=0.5, size=(2, hidden))
    b2 = np.zeros(2)
    onehot = np.eye(2)[y]
    for _ in range(steps):
        a = np.tanh(x @ w1.T + b1)
        logits = a @ w2.T + b2
        p = np.exp(logits - logits.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / len(x)
        gw2, gb2 = g.T @ a, g.sum(axis=0)
        ga = (g @ w2) * (1 - a ** 2)
        gw1, gb1 = ga.T @ x, ga.sum(axis=0)
        w1 -= lr * gw1
        b1 -= lr * gb1
        w2 -= lr * gw2
        b2 -= lr * gb2
    return Network((Layer(w1, b1, TANH), Layer(w2, b2, IDENTITY)))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "tests" / "data")
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    x, y = make_blobs(rng, 200)
    net = train(x, y, hidden=8, steps=3000, lr=0.5, rng=rng)
    acc = np.mean(np.argmax(net(x), axis=1) == y)
    print(f"train accuracy {acc:.3f}")

    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "toy_net.json").write_bytes(save_network(net))
    examples = [{"x": [round(float(v), 6) for v in xi], "label": int(yi)} for xi, yi in zip(x, y)]
    (args.out / "toy_dataset.json").write_text(json.dumps({"examples": examples}, indent=1) + "\n")


if __name__ == "__main__":
    main()
