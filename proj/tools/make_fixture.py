#!/usr/bin/env python3
"""Regenerate the bundled 2-class Gaussian-mixture MLP fixture.

Writes data/gmm_mlp.json (16-64-64-2 ReLU network, classification head),
data/gmm_train.csv and data/gmm_test.csv. Training happens here, once; the
C++ toolkit only evaluates and compresses the result.
"""
import argparse
import json
import pathlib

import numpy as np

DIM = 16
HIDDEN = 64
COMPONENTS_PER_CLASS = 3


def sample(rng, means, n):
    labels = rng.integers(0, 2, size=n)
    comp = rng.integers(0, COMPONENTS_PER_CLASS, size=n)
    x = means[labels, comp] + rng.normal(size=(n, DIM))
    return x, labels


def init_layer(rng, fan_in, fan_out):
    return rng.normal(scale=np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)), np.zeros(fan_out)


def forward(params, x):
    acts = [x]
    h = x
    for i, (w, b) in enumerate(params):
        z = h @ w.T + b
        h = np.maximum(z, 0.0) if i + 1 < len(params) else z
        acts.append(h)
    return acts


def train(rng, x, y, epochs, lr):
    params = [init_layer(rng, DIM, HIDDEN), init_layer(rng, HIDDEN, HIDDEN), init_layer(rng, HIDDEN, 2)]
    m = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
    v = [(np.zeros_like(w), np.zeros_like(b)) for w, b in params]
    step = 0
    n = x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, 64):
            idx = order[start:start + 64]
            acts = forward(params, x[idx])
            logits = acts[-1]
            p = np.exp(logits - logits.max(axis=1, keepdims=True))
            p /= p.sum(axis=1, keepdims=True)
            g = p.copy()
            g[np.arange(len(idx)), y[idx]] -= 1.0
            g /= len(idx)
            step += 1
            for li in reversed(range(len(params))):
                w, b = params[li]
                gw = g.T @ acts[li]
                gb = g.sum(axis=0)
                if li > 0:
                    g = (g @ w) * (acts[li] > 0)
                for slot, grad in ((0, gw), (1, gb)):
                    mm = 0.9 * m[li][slot] + 0.1 * grad
                    vv = 0.999 * v[li][slot] + 0.001 * grad * grad
                    m[li] = (mm, m[li][1]) if slot == 0 else (m[li][0], mm)
                    v[li] = (vv, v[li][1]) if slot == 0 else (v[li][0], vv)
                    mhat = mm / (1 - 0.9 ** step)
                    vhat = vv / (1 - 0.999 ** step)
                    upd = lr * mhat / (np.sqrt(vhat) + 1e-8)
                    params[li] = (params[li][0] - upd, params[li][1]) if slot == 0 else (params[li][0], params[li][1] - upd)
    return params


def write_csv(path, x, y):
    header = ",".join([f"x{i}" for i in range(DIM)] + ["label"])
    with open(path, "w") as f:
        f.write(header + "\n")
        for row, label in zip(x, y):
            f.write(",".join(repr(float(v)) for v in row) + f",{int(label)}\n")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data"))
    ap.add_argument("--seed", type=int, default=20190101)
    ap.add_argument("--epochs", type=int, default=30)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    means = rng.normal(scale=0.9, size=(2, COMPONENTS_PER_CLASS, DIM))
    x_train, y_train = sample(rng, means, 4000)
    x_test, y_test = sample(rng, means, 2000)
    params = train(rng, x_train, y_train, args.epochs, 1e-3)
    acts = forward(params, x_test)
    acc = float(np.mean(acts[-1].argmax(axis=1) == y_test))
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = {
        "layers": [
            {"weights": w.tolist(), "bias": b.tolist(), "activation": "relu" if i + 1 < len(params) else "identity"}
            for i, (w, b) in enumerate(params)
        ],
        "head": "classification",
        "temperature": 1.0,
    }
    (out / "gmm_mlp.json").write_text(json.dumps(model))
    write_csv(out / "gmm_train.csv", x_train, y_train)
    write_csv(out / "gmm_test.csv", x_test, y_test)
    print(f"test accuracy {acc:.4f}")


if __name__ == "__main__":
    main()
