"""Regenerates the bundled CSV fixtures. Seeded; output is committed."""

import csv
import json
from pathlib import Path

import numpy as np

HERE = Path(__file__).parent


def write(name, header, rows, task):
    with open(HERE / f"{name}.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    (HERE / f"{name}.task.json").write_text(json.dumps(task) + "\n")


def fmt(x):
    return f"{x:.6g}"


def separable(rng):
    n = 200
    y = np.repeat([0, 1], n // 2)
    rng.shuffle(y)
    sign = 2 * y - 1
    a = sign * rng.uniform(0.5, 2.0, n) + rng.normal(0, 0.1, n)
    b = 1000 + 300 * sign * rng.uniform(0.5, 2.0, n)
    c = rng.normal(0, 0.01, n)
    d = rng.normal(50, 20, n)
    rows = [[fmt(a[i]), fmt(b[i]), fmt(c[i]), fmt(d[i]), "pos" if y[i] else "neg"] for i in range(n)]
    write("separable", ["a", "b", "c", "d", "label"], rows,
          {"kind": "binary_classification", "target": "label", "metric": "accuracy"})


def mixed_binary(rng):
    n = 200
    y = np.repeat([0, 1], n // 2)
    rng.shuffle(y)
    signal = rng.normal(0, 1, n) + 1.2 * (2 * y - 1)
    noise = rng.normal(10, 3, n)
    cats = np.where(rng.uniform(size=n) < 0.7, np.where(y == 1, "red", "blue"), "green")
    rows = []
    for i in range(n):
        s = "" if rng.uniform() < 0.1 else fmt(signal[i])
        z = "NA" if rng.uniform() < 0.05 else fmt(noise[i])
        rows.append([s, z, cats[i], "1", str(y[i])])
    write("mixed_binary", ["signal", "noise", "color", "constant", "target"], rows,
          {"kind": "binary_classification", "target": "target", "metric": "accuracy"})


def three_class(rng):
    per = 50
    centers = np.array([[5.0, 3.4, 1.5, 0.2], [5.9, 2.8, 4.3, 1.3], [6.6, 3.0, 5.5, 2.0]])
    spread = np.array([0.35, 0.35, 0.35, 0.2])
    rows = []
    for k, name in enumerate(["setosa", "versicolor", "virginica"]):
        pts = centers[k] + rng.normal(0, 1, (per, 4)) * spread
        rows += [[fmt(v) for v in p] + [name] for p in pts]
    order = rng.permutation(len(rows))
    write("three_class", ["f1", "f2", "f3", "f4", "species"], [rows[i] for i in order],
          {"kind": "multiclass_classification", "target": "species", "metric": "accuracy"})


def linear_regression(rng):
    n = 200
    x = rng.uniform(-3, 3, n)
    y = 2 * x + rng.normal(0, 0.5, n)
    d1 = rng.normal(0, 1, n)
    d2 = rng.uniform(0, 100, n)
    d3 = rng.normal(5, 2, n)
    rows = [[fmt(x[i]), fmt(d1[i]), fmt(d2[i]), fmt(d3[i]), fmt(y[i])] for i in range(n)]
    write("linear_regression", ["x", "d1", "d2", "d3", "y"], rows,
          {"kind": "regression", "target": "y", "metric": "r_squared"})


if __name__ == "__main__":
    rng = np.random.default_rng(20240611)
    separable(rng)
    mixed_binary(rng)
    three_class(rng)
    linear_regression(rng)
