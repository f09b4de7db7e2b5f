"""Reference values for the Iris tests, computed with scikit-learn.

Re-implements the stratified split (splitmix64 Fisher-Yates) independently,
fits DecisionTreeClassifier(max_depth=4) on the train part and prints the
numbers frozen in tests/test_iris_oracle.cpp.
"""
import csv
import json
import pathlib

import numpy as np
from sklearn.tree import DecisionTreeClassifier

M = (1 << 64) - 1


def shuffle(items, seed):
    state = seed & M
    for i in range(len(items), 1, -1):
        state = (state + 0x9E3779B97F4A7C15) & M
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M
        z ^= z >> 31
        j = z % i
        items[i - 1], items[j] = items[j], items[i - 1]


def split(labels, frac, seed, classes):
    in_test = [False] * len(labels)
    for c in range(classes):
        pool = [i for i, y in enumerate(labels) if y == c]
        shuffle(pool, (seed + 0x632BE59BD9B4E019 * (c + 1)) & M)
        for i in pool[: int(np.floor(len(pool) * frac + 0.5))]:
            in_test[i] = True
    return in_test


root = pathlib.Path(__file__).resolve().parents[2]
rows = list(csv.reader(open(root / "data" / "iris.csv")))[1:]
names = ["Iris-setosa", "Iris-versicolor", "Iris-virginica"]
X = np.array([[float(v) for v in r[:4]] for r in rows])
y = np.array([names.index(r[4]) for r in rows])
mask = np.array(split(list(y), 0.3, 7, 3))
Xtr, ytr, Xte, yte = X[~mask], y[~mask], X[mask], y[mask]

results = []
for rs in range(20):
    clf = DecisionTreeClassifier(max_depth=4, random_state=rs).fit(Xtr, ytr)
    t = clf.tree_
    l, r = t.children_left[0], t.children_right[0]
    n = t.weighted_n_node_samples
    gain = t.impurity[0] - (n[l] * t.impurity[l] + n[r] * t.impurity[r]) / n[0]
    results.append({
        "random_state": rs,
        "root_feature": int(t.feature[0]),
        "root_threshold": float(t.threshold[0]),
        "root_gain": float(gain),
        "test_accuracy": float((clf.predict(Xte) == yte).mean()),
    })

print(json.dumps({
    "test_indices": [int(i) for i in np.flatnonzero(mask)],
    "train_size": int((~mask).sum()),
    "root_impurity": float(1 - sum((np.bincount(ytr) / len(ytr)) ** 2)),
    "fits": results,
}, indent=1))
