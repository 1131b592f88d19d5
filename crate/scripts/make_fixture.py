#!/usr/bin/env python3
"""Writes the small pinned fixture model used by the regression tests.

The model imitates the structure of a real word2vec neighborhood: a tight
cluster of auxiliary verbs, a tight cluster of month names, numbers and
person names, spread-out function words, and a rare tail. "may" is placed
between the auxiliary cluster and the month cluster, closer to the
auxiliaries. Output is deterministic for a given seed.

usage: make_fixture.py OUT.txt [--seed N]
"""
import argparse

import numpy as np

DIM = 24

FUNCTION = "the of and in a to is was for as by with on that from".split()
AUX = "can could would will should must might cannot".split()
MONTHS = "january february march april june july august september october november december".split()
NUMBERS = "one two three four five six seven eight nine zero".split()
NAMES = "john robert richard william james david michael henry charles edward".split()
TAIL = "maybe shall ought monthly midyear twelve dozen jamie bobby river".split()


def unit(v):
    return v / np.linalg.norm(v)


def cluster(rng, names, spread):
    center = unit(rng.normal(size=DIM))
    out = {}
    for n in names:
        out[n] = (1.0 + 0.2 * rng.random()) * unit(center + spread * unit(rng.normal(size=DIM)))
    return center, out


def build(seed):
    rng = np.random.default_rng(seed)
    vecs = {}
    _, function = cluster(rng, FUNCTION, 1.2)
    vecs.update(function)
    aux_c, aux = cluster(rng, AUX, 0.25)
    month_c, months = cluster(rng, MONTHS, 0.20)
    _, numbers = cluster(rng, NUMBERS, 0.25)
    _, names = cluster(rng, NAMES, 0.40)
    vecs.update(aux)
    vecs.update(months)
    vecs.update(numbers)
    vecs.update(names)
    core = unit(sum(aux[w] for w in ["can", "should", "might", "will"]))
    vecs["may"] = 1.1 * unit(0.8 * core + 0.5 * month_c)
    anchors = {
        "maybe": "may", "shall": "will", "ought": "should", "monthly": "june",
        "midyear": "july", "twelve": "ten" if "ten" in vecs else "nine",
        "dozen": "six", "jamie": "james", "bobby": "robert", "river": "james",
    }
    for w in TAIL:
        vecs[w] = unit(vecs[anchors[w]] + 0.3 * unit(rng.normal(size=DIM)))
    order = FUNCTION + AUX[:4] + ["may"] + AUX[4:] + MONTHS + NUMBERS + NAMES + TAIL
    return order, vecs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    ap.add_argument("--seed", type=int, default=38)
    args = ap.parse_args()
    order, vecs = build(args.seed)
    with open(args.out, "w") as f:
        f.write(f"{len(order)} {DIM}\n")
        for w in order:
            f.write(w + " " + " ".join(f"{x:.6f}" for x in vecs[w]) + "\n")


if __name__ == "__main__":
    main()
