"""Shared seeded benchmark scaffolding for the method-level tests."""

import numpy as np

from biqual.corruption import CorruptionSpec
from biqual.data import concat
from biqual.harness.datasets import make_blobs
from biqual.harness.grid import synthesize_cell
from biqual.learner import TrainConfig, evaluate, fit

# two-class regime where symmetric noise measurably hurts the naive fit
BENCH = dict(n_samples=2000, classes=2, dim=10, separation=3.0)


def bench_cell(seed, p, noise, **data):
    opts = {**BENCH, **data}
    clean = make_blobs(opts["n_samples"], opts["classes"], opts["dim"], opts["separation"], seed=1000 + seed)
    return synthesize_cell(clean, p, CorruptionSpec.parse(noise), seed)


def median_accuracy(method, p, noise, seeds=range(10), cfg=TrainConfig(), **data):
    accs = []
    for s in seeds:
        ds, test = bench_cell(s, p, noise, **data)
        accs.append(evaluate(method(ds, cfg), test).accuracy)
    return float(np.median(accs))


def naive(ds, cfg):
    return fit(concat(ds.trusted, ds.untrusted), cfg)


def trusted_only(ds, cfg):
    return fit(ds.trusted, cfg)
