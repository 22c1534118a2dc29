"""Shrink a wide signal set by boosted-tree importance.

A dataset with one informative signal among hundreds of noise signals plus
a module that owns exactly one signal: ranking puts the informative signal
first, reduction keeps the top fraction each pass, and the lone module's
signal is pinned so every module stays covered.
"""

import numpy as np

from wavetriage.extract import Dataset
from wavetriage.ranking import history_json, rank_signals, reduce_signals
from wavetriage.trees import GBTParams

rng = np.random.default_rng(3)
modules = ["lone", "north", "south"]
signals = ["lone_sig"] + [f"north_s{i}" for i in range(200)] + [f"south_s{i}" for i in range(199)]
coverage = {s: ("lone" if s == "lone_sig" else s.split("_")[0]) for s in signals}

labels = [modules[i % 3] for i in range(120)]
X = rng.normal(size=(120, len(signals)))
X[:, 0] = 0.0                      # the lone module's constant signal
hot = signals.index("north_s7")    # the one that actually matters
X[:, hot] = [modules.index(l) * 6.0 + rng.normal(0, 0.5) for l in labels]

ds = Dataset(
    feature_names=[f"{s}__mean" for s in signals],
    matrix=X,
    labels=labels,
    scenario_ids=[f"sc{i}" for i in range(len(labels))],
)

params = GBTParams(n_rounds=12, max_depth=3, learning_rate=0.5)
ranking = rank_signals(ds, params=params, seed=3)
print(f"top-ranked signal: {ranking.retained[0]} "
      f"(gain {ranking.per_signal_importance[ranking.retained[0]]:.2f})")

reduced, history = reduce_signals(
    ds, coverage, keep_fraction=0.6, max_signals=40, params=params, seed=3
)
print("\nreduction passes:")
for entry in history:
    print(f"  iteration {entry.iteration}: {len(entry.retained)} signals retained")
kept = reduced.signal_names()
print(f"\nfinal: {len(kept)} signals; informative kept: {'north_s7' in kept}; "
      f"lone module pinned: {'lone_sig' in kept}")
print("\nhistory JSON:")
print(history_json(history, coverage))
