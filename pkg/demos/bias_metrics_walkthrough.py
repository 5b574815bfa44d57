"""Walk through the bias metrics on hand-built scored examples.

No model is trained here. We construct a scorer that systematically
over-scores comments mentioning one group, then show how Subgroup AUC,
BPSN AUC, the generalized mean, and the KS test each expose that skew.
Run with: python3 demos/bias_metrics_walkthrough.py
"""

import numpy as np

from mtltox import (
    ScoredExample,
    bias_report,
    generalized_mean_bias,
    ks_two_sample,
    roc_auc,
)

rng = np.random.default_rng(0)

# A synthetic "model": toxic comments get high scores, non-toxic ones low,
# except that anything mentioning "groupB" is pushed upward by 0.35. That
# offset is exactly the false-positive bias BPSN AUC is designed to catch.
examples = []
for i in range(600):
    label = int(rng.random() < 0.4)
    group = "groupA" if rng.random() < 0.5 else "groupB"
    mentions = rng.random() < 0.3
    score = rng.normal(0.7 if label else 0.3, 0.12)
    if mentions and group == "groupB":
        score += 0.35
    examples.append(
        ScoredExample(
            float(np.clip(score, 0.0, 1.0)),
            label,
            frozenset([group]) if mentions else frozenset(),
        )
    )

print(f"overall AUC: {roc_auc(examples):.4f}")

report = bias_report(examples, ["groupA", "groupB"])
for name in ("groupA", "groupB"):
    stats = report.subgroups[name]
    print(
        f"{name}: subgroup AUC {stats.subgroup_auc:.4f}  "
        f"BPSN AUC {stats.bpsn_auc:.4f}  n={stats.n_pos + stats.n_neg}"
    )

# The power mean with a strongly negative exponent is dominated by the worst
# subgroup, so one biased group drags the headline number down.
aucs = [report.subgroups[n].subgroup_auc for n in ("groupA", "groupB")]
print(f"generalized mean (p=-5): {generalized_mean_bias(aucs):.4f}")
print(f"arithmetic mean:         {float(np.mean(aucs)):.4f}")

# KS test: do non-toxic scores for the two groups come from one distribution?
a = [e.score for e in examples if "groupA" in e.subgroups and e.label == 0]
b = [e.score for e in examples if "groupB" in e.subgroups and e.label == 0]
d, p = ks_two_sample(a, b)
print(f"KS on non-toxic scores, groupA vs groupB: D={d:.4f} p={p:.2e}")
