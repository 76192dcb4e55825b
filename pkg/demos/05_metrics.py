"""The evaluation metrics on small hand-checkable inputs.

Run: python3 demos/05_metrics.py
"""

import numpy as np

from emotic_mbn.metrics import average_precision, eq_pr_threshold, mae, mean_ap

scores = [0.9, 0.8, 0.7, 0.6]
labels = [1, 0, 1, 0]
# hits at ranks 1 and 3: (1/2)(1/1) + (1/2)(2/3) = 5/6
print("AP =", average_precision(scores, labels))

# AP only depends on the ranking, so any increasing transform leaves it alone
print("AP after exp:", average_precision(np.exp(scores), labels))

# a category with no positives has no AP and drops out of the mean
aps = [average_precision(scores, labels), average_precision(scores, [0, 0, 0, 1]), average_precision(scores, [0] * 4)]
print("APs:", aps, "-> mAP", mean_ap(aps))

# decision threshold where precision and recall meet
print("equal P/R threshold:", eq_pr_threshold([0.9, 0.6, 0.4, 0.2], [1, 1, 0, 0]))

# random scores score about the category prevalence
rng = np.random.default_rng(0)
y = (rng.random(5000) < 0.1).astype(int)
print("random-score AP at 10% prevalence:", round(average_precision(rng.random(5000), y), 4))

per_dim, mean = mae([[5, 5, 5]], [[4, 6, 5]])
print("MAE per dimension", per_dim, "mean", mean)
