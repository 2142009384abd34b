"""AP and AUC on small hand-checkable cases."""

import numpy as np

from ftm import average_precision, roc_auc

# ranks 1..3; positives at ranks 2 and 3 -> (1/2 + 2/3) / 2
print("AP:", average_precision([0.9, 0.8, 0.7], [0, 1, 1]), "expected", 7 / 12)

# tied scores keep input order, so AP depends on where the positive sits
print("AP ties:", average_precision([1.0, 1.0], [0, 1]), average_precision([1.0, 1.0], [1, 0]))

# AUC counts ties as half
print("AUC all tied:", roc_auc(np.zeros(4), [1, 0, 1, 0]))

rng = np.random.default_rng(0)
labels = rng.integers(0, 2, 10_000)
print("random scores: AP", round(average_precision(rng.random(10_000), labels), 3),
      "AUC", round(roc_auc(rng.random(10_000), labels), 3))
