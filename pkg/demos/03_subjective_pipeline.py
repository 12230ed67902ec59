"""Subjective score pipeline: screening, outlier removal, MOS, regression.

Run:  python3 demos/03_subjective_pipeline.py
"""

import numpy as np

from faceiq.subjective import (RatingRecord, ScreeningConfig, SessionSpec,
                               bt500_screen, compute_mos, fit_overall_regression,
                               pilot_gate, run_pipeline, screen_session, srcc)

rng = np.random.default_rng(7)

# ------------------------------------------------------ session screening
spec = SessionSpec(
    session_id="demo",
    test_image_ids=[f"t{i}" for i in range(10)],
    golden=[(f"g{i}", (3, 3, 3, 3, 3, 3)) for i in range(5)],
    repeated=[f"t{i}" for i in range(5)],
)

ratings = []
for tid in spec.test_image_ids:
    role = "repeated_first" if tid in spec.repeated else "test"
    ratings.append(RatingRecord("rater1", "demo", tid, (3, 3, 3, 4, 3, 3), role))
for gid, expert in spec.golden:
    ratings.append(RatingRecord("rater1", "demo", gid, expert, "golden"))
for tid in spec.repeated:
    ratings.append(RatingRecord("rater1", "demo", tid, (3, 3, 3, 4, 3, 3),
                                "repeated_second"))

result = screen_session(ratings, spec)
print(f"session screen: outliers {result.outlier_count}/{result.total} "
      f"discard={result.discard}")

# -------------------------------------------------- deviation-based removal
# One rater disagrees hard on one image; the kurtosis rule flags only them.
records = [RatingRecord(f"r{i}", "s", "img0", (s, 3, 3, 3, 3, 3))
           for i, s in enumerate((3, 3, 3, 3, 3, 1))]
bt = bt500_screen(records)
print("flagged ratings:", sorted(bt.flagged))

table = compute_mos(records, removed=bt.removed, excluded_raters=bt.excluded_raters)
print("MOS for img0:", table.entries["img0"].mos)

# ------------------------------------------------------------- correlations
x = rng.normal(size=30)
print("srcc(x, exp(x)) =", round(srcc(x, np.exp(x)), 6), "(rank metrics ignore",
      "monotone transforms)")

# ------------------------------------------------------------- pilot gating
expert = rng.integers(1, 6, size=(20, 6)).astype(float)
trainee = np.clip(expert + rng.normal(0, 0.2, expert.shape), 1, 5)
gate = pilot_gate(trainee, expert)
print("pilot gate pass:", gate.passed,
      "min srcc:", round(min(r for r in gate.per_dimension_srcc if r is not None), 3))

# ------------------------------------------- overall-quality least squares
dims = rng.uniform(1, 5, size=(2000, 5))
overall = dims @ np.array([0.1, 0.4, 0.05, 0.15, 0.3]) + rng.normal(0, 0.05, 2000)
fit = fit_overall_regression(np.hstack([dims, overall[:, None]]))
print("fitted coefficients:", np.round(fit.coefficients, 4))
print("r_squared:", round(fit.r_squared, 4))
