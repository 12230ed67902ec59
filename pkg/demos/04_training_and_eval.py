"""Small end-to-end training run on synthetic data, then evaluation.

Run:  python3 demos/04_training_and_eval.py   (about a minute)
"""

import numpy as np

from faceiq.complexity import count_params_macs
from faceiq.harness import (TrainConfig, evaluate_model, format_table, train)
from faceiq.profiles import toy_profile
from faceiq.splits import split_folds
from faceiq.synth import generate_records

items = generate_records(48, seed=11)
records = {it.record.id: it.record for it in items}

plan = split_folds(sorted(records), seed=3)
fold = plan.folds[0]
print("fold sizes:", {k: len(v) for k, v in fold.items()})

profile = toy_profile(input_size=16, stage_channels=(8, 12), stage_strides=(4, 2),
                      d_o=8, d_l=4, task_count=6, name="demo")
config = TrainConfig(lr=5e-4, batch_size=8, max_steps=300, seed=0, eval_every=100)
result = train([records[i] for i in fold["train"]],
               [records[i] for i in fold["val"]], profile, config)
print(f"train mse: {result.log[0][1]:.3f} -> {result.final_train_loss():.3f}")
print("validation srcc log:", [(s, None if v is None else round(v, 3))
                               for s, v in result.val_log])

evaluation = evaluate_model(result.model, [records[i] for i in fold["test"]])
report = count_params_macs(profile)
print(format_table("demo", evaluation, params_m=report.params / 1e6,
                   gmacs=report.macs / 1e9))
