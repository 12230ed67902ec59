"""Build the three facial views and run the quality model end to end.

Run:  python3 demos/02_views_and_model.py
"""

import numpy as np

from faceiq.complexity import count_params_macs
from faceiq.model import QualityModel
from faceiq.profiles import PROFILES, toy_profile
from faceiq.synth import generate_records
from faceiq.views import build_views

# One synthetic record stands in for a manifest row + image payload.
item = generate_records(1, seed=42)[0]
record = item.record
print("record:", record.id, "bbox:", record.face_bbox,
      "labels:", np.round(record.mos, 2))

# Whole frame, compact face crop, eyes-and-mouth crop, all resized alike.
triplet = build_views(record, out_size=32)
for name, view in zip(("x_o", "x_f", "x_em"), triplet.tensors()):
    print(f"{name}: shape {view.shape} range ({view.data.min():.2f}, "
          f"{view.data.max():.2f})")

# A small profile keeps the demo fast; S/XS/XXS are the full-size variants.
profile = toy_profile(input_size=32, stage_channels=(8, 16), stage_strides=(4, 2),
                      d_o=16, d_l=8, view_heads=2, decoder_heads=2, task_count=6)
model = QualityModel(profile, seed=0)
scores = model.predict(triplet)
print("predicted scores:", scores.to_dict())

for name, prof in PROFILES.items():
    report = count_params_macs(prof)
    print(f"profile {name}: {report.params/1e6:.2f} M params, "
          f"{report.macs/1e9:.2f} GMACs per three-view forward")
