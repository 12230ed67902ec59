"""Drive the rating-session service in process: pilot, gate, formal session.

Run:  python3 demos/05_rating_service.py
"""

import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from faceiq.service import RatingService, build_study_plan, create_app
from faceiq.synth import generate_dataset

workdir = Path(tempfile.mkdtemp(prefix="faceiq-demo-"))
rows = generate_dataset(workdir, n=40, seed=5)
plan = build_study_plan(rows, root=workdir, seed=5)
service = RatingService(plan, workdir / "events.jsonl")
client = TestClient(create_app(service))

# A formal session before the pilot gate is refused with 423.
locked = client.post("/sessions", json={"rater_id": "demo", "mode": "formal"})
print("formal before pilot ->", locked.status_code)

# Pilot: rate every item exactly like the expert annotations.
sid = client.post("/sessions", json={"rater_id": "demo", "mode": "pilot"}).json()["session_id"]
while True:
    nxt = client.get(f"/sessions/{sid}/next").json()
    if nxt.get("done"):
        break
    client.post(f"/sessions/{sid}/ratings",
                json={"image_id": nxt["image_id"],
                      "scores": plan.pilot_expert[nxt["image_id"]]})
gate = client.get(f"/sessions/{sid}/gate").json()
print("pilot gate:", gate["pass"], gate["per_dimension_srcc"][:2], "...")

# Formal session: middle-of-road answers everywhere.
created = client.post("/sessions", json={"rater_id": "demo", "mode": "formal"}).json()
fid = created["session_id"]
print("formal queue length:", created["total_items"])
seen = {}
while True:
    nxt = client.get(f"/sessions/{fid}/next").json()
    if nxt.get("done"):
        print("formal finished with status:", nxt["status"])
        break
    scores = seen.setdefault(nxt["image_id"], [3, 3, 3, 3, 3, 3])
    resp = client.post(f"/sessions/{fid}/ratings",
                       json={"image_id": nxt["image_id"], "scores": scores}).json()
    flags = resp["live_flags"]
    if flags["flagged"]:
        print("  live flag at", nxt["image_id"], flags)

log = client.get("/export/ratings").text
print("event log lines:", len(log.splitlines()), "->", workdir / "events.jsonl")
