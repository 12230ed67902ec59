"""Rating-session service: pilot gating, golden/repeated screening, event log.

State is event-sourced: every session creation and accepted rating is
appended to a line-delimited log and flushed before the response goes out,
so replaying the log reconstructs every session exactly. All mutations are
serialized through one lock; concurrent submissions to the same cursor
position resolve to one winner and one sequence error.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (GateRequiredError, ModeError, SequenceError,
                     ValidationError)
from .subjective import (N_DIMS, ScreeningConfig, pilot_gate)

MODE_PILOT = "pilot"
MODE_FORMAL = "formal"
STATUS_ACTIVE = "active"
STATUS_PASSED = "passed"
STATUS_FAILED = "failed"
STATUS_DISCARDED = "discarded"
STATUS_COMPLETE = "complete"

GOLDEN_FREE_PREFIX = 3   # golden/repeated items never land in the first positions
REPEAT_MIN_GAP = 20      # second showing trails the first by at least this many items


@dataclass
class PlanSession:
    session_id: str
    test_ids: list[str]
    golden: dict[str, list[int]]   # image_id -> expert six-score
    repeated: list[str]            # subset of test_ids shown twice


@dataclass
class StudyPlan:
    pilot_items: list[str]
    pilot_expert: dict[str, list[int]]
    sessions: list[PlanSession]
    image_paths: dict[str, str]
    root: str = "."

    def to_json(self) -> str:
        return json.dumps({
            "pilot_items": self.pilot_items,
            "pilot_expert": self.pilot_expert,
            "sessions": [{"session_id": s.session_id, "test_ids": s.test_ids,
                          "golden": s.golden, "repeated": s.repeated}
                         for s in self.sessions],
            "image_paths": self.image_paths,
            "root": self.root,
        }, sort_keys=True, indent=2)

    @staticmethod
    def from_json(text: str) -> "StudyPlan":
        obj = json.loads(text)
        return StudyPlan(
            pilot_items=obj["pilot_items"],
            pilot_expert=obj["pilot_expert"],
            sessions=[PlanSession(session_id=s["session_id"], test_ids=s["test_ids"],
                                  golden=s["golden"], repeated=s["repeated"])
                      for s in obj["sessions"]],
            image_paths=obj["image_paths"],
            root=obj.get("root", "."),
        )


def build_study_plan(rows, root=".", pilot_count: int = 20, tests_per_session: int = 10,
                     golden_count: int = 5, repeat_count: int = 5,
                     seed: int = 0) -> StudyPlan:
    """Chunk manifest rows into a pilot set and screened formal sessions.

    Expert scores come from rounding the manifest labels into the 1-5 range.
    """
    labelled = [r for r in rows if r.mos is not None]
    if len(labelled) < pilot_count + tests_per_session:
        raise ValidationError("not enough labelled rows for a study plan")
    rng = np.random.default_rng(seed)
    order = [labelled[i] for i in rng.permutation(len(labelled))]

    def expert(row):
        return [int(np.clip(round(v), 1, 5)) for v in row.mos]

    pilot_rows = order[:pilot_count]
    rest = order[pilot_count:]
    sessions = []
    idx = 0
    # golden items are control images outside the test set; repeats are second
    # showings of test items, so presented = tests + golden + repeats
    per_session = tests_per_session + golden_count
    while len(rest) - idx >= per_session:
        chunk = rest[idx:idx + per_session]
        idx += per_session
        golden_rows = chunk[:golden_count]
        test_rows = chunk[golden_count:]
        repeated_rows = test_rows[-repeat_count:]
        sessions.append(PlanSession(
            session_id=f"sess{len(sessions):03d}",
            test_ids=[r.id for r in test_rows],
            golden={r.id: expert(r) for r in golden_rows},
            repeated=[r.id for r in repeated_rows],
        ))
    image_paths = {r.id: r.image_path for r in rows}
    return StudyPlan(pilot_items=[r.id for r in pilot_rows],
                     pilot_expert={r.id: expert(r) for r in pilot_rows},
                     sessions=sessions, image_paths=image_paths, root=str(root))


@dataclass
class SessionState:
    session_id: str
    rater_id: str
    mode: str
    plan_session_id: str | None
    queue: list[dict]          # [{"image_id": ..., "role": ...}]
    cursor: int = 0
    status: str = STATUS_ACTIVE
    ratings: list[dict] = field(default_factory=list)
    outlier_count: int = 0
    screened_count: int = 0

    @property
    def total(self) -> int:
        return len(self.queue)

    def summary(self) -> dict:
        return {"session_id": self.session_id, "rater_id": self.rater_id,
                "mode": self.mode, "status": self.status, "cursor": self.cursor,
                "total_items": self.total, "outlier_count": self.outlier_count,
                "screened_count": self.screened_count}


def _session_rng(rater_id: str, session_counter: int) -> np.random.Generator:
    digest = hashlib.sha256(f"{rater_id}:{session_counter}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _build_formal_queue(plan_session: PlanSession,
                        rng: np.random.Generator) -> list[dict]:
    repeated = set(plan_session.repeated)
    test_ids = [plan_session.test_ids[i]
                for i in rng.permutation(len(plan_session.test_ids))]
    queue = [{"image_id": tid,
              "role": "repeated_first" if tid in repeated else "test"}
             for tid in test_ids]

    for gid in sorted(plan_session.golden):
        pos = int(rng.integers(min(GOLDEN_FREE_PREFIX, len(queue)), len(queue) + 1))
        queue.insert(pos, {"image_id": gid, "role": "golden"})

    for rid in sorted(plan_session.repeated):
        first_pos = next(i for i, item in enumerate(queue)
                         if item["image_id"] == rid and item["role"] == "repeated_first")
        lo = min(first_pos + REPEAT_MIN_GAP, len(queue))
        pos = int(rng.integers(lo, len(queue) + 1))
        queue.insert(pos, {"image_id": rid, "role": "repeated_second"})
    return queue


class RatingService:
    """Session protocol over an append-only event log."""

    def __init__(self, plan: StudyPlan, store_path,
                 config: ScreeningConfig | None = None):
        self.plan = plan
        self.config = config or ScreeningConfig()
        self.store_path = Path(store_path)
        self.store_path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._sessions: dict[str, SessionState] = {}
        self._session_counter = 0
        self._formal_assign = 0
        self._pilot_passed: set[str] = set()
        if self.store_path.exists():
            for line in self.store_path.read_text().splitlines():
                if line.strip():
                    self._apply(json.loads(line))

    # -- event sourcing -------------------------------------------------------
    def _append(self, event: dict) -> None:
        self._apply(event)
        with self.store_path.open("a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")
            fh.flush()

    def _apply(self, event: dict) -> None:
        kind = event["event"]
        if kind == "session_created":
            state = SessionState(session_id=event["session_id"],
                                 rater_id=event["rater_id"], mode=event["mode"],
                                 plan_session_id=event.get("plan_session_id"),
                                 queue=event["queue"])
            self._sessions[state.session_id] = state
            self._session_counter += 1
            if state.mode == MODE_FORMAL:
                self._formal_assign += 1
        elif kind == "rating":
            state = self._sessions[event["session_id"]]
            state.ratings.append({"image_id": event["image_id"],
                                  "scores": event["scores"],
                                  "role": event["role"],
                                  "flagged": event["flagged"]})
            state.cursor += 1
            if event["flagged"] is not None:
                state.screened_count += 1
                if event["flagged"]:
                    state.outlier_count += 1
        elif kind == "status":
            state = self._sessions[event["session_id"]]
            state.status = event["status"]
            if event["status"] == STATUS_PASSED:
                self._pilot_passed.add(state.rater_id)

    # -- protocol ---------------------------------------------------------------
    def create_session(self, rater_id: str, mode: str) -> dict:
        if mode not in (MODE_PILOT, MODE_FORMAL):
            raise ValidationError(f"unknown mode {mode!r}")
        if not rater_id or not isinstance(rater_id, str):
            raise ValidationError("rater_id is required")
        with self._lock:
            if mode == MODE_FORMAL and rater_id not in self._pilot_passed:
                raise GateRequiredError(
                    f"rater {rater_id} must pass the pilot before a formal session")
            rng = _session_rng(rater_id, self._session_counter)
            if mode == MODE_PILOT:
                items = [self.plan.pilot_items[i]
                         for i in rng.permutation(len(self.plan.pilot_items))]
                queue = [{"image_id": pid, "role": "test"} for pid in items]
                plan_session_id = None
            else:
                plan_session = self.plan.sessions[
                    self._formal_assign % len(self.plan.sessions)]
                queue = _build_formal_queue(plan_session, rng)
                plan_session_id = plan_session.session_id
            session_id = f"s{self._session_counter:05d}"
            self._append({"event": "session_created", "session_id": session_id,
                          "rater_id": rater_id, "mode": mode,
                          "plan_session_id": plan_session_id, "queue": queue})
            return self._sessions[session_id].summary()

    def _get(self, session_id: str) -> SessionState:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise ValidationError(f"unknown session {session_id}")

    def session_summary(self, session_id: str) -> dict:
        with self._lock:
            return self._get(session_id).summary()

    def next_item(self, session_id: str) -> dict:
        with self._lock:
            state = self._get(session_id)
            if state.cursor >= state.total or state.status != STATUS_ACTIVE:
                return {"done": True, "status": state.status}
            item = state.queue[state.cursor]
            return {"image_id": item["image_id"], "index": state.cursor,
                    "total": state.total}

    def submit_rating(self, session_id: str, image_id: str, scores) -> dict:
        with self._lock:
            state = self._get(session_id)
            if state.status != STATUS_ACTIVE or state.cursor >= state.total:
                raise SequenceError("session is finished")
            if (not isinstance(scores, (list, tuple)) or len(scores) != N_DIMS
                    or any(not isinstance(s, int) or isinstance(s, bool)
                           or not 1 <= s <= 5 for s in scores)):
                raise ValidationError("scores must be six integers in [1,5]")
            expected = state.queue[state.cursor]
            if image_id != expected["image_id"]:
                raise SequenceError(
                    f"expected rating for {expected['image_id']}, got {image_id}")

            flagged = self._evaluate_flag(state, expected, list(scores))
            self._append({"event": "rating", "session_id": session_id,
                          "image_id": image_id, "scores": list(scores),
                          "role": expected["role"], "flagged": flagged})
            if state.cursor >= state.total:
                self._finalize(state)
            return {"accepted": True,
                    "live_flags": {"flagged": flagged,
                                   "outlier_count": state.outlier_count,
                                   "screened_count": state.screened_count},
                    "progress": {"index": state.cursor, "total": state.total},
                    "status": state.status}

    def _evaluate_flag(self, state: SessionState, item: dict,
                       scores: list[int]) -> bool | None:
        role = item["role"]
        threshold = self.config.golden_deviation
        if role == "golden":
            plan_session = self._plan_session(state)
            expert = plan_session.golden[item["image_id"]]
            return any(abs(a - b) > threshold for a, b in zip(scores, expert))
        if role == "repeated_second":
            first = next(r["scores"] for r in state.ratings
                         if r["image_id"] == item["image_id"]
                         and r["role"] == "repeated_first")
            return any(abs(a - b) > self.config.repeat_deviation
                       for a, b in zip(scores, first))
        return None

    def _plan_session(self, state: SessionState) -> PlanSession:
        return next(s for s in self.plan.sessions
                    if s.session_id == state.plan_session_id)

    def _finalize(self, state: SessionState) -> None:
        if state.mode == MODE_FORMAL:
            fraction = (state.outlier_count / state.screened_count
                        if state.screened_count else 0.0)
            status = (STATUS_DISCARDED
                      if fraction > self.config.session_outlier_fraction
                      else STATUS_COMPLETE)
        else:
            status = STATUS_PASSED if self._gate(state).passed else STATUS_FAILED
        self._append({"event": "status", "session_id": state.session_id,
                      "status": status})

    def _gate(self, state: SessionState):
        by_image = {r["image_id"]: r["scores"] for r in state.ratings}
        items = sorted(self.plan.pilot_expert)
        trainee = np.array([by_image[i] for i in items], dtype=np.float64)
        expert = np.array([self.plan.pilot_expert[i] for i in items], dtype=np.float64)
        return pilot_gate(trainee, expert, self.config)

    def gate_status(self, session_id: str) -> dict:
        with self._lock:
            state = self._get(session_id)
            if state.mode != MODE_PILOT:
                raise ModeError("gate status applies to pilot sessions only")
            if state.cursor < state.total:
                raise ValidationError("pilot session is not complete yet")
            result = self._gate(state)
            return {"pass": result.passed,
                    "per_dimension_srcc": result.per_dimension_srcc,
                    "diagnostics": result.diagnostics,
                    "status": state.status}

    def image_path(self, image_id: str) -> Path:
        if image_id not in self.plan.image_paths:
            raise ValidationError(f"unknown image {image_id}")
        return Path(self.plan.root) / self.plan.image_paths[image_id]

    def export_log(self) -> str:
        with self._lock:
            if not self.store_path.exists():
                return ""
            return self.store_path.read_text()


def create_app(service: RatingService):
    """FastAPI wrapper mapping service errors onto the protocol status codes."""
    from fastapi import FastAPI, Request
    from fastapi.responses import JSONResponse, PlainTextResponse, Response

    app = FastAPI(title="rating-session service")

    @app.exception_handler(ValidationError)
    async def _validation(request: Request, exc: ValidationError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(ModeError)
    async def _mode(request: Request, exc: ModeError):
        return JSONResponse(status_code=400, content={"error": str(exc)})

    @app.exception_handler(SequenceError)
    async def _sequence(request: Request, exc: SequenceError):
        return JSONResponse(status_code=409, content={"error": str(exc)})

    @app.exception_handler(GateRequiredError)
    async def _gate(request: Request, exc: GateRequiredError):
        return JSONResponse(status_code=423, content={"error": str(exc)})

    @app.post("/sessions")
    def create_session(body: dict):
        return service.create_session(body.get("rater_id"), body.get("mode"))

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return service.session_summary(session_id)

    @app.get("/sessions/{session_id}/next")
    def next_item(session_id: str):
        return service.next_item(session_id)

    @app.post("/sessions/{session_id}/ratings")
    def submit_rating(session_id: str, body: dict):
        return service.submit_rating(session_id, body.get("image_id"),
                                     body.get("scores"))

    @app.get("/sessions/{session_id}/gate")
    def gate_status(session_id: str):
        return service.gate_status(session_id)

    @app.get("/images/{image_id}")
    def image(image_id: str):
        path = service.image_path(image_id)
        if not path.exists():
            return JSONResponse(status_code=400, content={"error": "image file missing"})
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.get("/export/ratings")
    def export_ratings():
        return PlainTextResponse(service.export_log())

    return app
