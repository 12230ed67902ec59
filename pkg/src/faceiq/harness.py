"""Training loop, evaluation tables, and fold orchestration."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import save_checkpoint
from .decoder import mse_loss
from .errors import IngestError, UndefinedCorrelationError
from .model import QualityModel
from .optim import Adam, AdamConfig
from .profiles import TASK_ORDER, ModelProfile
from .subjective import plcc, srcc
from .tensor import Tensor, concat, mean_all, reshape
from .views import ImageRecord, build_views


@dataclass
class TrainConfig:
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 4
    max_steps: int = 2000
    seed: int = 0
    eval_every: int = 200

    def adam(self) -> AdamConfig:
        return AdamConfig(lr=self.lr, beta1=self.beta1, beta2=self.beta2,
                          epsilon=self.epsilon)


@dataclass
class TrainResult:
    model: QualityModel
    log: list[tuple[int, float]]
    val_log: list[tuple[int, float | None]]
    best_val_srcc: float | None
    best_step: int | None
    state: dict

    def final_train_loss(self) -> float:
        return self.log[-1][1]


def prepare_views(records: list[ImageRecord], input_size: int):
    """Precompute view triplets and label vectors; views are per-record pure."""
    out = []
    for rec in records:
        if rec.mos is None:
            raise ValueError(f"record {rec.id} lacks labels")
        out.append((build_views(rec, out_size=input_size), np.asarray(rec.mos)))
    return out


def _batch_loss(model: QualityModel, batch) -> Tensor:
    losses = [reshape(model.loss(triplet, labels), (1,)) for triplet, labels in batch]
    total = losses[0] if len(losses) == 1 else concat(losses, axis=0)
    return mean_all(total)


def predict_batch(model: QualityModel, prepared) -> np.ndarray:
    return np.stack([model.forward_views(triplet).data for triplet, _ in prepared])


def validation_srcc(model: QualityModel, prepared) -> float | None:
    """SRCC of the overall dimension on a validation set; None when undefined."""
    if not prepared:
        return None
    preds = predict_batch(model, prepared)
    labels = np.stack([lab for _, lab in prepared])
    try:
        return srcc(preds[:, 5], labels[:, 5])
    except (UndefinedCorrelationError, ValueError):
        return None


def train(train_records: list[ImageRecord], val_records: list[ImageRecord],
          profile: ModelProfile, config: TrainConfig,
          log_path=None) -> TrainResult:
    """Minimize the averaged six-dimension MSE; checkpoint best validation SRCC."""
    unlabelled = [r.id for r in list(train_records) + list(val_records) if r.mos is None]
    if unlabelled:
        raise IngestError(f"records lack six-dimension labels: {unlabelled}",
                          offending_ids=unlabelled)
    model = QualityModel(profile, seed=config.seed)
    optimizer = Adam(model.parameters(), config.adam())
    prepared = prepare_views(train_records, profile.input_size)
    prepared_val = prepare_views(val_records, profile.input_size)
    rng = np.random.default_rng(config.seed)

    order: list[int] = []
    log: list[tuple[int, float]] = []
    val_log: list[tuple[int, float | None]] = []
    best: tuple[float, int, dict] | None = None

    for step in range(1, config.max_steps + 1):
        batch = []
        for _ in range(min(config.batch_size, len(prepared))):
            if not order:
                order = list(rng.permutation(len(prepared)))
            batch.append(prepared[order.pop()])
        optimizer.zero_grad()
        loss = _batch_loss(model, batch)
        loss.backward()
        optimizer.step()
        log.append((step, float(loss.data)))

        if prepared_val and (step % config.eval_every == 0 or step == config.max_steps):
            rho = validation_srcc(model, prepared_val)
            val_log.append((step, rho))
            if rho is not None and (best is None or rho > best[0]):
                best = (rho, step, model.state_dict())

    if best is not None:
        best_srcc, best_step, state = best
    else:
        best_srcc, best_step, state = None, None, model.state_dict()

    if log_path is not None:
        lines = [f"step={s} train_mse={v:.8f}" for s, v in log]
        lines += [f"step={s} val_srcc={'nan' if v is None else f'{v:.6f}'}"
                  for s, v in val_log]
        Path(log_path).write_text("\n".join(lines) + "\n")
    return TrainResult(model=model, log=log, val_log=val_log,
                       best_val_srcc=best_srcc, best_step=best_step, state=state)


def save_train_checkpoint(path, result: TrainResult, config: TrainConfig) -> bytes:
    header = {
        "profile": json.loads(result.model.profile.to_json()),
        "train": {"lr": config.lr, "batch_size": config.batch_size,
                  "max_steps": config.max_steps, "seed": config.seed,
                  "best_step": result.best_step,
                  "best_val_srcc": result.best_val_srcc},
    }
    return save_checkpoint(path, header, result.state)


# -- evaluation ---------------------------------------------------------------

@dataclass
class EvalResult:
    per_dimension: dict[str, tuple[float | None, float | None]]
    flags: list[str] = field(default_factory=list)

    def row(self) -> list[float | None]:
        out = []
        for name in TASK_ORDER:
            out.extend(self.per_dimension[name])
        return out


def evaluate_predictions(preds: np.ndarray, labels: np.ndarray) -> EvalResult:
    """Per-dimension SRCC/PLCC; constant predictions flag rather than abort."""
    per_dim: dict[str, tuple[float | None, float | None]] = {}
    flags: list[str] = []
    for k, name in enumerate(TASK_ORDER):
        try:
            rho = srcc(preds[:, k], labels[:, k])
            r = plcc(preds[:, k], labels[:, k])
            per_dim[name] = (rho, r)
        except UndefinedCorrelationError:
            per_dim[name] = (None, None)
            flags.append(f"{name}: correlation undefined (constant vector)")
    return EvalResult(per_dimension=per_dim, flags=flags)


def evaluate_model(model: QualityModel, records: list[ImageRecord]) -> EvalResult:
    prepared = prepare_views(records, model.profile.input_size)
    preds = predict_batch(model, prepared)
    labels = np.stack([lab for _, lab in prepared])
    return evaluate_predictions(preds, labels)


def save_predictions(path, model: QualityModel, records: list[ImageRecord]) -> None:
    """Write one line per image: id, the six named scores, profile name."""
    from .decoder import ScoreVector
    lines = []
    for rec in records:
        triplet = build_views(rec, out_size=model.profile.input_size)
        scores = ScoreVector(model.forward_views(triplet).data)
        row = {"image_id": rec.id, **scores.to_dict(), "profile": model.profile.name}
        lines.append(json.dumps(row, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n")


def mean_eval(results: list[EvalResult]) -> EvalResult:
    """Average per-dimension correlations across folds (mean, skipping None)."""
    per_dim: dict[str, tuple[float | None, float | None]] = {}
    flags: list[str] = []
    for name in TASK_ORDER:
        pairs = [r.per_dimension[name] for r in results]
        srccs = [p[0] for p in pairs if p[0] is not None]
        plccs = [p[1] for p in pairs if p[1] is not None]
        per_dim[name] = (float(np.mean(srccs)) if srccs else None,
                         float(np.mean(plccs)) if plccs else None)
        if len(srccs) < len(pairs):
            flags.append(f"{name}: {len(pairs) - len(srccs)} fold(s) undefined")
    return EvalResult(per_dimension=per_dim, flags=flags)


def format_table(name: str, result: EvalResult, params_m: float | None = None,
                 gmacs: float | None = None, latency_ms: float | None = None) -> str:
    """One ampersand-separated result row plus a readable header."""
    def fmt(v, digits=4):
        return "-" if v is None else f"{v:.{digits}f}"

    header_cells = []
    for dim in TASK_ORDER:
        header_cells.extend([f"{dim}_srcc", f"{dim}_plcc"])
    header_cells += ["params_m", "gmacs", "latency_ms"]
    cells = [fmt(v) for v in result.row()]
    cells.append(fmt(params_m, 2))
    cells.append(fmt(gmacs, 2))
    cells.append(fmt(latency_ms, 2))
    header = "method & " + " & ".join(header_cells)
    row = f"{name} & " + " & ".join(cells)
    return header + "\n" + row
