"""Dataset splitting, the training loop, evaluation, and grid search.

Training follows the classic transfer-learning recipe: the preprocessor's
standardizer is fitted on the training split only, augmentation touches
training batches only (validation and test tensors are built before the
epoch loop from un-augmented images), and the Adam optimizer updates the
model's trainable parameters. The wall clock for a fit is the difference
between timestamps taken at entry and exit of the loop.
"""

from __future__ import annotations

import itertools
import json
import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .augment import AugmentConfig, apply_augment, sample_augment_params
from .data import Label, LabeledDataset, Sample
from .errors import DataError, NumericError, ParameterError
from .imaging import Preprocessor
from .metrics import EvalReport
from .nn.layers import Mode
from .nn.loss import bce_grad_probs, bce_loss
from .nn.model import ModelGraph, scratch_model
from .nn.optim import AdamState, adam_step
from .rng import STREAM_AUGMENT, STREAM_DROPOUT, STREAM_SPLIT, substream

logger = logging.getLogger(__name__)

# Fraction of the training split carved out as validation for curves and
# grid-search ranking.
VALIDATION_FRACTION = 0.15


@dataclass(frozen=True)
class Hyperparams:
    batch_size: int
    epochs: int
    learning_rate: float

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.epochs < 1 or self.learning_rate <= 0:
            raise ParameterError(f"hyperparameters must be positive, got {self}")

    def as_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
        }


class EpochStats(NamedTuple):
    epoch: int
    ta: float  # training accuracy
    va: float  # validation accuracy
    tl: float  # training loss
    vl: float  # validation loss


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    wall_clock_seconds: float = 0.0

    def __len__(self) -> int:
        return len(self.epochs)

    def rows(self) -> list[dict]:
        return [
            {"epoch": e.epoch, "ta": e.ta, "va": e.va, "tl": e.tl, "vl": e.vl}
            for e in self.epochs
        ]

    def to_csv(self) -> str:
        lines = ["epoch,ta,va,tl,vl"]
        lines += [f"{e.epoch},{e.ta!r},{e.va!r},{e.tl!r},{e.vl!r}" for e in self.epochs]
        return "\n".join(lines) + "\n"


def split_dataset(
    ds: LabeledDataset, ratio: float = 0.8, seed: int = 0
) -> tuple[LabeledDataset, LabeledDataset]:
    """Seeded stratified split; per class the train side gets floor(ratio*n).

    Raises when any class would end up empty on either side, since such a
    split cannot be trained or evaluated meaningfully.
    """
    if not 0.0 < ratio < 1.0:
        raise ParameterError(f"split ratio must lie in (0, 1), got {ratio}")
    if len(ds) == 0:
        raise DataError("cannot split an empty dataset")
    rng = substream(seed, STREAM_SPLIT)
    train: list[Sample] = []
    test: list[Sample] = []
    for label in (Label.DEFECT, Label.NON_DEFECT):
        members = ds.by_label(label)
        n = len(members)
        n_train = int(np.floor(ratio * n))
        if n_train == 0 or n_train == n:
            raise DataError(
                f"class {label.name} has {n} samples; ratio {ratio} leaves one side empty"
            )
        order = rng.permutation(n)
        train += [members[i] for i in order[:n_train]]
        test += [members[i] for i in order[n_train:]]
    return LabeledDataset(train), LabeledDataset(test)


def _tensor_batch(pre: Preprocessor, images, dtype) -> np.ndarray:
    return np.stack([pre.to_tensor(im) for im in images]).astype(dtype)


def _infer_stats(model: ModelGraph, x: np.ndarray, y: np.ndarray, batch: int = 64) -> tuple[float, float]:
    """Accuracy and loss over a tensor set in inference mode."""
    correct = 0
    losses = []
    for i in range(0, len(x), batch):
        probs, _ = model.forward(x[i : i + batch], Mode.INFER)
        correct += int(np.sum(probs.argmax(axis=1) == y[i : i + batch]))
        losses.append(bce_loss(y[i : i + batch], probs[:, 1]) * len(probs))
    return correct / len(x), float(np.sum(losses) / len(x))


def train_model(
    model: ModelGraph,
    train: LabeledDataset,
    val: LabeledDataset,
    hyper: Hyperparams,
    preprocessor: Preprocessor,
    seed: int = 0,
    augment: AugmentConfig | None = None,
) -> tuple[ModelGraph, TrainHistory]:
    """Fit the model's trainable parameters; returns it with the history.

    The preprocessor is fitted on ``train`` if it has no stats yet.
    ``augment=None`` disables augmentation entirely.
    """
    if len(train) == 0 or len(val) == 0:
        raise DataError("training and validation splits must be non-empty")
    t_start = time.perf_counter()

    prepared_train = [preprocessor.prepare(s.image) for s in train]
    if preprocessor.stats is None:
        preprocessor.fit(prepared_train, prepared=True)
    y_train = train.labels()

    # Validation tensors are built once, before any augmentation exists, so
    # augmented pixels can never leak into them.
    x_val = _tensor_batch(preprocessor, [preprocessor.prepare(s.image) for s in val], model.dtype)
    y_val = val.labels()

    batch_size = hyper.batch_size
    if batch_size > len(train):
        warnings.warn(
            f"batch size {batch_size} exceeds the {len(train)}-sample training split; "
            "falling back to a single batch per epoch",
            stacklevel=2,
        )
        batch_size = len(train)

    epoch_rng = substream(seed, STREAM_SPLIT + ".epochs")
    dropout_rng = substream(seed, STREAM_DROPOUT)
    augment_rng = substream(seed, STREAM_AUGMENT)

    params = model.trainable_params()
    state = AdamState.for_params(params, lr=hyper.learning_rate)
    history = TrainHistory()
    hw = (preprocessor.target_hw[0], preprocessor.target_hw[1])

    for epoch in range(1, hyper.epochs + 1):
        order = epoch_rng.permutation(len(train))
        seen = 0
        correct = 0
        loss_sum = 0.0
        for lo in range(0, len(order), batch_size):
            idxs = order[lo : lo + batch_size]
            imgs = []
            for i in idxs:
                img = prepared_train[i]
                if augment is not None:
                    p = sample_augment_params(augment_rng, augment, hw[0], hw[1])
                    img = apply_augment(img, p)
                imgs.append(img)
            x = _tensor_batch(preprocessor, imgs, model.dtype)
            yb = y_train[idxs]
            probs, cache = model.forward(x, Mode.TRAIN, dropout_rng, need_cache=True)
            batch_loss = bce_loss(yb, probs[:, 1])
            if not np.isfinite(batch_loss):
                raise NumericError(f"training loss became non-finite at epoch {epoch}")
            grads = model.backward(cache, yb)
            adam_step(params, grads, state)
            seen += len(idxs)
            correct += int(np.sum(probs.argmax(axis=1) == yb))
            loss_sum += batch_loss * len(idxs)
        va, vl = _infer_stats(model, x_val, y_val)
        history.epochs.append(
            EpochStats(epoch=epoch, ta=correct / seen, va=va, tl=loss_sum / seen, vl=vl)
        )
    history.wall_clock_seconds = time.perf_counter() - t_start
    return model, history


def evaluate(model: ModelGraph, test: LabeledDataset, preprocessor: Preprocessor) -> EvalReport:
    """Argmax classification over the test split; defect is positive.

    Test images pass through the variant chain and the fitted standardizer
    but never through augmentation.
    """
    if len(test) == 0:
        raise DataError("evaluation needs a non-empty dataset")
    x = _tensor_batch(preprocessor, [preprocessor.prepare(s.image) for s in test], model.dtype)
    preds = []
    for i in range(0, len(x), 64):
        probs, _ = model.forward(x[i : i + 64], Mode.INFER)
        preds.append(probs.argmax(axis=1))
    return EvalReport.from_predictions(test.labels(), np.concatenate(preds))


@dataclass(frozen=True)
class HyperGrid:
    """Candidate lists for the three tuned hyperparameters.

    The defaults are the grid used for the small-dataset study; both lists
    are free-form so settings outside it (like batch 50 / epochs 50) remain
    expressible.
    """

    batch_sizes: tuple[int, ...] = (4, 5, 8, 10)
    epochs: tuple[int, ...] = (10, 20, 30, 40)
    learning_rates: tuple[float, ...] = (0.001, 0.01, 0.1)

    def combinations(self) -> list[Hyperparams]:
        if not (self.batch_sizes and self.epochs and self.learning_rates):
            raise ParameterError("grid must have at least one candidate per dimension")
        return [
            Hyperparams(b, e, lr)
            for b, e, lr in itertools.product(
                sorted(self.batch_sizes), sorted(self.epochs), sorted(self.learning_rates)
            )
        ]

    @classmethod
    def from_file(cls, path) -> "HyperGrid":
        """Parse a flat key = value file with comma-separated candidates."""
        values = {}
        with open(path) as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#") or "=" not in line:
                    continue
                key, _, raw = line.partition("=")
                values[key.strip()] = [v.strip() for v in raw.split(",") if v.strip()]
        kwargs = {}
        if "batch_sizes" in values:
            kwargs["batch_sizes"] = tuple(int(v) for v in values["batch_sizes"])
        if "epochs" in values:
            kwargs["epochs"] = tuple(int(v) for v in values["epochs"])
        if "learning_rates" in values:
            kwargs["learning_rates"] = tuple(float(v) for v in values["learning_rates"])
        return cls(**kwargs)


def rank_leaderboard(entries: Sequence[dict]) -> list[dict]:
    """Order grid results: best validation accuracy, then lowest validation
    loss, then lexicographically smallest (batch, epochs, lr)."""
    return sorted(
        entries,
        key=lambda e: (
            -e["va"],
            e["vl"],
            e["hyperparams"]["batch_size"],
            e["hyperparams"]["epochs"],
            e["hyperparams"]["learning_rate"],
        ),
    )


TrainEvalFn = Callable[[Hyperparams, LabeledDataset, LabeledDataset, int], tuple[float, float]]


def grid_search(
    grid: HyperGrid,
    train: LabeledDataset,
    preprocessor_factory: Callable[[], Preprocessor],
    seed: int = 0,
    input_size: int = 64,
    augment: AugmentConfig | None = None,
    train_eval_fn: TrainEvalFn | None = None,
) -> tuple[Hyperparams, list[dict]]:
    """Try every grid combination on an internal validation holdout.

    A fresh model is trained per candidate on 85% of ``train`` and scored
    on the remaining 15%. ``train_eval_fn`` can replace the real
    train-and-score step (used by tests with stub models). Returns the
    winning hyperparameters and the full ranked leaderboard.
    """
    candidates = grid.combinations()
    fit_ds, holdout = split_dataset(train, 1.0 - VALIDATION_FRACTION, seed=seed)

    def default_train_eval(h: Hyperparams, fit, val, cand_seed: int) -> tuple[float, float]:
        model = scratch_model(size=input_size, seed=cand_seed)
        pre = preprocessor_factory()
        _, hist = train_model(model, fit, val, h, pre, seed=cand_seed, augment=augment)
        last = hist.epochs[-1]
        return last.va, last.vl

    run = train_eval_fn or default_train_eval
    entries = []
    for h in candidates:
        cand_seed_rng = substream(seed, f"grid.{h.batch_size}.{h.epochs}.{h.learning_rate}")
        cand_seed = int(cand_seed_rng.integers(0, 2**31 - 1))
        t0 = time.perf_counter()
        va, vl = run(h, fit_ds, holdout, cand_seed)
        entries.append(
            {
                "hyperparams": h.as_dict(),
                "va": float(va),
                "vl": float(vl),
                "wall_clock_seconds": time.perf_counter() - t0,
            }
        )
        logger.info("grid candidate %s -> va=%.4f vl=%.4f", h.as_dict(), va, vl)
    leaderboard = rank_leaderboard(entries)
    best = leaderboard[0]["hyperparams"]
    return Hyperparams(best["batch_size"], best["epochs"], best["learning_rate"]), leaderboard


def report_json(
    report: EvalReport | None,
    history: TrainHistory | None,
    hyper: Hyperparams | None,
    variant_name: str | None,
    seed: int | None,
) -> str:
    """The serialized evaluation/training document."""
    doc: dict = {}
    if report is not None:
        doc.update(report.to_json_dict())
    if history is not None:
        doc["history"] = history.rows()
        doc["wall_clock_seconds"] = history.wall_clock_seconds
    if hyper is not None:
        doc["hyperparams"] = hyper.as_dict()
    if variant_name is not None:
        doc["pipeline_variant"] = variant_name
    if seed is not None:
        doc["seed"] = seed
    return json.dumps(doc, indent=1, sort_keys=True)
