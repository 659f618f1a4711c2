"""
Training loop
=============
Patient-level split, Adam on ce + lambda * denoise, early stopping on
validation PR-AUC with best-epoch restore. Given (config, data) the run is
bitwise reproducible: the shuffle order comes from a generator seeded by
config.seed and every reduction runs in a fixed order.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from autograd import ops
from autograd.tensor import Tape, backward, no_tape
from config import TrainConfig
from ehr.batching import Batch, encode_batch
from ehr.codes import MaskTime
from ehr.trajectory import NowcastInstance
from ehr.vocab import Vocabulary
from model.head import ce_loss
from model.trace import TraceModel
from training.metrics import pr_auc_micro
from training.optimizer import Adam
from utils.errors import DataError, NumericError

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["epoch", "train_loss", "val_pr_auc", "z_norm_total"]
SHUFFLE_STREAM = 1


@dataclass
class TrainResult:
    model: TraceModel
    history: pd.DataFrame
    best_val: float
    best_epoch: int
    rng_state: Dict = field(default_factory=dict)
    stopped_early: bool = False


def split(
    instances: Sequence[NowcastInstance],
    ratios: Tuple[float, float, float],
    seed: int,
) -> Tuple[List[NowcastInstance], List[NowcastInstance], List[NowcastInstance]]:
    """
    Random patient permutation by seed, sliced contiguously into
    train/val/test. Every split gets at least one patient; instance order
    within a split follows the input order.

    Raises:
        DataError: fewer than three patients
    """
    patients = sorted({inst.patient_id for inst in instances})
    n = len(patients)
    if n < 3:
        raise DataError(f"need at least 3 patients to split, got {n}")

    n_val = max(1, int(ratios[1] * n + 0.5))
    n_test = max(1, int(ratios[2] * n + 0.5))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise DataError(f"{n} patients leave no training data with ratios {ratios}")

    order = np.random.default_rng(seed).permutation(n)
    assignment = {}
    for rank, idx in enumerate(order):
        assignment[patients[idx]] = 0 if rank < n_train else (1 if rank < n_train + n_val else 2)

    parts: Tuple[List, List, List] = ([], [], [])
    for inst in instances:
        parts[assignment[inst.patient_id]].append(inst)
    logger.info(
        "Split %d patients into %d/%d/%d (instances %d/%d/%d)",
        n, n_train, n_val, n_test, len(parts[0]), len(parts[1]), len(parts[2]),
    )
    return parts


def _check_loss(model: TraceModel, step: int, loss: float) -> None:
    """Non-finite loss: blame the first parameter block holding non-finite values, else the loss itself"""
    if np.isfinite(loss):
        return
    block = next(
        (name for name, p in model.parameters().items() if not np.all(np.isfinite(p.data))),
        "loss",
    )
    logger.error("Non-finite loss %r at step %d (block %s)", loss, step, block)
    raise NumericError(f"non-finite loss at step {step} (block {block})", step=step, block=block)


def _check_grads(model: TraceModel, step: int) -> None:
    for name, param in model.trainable_parameters().items():
        if param.grad is not None and not np.all(np.isfinite(param.grad)):
            logger.error("Non-finite gradient in %s at step %d", name, step)
            raise NumericError(f"non-finite gradient in {name} at step {step}", step=step, block=name)


def _z_grad_norm(model: TraceModel) -> float:
    total = 0.0
    for layer in model.layers:
        if layer.Z.grad is not None:
            total += float(np.square(layer.Z.grad).sum())
    return float(np.sqrt(total))


def gradient_balance(model: TraceModel, batch: Batch, lam: float) -> Optional[float]:
    """
    ||d(lam * denoise)/dZ|| / ||dCE/dZ|| at the current parameters.
    None when the gate is disabled or CE leaves Z without gradient.
    """
    if model.disable_mask:
        return None

    model.zero_grad()
    with Tape():
        backward(ce_loss(model.forward(batch), batch.labels))
    ce_norm = _z_grad_norm(model)

    model.zero_grad()
    with Tape():
        backward(ops.scale(model.denoise(), lam))
    denoise_norm = _z_grad_norm(model)
    model.zero_grad()

    if ce_norm == 0.0:
        return None
    return denoise_norm / ce_norm


def mean_loss(model: TraceModel, batch: Batch, lam: float, batch_size: int) -> float:
    """Final objective averaged over `batch`, evaluated without a tape in fixed chunks"""
    total = 0.0
    with no_tape():
        for start in range(0, batch.size, batch_size):
            chunk = batch.take(np.arange(start, min(start + batch_size, batch.size)))
            loss, _, _ = model.losses(chunk, lam)
            total += loss.item() * chunk.size
    return total / batch.size


def validation_pr_auc(model: TraceModel, batch: Batch, batch_size: int) -> float:
    scores = predict_in_chunks(model, batch, batch_size)
    return pr_auc_micro(scores, batch.labels)


def predict_in_chunks(model: TraceModel, batch: Batch, batch_size: int) -> np.ndarray:
    parts = []
    for start in range(0, batch.size, batch_size):
        parts.append(model.predict_proba(batch.take(np.arange(start, min(start + batch_size, batch.size)))))
    return np.concatenate(parts, axis=0)


def _snapshot(model: TraceModel) -> Dict[str, np.ndarray]:
    return {name: t.data.copy() for name, t in model.parameters().items()}


def _restore(model: TraceModel, snapshot: Dict[str, np.ndarray]) -> None:
    for name, t in model.parameters().items():
        t.data = snapshot[name].copy()


def train(
    model: TraceModel,
    train_set: Sequence[NowcastInstance],
    val_set: Sequence[NowcastInstance],
    vocab: Vocabulary,
    config: TrainConfig,
) -> TrainResult:
    """
    Minimise ce + lambda * denoise with Adam; keep the epoch with the best
    validation PR-AUC.

    Raises:
        DataError: empty training or validation set
        NumericError: non-finite loss or gradient, naming the step and parameter block
    """
    if not train_set:
        raise DataError("training set is empty")
    if not val_set:
        raise DataError("validation set is empty")

    mask_time = MaskTime(config.mask_time)
    train_batch = encode_batch(train_set, vocab, config.max_len, mask_time)
    val_batch = encode_batch(val_set, vocab, config.max_len, mask_time)

    rng = np.random.default_rng([config.seed, SHUFFLE_STREAM])
    optimizer = Adam(
        model.trainable_parameters(),
        lr=config.learning_rate,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        eps=config.adam_eps,
    )

    first = train_batch.take(np.arange(min(config.batch_size, train_batch.size)))
    ratio = gradient_balance(model, first, config.denoise_lambda)
    if ratio is None:
        logger.info("Denoise/CE gradient ratio on Z: n/a")
    else:
        logger.info("Denoise/CE gradient ratio on Z at init: %.3e (lambda=%g)", ratio, config.denoise_lambda)

    best_val = -np.inf
    best_epoch = 0
    best_params = _snapshot(model)
    rows = []
    stale = 0
    step = 0
    stopped_early = False

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(train_batch.size)
        loss_sum = 0.0
        for start in range(0, train_batch.size, config.batch_size):
            step += 1
            batch = train_batch.take(order[start:start + config.batch_size])
            optimizer.zero_grad()
            with Tape():
                loss, _, _ = model.losses(batch, config.denoise_lambda)
                value = loss.item()
                _check_loss(model, step, value)
                backward(loss)
            _check_grads(model, step)
            optimizer.step()
            loss_sum += value * batch.size

        train_loss = loss_sum / train_batch.size
        val_pr_auc = validation_pr_auc(model, val_batch, config.batch_size)
        z_norm = model.z_norm_total()
        rows.append({"epoch": epoch, "train_loss": train_loss, "val_pr_auc": val_pr_auc, "z_norm_total": z_norm})
        logger.info(
            "epoch %d/%d loss=%.6f val_pr_auc=%.4f z_norm=%.4f",
            epoch, config.epochs, train_loss, val_pr_auc, z_norm,
        )

        if val_pr_auc > best_val:
            best_val, best_epoch, stale = val_pr_auc, epoch, 0
            best_params = _snapshot(model)
        else:
            stale += 1
            if stale >= config.patience:
                logger.warning("Early stop at epoch %d (best epoch %d, val_pr_auc=%.4f)", epoch, best_epoch, best_val)
                stopped_early = True
                break

    _restore(model, best_params)
    optimizer.zero_grad()
    return TrainResult(
        model=model,
        history=pd.DataFrame(rows, columns=HISTORY_COLUMNS),
        best_val=float(best_val),
        best_epoch=best_epoch,
        rng_state=rng.bit_generator.state,
        stopped_early=stopped_early,
    )
