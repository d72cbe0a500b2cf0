"""Blind sparsity estimation from a bank of per-sparsity classifiers.

When the number of active devices is unknown, a bank of networks - one
trained per sparsity level l = 1..K - is queried in order. At level l the
candidate set keeps every device whose softmax probability is at least a
calibrated fraction ``tau`` of the largest probability; the loop stops as
soon as the candidate count equals the level, which is then the sparsity
estimate. Runs that exhaust all K levels are returned with
``resolved=False`` rather than raised, so sweeps can count them.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import daud_net
from .errors import ConfigurationError, ShapeMismatchError


def _as_predictor(model):
    """Accept either network parameters or a callable probability source."""
    if isinstance(model, daud_net.NetworkParams):
        return lambda feats: daud_net.predict_probabilities(model, feats)
    if callable(model):
        return model
    raise ConfigurationError(f"cannot use {type(model).__name__} as a model")


@dataclass
class ThresholdCalibration:
    """Calibrated ratio threshold with its provenance."""

    tau: float
    quantile: float
    sample_count: int


def calibrate_tau(
    model,
    features: np.ndarray,
    supports: np.ndarray,
    quantile: float = 0.0,
) -> ThresholdCalibration:
    """Calibrate the candidate-set threshold on labeled validation data.

    For every true support element the sparsity-scaled probability
    ``k * p_hat`` is collected (near 1 for a well-trained model, so the
    threshold is comparable across sparsity levels); ``tau`` is the
    requested lower quantile of these values (quantile 0 = the strict
    minimum), clamped into (0, 1]. A small positive quantile makes the
    threshold robust to rare badly-classified validation samples.

    Calibrating on the peak-normalized ratio instead would degenerate to
    exactly 1.0 for any sharp single-active model (the peak *is* the
    support element), which would terminate the estimation loop at level
    one for every input.
    """
    if not 0 <= quantile < 1:
        raise ConfigurationError("quantile must be in [0, 1)")
    features = np.atleast_2d(np.asarray(features))
    supports = np.atleast_2d(np.asarray(supports, dtype=int))
    if len(features) == 0:
        raise ConfigurationError("validation set is empty")
    if len(features) != len(supports):
        raise ShapeMismatchError("features and supports must be parallel")
    predict = _as_predictor(model)
    probs = np.asarray(predict(features))
    k = supports.shape[1]
    rows = np.arange(len(supports))[:, None]
    scaled = (k * probs[rows, supports]).ravel()
    if quantile == 0.0:
        tau = float(scaled.min())
    else:
        tau = float(np.quantile(scaled, quantile))
    tau = min(max(tau, np.finfo(float).tiny), 1.0)
    return ThresholdCalibration(tau, quantile, scaled.size)


@dataclass
class ModelBank:
    """Per-sparsity classifiers with their calibrated thresholds.

    ``models[l]`` handles sparsity level l for contiguous levels 1..K.
    Entries may be :class:`~gfnoma.daud_net.NetworkParams` or any callable
    mapping a feature batch to a probability batch.
    """

    models: dict
    taus: dict

    def __post_init__(self) -> None:
        levels = sorted(self.models)
        if levels != list(range(1, len(levels) + 1)):
            raise ConfigurationError(f"bank levels must be contiguous 1..K, got {levels}")
        missing = [l for l in levels if l not in self.taus]
        if missing:
            raise ConfigurationError(f"missing thresholds for levels {missing}")
        for tau in self.taus.values():
            if not 0 < tau <= 1:
                raise ConfigurationError("thresholds must lie in (0, 1]")

    @property
    def max_sparsity(self) -> int:
        return len(self.models)


@dataclass
class SparsityEstimate:
    k_hat: int
    support: np.ndarray
    resolved: bool
    levels_run: int


def estimate_sparsity(
    features: np.ndarray,
    bank: ModelBank,
    tau: float | None = None,
    max_sparsity: int | None = None,
) -> SparsityEstimate:
    """Estimate the sparsity and support of one received vector.

    Queries the level-l model for l = 1, 2, ...; keeps the devices whose
    probability ratio to the peak clears the level's threshold (or the
    global ``tau`` override) and stops when the candidate count equals the
    level. If no level up to K resolves, the last candidate set is
    returned flagged unresolved.
    """
    limit = bank.max_sparsity if max_sparsity is None else min(max_sparsity,
                                                               bank.max_sparsity)
    if limit < 1:
        raise ConfigurationError("need at least one bank level")
    features = np.asarray(features)
    gamma = np.empty(0, dtype=int)
    level = 0
    while level < limit:
        level += 1
        threshold = tau if tau is not None else bank.taus[level]
        probs = np.asarray(_as_predictor(bank.models[level])(features)).ravel()
        peak = probs.max()
        gamma = np.flatnonzero(probs / peak >= threshold)
        if len(gamma) == level:
            return SparsityEstimate(level, gamma, True, level)
    return SparsityEstimate(level, gamma, False, level)


# ---------------------------------------------------------------------------
# Bank manifest persistence
# ---------------------------------------------------------------------------

def write_bank_manifest(path, entries: list) -> None:
    """Write a bank manifest: one (level, checkpoint path, tau) per line.

    ``entries`` holds (level, checkpoint_filename, tau) triples; paths are
    stored as written (normally relative to the manifest's directory).
    """
    cfg = configparser.ConfigParser()
    cfg["bank"] = {"levels": str(len(entries))}
    for level, checkpoint, tau in entries:
        cfg[f"level {level}"] = {"checkpoint": str(checkpoint), "tau": repr(float(tau))}
    with open(path, "w") as fh:
        cfg.write(fh)


def load_model_bank(path) -> ModelBank:
    """Load a manifest and its referenced checkpoints into a bank."""
    path = Path(path)
    cfg = configparser.ConfigParser()
    if not cfg.read(path):
        raise ConfigurationError(f"cannot read bank manifest {path}")
    try:
        levels = int(cfg["bank"]["levels"])
    except KeyError as exc:
        raise ConfigurationError(f"manifest {path} lacks a [bank] section") from exc
    models, taus = {}, {}
    for level in range(1, levels + 1):
        section = cfg[f"level {level}"]
        checkpoint = path.parent / section["checkpoint"]
        if not checkpoint.exists():
            raise ConfigurationError(
                f"bank level {level} references missing checkpoint {checkpoint}"
            )
        models[level] = daud_net.load_checkpoint(checkpoint)
        taus[level] = float(section["tau"])
    return ModelBank(models, taus)
