"""Per-track hidden Markov model over the person classes.

The hidden state ranges over the five person classes plus a clutter
hypothesis (index 5, "background"); observations range over the five classes
plus background, i.e. "nothing detected".  The clutter mass is what the
tracker thresholds to delete tracks.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .classes import CLASS_NAMES, M, N_CATEGORIES, ClassId
from .errors import ConfigurationError, InsufficientDataError, ModelDegenerateError

BACKGROUND = int(ClassId.BACKGROUND)


def _check_stochastic(name, a, tol=1e-9):
    if np.any(a < 0):
        raise ConfigurationError(f"{name} has negative entries")
    if np.any(np.abs(a.sum(axis=-1) - 1.0) > tol):
        raise ConfigurationError(f"{name} rows must sum to 1")


@dataclass(frozen=True)
class HmmModel:
    prior: np.ndarray  # (K,)
    transition: np.ndarray  # (K, K), transition[prev, next]
    measurement: np.ndarray  # (K, O), measurement[hidden, observed]

    def __post_init__(self):
        for name in ("prior", "transition", "measurement"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        k = len(self.prior)
        if self.transition.shape != (k, k) or self.measurement.shape[0] != k:
            raise ConfigurationError("inconsistent HMM dimensions")
        _check_stochastic("prior", self.prior)
        _check_stochastic("transition", self.transition)
        _check_stochastic("measurement", self.measurement)

    @property
    def n_states(self) -> int:
        return len(self.prior)

    @classmethod
    def from_confusion(
        cls,
        confusion=None,
        detection_prob: float = 0.8,
        clutter_prior: float = 0.02,
        clutter_background: float = 0.32,
        stay: float = 0.994,
        to_clutter: float = 0.001,
        clutter_exit: float = 0.01,
        floor: float = 1e-3,
    ) -> "HmmModel":
        """Build the default six-state model from a 5x5 classifier confusion matrix.

        A person of class c is detected with ``detection_prob`` and then
        labelled according to row c of ``confusion``; clutter yields
        "background" with ``clutter_background`` and a uniformly random class
        otherwise.  ``floor`` is added to every measurement entry before
        renormalising so no observation is impossible.
        """
        conf = np.eye(M) if confusion is None else np.asarray(confusion, dtype=float)
        if conf.shape != (M, M):
            raise ConfigurationError("confusion must be 5x5")
        conf = conf / conf.sum(axis=1, keepdims=True)

        B = np.zeros((N_CATEGORIES, N_CATEGORIES))
        B[:M, :M] = detection_prob * conf
        B[:M, BACKGROUND] = 1.0 - detection_prob
        B[BACKGROUND, :M] = (1.0 - clutter_background) / M
        B[BACKGROUND, BACKGROUND] = clutter_background
        B += floor
        B /= B.sum(axis=1, keepdims=True)

        A = np.zeros((N_CATEGORIES, N_CATEGORIES))
        change = 1.0 - stay - to_clutter
        A[:M, :M] = change / (M - 1)
        np.fill_diagonal(A[:M, :M], stay)
        A[:M, BACKGROUND] = to_clutter
        A[BACKGROUND, :M] = clutter_exit / M
        A[BACKGROUND, BACKGROUND] = 1.0 - clutter_exit

        prior = np.full(N_CATEGORIES, (1.0 - clutter_prior) / M)
        prior[BACKGROUND] = clutter_prior
        return cls(prior, A, B)


def default_model() -> HmmModel:
    return HmmModel.from_confusion()


def forward_update(belief, observation, in_fov: bool, model: HmmModel) -> np.ndarray:
    """One filtering step.

    ``observation`` is an observed category index or None.  Inside the field
    of view a missing observation counts as a background observation; outside
    it only the transition model is applied.
    """
    b = np.asarray(belief, dtype=float)
    predicted = b @ model.transition
    if in_fov:
        obs = BACKGROUND if observation is None else int(observation)
        unnorm = model.measurement[:, obs] * predicted
    else:
        unnorm = predicted
    total = unnorm.sum()
    if not total > 0:
        raise ModelDegenerateError("belief vanished; the model assigns zero likelihood")
    return unnorm / total


def background_probability(belief) -> float:
    """Mass of the clutter hypothesis."""
    return float(np.asarray(belief)[BACKGROUND])


def class_probabilities(belief) -> np.ndarray:
    """Belief restricted to the person classes and renormalised."""
    b = np.asarray(belief, dtype=float)[:M]
    s = b.sum()
    return b / s if s > 0 else np.full(M, 1.0 / M)


def _smoothed(counts: np.ndarray, alpha: float) -> np.ndarray:
    k = counts.shape[-1]
    return (counts + alpha) / (counts.sum(axis=-1, keepdims=True) + alpha * k)


def estimate_model(
    sequences: Iterable[Sequence[tuple[int, int]]],
    dirichlet_alpha: float = 1.0,
    n_states: int = N_CATEGORIES,
    n_observations: int = N_CATEGORIES,
) -> HmmModel:
    """Count-based estimate with additive (Dirichlet) smoothing.

    Each sequence is a list of ``(true class, observed class)`` pairs of one
    track over time.  The prior is the label frequency, transitions are counted
    between consecutive true labels, and the measurement matrix is the
    confusion counts of observed given true class.
    """
    label_counts = np.zeros(n_states)
    trans_counts = np.zeros((n_states, n_states))
    meas_counts = np.zeros((n_states, n_observations))
    n = 0
    for seq in sequences:
        seq = np.asarray(seq, dtype=int).reshape(-1, 2)
        if len(seq) == 0:
            continue
        n += len(seq)
        np.add.at(label_counts, seq[:, 0], 1)
        np.add.at(meas_counts, (seq[:, 0], seq[:, 1]), 1)
        if len(seq) > 1:
            np.add.at(trans_counts, (seq[:-1, 0], seq[1:, 0]), 1)
    if n == 0:
        raise InsufficientDataError("no labelled pairs")
    return HmmModel(
        _smoothed(label_counts, dirichlet_alpha),
        _smoothed(trans_counts, dirichlet_alpha),
        _smoothed(meas_counts, dirichlet_alpha),
    )


# -- plain-text model files ---------------------------------------------------

def _format_matrix(rows: np.ndarray, row_names, col_names) -> list[str]:
    width = max(len(n) for n in list(col_names) + list(row_names)) + 2
    lines = [" " * width + "".join(n.rjust(width) for n in col_names)]
    for name, row in zip(row_names, rows):
        lines.append(name.ljust(width) + "".join(f"{x:{width}.10f}" for x in row))
    return lines


def save_model(model: HmmModel, path) -> None:
    names = list(CLASS_NAMES[: model.n_states])
    obs = list(CLASS_NAMES[: model.measurement.shape[1]])
    lines = ["# class-belief HMM: prior, transition[prev][next], measurement[true][observed]", "[prior]"]
    lines += _format_matrix(model.prior[None, :], ["p"], names)
    lines += ["", "[transition]"] + _format_matrix(model.transition, names, names)
    lines += ["", "[measurement]"] + _format_matrix(model.measurement, names, obs)
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> HmmModel:
    sections: dict[str, list[list[str]]] = {}
    current = None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = re.fullmatch(r"\[(\w+)\]", line)
        if m:
            current = m.group(1)
            sections[current] = []
        elif current is not None:
            sections[current].append(line.split())

    def table(name):
        if name not in sections:
            raise ConfigurationError(f"model file lacks [{name}]")
        header, *rows = sections[name]
        mat = np.array([[float(x) for x in r[1:]] for r in rows])
        # rows were rounded on save
        return header, mat / mat.sum(axis=1, keepdims=True)

    _, prior = table("prior")
    _, A = table("transition")
    _, B = table("measurement")
    return HmmModel(prior[0], A, B)
