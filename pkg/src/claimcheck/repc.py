"""Representation-based checking: shallow classifiers over hidden-state vectors.

Vectors arrive in JSONL files, one record per (pair, layer); exporting them
from a transformer is someone else's job. This module trains a KNN or linear
softmax classifier per layer, then predicts through either the single best
dev layer (layer selection) or an accuracy-weighted ensemble of all layers
(layer ensemble).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from claimcheck.core import (
    HallucinationLabel,
    LABEL_ORDER,
    SchemaViolationError,
    read_jsonl,
)


class ClassMissingError(ValueError):
    """Raised when training data lacks a class the classifier needs."""


class DimensionMismatchError(ValueError):
    """Raised when vectors disagree in dimensionality."""


class NoLayersError(ValueError):
    """Raised when layer selection has no layers to choose from."""


class LayerMissingError(ValueError):
    """Raised when prediction input lacks a layer the model requires."""


class RepCMode(str, Enum):
    LAYER_SELECT = "layer_select"
    LAYER_ENSEMBLE = "layer_ensemble"


class ClassifierKind(str, Enum):
    KNN = "knn"
    LINEAR = "linear"


_WEIGHT_SUM_TOL = 1e-9

# argmax ties over probability vectors resolve by this label preference
_TIE_PREFERENCE = (
    HallucinationLabel.NEUTRAL,
    HallucinationLabel.ENTAILMENT,
    HallucinationLabel.CONTRADICTION,
)

_LABEL_INDEX = {label: i for i, label in enumerate(LABEL_ORDER)}


def label_from_probs(probs: Sequence[float]) -> HallucinationLabel:
    """Argmax over an (entailment, neutral, contradiction) probability vector.

    Exact ties prefer Neutral, then Entailment, then Contradiction.
    """
    best = max(probs)
    tied = {LABEL_ORDER[i] for i in range(3) if probs[i] == best}
    for label in _TIE_PREFERENCE:
        if label in tied:
            return label
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class LayerRepresentation:
    """One hidden-state vector for one (premise, hypothesis) pair at one layer."""

    pair_id: str
    layer_index: int
    vector: tuple[float, ...]
    label: HallucinationLabel | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "vector", tuple(float(v) for v in self.vector))
        if self.layer_index < 0:
            raise ValueError("layer_index must be non-negative")
        if not self.vector:
            raise ValueError("vector must be non-empty")
        if any(not math.isfinite(v) for v in self.vector):
            raise ValueError(f"pair {self.pair_id!r}: vector has non-finite entries")


def _as_matrix(vectors: Sequence[Sequence[float]]) -> np.ndarray:
    dims = {len(v) for v in vectors}
    if len(dims) > 1:
        raise DimensionMismatchError(f"mixed vector lengths: {sorted(dims)}")
    return np.asarray([list(v) for v in vectors], dtype=np.float64)


def _check_dim(x: np.ndarray, expected: int) -> None:
    if x.shape[-1] != expected:
        raise DimensionMismatchError(
            f"query dimension {x.shape[-1]} does not match training dimension {expected}"
        )


class KnnLabelClassifier:
    """K-nearest-neighbor vote over the stored training set.

    Neighbor order is (distance, label index), so predictions do not depend
    on how the training set was permuted. Probabilities are vote proportions.
    """

    def __init__(self, k: int = 5, metric: str = "cosine"):
        if k < 1:
            raise ValueError("k must be at least 1")
        if metric not in ("cosine", "euclidean"):
            raise ValueError(f"unknown metric {metric!r}")
        self.k = k
        self.metric = metric
        self._X: np.ndarray | None = None
        self._label_idx: np.ndarray | None = None

    def get_params(self) -> dict:
        return {"k": self.k, "metric": self.metric}

    def fit(self, vectors: Sequence[Sequence[float]], labels: Sequence[HallucinationLabel]):
        if len(vectors) != len(labels):
            raise ValueError("vectors and labels differ in length")
        if not vectors:
            raise ClassMissingError("no training examples")
        present = set(labels)
        missing = [label.value for label in LABEL_ORDER if label not in present]
        if missing:
            raise ClassMissingError(f"knn training lacks classes: {', '.join(missing)}")
        self._X = _as_matrix(vectors)
        self._label_idx = np.asarray([_LABEL_INDEX[l] for l in labels], dtype=np.int64)
        return self

    def _distances(self, x: np.ndarray) -> np.ndarray:
        train = self._X
        if self.metric == "euclidean":
            return np.sqrt(np.sum((train - x) ** 2, axis=1))
        # cosine distance; zero-norm vectors count as orthogonal to everything
        x_norm = float(np.linalg.norm(x))
        t_norms = np.linalg.norm(train, axis=1)
        sims = np.zeros(len(train))
        usable = t_norms > 0
        if x_norm > 0:
            sims[usable] = (train[usable] @ x) / (t_norms[usable] * x_norm)
        return 1.0 - sims

    def predict_proba(self, vectors: Sequence[Sequence[float]]) -> np.ndarray:
        if self._X is None:
            raise ValueError("classifier is not fitted")
        queries = _as_matrix(vectors)
        _check_dim(queries, self._X.shape[1])
        k_eff = min(self.k, len(self._X))
        out = np.zeros((len(queries), 3))
        for row, x in enumerate(queries):
            dists = self._distances(x)
            order = np.lexsort((self._label_idx, dists))
            votes = self._label_idx[order[:k_eff]]
            for v in votes:
                out[row, v] += 1.0
        return out / k_eff

    def predict(self, vectors: Sequence[Sequence[float]]) -> list[HallucinationLabel]:
        return [label_from_probs(row) for row in self.predict_proba(vectors)]


class LinearSoftmaxClassifier:
    """3-class softmax regression fit by full-batch gradient descent.

    Features are standardized with train-split statistics; weights and bias
    start at zero, so training is deterministic (the seed only matters for
    randomized initializers, of which there are none here). The L2 penalty
    applies to weights, not the bias row.
    """

    def __init__(self, learning_rate: float = 0.1, epochs: int = 500,
                 l2_penalty: float = 1e-4, standardize: bool = True, seed: int = 17):
        if learning_rate <= 0 or epochs < 1 or l2_penalty < 0:
            raise ValueError("bad hyperparameters")
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.l2_penalty = l2_penalty
        self.standardize = standardize
        self.seed = seed
        self._W: np.ndarray | None = None  # (d+1, 3), bias last row
        self._mu: np.ndarray | None = None
        self._sigma: np.ndarray | None = None

    def get_params(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "l2_penalty": self.l2_penalty,
            "standardize": self.standardize,
            "seed": self.seed,
        }

    @staticmethod
    def _augment(x: np.ndarray) -> np.ndarray:
        return np.hstack([x, np.ones((len(x), 1))])

    def loss_and_grad(self, weights: np.ndarray, features: np.ndarray,
                      one_hot: np.ndarray) -> tuple[float, np.ndarray]:
        """Mean cross-entropy plus L2 on non-bias weights, with its gradient.

        ``features`` must already be standardized and NOT augmented; the bias
        column is handled here. Public so the gradient can be checked against
        finite differences.
        """
        x = self._augment(features)
        z = x @ weights
        z -= z.max(axis=1, keepdims=True)
        expz = np.exp(z)
        probs = expz / expz.sum(axis=1, keepdims=True)
        n = len(x)
        eps = 1e-300
        loss = -float(np.sum(one_hot * np.log(probs + eps))) / n
        loss += self.l2_penalty * float(np.sum(weights[:-1] ** 2))
        grad = x.T @ (probs - one_hot) / n
        grad[:-1] += 2.0 * self.l2_penalty * weights[:-1]
        return loss, grad

    def _standardize(self, x: np.ndarray) -> np.ndarray:
        if not self.standardize:
            return x
        return (x - self._mu) / self._sigma

    def fit(self, vectors: Sequence[Sequence[float]], labels: Sequence[HallucinationLabel]):
        if len(vectors) != len(labels):
            raise ValueError("vectors and labels differ in length")
        if not vectors:
            raise ClassMissingError("no training examples")
        if len(set(labels)) < 2:
            raise ClassMissingError("linear training needs at least two classes")
        x = _as_matrix(vectors)
        if self.standardize:
            self._mu = x.mean(axis=0)
            sigma = x.std(axis=0)
            sigma[sigma == 0.0] = 1.0
            self._sigma = sigma
        x_std = self._standardize(x)
        one_hot = np.zeros((len(x), 3))
        for i, label in enumerate(labels):
            one_hot[i, _LABEL_INDEX[label]] = 1.0
        weights = np.zeros((x.shape[1] + 1, 3))
        for _ in range(self.epochs):
            _, grad = self.loss_and_grad(weights, x_std, one_hot)
            weights -= self.learning_rate * grad
        self._W = weights
        return self

    def predict_proba(self, vectors: Sequence[Sequence[float]]) -> np.ndarray:
        if self._W is None:
            raise ValueError("classifier is not fitted")
        x = _as_matrix(vectors)
        _check_dim(x, self._W.shape[0] - 1)
        z = self._augment(self._standardize(x)) @ self._W
        z -= z.max(axis=1, keepdims=True)
        expz = np.exp(z)
        return expz / expz.sum(axis=1, keepdims=True)

    def predict(self, vectors: Sequence[Sequence[float]]) -> list[HallucinationLabel]:
        return [label_from_probs(row) for row in self.predict_proba(vectors)]


def train_layer_classifier(kind: ClassifierKind | str,
                           train: Sequence[LayerRepresentation],
                           hyperparams: Mapping | None = None):
    """Fit one shallow classifier on labeled representations from one layer."""
    kind = ClassifierKind(kind)
    hp = dict(hyperparams or {})
    if not train:
        raise ClassMissingError("no training representations")
    layers = {rep.layer_index for rep in train}
    if len(layers) > 1:
        raise ValueError(f"training data mixes layers: {sorted(layers)}")
    if any(rep.label is None for rep in train):
        raise ValueError("every training representation needs a label")
    vectors = [rep.vector for rep in train]
    labels = [rep.label for rep in train]
    if kind is ClassifierKind.KNN:
        clf = KnnLabelClassifier(k=hp.get("k", 5), metric=hp.get("metric", "cosine"))
    else:
        clf = LinearSoftmaxClassifier(
            learning_rate=hp.get("learning_rate", 0.1),
            epochs=hp.get("epochs", 500),
            l2_penalty=hp.get("l2_penalty", 1e-4),
            standardize=hp.get("standardize", True),
            seed=hp.get("seed", 17),
        )
    return clf.fit(vectors, labels)


def select_layer(per_layer_dev_scores: Mapping[int, float]) -> int:
    """Layer with the best dev macro-F1; ties go to the smallest index."""
    if not per_layer_dev_scores:
        raise NoLayersError("no layers to select from")
    return min(per_layer_dev_scores, key=lambda layer: (-per_layer_dev_scores[layer], layer))


@dataclass(frozen=True)
class RepCModel:
    """Per-layer classifiers plus the rule for combining them."""

    mode: RepCMode
    classifier_kind: ClassifierKind
    classifiers: Mapping[int, object]
    selected_layer: int | None = None
    weights: Mapping[int, float] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", RepCMode(self.mode))
        object.__setattr__(self, "classifier_kind", ClassifierKind(self.classifier_kind))
        object.__setattr__(self, "classifiers", dict(self.classifiers))
        if not self.classifiers:
            raise NoLayersError("model has no layer classifiers")
        if self.mode is RepCMode.LAYER_SELECT:
            if self.selected_layer not in self.classifiers:
                raise LayerMissingError(
                    f"selected layer {self.selected_layer!r} has no classifier"
                )
        else:
            if self.weights is None:
                raise ValueError("layer_ensemble mode requires weights")
            weights = {int(k): float(v) for k, v in self.weights.items()}
            object.__setattr__(self, "weights", weights)
            if set(weights) != set(self.classifiers):
                raise LayerMissingError("ensemble weights and classifiers disagree on layers")
            if any(w < 0 for w in weights.values()):
                raise ValueError("ensemble weights must be non-negative")
            if abs(sum(weights.values()) - 1.0) > _WEIGHT_SUM_TOL:
                raise ValueError("ensemble weights must sum to 1")

    def predict(self, reps: Mapping[int, Sequence[float]]) -> HallucinationLabel:
        if self.mode is RepCMode.LAYER_ENSEMBLE:
            return ensemble_predict(self, reps)
        layer = self.selected_layer
        if layer not in reps:
            raise LayerMissingError(f"input lacks selected layer {layer}")
        clf = self.classifiers[layer]
        return clf.predict([reps[layer]])[0]


def ensemble_predict(model: RepCModel,
                     reps: Mapping[int, Sequence[float]]) -> HallucinationLabel:
    """Argmax of the weight-averaged per-layer probability vectors."""
    if model.mode is not RepCMode.LAYER_ENSEMBLE:
        raise ValueError("ensemble_predict requires a layer_ensemble model")
    for layer in model.classifiers:
        if layer not in reps:
            raise LayerMissingError(f"input lacks layer {layer}")
    combined = np.zeros(3)
    for layer in sorted(model.classifiers):
        probs = model.classifiers[layer].predict_proba([reps[layer]])[0]
        combined += model.weights[layer] * probs
    return label_from_probs(combined)


# ---------------------------------------------------------------------------
# Training orchestration
# ---------------------------------------------------------------------------


def group_by_layer(
    reps: Sequence[LayerRepresentation],
) -> dict[int, list[LayerRepresentation]]:
    grouped: dict[int, list[LayerRepresentation]] = {}
    for rep in reps:
        grouped.setdefault(rep.layer_index, []).append(rep)
    for layer, rows in grouped.items():
        dims = {len(r.vector) for r in rows}
        if len(dims) > 1:
            raise DimensionMismatchError(
                f"layer {layer} carries mixed vector lengths: {sorted(dims)}"
            )
    return grouped


def _layer_eval(clf, reps: Sequence[LayerRepresentation]) -> tuple[float, float]:
    """(macro_f1, accuracy) of one fitted classifier on labeled representations."""
    from claimcheck.metrics import checker_scores, confusion_counts

    gold = [rep.label for rep in reps]
    if any(label is None for label in gold):
        raise ValueError("evaluation representations need labels")
    predicted = clf.predict([rep.vector for rep in reps])
    scores = checker_scores(confusion_counts(gold, predicted))
    return scores.macro_f1, scores.accuracy


def train_repc(
    kind: ClassifierKind | str,
    mode: RepCMode | str,
    train: Sequence[LayerRepresentation],
    dev: Sequence[LayerRepresentation],
    ensemble: Sequence[LayerRepresentation] | None = None,
    hyperparams: Mapping | None = None,
) -> tuple[RepCModel, dict]:
    """Fit per-layer classifiers and combine them per the requested mode.

    Layer selection takes the best dev macro-F1 layer. Layer ensemble weights
    layers by accuracy on the ensemble split (dev split when absent),
    normalized; uniform if every layer scores zero.
    """
    mode = RepCMode(mode)
    train_by_layer = group_by_layer(train)
    if not train_by_layer:
        raise NoLayersError("no training representations")
    dev_by_layer = group_by_layer(dev)
    missing_dev = sorted(set(train_by_layer) - set(dev_by_layer))
    if missing_dev:
        raise LayerMissingError(f"dev split lacks layers: {missing_dev}")
    classifiers = {
        layer: train_layer_classifier(kind, rows, hyperparams)
        for layer, rows in sorted(train_by_layer.items())
    }
    dev_f1: dict[int, float] = {}
    dev_acc: dict[int, float] = {}
    for layer, clf in classifiers.items():
        f1, acc = _layer_eval(clf, dev_by_layer[layer])
        dev_f1[layer] = f1
        dev_acc[layer] = acc
    diagnostics: dict = {"dev_macro_f1": dev_f1, "dev_accuracy": dev_acc}
    if mode is RepCMode.LAYER_SELECT:
        chosen = select_layer(dev_f1)
        diagnostics["selected_layer"] = chosen
        model = RepCModel(mode, ClassifierKind(kind), classifiers, selected_layer=chosen)
        return model, diagnostics
    if ensemble:
        ens_by_layer = group_by_layer(ensemble)
        missing = sorted(set(classifiers) - set(ens_by_layer))
        if missing:
            raise LayerMissingError(f"ensemble split lacks layers: {missing}")
        accs = {layer: _layer_eval(clf, ens_by_layer[layer])[1]
                for layer, clf in classifiers.items()}
        diagnostics["weights_split"] = "ensemble"
    else:
        accs = dev_acc
        diagnostics["weights_split"] = "dev"
    total = sum(accs.values())
    if total > 0:
        weights = {layer: acc / total for layer, acc in accs.items()}
    else:
        weights = {layer: 1.0 / len(accs) for layer in accs}
    diagnostics["weights"] = dict(weights)
    model = RepCModel(mode, ClassifierKind(kind), classifiers, weights=weights)
    return model, diagnostics


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _classifier_to_dict(kind: ClassifierKind, clf) -> dict:
    if kind is ClassifierKind.KNN:
        return {
            **clf.get_params(),
            "X": [list(row) for row in clf._X],
            "y": [LABEL_ORDER[i].value for i in clf._label_idx],
        }
    out = dict(clf.get_params())
    out["W"] = [list(row) for row in clf._W]
    out["mu"] = None if clf._mu is None else list(clf._mu)
    out["sigma"] = None if clf._sigma is None else list(clf._sigma)
    return out


def _classifier_from_dict(kind: ClassifierKind, data: Mapping):
    if kind is ClassifierKind.KNN:
        clf = KnnLabelClassifier(k=data["k"], metric=data["metric"])
        return clf.fit(data["X"], [HallucinationLabel(v) for v in data["y"]])
    clf = LinearSoftmaxClassifier(
        learning_rate=data["learning_rate"],
        epochs=data["epochs"],
        l2_penalty=data["l2_penalty"],
        standardize=data["standardize"],
        seed=data["seed"],
    )
    clf._W = np.asarray(data["W"], dtype=np.float64)
    clf._mu = None if data["mu"] is None else np.asarray(data["mu"], dtype=np.float64)
    clf._sigma = None if data["sigma"] is None else np.asarray(data["sigma"], dtype=np.float64)
    return clf


def model_to_dict(model: RepCModel) -> dict:
    out: dict = {
        "mode": model.mode.value,
        "classifier_kind": model.classifier_kind.value,
        "classifiers": {
            str(layer): _classifier_to_dict(model.classifier_kind, clf)
            for layer, clf in sorted(model.classifiers.items())
        },
    }
    if model.selected_layer is not None:
        out["selected_layer"] = model.selected_layer
    if model.weights is not None:
        out["weights"] = {str(layer): w for layer, w in sorted(model.weights.items())}
    return out


def model_from_dict(data: Mapping) -> RepCModel:
    kind = ClassifierKind(data["classifier_kind"])
    classifiers = {
        int(layer): _classifier_from_dict(kind, spec)
        for layer, spec in data["classifiers"].items()
    }
    return RepCModel(
        mode=RepCMode(data["mode"]),
        classifier_kind=kind,
        classifiers=classifiers,
        selected_layer=data.get("selected_layer"),
        weights={int(k): v for k, v in data["weights"].items()}
        if "weights" in data else None,
    )


def save_model(path, model: RepCModel) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(model_to_dict(model), handle, ensure_ascii=False)
        handle.write("\n")


def load_model(path) -> RepCModel:
    with open(path, "r", encoding="utf-8") as handle:
        return model_from_dict(json.load(handle))


# ---------------------------------------------------------------------------
# Representation I/O
# ---------------------------------------------------------------------------


def representation_to_dict(rep: LayerRepresentation) -> dict:
    out: dict = {
        "pair_id": rep.pair_id,
        "layer_index": rep.layer_index,
        "vector": list(rep.vector),
    }
    if rep.label is not None:
        out["label"] = rep.label.value
    return out


def load_representations(path) -> list[LayerRepresentation]:
    """Read LayerRepresentation JSONL, enforcing per-layer dimensionality."""
    reps: list[LayerRepresentation] = []
    dims: dict[int, int] = {}
    for line_number, obj in read_jsonl(path):
        try:
            pair_id = obj["pair_id"]
            layer_index = obj["layer_index"]
            vector = obj["vector"]
            if not isinstance(pair_id, str) or not isinstance(layer_index, int) \
                    or isinstance(layer_index, bool) or not isinstance(vector, list):
                raise TypeError("bad field types")
            label = None
            if "label" in obj:
                label = HallucinationLabel(obj["label"])
            rep = LayerRepresentation(pair_id, layer_index, tuple(vector), label)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolationError(f"bad representation record: {exc}",
                                       line=line_number) from None
        expected = dims.setdefault(rep.layer_index, len(rep.vector))
        if len(rep.vector) != expected:
            raise DimensionMismatchError(
                f"line {line_number}: layer {rep.layer_index} vector has length "
                f"{len(rep.vector)}, expected {expected}"
            )
        reps.append(rep)
    return reps


def group_by_pair(
    reps: Sequence[LayerRepresentation],
) -> dict[str, dict[int, tuple[float, ...]]]:
    """pair_id -> {layer_index -> vector}, in first-appearance order."""
    grouped: dict[str, dict[int, tuple[float, ...]]] = {}
    for rep in reps:
        grouped.setdefault(rep.pair_id, {})[rep.layer_index] = rep.vector
    return grouped
