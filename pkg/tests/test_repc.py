"""Tests for the representation classifiers and their combination rules."""

import json
import math

import numpy as np
import pytest

from claimcheck.core import HallucinationLabel, SchemaViolationError
from claimcheck.repc import (
    ClassifierKind,
    ClassMissingError,
    DimensionMismatchError,
    KnnLabelClassifier,
    LayerMissingError,
    LayerRepresentation,
    LinearSoftmaxClassifier,
    NoLayersError,
    RepCMode,
    RepCModel,
    ensemble_predict,
    group_by_pair,
    label_from_probs,
    load_model,
    load_representations,
    model_from_dict,
    model_to_dict,
    save_model,
    select_layer,
    train_layer_classifier,
    train_repc,
)
from oracles import oracle_nearest_centroid

E = HallucinationLabel.ENTAILMENT
N = HallucinationLabel.NEUTRAL
C = HallucinationLabel.CONTRADICTION


def make_blobs(rng, per_class=40, spread=0.5):
    """Three well-separated 2-D clusters, one per label."""
    centers = {E: (4.0, 0.0), N: (-4.0, 4.0), C: (-4.0, -4.0)}
    vectors = []
    labels = []
    for label, (cx, cy) in centers.items():
        pts = rng.normal((cx, cy), spread, size=(per_class, 2))
        vectors.extend(tuple(p) for p in pts)
        labels.extend([label] * per_class)
    return vectors, labels


class TestLabelFromProbs:
    def test_plain_argmax(self):
        assert label_from_probs((0.7, 0.2, 0.1)) is E
        assert label_from_probs((0.1, 0.2, 0.7)) is C
        assert label_from_probs((0.2, 0.6, 0.2)) is N

    def test_tie_prefers_neutral(self):
        assert label_from_probs((0.5, 0.5, 0.0)) is N
        assert label_from_probs((0.0, 0.5, 0.5)) is N
        assert label_from_probs((1 / 3, 1 / 3, 1 / 3)) is N

    def test_tie_prefers_entailment_over_contradiction(self):
        assert label_from_probs((0.5, 0.0, 0.5)) is E


class TestLayerRepresentation:
    def test_valid(self):
        rep = LayerRepresentation("p1", 3, (1.0, 2.0), E)
        assert rep.vector == (1.0, 2.0)

    def test_label_optional(self):
        assert LayerRepresentation("p1", 0, (0.5,)).label is None

    def test_negative_layer_rejected(self):
        with pytest.raises(ValueError):
            LayerRepresentation("p1", -1, (1.0,))

    def test_empty_vector_rejected(self):
        with pytest.raises(ValueError):
            LayerRepresentation("p1", 0, ())

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            LayerRepresentation("p1", 0, (1.0, float("nan")))
        with pytest.raises(ValueError):
            LayerRepresentation("p1", 0, (float("inf"),))


class TestKnn:
    def test_one_hot_k1_memorizes(self):
        vectors = [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)]
        labels = [E, N, C]
        clf = KnnLabelClassifier(k=1).fit(vectors, labels)
        assert clf.predict(vectors) == labels

    def test_missing_class_rejected(self):
        with pytest.raises(ClassMissingError, match="contradiction"):
            KnnLabelClassifier(k=1).fit([(1.0,), (2.0,)], [E, N])

    def test_mixed_lengths_rejected(self):
        with pytest.raises(DimensionMismatchError):
            KnnLabelClassifier(k=1).fit([(1.0,), (1.0, 2.0), (3.0,)], [E, N, C])

    def test_query_dimension_checked(self):
        clf = KnnLabelClassifier(k=1).fit(
            [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)], [E, N, C])
        with pytest.raises(DimensionMismatchError):
            clf.predict([(1.0, 0.0, 0.0)])

    def test_vote_proportions(self):
        vectors = [(0.0, 1.0), (0.1, 1.0), (1.0, 0.0), (-1.0, -1.0)]
        labels = [E, E, N, C]
        clf = KnnLabelClassifier(k=3).fit(vectors, labels)
        probs = clf.predict_proba([(0.05, 1.0)])[0]
        assert probs == pytest.approx([2 / 3, 1 / 3, 0.0])
        assert float(probs.sum()) == pytest.approx(1.0)

    def test_k_clamped_to_train_size(self):
        vectors = [(1.0, 0.0), (0.0, 1.0), (-1.0, -1.0)]
        clf = KnnLabelClassifier(k=10).fit(vectors, [E, N, C])
        probs = clf.predict_proba([(1.0, 0.1)])[0]
        assert float(probs.sum()) == pytest.approx(1.0)

    def test_training_permutation_invariance(self):
        rng = np.random.default_rng(17)
        vectors, labels = make_blobs(rng, per_class=15)
        clf_a = KnnLabelClassifier(k=5).fit(vectors, labels)
        perm = rng.permutation(len(vectors))
        clf_b = KnnLabelClassifier(k=5).fit(
            [vectors[i] for i in perm], [labels[i] for i in perm])
        queries = [tuple(q) for q in rng.normal(0.0, 4.0, size=(40, 2))]
        assert clf_a.predict(queries) == clf_b.predict(queries)
        assert np.array_equal(clf_a.predict_proba(queries), clf_b.predict_proba(queries))

    def test_zero_norm_query_is_equidistant(self):
        # all cosine distances hit 1.0, so the sorted neighbor list starts
        # with entailment rows and the vote is deterministic
        vectors = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)]
        clf = KnnLabelClassifier(k=1).fit(vectors, [E, N, C])
        assert clf.predict([(0.0, 0.0)]) == [E]

    def test_euclidean_metric(self):
        vectors = [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)]
        clf = KnnLabelClassifier(k=1, metric="euclidean").fit(vectors, [E, N, C])
        assert clf.predict([(1.0, 1.0)]) == [E]
        assert clf.predict([(9.0, 0.0)]) == [N]

    def test_cosine_ignores_magnitude(self):
        vectors = [(1.0, 0.0), (0.0, 1.0), (-1.0, -1.0)]
        clf = KnnLabelClassifier(k=1).fit(vectors, [E, N, C])
        assert clf.predict([(100.0, 1.0)]) == [E]
        assert clf.predict([(0.001, 0.0)]) == [E]

    def test_blobs_beat_centroid_oracle(self):
        rng = np.random.default_rng(17)
        vectors, labels = make_blobs(rng)
        clf = KnnLabelClassifier(k=5).fit(vectors, labels)
        predicted = clf.predict(vectors)
        accuracy = sum(p is g for p, g in zip(predicted, labels)) / len(labels)
        assert accuracy >= 0.95
        oracle = oracle_nearest_centroid(vectors, labels, vectors)
        agree = sum(p is o for p, o in zip(predicted, oracle)) / len(labels)
        assert agree >= 0.95

    def test_bad_params_rejected(self):
        with pytest.raises(ValueError):
            KnnLabelClassifier(k=0)
        with pytest.raises(ValueError):
            KnnLabelClassifier(metric="manhattan")

    def test_get_params(self):
        assert KnnLabelClassifier(k=3, metric="euclidean").get_params() == {
            "k": 3, "metric": "euclidean"}


class TestLinear:
    def test_needs_two_classes(self):
        with pytest.raises(ClassMissingError):
            LinearSoftmaxClassifier().fit([(1.0,), (2.0,)], [E, E])

    def test_mixed_lengths_rejected(self):
        with pytest.raises(DimensionMismatchError):
            LinearSoftmaxClassifier().fit([(1.0,), (1.0, 2.0)], [E, N])

    def test_blobs_train_accuracy(self):
        rng = np.random.default_rng(17)
        vectors, labels = make_blobs(rng)
        clf = LinearSoftmaxClassifier().fit(vectors, labels)
        predicted = clf.predict(vectors)
        accuracy = sum(p is g for p, g in zip(predicted, labels)) / len(labels)
        assert accuracy >= 0.95
        oracle = oracle_nearest_centroid(vectors, labels, vectors)
        agree = sum(p is o for p, o in zip(predicted, oracle)) / len(labels)
        assert agree >= 0.95

    def test_uniform_rescale_invariance(self):
        rng = np.random.default_rng(7)
        vectors, labels = make_blobs(rng, per_class=20)
        queries = [tuple(q) for q in rng.normal(0.0, 4.0, size=(30, 2))]
        plain = LinearSoftmaxClassifier().fit(vectors, labels)
        scaled_vectors = [tuple(v * 1000.0 for v in vec) for vec in vectors]
        scaled_queries = [tuple(v * 1000.0 for v in vec) for vec in queries]
        scaled = LinearSoftmaxClassifier().fit(scaled_vectors, labels)
        assert plain.predict(queries) == scaled.predict(scaled_queries)
        np.testing.assert_allclose(
            plain.predict_proba(queries), scaled.predict_proba(scaled_queries),
            rtol=0, atol=1e-9)

    def test_constant_feature_is_harmless(self):
        vectors = [(1.0, 5.0), (2.0, 5.0), (3.0, 5.0), (4.0, 5.0)]
        labels = [E, E, C, C]
        clf = LinearSoftmaxClassifier(epochs=200).fit(vectors, labels)
        probs = clf.predict_proba(vectors)
        assert np.all(np.isfinite(probs))
        assert clf.predict([(1.0, 5.0)]) == [E]
        assert clf.predict([(4.0, 5.0)]) == [C]

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(17)
        features = rng.normal(size=(6, 3))
        one_hot = np.zeros((6, 3))
        for i in range(6):
            one_hot[i, rng.integers(0, 3)] = 1.0
        clf = LinearSoftmaxClassifier()
        weights = rng.normal(scale=0.5, size=(4, 3))
        _, grad = clf.loss_and_grad(weights, features, one_hot)
        step = 1e-6
        for i in range(weights.shape[0]):
            for j in range(weights.shape[1]):
                bumped = weights.copy()
                bumped[i, j] += step
                up, _ = clf.loss_and_grad(bumped, features, one_hot)
                bumped[i, j] -= 2 * step
                down, _ = clf.loss_and_grad(bumped, features, one_hot)
                numeric = (up - down) / (2 * step)
                assert grad[i, j] == pytest.approx(numeric, rel=1e-5, abs=1e-8)

    def test_training_is_deterministic(self):
        rng = np.random.default_rng(3)
        vectors, labels = make_blobs(rng, per_class=10)
        a = LinearSoftmaxClassifier().fit(vectors, labels)
        b = LinearSoftmaxClassifier().fit(vectors, labels)
        assert np.array_equal(a._W, b._W)

    def test_get_params(self):
        params = LinearSoftmaxClassifier().get_params()
        assert params == {"learning_rate": 0.1, "epochs": 500,
                          "l2_penalty": 1e-4, "standardize": True, "seed": 17}


class TestTrainLayerClassifier:
    def _reps(self, vectors, labels, layer=0):
        return [LayerRepresentation(f"p{i}", layer, vec, label)
                for i, (vec, label) in enumerate(zip(vectors, labels))]

    def test_knn_dispatch(self):
        reps = self._reps([(1.0, 0.0), (0.0, 1.0), (-1.0, -1.0)], [E, N, C])
        clf = train_layer_classifier("knn", reps, {"k": 1})
        assert isinstance(clf, KnnLabelClassifier)
        assert clf.k == 1

    def test_linear_dispatch(self):
        reps = self._reps([(1.0,), (2.0,), (3.0,)], [E, N, C])
        clf = train_layer_classifier(ClassifierKind.LINEAR, reps, {"epochs": 10})
        assert isinstance(clf, LinearSoftmaxClassifier)
        assert clf.epochs == 10

    def test_mixed_layers_rejected(self):
        reps = [LayerRepresentation("a", 0, (1.0,), E),
                LayerRepresentation("b", 1, (2.0,), N)]
        with pytest.raises(ValueError, match="mixes layers"):
            train_layer_classifier("knn", reps)

    def test_unlabeled_rejected(self):
        reps = [LayerRepresentation("a", 0, (1.0,))]
        with pytest.raises(ValueError, match="label"):
            train_layer_classifier("knn", reps)

    def test_empty_rejected(self):
        with pytest.raises(ClassMissingError):
            train_layer_classifier("knn", [])


class TestSelectLayer:
    def test_argmax(self):
        assert select_layer({0: 0.5, 7: 0.9, 15: 0.6}) == 7

    def test_tie_takes_smallest_index(self):
        assert select_layer({0: 0.8, 1: 0.8}) == 0
        assert select_layer({9: 0.8, 2: 0.8, 5: 0.8}) == 2

    def test_empty_raises(self):
        with pytest.raises(NoLayersError):
            select_layer({})


def _directional_knn(layer_label: HallucinationLabel):
    """k=1 classifier that answers ``layer_label`` for queries near (1, 0)."""
    anchor = {layer_label: (1.0, 0.0)}
    rest = [l for l in (E, N, C) if l is not layer_label]
    anchor[rest[0]] = (-1.0, 0.5)
    anchor[rest[1]] = (-1.0, -0.5)
    labels = list(anchor)
    vectors = [anchor[l] for l in labels]
    return KnnLabelClassifier(k=1).fit(vectors, labels)


class TestEnsemble:
    def test_one_hot_weights_match_single_layer(self):
        model = RepCModel(
            RepCMode.LAYER_ENSEMBLE, ClassifierKind.KNN,
            {0: _directional_knn(E), 1: _directional_knn(C)},
            weights={0: 1.0, 1: 0.0})
        query = {0: (1.0, 0.0), 1: (1.0, 0.0)}
        assert ensemble_predict(model, query) is E
        flipped = RepCModel(
            RepCMode.LAYER_ENSEMBLE, ClassifierKind.KNN,
            {0: _directional_knn(E), 1: _directional_knn(C)},
            weights={0: 0.0, 1: 1.0})
        assert ensemble_predict(flipped, query) is C

    def test_one_hot_equivalence_on_random_inputs(self):
        rng = np.random.default_rng(17)
        vectors, labels = make_blobs(rng, per_class=10)
        layer0 = KnnLabelClassifier(k=5).fit(vectors, labels)
        layer1 = _directional_knn(N)
        ensemble = RepCModel(
            RepCMode.LAYER_ENSEMBLE, ClassifierKind.KNN,
            {0: layer0, 1: layer1}, weights={0: 1.0, 1: 0.0})
        single = RepCModel(
            RepCMode.LAYER_SELECT, ClassifierKind.KNN,
            {0: layer0, 1: layer1}, selected_layer=0)
        for _ in range(50):
            point = tuple(rng.normal(0.0, 4.0, size=2))
            reps = {0: point, 1: tuple(rng.normal(size=2))}
            assert ensemble.predict(reps) is single.predict(reps)

    def test_even_split_tie_goes_neutral(self):
        model = RepCModel(
            RepCMode.LAYER_ENSEMBLE, ClassifierKind.KNN,
            {0: _directional_knn(E), 1: _directional_knn(N)},
            weights={0: 0.5, 1: 0.5})
        # layer 0 votes (1,0,0), layer 1 votes (0,1,0); average ties at 0.5
        label = ensemble_predict(model, {0: (1.0, 0.0), 1: (1.0, 0.0)})
        assert label is N

    def test_missing_layer_raises(self):
        model = RepCModel(
            RepCMode.LAYER_ENSEMBLE, ClassifierKind.KNN,
            {0: _directional_knn(E), 3: _directional_knn(C)},
            weights={0: 0.5, 3: 0.5})
        with pytest.raises(LayerMissingError, match="3"):
            ensemble_predict(model, {0: (1.0, 0.0)})

    def test_select_mode_missing_layer_raises(self):
        model = RepCModel(
            RepCMode.LAYER_SELECT, ClassifierKind.KNN,
            {2: _directional_knn(E)}, selected_layer=2)
        with pytest.raises(LayerMissingError):
            model.predict({0: (1.0, 0.0)})

    def test_weight_validation(self):
        classifiers = {0: _directional_knn(E), 1: _directional_knn(N)}
        with pytest.raises(ValueError, match="sum to 1"):
            RepCModel(RepCMode.LAYER_ENSEMBLE, ClassifierKind.KNN,
                      classifiers, weights={0: 0.7, 1: 0.7})
        with pytest.raises(ValueError, match="non-negative"):
            RepCModel(RepCMode.LAYER_ENSEMBLE, ClassifierKind.KNN,
                      classifiers, weights={0: 1.5, 1: -0.5})
        with pytest.raises(LayerMissingError):
            RepCModel(RepCMode.LAYER_ENSEMBLE, ClassifierKind.KNN,
                      classifiers, weights={0: 1.0})

    def test_selected_layer_must_exist(self):
        with pytest.raises(LayerMissingError):
            RepCModel(RepCMode.LAYER_SELECT, ClassifierKind.KNN,
                      {0: _directional_knn(E)}, selected_layer=5)

    def test_no_layers_rejected(self):
        with pytest.raises(NoLayersError):
            RepCModel(RepCMode.LAYER_SELECT, ClassifierKind.KNN, {},
                      selected_layer=0)


def make_layered_dataset(rng, n_pairs, informative_layer, n_layers=3):
    """Representations where exactly one layer carries the label signal."""
    centers = {E: (4.0, 0.0), N: (-4.0, 4.0), C: (-4.0, -4.0)}
    label_cycle = (E, N, C)
    reps = []
    for i in range(n_pairs):
        label = label_cycle[i % 3]
        for layer in range(n_layers):
            if layer == informative_layer:
                vec = tuple(rng.normal(centers[label], 0.5))
            else:
                vec = tuple(rng.normal(0.0, 1.0, size=2))
            reps.append(LayerRepresentation(f"pair-{i}", layer, vec, label))
    return reps


class TestTrainRepc:
    def test_layer_select_finds_informative_layer(self):
        rng = np.random.default_rng(17)
        train = make_layered_dataset(rng, 60, informative_layer=1)
        dev = make_layered_dataset(rng, 30, informative_layer=1)
        model, diag = train_repc("knn", "layer_select", train, dev)
        assert model.selected_layer == 1
        assert diag["selected_layer"] == 1
        assert diag["dev_macro_f1"][1] > max(
            diag["dev_macro_f1"][0], diag["dev_macro_f1"][2])

    def test_ensemble_weights_are_normalized_accuracy(self):
        rng = np.random.default_rng(17)
        train = make_layered_dataset(rng, 60, informative_layer=0)
        dev = make_layered_dataset(rng, 30, informative_layer=0)
        model, diag = train_repc("knn", "layer_ensemble", train, dev)
        accs = diag["dev_accuracy"]
        total = sum(accs.values())
        for layer, weight in model.weights.items():
            assert weight == pytest.approx(accs[layer] / total)
        assert sum(model.weights.values()) == pytest.approx(1.0, abs=1e-9)
        assert diag["weights_split"] == "dev"

    def test_ensemble_split_overrides_dev_for_weights(self):
        rng = np.random.default_rng(17)
        train = make_layered_dataset(rng, 60, informative_layer=0)
        dev = make_layered_dataset(rng, 30, informative_layer=0)
        ens = make_layered_dataset(rng, 30, informative_layer=0)
        model, diag = train_repc("knn", "layer_ensemble", train, dev, ensemble=ens)
        assert diag["weights_split"] == "ensemble"
        assert sum(model.weights.values()) == pytest.approx(1.0, abs=1e-9)

    def test_all_zero_accuracy_falls_back_to_uniform(self):
        train = []
        dev = []
        anchors = {E: (10.0, 0.0), N: (0.0, 10.0), C: (-10.0, -10.0)}
        wrong = {E: N, N: C, C: E}
        for layer in (0, 1):
            for i, (label, vec) in enumerate(anchors.items()):
                train.append(LayerRepresentation(f"t{i}", layer, vec, label))
                dev.append(LayerRepresentation(f"d{i}", layer, vec, wrong[label]))
        model, diag = train_repc("knn", "layer_ensemble", train, dev,
                                 hyperparams={"k": 1})
        assert all(acc == 0.0 for acc in diag["dev_accuracy"].values())
        assert model.weights == {0: 0.5, 1: 0.5}

    def test_dev_must_cover_every_layer(self):
        rng = np.random.default_rng(17)
        train = make_layered_dataset(rng, 30, informative_layer=0, n_layers=2)
        dev = [r for r in make_layered_dataset(rng, 9, 0, n_layers=2)
               if r.layer_index == 0]
        with pytest.raises(LayerMissingError, match="1"):
            train_repc("knn", "layer_select", train, dev)

    def test_linear_kind_works_end_to_end(self):
        rng = np.random.default_rng(17)
        train = make_layered_dataset(rng, 60, informative_layer=2)
        dev = make_layered_dataset(rng, 30, informative_layer=2)
        model, _ = train_repc("linear", "layer_select", train, dev,
                              hyperparams={"epochs": 100})
        assert model.selected_layer == 2
        point = tuple(rng.normal((4.0, 0.0), 0.3))
        reps = {0: (0.0, 0.0), 1: (0.0, 0.0), 2: point}
        assert model.predict(reps) is E


class TestPersistence:
    def _roundtrip(self, model, tmp_path):
        path = tmp_path / "model.json"
        save_model(path, model)
        with open(path, encoding="utf-8") as handle:
            parsed = json.load(handle)
        assert parsed == model_to_dict(model)
        return load_model(path)

    def test_knn_select_roundtrip(self, tmp_path):
        rng = np.random.default_rng(17)
        train = make_layered_dataset(rng, 30, informative_layer=1)
        dev = make_layered_dataset(rng, 15, informative_layer=1)
        model, _ = train_repc("knn", "layer_select", train, dev)
        restored = self._roundtrip(model, tmp_path)
        assert restored.mode is RepCMode.LAYER_SELECT
        assert restored.selected_layer == model.selected_layer
        for _ in range(20):
            reps = {layer: tuple(rng.normal(0.0, 4.0, size=2))
                    for layer in model.classifiers}
            assert restored.predict(reps) is model.predict(reps)

    def test_linear_ensemble_roundtrip(self, tmp_path):
        rng = np.random.default_rng(5)
        train = make_layered_dataset(rng, 30, informative_layer=0)
        dev = make_layered_dataset(rng, 15, informative_layer=0)
        model, _ = train_repc("linear", "layer_ensemble", train, dev,
                              hyperparams={"epochs": 50})
        restored = self._roundtrip(model, tmp_path)
        assert restored.weights == pytest.approx(model.weights)
        for _ in range(20):
            reps = {layer: tuple(rng.normal(0.0, 4.0, size=2))
                    for layer in model.classifiers}
            assert restored.predict(reps) is model.predict(reps)

    def test_dict_form_is_json_safe(self):
        model = RepCModel(
            RepCMode.LAYER_SELECT, ClassifierKind.KNN,
            {0: _directional_knn(E)}, selected_layer=0)
        text = json.dumps(model_to_dict(model))
        restored = model_from_dict(json.loads(text))
        assert restored.selected_layer == 0


class TestRepresentationIO:
    def _write(self, tmp_path, lines):
        path = tmp_path / "reps.jsonl"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    def test_load_valid_file(self, tmp_path):
        path = self._write(tmp_path, [
            json.dumps({"pair_id": "a", "layer_index": 0,
                        "vector": [1.0, 2.0], "label": "entailment"}),
            json.dumps({"pair_id": "a", "layer_index": 1, "vector": [3.0, 4.0]}),
            json.dumps({"pair_id": "b", "layer_index": 0, "vector": [5.0, 6.0]}),
        ])
        reps = load_representations(path)
        assert len(reps) == 3
        assert reps[0].label is E
        assert reps[1].label is None
        assert reps[2].vector == (5.0, 6.0)

    def test_missing_field_reports_line(self, tmp_path):
        path = self._write(tmp_path, [
            json.dumps({"pair_id": "a", "layer_index": 0, "vector": [1.0]}),
            json.dumps({"pair_id": "b", "vector": [1.0]}),
        ])
        with pytest.raises(SchemaViolationError) as err:
            load_representations(path)
        assert err.value.line == 2

    def test_bad_label_rejected(self, tmp_path):
        path = self._write(tmp_path, [
            json.dumps({"pair_id": "a", "layer_index": 0,
                        "vector": [1.0], "label": "maybe"}),
        ])
        with pytest.raises(SchemaViolationError):
            load_representations(path)

    def test_non_finite_vector_rejected(self, tmp_path):
        path = self._write(tmp_path, [
            '{"pair_id": "a", "layer_index": 0, "vector": [NaN]}',
        ])
        with pytest.raises(SchemaViolationError):
            load_representations(path)

    def test_bool_layer_index_rejected(self, tmp_path):
        path = self._write(tmp_path, [
            json.dumps({"pair_id": "a", "layer_index": True, "vector": [1.0]}),
        ])
        with pytest.raises(SchemaViolationError):
            load_representations(path)

    def test_per_layer_dimension_enforced(self, tmp_path):
        path = self._write(tmp_path, [
            json.dumps({"pair_id": "a", "layer_index": 0, "vector": [1.0, 2.0]}),
            json.dumps({"pair_id": "b", "layer_index": 0, "vector": [1.0]}),
        ])
        with pytest.raises(DimensionMismatchError, match="line 2"):
            load_representations(path)

    def test_different_layers_may_differ_in_width(self, tmp_path):
        path = self._write(tmp_path, [
            json.dumps({"pair_id": "a", "layer_index": 0, "vector": [1.0, 2.0]}),
            json.dumps({"pair_id": "a", "layer_index": 1, "vector": [1.0]}),
        ])
        assert len(load_representations(path)) == 2

    def test_group_by_pair_keeps_order(self, tmp_path):
        path = self._write(tmp_path, [
            json.dumps({"pair_id": "b", "layer_index": 0, "vector": [1.0]}),
            json.dumps({"pair_id": "a", "layer_index": 0, "vector": [2.0]}),
            json.dumps({"pair_id": "b", "layer_index": 1, "vector": [3.0]}),
        ])
        grouped = group_by_pair(load_representations(path))
        assert list(grouped) == ["b", "a"]
        assert grouped["b"] == {0: (1.0,), 1: (3.0,)}
