# Copyright 2026 The AtlasFuse Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================

"""Smoke tests for the compiled extension module."""

import json
import os
import sys

import numpy as np
import pytest

_build_dir = os.environ.get("ATLASFUSE_PY_BUILD_DIR")
if _build_dir:
    sys.path.insert(0, _build_dir)

try:
    import atlasfuse as af
except ImportError:
    import _atlasfuse as af


def test_pearson_matches_numpy():
    rng = np.random.default_rng(0)
    signals = rng.normal(size=(6, 40))
    np.testing.assert_allclose(af.pearson_connectivity(signals), np.corrcoef(signals), atol=1e-12)


def test_sparsify_keeps_diagonal_shape():
    x = np.corrcoef(np.random.default_rng(1).normal(size=(8, 30)))
    s = af.sparsify_topk(x, 0.25)
    assert s.shape == x.shape
    assert np.count_nonzero(s) < np.count_nonzero(x)


def test_knn_out_degree():
    rng = np.random.default_rng(2)
    raw, adjacency, normalized = af.knn_adjacency(rng.normal(size=(5, 3)), rng.normal(size=(7, 3)), 2)
    assert raw.shape == (12, 12)
    np.testing.assert_array_equal(raw.sum(axis=1), np.full(12, 2.0))
    assert not raw[:5, :5].any() and not raw[5:, 5:].any()
    np.testing.assert_allclose(adjacency, adjacency.T)
    assert normalized.shape == (12, 12)


def test_network_file_round_trip(tmp_path):
    m = np.arange(9.0).reshape(3, 3) / 7.0
    path = str(tmp_path / "net.txt")
    af.write_network_file(path, m)
    np.testing.assert_array_equal(af.read_network_file(path), m)


def test_generate_and_load(tmp_path):
    out = str(tmp_path / "data")
    af.generate(out, seed=3, subjects=12)
    ds = af.load_dataset(out)
    assert len(ds["labels"]) == 12
    assert len(ds["atlases"]) == 2
    truth = json.loads((tmp_path / "data" / "ground_truth.json").read_text())
    assert truth


def test_gradient_check_passes():
    report = af.gradient_check(seed=0, zero_weights=True, samples=60)
    assert report["passed"]
    assert report["max_relative_error"] < 1e-4


def test_metrics():
    preds = [1, 0, 1, 1]
    labels = [1, 0, 0, 1]
    scores = np.array([[0.2, 0.8], [0.9, 0.1], [0.3, 0.7], [0.4, 0.6]])
    m = af.compute_metrics(preds, scores, labels)
    assert m["accuracy"] == pytest.approx(0.75)


def test_cli_errors_and_train(tmp_path):
    assert af.run_cli(["no-such-command"]) == 2
    with pytest.raises(af.AtlasFuseError):
        af.load_dataset(str(tmp_path / "missing"))
    data = str(tmp_path / "data")
    af.generate(data, seed=5, subjects=20)
    out = tmp_path / "run"
    code = af.run_cli(["train", "--data", data, "--out", str(out), "--max_epochs", "2",
                       "--hidden_dim", "8", "--folds", "5"])
    assert code == 0
    assert (out / "params.json").exists()
    assert (out / "config.json").exists()
