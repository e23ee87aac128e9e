# Copyright 2026 The MultiVul Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Python bindings for the multivul C++ core.

Records are plain dicts with the dataset JSONL fields (id, code, label,
comment, cwe, project).
"""

import json

from . import _core
from ._core import (
    ContractError,
    IoError,
    Model,
    RemoteError,
    augment_tokens,
    augmented_views,
    bce_loss,
    clip_loss,
    compute_metrics,
    consistency_loss,
    first_sentence,
    load_model,
    metrics_from_counts,
    pca_project,
    stub_comment,
    tokenize,
)

__all__ = [
    "ContractError", "IoError", "Model", "RemoteError", "augment_tokens",
    "augmented_views", "bce_loss", "clip_loss", "compute_metrics",
    "consistency_loss", "dataset_stats", "first_sentence", "load_model",
    "metrics_from_counts", "pca_project", "predict", "evaluate", "split",
    "stub_comment",
    "synth_corpus", "tokenize", "train",
]


def _to_jsonl(records):
    return "".join(json.dumps(r) + "\n" for r in records)


def _from_jsonl(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def dataset_stats(records):
    return json.loads(_core.dataset_stats(_to_jsonl(records)))


def split(records, fractions=(0.8, 0.1, 0.1), seed=0):
    parts = _core.stratified_split(_to_jsonl(records), list(fractions), seed)
    return tuple(_from_jsonl(p) for p in parts)


def synth_corpus(functions=400, seed=0):
    return _from_jsonl(_core.synth_corpus(functions, seed))


def train(train_records, valid_records, epochs=10, seed=0,
          fine_tuning_only=False, learning_rate=3e-5):
    """Returns (Model, per-step total losses)."""
    return _core.train(_to_jsonl(train_records), _to_jsonl(valid_records),
                       epochs, seed, fine_tuning_only, learning_rate)


def predict(model, records, threshold=0.5):
    return model.predict(_to_jsonl(records), threshold)


def evaluate(model, records, threshold=0.5):
    return model.evaluate(_to_jsonl(records), threshold)
