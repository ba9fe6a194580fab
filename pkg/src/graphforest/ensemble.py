"""Train many base models over independent subspaces and combine their votes.

Training fans out over a process pool; every model is a pure function of
(graph, master_seed, model_index, hyperparams), so results are identical
at any parallelism degree and models are always stored by index.
Aggregation sums run in fixed model-index order, keeping ensemble
decisions bit-reproducible as well.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .graph import Graph
from .model import BaseModel, GnnParams, HyperParams, predict_posterior, train_base_model
from .sampling import SubspaceSpec, sample_subspace

VOTING_RULES = ("hard", "soft", "weighted")

_MAGIC = b"GFOREST1\n"
_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    """k trained base models plus the aggregation configuration."""

    models: tuple[BaseModel, ...]
    num_models: int
    node_fraction: float
    feature_fraction: float
    master_seed: int
    voting: str
    weights: np.ndarray

    def __post_init__(self):
        if self.num_models < 1 or len(self.models) != self.num_models:
            raise ValueError("model list does not match num_models")
        if self.voting not in VOTING_RULES:
            raise ValueError(f"unknown voting rule {self.voting!r}")
        if self.weights.shape != (self.num_models,) or np.any(self.weights < 0):
            raise ValueError("weights must be num_models non-negative reals")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        self.weights.flags.writeable = False


@dataclass(frozen=True, eq=False)
class PosteriorStack:
    """Per-model posteriors: probs[j, i] is model j's distribution for nodes[i]."""

    probs: np.ndarray
    nodes: np.ndarray

    def __post_init__(self):
        if self.probs.ndim != 3:
            raise ValueError("stack must be (models, nodes, classes)")
        if self.probs.shape[1] != self.nodes.size:
            raise ValueError("stack and node index disagree")
        sums = self.probs.sum(axis=2)
        if np.any(self.probs < -1e-9) or np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError("stack slices are not row-stochastic")
        self.probs.flags.writeable = False
        self.nodes.flags.writeable = False

    @property
    def num_models(self) -> int:
        return self.probs.shape[0]


def _train_one(args):
    g, spec, hp = args
    return spec.model_index, train_base_model(g, spec, hp)


def train_ensemble(g: Graph, num_models: int, node_fraction: float,
                   feature_fraction: float, hp: HyperParams, master_seed: int,
                   parallelism: int = 1, voting: str = "soft") -> EnsembleModel:
    """Train ``num_models`` base models over independently sampled subspaces.

    Deterministic in (master_seed, hp) regardless of ``parallelism`` or
    worker completion order. A degenerate subspace aborts the whole run
    with the failing model index.
    """
    if num_models < 1:
        raise ValueError("need at least one base model")
    specs = [sample_subspace(g, node_fraction, feature_fraction, j, master_seed)
             for j in range(num_models)]

    models: list[BaseModel | None] = [None] * num_models
    if parallelism <= 1 or num_models == 1:
        for spec in specs:
            models[spec.model_index] = train_base_model(g, spec, hp)
    else:
        with ProcessPoolExecutor(max_workers=min(parallelism, num_models)) as pool:
            for idx, model in pool.map(_train_one, [(g, spec, hp) for spec in specs]):
                models[idx] = model

    if voting == "weighted":
        scores = np.array([m.train_f1 for m in models], dtype=np.float64)
        if scores.sum() <= 0:
            raise ValueError("weighted voting needs at least one model with train F1 > 0")
        weights = scores / scores.sum()
    else:
        weights = np.full(num_models, 1.0 / num_models)
    return EnsembleModel(models=tuple(models), num_models=num_models,
                         node_fraction=node_fraction, feature_fraction=feature_fraction,
                         master_seed=master_seed, voting=voting, weights=weights)


def ensemble_posteriors(e: EnsembleModel, g: Graph, nodes) -> PosteriorStack:
    """Every base model's posterior for ``nodes``, stacked by model index."""
    node_arr = np.asarray(nodes, dtype=np.int64).reshape(-1)
    slices = [predict_posterior(m, g, node_arr) for m in e.models]
    return PosteriorStack(probs=np.stack(slices, axis=0), nodes=node_arr)


def discriminant(stack: PosteriorStack, weights) -> np.ndarray:
    """Weighted average of the per-model posteriors; rows stay stochastic."""
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if w.size != stack.num_models:
        raise ValueError(f"{w.size} weights for {stack.num_models} models")
    return np.einsum("k,kns->ns", w, stack.probs)


def decide_soft(stack: PosteriorStack, weights=None) -> np.ndarray:
    """Argmax of the averaged posterior; ties go to the smallest class id."""
    if weights is None:
        weights = np.full(stack.num_models, 1.0 / stack.num_models)
    return discriminant(stack, weights).argmax(axis=1)


def decide_hard(stack: PosteriorStack) -> np.ndarray:
    """Majority vote over per-model argmax decisions.

    Vote ties are broken by the higher mean confidence among the models
    that voted for each tied class; a residual exact tie falls back to
    the smallest class id.
    """
    votes = stack.probs.argmax(axis=2)  # (models, nodes)
    num_nodes = stack.nodes.size
    num_classes = stack.probs.shape[2]
    out = np.empty(num_nodes, dtype=np.int64)
    for i in range(num_nodes):
        counts = np.bincount(votes[:, i], minlength=num_classes)
        top = counts.max()
        tied = np.flatnonzero(counts == top)
        if tied.size == 1:
            out[i] = tied[0]
            continue
        best_class, best_conf = -1, -1.0
        for c in tied:
            voters = np.flatnonzero(votes[:, i] == c)
            conf = float(stack.probs[voters, i, c].mean())
            if conf > best_conf:
                best_class, best_conf = int(c), conf
        out[i] = best_class
    return out


def decide_weighted(stack: PosteriorStack, accuracies) -> np.ndarray:
    """Soft voting with weights proportional to past per-model accuracy."""
    acc = np.asarray(accuracies, dtype=np.float64).reshape(-1)
    if acc.size != stack.num_models:
        raise ValueError(f"{acc.size} accuracies for {stack.num_models} models")
    if np.any(acc < 0):
        raise ValueError("accuracies must be non-negative")
    total = acc.sum()
    if total <= 0:
        raise ValueError("accuracies are all zero")
    return decide_soft(stack, acc / total)


def ensemble_decide(e: EnsembleModel, g: Graph, nodes) -> np.ndarray:
    """Apply the ensemble's configured voting rule to ``nodes``."""
    stack = ensemble_posteriors(e, g, nodes)
    if e.voting == "hard":
        return decide_hard(stack)
    return decide_soft(stack, e.weights)


# --- serialization -----------------------------------------------------------
#
# Flat container: magic, little-endian u64 header length, JSON header,
# then raw little-endian array payloads in a fixed order. Floats go
# through json's repr so every field round-trips bit-exactly, which also
# makes file digests usable as determinism checks.

def _model_header(m: BaseModel) -> dict:
    return {
        "model_index": m.spec.model_index,
        "node_fraction": m.spec.node_fraction,
        "feature_fraction": m.spec.feature_fraction,
        "seed": m.spec.seed,
        "train_f1": m.train_f1,
        "num_subset_nodes": int(m.spec.node_subset.size),
        "num_subset_dims": int(m.spec.feature_subset.size),
        "layer_shapes": [list(w.shape) for w in m.params.agg_weights],
    }


def _model_payload(m: BaseModel) -> list[bytes]:
    chunks = [np.ascontiguousarray(m.spec.node_subset, dtype="<i8").tobytes(),
              np.ascontiguousarray(m.spec.feature_subset, dtype="<i8").tobytes()]
    for w, s in zip(m.params.agg_weights, m.params.self_weights):
        chunks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(s, dtype="<f8").tobytes())
    return chunks


def _read_model(header: dict, buf: memoryview, offset: int) -> tuple[BaseModel, int]:
    def take(count, dtype, shape):
        nonlocal offset
        nbytes = count * 8
        arr = np.frombuffer(buf[offset:offset + nbytes], dtype=dtype).copy().reshape(shape)
        offset += nbytes
        return arr

    n_nodes = header["num_subset_nodes"]
    n_dims = header["num_subset_dims"]
    node_subset = take(n_nodes, "<i8", (n_nodes,)).astype(np.int64)
    feature_subset = take(n_dims, "<i8", (n_dims,)).astype(np.int64)
    agg, own = [], []
    for shape in header["layer_shapes"]:
        agg.append(take(shape[0] * shape[1], "<f8", tuple(shape)).astype(np.float64))
        own.append(take(shape[0] * shape[1], "<f8", tuple(shape)).astype(np.float64))
    spec = SubspaceSpec(
        model_index=header["model_index"],
        node_subset=node_subset,
        feature_subset=feature_subset,
        node_fraction=header["node_fraction"],
        feature_fraction=header["feature_fraction"],
        seed=header["seed"],
    )
    model = BaseModel(params=GnnParams(agg, own), spec=spec, train_f1=header["train_f1"])
    return model, offset


def _pack(header: dict, payload: list[bytes]) -> bytes:
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return b"".join([_MAGIC, len(blob).to_bytes(8, "little"), blob, *payload])


def _unpack(data: bytes) -> tuple[dict, memoryview, int]:
    if not data.startswith(_MAGIC):
        raise ValueError("not a graphforest model file")
    header_len = int.from_bytes(data[len(_MAGIC):len(_MAGIC) + 8], "little")
    start = len(_MAGIC) + 8
    header = json.loads(data[start:start + header_len].decode("utf-8"))
    if header.get("format_version") != _FORMAT_VERSION:
        raise ValueError(f"unsupported format version {header.get('format_version')}")
    return header, memoryview(data), start + header_len


def serialize_ensemble(e: EnsembleModel) -> bytes:
    header = {
        "format_version": _FORMAT_VERSION,
        "kind": "ensemble",
        "num_models": e.num_models,
        "node_fraction": e.node_fraction,
        "feature_fraction": e.feature_fraction,
        "master_seed": e.master_seed,
        "voting": e.voting,
        "weights": [float(w) for w in e.weights],
        "models": [_model_header(m) for m in e.models],
    }
    payload = []
    for m in e.models:
        payload.extend(_model_payload(m))
    return _pack(header, payload)


def deserialize_ensemble(data: bytes) -> EnsembleModel:
    header, buf, offset = _unpack(data)
    if header["kind"] != "ensemble":
        raise ValueError("file does not hold an ensemble")
    models = []
    for mh in header["models"]:
        model, offset = _read_model(mh, buf, offset)
        models.append(model)
    return EnsembleModel(
        models=tuple(models),
        num_models=header["num_models"],
        node_fraction=header["node_fraction"],
        feature_fraction=header["feature_fraction"],
        master_seed=header["master_seed"],
        voting=header["voting"],
        weights=np.array(header["weights"], dtype=np.float64),
    )


def save_ensemble(e: EnsembleModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_ensemble(e))


def load_ensemble(path) -> EnsembleModel:
    with open(path, "rb") as fh:
        return deserialize_ensemble(fh.read())


def serialize_base_model(m: BaseModel) -> bytes:
    header = {"format_version": _FORMAT_VERSION, "kind": "model",
              "model": _model_header(m)}
    return _pack(header, _model_payload(m))


def deserialize_base_model(data: bytes) -> BaseModel:
    header, buf, offset = _unpack(data)
    if header["kind"] != "model":
        raise ValueError("file does not hold a single base model")
    model, _ = _read_model(header["model"], buf, offset)
    return model


def save_base_model(m: BaseModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize_base_model(m))


def load_base_model(path) -> BaseModel:
    with open(path, "rb") as fh:
        return deserialize_base_model(fh.read())


def ensemble_digest(e: EnsembleModel) -> str:
    """SHA-256 of the canonical serialization; stable across reruns."""
    return hashlib.sha256(serialize_ensemble(e)).hexdigest()
