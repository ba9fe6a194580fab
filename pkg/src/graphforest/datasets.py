"""Load graphs from disk, generate synthetic labeled graphs, persist reports.

File formats (all UTF-8, '\\n' line endings, '.' decimal separator):

* edge file    - one edge per line, ``u<TAB>v``; '#' starts a comment
* feature file - CSV, row i holds the feature values of node i
* label file   - CSV rows ``node,label`` (unlisted nodes stay unlabeled)
* split file   - CSV rows ``node,split`` with split in {train,val,test}
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from .errors import DatasetFormatError
from .graph import Graph, build_graph


@dataclass(frozen=True)
class SbmConfig:
    """Stochastic block model with class-aligned feature means.

    Nodes split into ``num_classes`` near-equal blocks; pairs connect
    independently with ``p_in`` inside a block and ``p_out`` across.
    Class c's feature mean puts ``signal`` on its own stripe of
    ``feature_dim // num_classes`` columns, zero elsewhere, plus
    Gaussian noise, so any sampled feature subset has a chance of
    carrying class signal.
    """

    num_nodes: int
    num_classes: int
    p_in: float
    p_out: float
    feature_dim: int
    signal: float = 1.0
    noise_sd: float = 1.0
    train_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.p_in <= 1.0 and 0.0 <= self.p_out <= 1.0):
            raise ValueError("edge probabilities must lie in [0, 1]")
        if self.num_classes < 2 or self.num_nodes < self.num_classes:
            raise ValueError("need num_nodes >= num_classes >= 2")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")
        if self.noise_sd <= 0:
            raise ValueError("noise_sd must be positive")
        if self.signal < 0:
            raise ValueError("signal must be non-negative")
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError("train_fraction must lie in (0, 1)")


def generate_sbm(cfg: SbmConfig) -> Graph:
    """Deterministic synthetic graph: blocks, striped features, stratified split."""
    rng = np.random.default_rng(cfg.seed)
    n, s, d = cfg.num_nodes, cfg.num_classes, cfg.feature_dim

    sizes = np.full(s, n // s, dtype=np.int64)
    sizes[: n % s] += 1
    labels = np.repeat(np.arange(s), sizes)

    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], cfg.p_in, cfg.p_out)
    picked = rng.random(iu.size) < p
    edges = np.column_stack([iu[picked], ju[picked]])

    means = np.zeros((s, d))
    stripe = max(1, d // s)
    for c in range(s):
        means[c, c * stripe: min(d, (c + 1) * stripe)] = cfg.signal
    feats = means[labels] + rng.normal(0.0, cfg.noise_sd, size=(n, d))

    train, test = [], []
    for c in range(s):
        members = rng.permutation(np.flatnonzero(labels == c))
        take = int(round(cfg.train_fraction * members.size))
        take = min(max(take, 1), members.size - 1)
        train.extend(members[:take])
        test.extend(members[take:])

    return build_graph(edges, feats, labels=labels, num_classes=s,
                       splits={"train": train, "test": test})


def _parse_error(path, lineno, message) -> DatasetFormatError:
    return DatasetFormatError(f"{path}:{lineno}: {message}")


def load_graph(edge_path, feature_path, label_path=None, split_path=None) -> Graph:
    """Read the four-file on-disk format into a validated Graph."""
    features = []
    width = None
    with open(feature_path, encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                values = [float(x) for x in row]
            except ValueError as exc:
                raise _parse_error(feature_path, lineno, f"bad feature value ({exc})") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise _parse_error(feature_path, lineno,
                                   f"expected {width} columns, found {len(values)}")
            features.append(values)
    if not features:
        raise DatasetFormatError(f"{feature_path}: no feature rows")
    n = len(features)

    edges = []
    with open(edge_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise _parse_error(edge_path, lineno, "expected two node ids")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise _parse_error(edge_path, lineno, "node ids must be integers") from None
            if not (0 <= u < n and 0 <= v < n):
                raise _parse_error(edge_path, lineno,
                                   f"edge ({u}, {v}) references a node outside [0, {n})")
            edges.append((u, v))

    labels = None
    if label_path is not None:
        labels = np.full(n, -1, dtype=np.int64)
        seen = set()
        with open(label_path, encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row:
                    continue
                if len(row) != 2:
                    raise _parse_error(label_path, lineno, "expected 'node,label'")
                try:
                    node, lab = int(row[0]), int(row[1])
                except ValueError:
                    raise _parse_error(label_path, lineno, "node and label must be integers") from None
                if not 0 <= node < n:
                    raise _parse_error(label_path, lineno, f"unknown node id {node}")
                if node in seen:
                    raise _parse_error(label_path, lineno, f"duplicate label for node {node}")
                if lab < 0:
                    raise _parse_error(label_path, lineno, "labels must be non-negative")
                seen.add(node)
                labels[node] = lab

    splits: dict[str, list[int]] = {"train": [], "val": [], "test": []}
    if split_path is not None:
        seen = set()
        with open(split_path, encoding="utf-8") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row:
                    continue
                if len(row) != 2:
                    raise _parse_error(split_path, lineno, "expected 'node,split'")
                try:
                    node = int(row[0])
                except ValueError:
                    raise _parse_error(split_path, lineno, "node must be an integer") from None
                name = row[1].strip()
                if name not in splits:
                    raise _parse_error(split_path, lineno, f"unknown split {name!r}")
                if not 0 <= node < n:
                    raise _parse_error(split_path, lineno, f"unknown node id {node}")
                if node in seen:
                    raise _parse_error(split_path, lineno, f"node {node} assigned twice")
                seen.add(node)
                splits[name].append(node)

    return build_graph(edges, features, labels=labels, splits=splits)


def save_graph(g: Graph, edge_path, feature_path, label_path=None, split_path=None) -> None:
    """Write a graph in the four-file format; inverse of load_graph.

    Floats are written with repr so a reload is bit-exact. Class ids
    absent from the labels are not representable; reloading infers the
    class count from the largest label present.
    """
    with open(edge_path, "w", encoding="utf-8", newline="") as fh:
        for u, v in g.edge_pairs():
            fh.write(f"{u}\t{v}\n")
    with open(feature_path, "w", encoding="utf-8", newline="") as fh:
        for row in g.features:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    if label_path is not None:
        with open(label_path, "w", encoding="utf-8", newline="") as fh:
            for node in np.flatnonzero(g.labels >= 0):
                fh.write(f"{node},{g.labels[node]}\n")
    if split_path is not None:
        with open(split_path, "w", encoding="utf-8", newline="") as fh:
            for name, ids in (("train", g.train_nodes), ("val", g.val_nodes),
                              ("test", g.test_nodes)):
                for node in ids:
                    fh.write(f"{node},{name}\n")


def load_graph_dir(directory) -> Graph:
    """Load a graph from a directory using the canonical file names."""
    edge = os.path.join(directory, "edges.tsv")
    feat = os.path.join(directory, "features.csv")
    lab = os.path.join(directory, "labels.csv")
    spl = os.path.join(directory, "splits.csv")
    return load_graph(edge, feat,
                      lab if os.path.exists(lab) else None,
                      spl if os.path.exists(spl) else None)


def save_graph_dir(g: Graph, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    save_graph(g,
               os.path.join(directory, "edges.tsv"),
               os.path.join(directory, "features.csv"),
               os.path.join(directory, "labels.csv"),
               os.path.join(directory, "splits.csv"))


def save_report(rows, path, fmt: str = "csv") -> None:
    """Write metric records (dicts sharing one schema) as CSV or Markdown."""
    rows = list(rows)
    if fmt not in ("csv", "markdown"):
        raise ValueError(f"unknown report format {fmt!r}")
    if rows:
        header = list(rows[0].keys())
        for r in rows:
            if list(r.keys()) != header:
                raise ValueError("report rows do not share a schema")
    else:
        header = []
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if fmt == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for r in rows:
                writer.writerow([_format_cell(v) for v in r.values()])
        else:
            fh.write("| " + " | ".join(header) + " |\n")
            fh.write("|" + "|".join(" --- " for _ in header) + "|\n")
            for r in rows:
                fh.write("| " + " | ".join(_format_cell(v) for v in r.values()) + " |\n")


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_report(path) -> list[dict[str, str]]:
    """Read a CSV report back as a list of string-valued records."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            return []
        return [dict(zip(header, row)) for row in reader if row]
