"""Expression/phenotype file handling and synthetic data generation.

Expression files are samples-by-genes TSVs with gene IDs in the header;
phenotype labels live in a separate TSV keyed by sample ID so one
expression matrix can serve several phenotypes. Inputs are assumed
already normalized; values are taken as plain reals.

The synthetic generator builds a full transfer problem with known ground
truth: an orthology mask, true on-support conversion weights, a frozen
random predictor, and noisy labels. All sampling comes from a single
seeded PCG64 generator (``numpy.random.default_rng``) in a fixed draw
order, so a seed pins the bundle byte-for-byte.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, UnknownGeneError
from .netcore import (
    ACT_IDENTITY,
    ACT_RELU,
    MODE_HARD,
    FeedforwardNetwork,
    Layer,
    MaskedLinearLayer,
    forward_conversion_batch,
    mlp_forward_batch,
)
from .orthograph import BiadjacencyMatrix
from .modelio import float_repr

logger = logging.getLogger(__name__)

LABEL_HEADER = "sample_id\tlabel"
KIND_REGRESSION = "regression"
KIND_CLASSIFICATION = "classification"


@dataclass
class ExpressionDataset:
    """Samples-by-genes expression matrix plus optional phenotype labels.

    ``labels`` is a float64 (n_samples, label_dim) matrix for regression,
    an int64 (n_samples,) class-index vector for classification, or None.
    """

    species: str
    gene_ids: tuple[str, ...]
    sample_ids: tuple[str, ...]
    samples: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.gene_ids = tuple(self.gene_ids)
        self.sample_ids = tuple(self.sample_ids)
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if len(set(self.gene_ids)) != len(self.gene_ids):
            raise ValueError("duplicate gene IDs")
        if len(set(self.sample_ids)) != len(self.sample_ids):
            raise ValueError("duplicate sample IDs")
        if self.samples.ndim != 2:
            raise ValueError(f"samples must be 2-D, got shape {self.samples.shape}")
        if self.samples.shape != (len(self.sample_ids), len(self.gene_ids)):
            raise ValueError(
                f"samples shape {self.samples.shape} does not match "
                f"{len(self.sample_ids)} sample IDs x {len(self.gene_ids)} gene IDs"
            )
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("expression values must be finite")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape[0] != self.n_samples:
                raise ValueError(
                    f"{self.labels.shape[0]} labels for {self.n_samples} samples"
                )
            if np.issubdtype(self.labels.dtype, np.floating):
                if self.labels.ndim != 2:
                    raise ValueError("regression labels must be 2-D (samples x label dim)")
                if self.labels.size and not np.all(np.isfinite(self.labels)):
                    raise ValueError("labels must be finite")
            elif np.issubdtype(self.labels.dtype, np.integer):
                if self.labels.ndim != 1:
                    raise ValueError("class labels must be 1-D")
                if self.labels.size and self.labels.min() < 0:
                    raise ValueError("class labels must be non-negative")
            else:
                raise ValueError(f"unsupported label dtype {self.labels.dtype}")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_genes(self) -> int:
        return self.samples.shape[1]


def read_expression_tsv(path, species: str = "") -> ExpressionDataset:
    """Parse an expression TSV (``sample_id`` then one column per gene)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        fields = header.split("\t")
        if not fields or fields[0] != "sample_id":
            raise ParseError("header must start with 'sample_id'", path, 1)
        gene_ids = fields[1:]
        if len(set(gene_ids)) != len(gene_ids):
            raise ParseError("duplicate gene ID in header", path, 1)

        sample_ids: list[str] = []
        rows: list[list[float]] = []
        seen = set()
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split("\t")
            if len(cells) != len(gene_ids) + 1:
                raise ParseError(
                    f"expected {len(gene_ids) + 1} fields, got {len(cells)}", path, lineno
                )
            sample_id = cells[0]
            if sample_id in seen:
                raise ParseError(f"duplicate sample ID {sample_id!r}", path, lineno)
            seen.add(sample_id)
            try:
                values = [float(c) for c in cells[1:]]
            except ValueError:
                raise ParseError("non-numeric expression value", path, lineno) from None
            if values and not all(math.isfinite(v) for v in values):
                raise ParseError("non-finite expression value", path, lineno)
            sample_ids.append(sample_id)
            rows.append(values)

    samples = np.array(rows) if rows else np.zeros((0, len(gene_ids)))
    return ExpressionDataset(species, gene_ids, sample_ids, samples)


def write_expression_tsv(dataset: ExpressionDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sample_id" + "".join(f"\t{g}" for g in dataset.gene_ids) + "\n")
        for sid, row in zip(dataset.sample_ids, dataset.samples):
            fh.write(sid + "".join(f"\t{float_repr(v)}" for v in row) + "\n")


def read_labels_tsv(path, kind: str) -> tuple[tuple[str, ...], np.ndarray]:
    """Parse a phenotype TSV; ``kind`` selects decimal vs class-index labels."""
    if kind not in (KIND_REGRESSION, KIND_CLASSIFICATION):
        raise ValueError(f"kind must be regression or classification, got {kind!r}")
    sample_ids: list[str] = []
    values: list[float | int] = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != LABEL_HEADER:
            raise ParseError(f"expected header {LABEL_HEADER!r}, got {header!r}", path, 1)
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            cells = line.split("\t")
            if len(cells) != 2:
                raise ParseError(f"expected 2 fields, got {len(cells)}", path, lineno)
            sid, text = cells
            if sid in seen:
                raise ParseError(f"duplicate sample ID {sid!r}", path, lineno)
            seen.add(sid)
            if kind == KIND_REGRESSION:
                try:
                    value = float(text)
                except ValueError:
                    raise ParseError(f"non-numeric label {text!r}", path, lineno) from None
                if not math.isfinite(value):
                    raise ParseError("non-finite label", path, lineno)
            else:
                try:
                    value = int(text)
                except ValueError:
                    raise ParseError(f"non-integer class label {text!r}", path, lineno) from None
                if value < 0:
                    raise ParseError(f"negative class label {value}", path, lineno)
            sample_ids.append(sid)
            values.append(value)
    if kind == KIND_REGRESSION:
        arr = np.array(values, dtype=np.float64).reshape(-1, 1)
    else:
        arr = np.array(values, dtype=np.int64)
    return tuple(sample_ids), arr


def write_labels_tsv(sample_ids, labels, path) -> None:
    labels = np.asarray(labels)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(LABEL_HEADER + "\n")
        if np.issubdtype(labels.dtype, np.integer):
            for sid, v in zip(sample_ids, labels):
                fh.write(f"{sid}\t{int(v)}\n")
        else:
            flat = labels if labels.ndim == 2 else labels[:, None]
            if flat.shape[1] != 1:
                raise ValueError("label TSV supports exactly one label column")
            for sid, v in zip(sample_ids, flat[:, 0]):
                fh.write(f"{sid}\t{float_repr(v)}\n")


def attach_labels(dataset: ExpressionDataset, path, kind: str) -> ExpressionDataset:
    """Join a phenotype file onto a dataset by sample ID."""
    label_ids, values = read_labels_tsv(path, kind)
    by_id = {sid: values[k] for k, sid in enumerate(label_ids)}
    missing = [sid for sid in dataset.sample_ids if sid not in by_id]
    if missing:
        raise ValueError(f"no label for sample {missing[0]!r} in {path}")
    ordered = np.array([by_id[sid] for sid in dataset.sample_ids], dtype=values.dtype)
    if kind == KIND_CLASSIFICATION:
        ordered = ordered.reshape(dataset.n_samples)
    else:
        ordered = ordered.reshape(dataset.n_samples, 1)
    return ExpressionDataset(
        dataset.species, dataset.gene_ids, dataset.sample_ids, dataset.samples, ordered
    )


def align_to_genes(dataset: ExpressionDataset, required_gene_ids) -> tuple[ExpressionDataset, int]:
    """Reorder columns to the required gene order, dropping extras.

    Returns the aligned dataset and the number of dropped genes. Missing
    required genes raise UnknownGeneError.
    """
    required = list(required_gene_ids)
    position = {g: k for k, g in enumerate(dataset.gene_ids)}
    for gene in required:
        if gene not in position:
            raise UnknownGeneError(f"dataset is missing required gene {gene!r}")
    take = [position[g] for g in required]
    dropped = dataset.n_genes - len(required)
    if dropped:
        logger.warning("dropping %d gene(s) not in the required list", dropped)
    aligned = ExpressionDataset(
        dataset.species,
        required,
        dataset.sample_ids,
        dataset.samples[:, take],
        dataset.labels,
    )
    return aligned, dropped


# ---------------------------------------------------------------------------
# synthetic ground-truth bundles
# ---------------------------------------------------------------------------

@dataclass
class SyntheticSpec:
    n_sources: int
    n_targets: int
    orthology_density: float
    num_samples: int
    noise_sigma: float
    hidden_dim: int
    seed: int

    def __post_init__(self):
        if self.n_sources < 1 or self.n_targets < 1:
            raise ValueError("gene counts must be positive")
        if not 0.0 < self.orthology_density <= 1.0:
            raise ValueError(f"orthology_density must be in (0, 1], got {self.orthology_density}")
        if self.num_samples < 2:
            raise ValueError("need at least 2 samples for a train/test split")
        if not (math.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise ValueError(f"noise_sigma must be finite and >= 0, got {self.noise_sigma}")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass
class SyntheticBundle:
    graph: BiadjacencyMatrix
    true_conversion: MaskedLinearLayer
    frozen_net: FeedforwardNetwork
    train: ExpressionDataset
    test: ExpressionDataset
    oracle_loss: float


def generate_synthetic(spec: SyntheticSpec) -> SyntheticBundle:
    """Build a seeded transfer problem with known generating parameters.

    Draw order (single generator): orthology mask, per-empty-row fix-ups,
    true conversion weights, network parameters, expression matrix, label
    noise, train/test permutation. ``oracle_loss`` is the test MSE of the
    generating parameters themselves (exactly 0 when noise_sigma is 0).
    """
    rng = np.random.default_rng(spec.seed)
    n_t, n_s = spec.n_targets, spec.n_sources

    # mask: independent Bernoulli entries, then guarantee every target row
    # keeps at least one ortholog
    mask_draw = rng.uniform(0.0, 1.0, (n_t, n_s)) < spec.orthology_density
    for i in range(n_t):
        if not mask_draw[i].any():
            mask_draw[i, int(rng.integers(0, n_s))] = True
    rows, cols = np.nonzero(mask_draw)
    graph = BiadjacencyMatrix(
        [f"T{i:04d}" for i in range(n_t)],
        [f"S{j:04d}" for j in range(n_s)],
        zip(rows.tolist(), cols.tolist()),
    )

    true_weights = rng.uniform(-1.0, 1.0, graph.n_edges)
    true_conversion = MaskedLinearLayer(graph, MODE_HARD, true_weights)

    hidden = Layer(
        rng.normal(0.0, 1.0, (spec.hidden_dim, n_t)) / math.sqrt(n_t),
        rng.normal(0.0, 0.1, spec.hidden_dim),
        ACT_RELU,
    )
    head = Layer(
        rng.normal(0.0, 1.0, (1, spec.hidden_dim)) / math.sqrt(spec.hidden_dim),
        rng.normal(0.0, 0.1, 1),
        ACT_IDENTITY,
    )
    frozen_net = FeedforwardNetwork([hidden, head], frozen=True)

    xs = rng.standard_normal((spec.num_samples, n_s))
    noise = rng.normal(0.0, 1.0, (spec.num_samples, 1)) * spec.noise_sigma
    perm = rng.permutation(spec.num_samples)
    n_train = max(1, (4 * spec.num_samples) // 5)
    ids = [f"sample_{k:05d}" for k in range(spec.num_samples)]

    def subset(indices):
        # labels are produced per split with the same batched arithmetic
        # evaluate() uses, so the zero-noise oracle loss is exactly 0
        indices = np.sort(indices)
        x_split = xs[indices]
        clean, _ = mlp_forward_batch(
            frozen_net, forward_conversion_batch(true_conversion, x_split)
        )
        return ExpressionDataset(
            "synthetic_source",
            graph.source_gene_ids,
            [ids[k] for k in indices],
            x_split,
            clean + noise[indices],
        )

    train = subset(perm[:n_train])
    test = subset(perm[n_train:])

    from .training import evaluate  # local import avoids a module cycle

    oracle_loss = evaluate(frozen_net, true_conversion, test)
    return SyntheticBundle(graph, true_conversion, frozen_net, train, test, oracle_loss)


BUNDLE_FILES = {
    "graph": "graph.tsv",
    "target_genes": "target_genes.tsv",
    "source_genes": "source_genes.tsv",
    "base_model": "base_model.json",
    "oracle_model": "oracle_model.json",
    "train_expr": "train_expr.tsv",
    "train_labels": "train_labels.tsv",
    "test_expr": "test_expr.tsv",
    "test_labels": "test_labels.tsv",
    "meta": "meta.json",
}


def write_bundle(bundle: SyntheticBundle, spec: SyntheticSpec, out_dir) -> dict[str, str]:
    """Write a synthetic bundle as the on-disk files the CLI consumes.

    ``base_model.json`` holds the frozen predictor alone (the trainee's
    starting point); ``oracle_model.json`` additionally carries the
    generating conversion weights.
    """
    import json
    import os

    from .modelio import save_model
    from .orthograph import graph_to_tsv, write_gene_list

    os.makedirs(out_dir, exist_ok=True)
    paths = {key: os.path.join(out_dir, name) for key, name in BUNDLE_FILES.items()}

    graph_to_tsv(bundle.graph, paths["graph"])
    write_gene_list(bundle.graph.target_gene_ids, paths["target_genes"])
    write_gene_list(bundle.graph.source_gene_ids, paths["source_genes"])
    save_model(bundle.frozen_net, None, paths["base_model"])
    save_model(bundle.frozen_net, bundle.true_conversion, paths["oracle_model"])
    write_expression_tsv(bundle.train, paths["train_expr"])
    write_labels_tsv(bundle.train.sample_ids, bundle.train.labels, paths["train_labels"])
    write_expression_tsv(bundle.test, paths["test_expr"])
    write_labels_tsv(bundle.test.sample_ids, bundle.test.labels, paths["test_labels"])
    meta = {
        "seed": spec.seed,
        "oracle_loss": bundle.oracle_loss,
        "n_sources": spec.n_sources,
        "n_targets": spec.n_targets,
        "orthology_density": spec.orthology_density,
        "num_samples": spec.num_samples,
        "noise_sigma": spec.noise_sigma,
        "hidden_dim": spec.hidden_dim,
    }
    with open(paths["meta"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(meta, indent=2) + "\n")
    return paths
