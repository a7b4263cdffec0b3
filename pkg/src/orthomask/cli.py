"""Command-line pipeline: graph construction, synthetic data, training,
prediction and weight inspection as subcommands of one executable.

Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 numerical
failure (non-finite loss). All randomness flows through explicit
``--seed`` flags, so repeated invocations write byte-identical files.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import dataio, interpret, modelio, orthograph, training
from .errors import InvalidStateError, NumericalError, ParseError, UnknownGeneError
from .netcore import (
    ACT_IDENTITY,
    ACT_RELU,
    MODE_HARD,
    MODE_SOFT,
    FeedforwardNetwork,
    Layer,
    MaskedLinearLayer,
    forward_conversion_batch,
    mlp_forward_batch,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _uint64(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"must be an unsigned 64-bit integer, got {value}")
    return value


def _positive_float(text):
    value = float(text)
    if not (math.isfinite(value) and value > 0):
        raise argparse.ArgumentTypeError(f"must be a finite positive number, got {text}")
    return value


def _nonneg_float(text):
    value = float(text)
    if not (math.isfinite(value) and value >= 0):
        raise argparse.ArgumentTypeError(f"must be finite and >= 0, got {text}")
    return value


def _unit_interval(text):
    value = float(text)
    if not 0.0 < value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="orthomask", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-graph", help="reciprocal-best-hit graph from score tables")
    p.add_argument("--scores-tq", required=True, help="target-query score TSV")
    p.add_argument("--scores-qt", required=True, help="source-query score TSV")
    p.add_argument("--target-genes", required=True, help="target gene universe file")
    p.add_argument("--source-genes", required=True, help="source gene universe file")
    p.add_argument("--threshold", required=True, type=_nonneg_float)
    p.add_argument("--tie-tol", type=_nonneg_float, default=0.0)
    p.add_argument("--out", required=True, help="edge-list TSV to write")
    p.set_defaults(func=_cmd_build_graph)

    p = sub.add_parser("synth", help="generate a seeded synthetic transfer problem")
    p.add_argument("--n-s", required=True, type=_positive_int, help="source gene count")
    p.add_argument("--n-t", required=True, type=_positive_int, help="target gene count")
    p.add_argument("--density", required=True, type=_unit_interval)
    p.add_argument("--samples", required=True, type=_positive_int)
    p.add_argument("--noise", required=True, type=_nonneg_float)
    p.add_argument("--hidden", required=True, type=_positive_int)
    p.add_argument("--seed", required=True, type=_uint64)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train-base", help="train the phenotype predictor on its own species")
    p.add_argument("--expr", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--hidden", required=True, type=_positive_int)
    p.add_argument("--loss", required=True, choices=["mse", "ce"])
    p.add_argument("--lr", required=True, type=_positive_float)
    p.add_argument("--steps", required=True, type=_positive_int)
    p.add_argument("--seed", required=True, type=_uint64)
    p.add_argument("--out", required=True, help="model JSON to write (saved frozen)")
    p.add_argument("--batch-size", type=_positive_int, default=training.FULL_BATCH)
    p.add_argument("--optimizer", choices=list(training.OPTIMIZERS), default=training.OPT_ADAM)
    p.set_defaults(func=_cmd_train_base)

    p = sub.add_parser("train-conversion", help="fit the conversion layer against a frozen model")
    p.add_argument("--model", required=True)
    p.add_argument("--graph", required=True, help="edge-list TSV")
    p.add_argument("--target-genes", required=True, help="target gene universe file")
    p.add_argument("--source-genes", required=True, help="source gene universe file")
    p.add_argument("--expr", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--mode", required=True, choices=[MODE_HARD, MODE_SOFT])
    p.add_argument("--alpha", type=_nonneg_float, default=1.0)
    p.add_argument("--beta", type=_nonneg_float, default=0.0)
    p.add_argument("--lr", required=True, type=_positive_float)
    p.add_argument("--steps", required=True, type=_positive_int)
    p.add_argument("--seed", required=True, type=_uint64)
    p.add_argument("--out", required=True)
    p.add_argument("--report", required=True, help="per-step loss TSV to write")
    p.add_argument("--batch-size", type=_positive_int, default=training.FULL_BATCH)
    p.add_argument("--optimizer", choices=list(training.OPTIMIZERS), default=training.OPT_ADAM)
    p.add_argument("--init", choices=list(training.INITS), default=training.INIT_ROW_UNIFORM)
    p.set_defaults(func=_cmd_train_conversion)

    p = sub.add_parser("predict", help="write per-sample predictions")
    p.add_argument("--model", required=True)
    p.add_argument("--expr", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("inspect-weights", help="export the learned orthology weight table")
    p.add_argument("--model", required=True)
    p.add_argument("--target-gene", help="restrict to one target gene's contributors")
    p.add_argument("--top", type=_positive_int, default=10, help="contributors to keep (with --target-gene)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_inspect_weights)

    p = sub.add_parser("eval", help="print mean loss of a model on labeled data")
    p.add_argument("--model", required=True)
    p.add_argument("--expr", required=True)
    p.add_argument("--labels", required=True)
    p.set_defaults(func=_cmd_eval)

    return parser


# ---------------------------------------------------------------------------
# subcommand bodies
# ---------------------------------------------------------------------------

def _cmd_build_graph(args):
    scores_tq = orthograph.read_score_table(args.scores_tq)
    scores_qt = orthograph.read_score_table(args.scores_qt)
    targets = orthograph.read_gene_list(args.target_genes)
    sources = orthograph.read_gene_list(args.source_genes)
    cfg = orthograph.RbhConfig(threshold=args.threshold, tie_tolerance=args.tie_tol)
    graph = orthograph.build_rbh_graph(scores_tq, scores_qt, cfg, targets, sources)
    orthograph.graph_to_tsv(graph, args.out)
    print(f"wrote {graph.n_edges} edges to {args.out}")
    return EXIT_OK


def _cmd_synth(args):
    spec = dataio.SyntheticSpec(
        n_sources=args.n_s,
        n_targets=args.n_t,
        orthology_density=args.density,
        num_samples=args.samples,
        noise_sigma=args.noise,
        hidden_dim=args.hidden,
        seed=args.seed,
    )
    bundle = dataio.generate_synthetic(spec)
    dataio.write_bundle(bundle, spec, args.out_dir)
    print(f"wrote bundle to {args.out_dir} (oracle_loss {bundle.oracle_loss!r})")
    return EXIT_OK


def _label_kind_for(net: FeedforwardNetwork) -> str:
    # 1-output heads are regression; multi-logit heads are classifiers
    return dataio.KIND_REGRESSION if net.output_dim == 1 else dataio.KIND_CLASSIFICATION


def _load_labeled(expr_path, labels_path, kind):
    dataset = dataio.read_expression_tsv(expr_path)
    return dataio.attach_labels(dataset, labels_path, kind)


def _align_checked(dataset, gene_ids, expr_path):
    try:
        aligned, _ = dataio.align_to_genes(dataset, gene_ids)
    except UnknownGeneError as exc:
        raise UnknownGeneError(f"{expr_path}: {exc}") from None
    return aligned


def _cmd_train_base(args):
    kind = dataio.KIND_REGRESSION if args.loss == "mse" else dataio.KIND_CLASSIFICATION
    data = _load_labeled(args.expr, args.labels, kind)
    if data.n_samples == 0:
        raise ValueError(f"no samples in {args.expr}")

    if args.loss == "mse":
        out_dim = data.labels.shape[1]
    else:
        n_classes = int(data.labels.max()) + 1
        if n_classes < 2:
            raise ValueError("classification needs at least 2 classes in the labels")
        out_dim = n_classes

    rng = np.random.default_rng(args.seed)
    net = FeedforwardNetwork(
        [
            Layer(
                rng.standard_normal((args.hidden, data.n_genes)) / math.sqrt(data.n_genes),
                np.zeros(args.hidden),
                ACT_RELU,
            ),
            Layer(
                rng.standard_normal((out_dim, args.hidden)) / math.sqrt(args.hidden),
                np.zeros(out_dim),
                ACT_IDENTITY,
            ),
        ]
    )
    cfg = training.TrainConfig(
        learning_rate=args.lr,
        steps=args.steps,
        batch_size=args.batch_size,
        loss_kind=args.loss,
        optimizer=args.optimizer,
        seed=args.seed,
    )
    trained, report = training.train_base(net, data, cfg)
    modelio.save_model(trained.copy(frozen=True), None, args.out)
    print(f"final training loss {report.losses[-1]!r}; eval {report.final_eval!r}")
    return EXIT_OK


def _resolve_start_layer(existing, graph, mode, init, seed):
    """Warm-start from a saved conversion layer when compatible, else
    initialize fresh on the graph."""
    if existing is None:
        return training.initialize_conversion_layer(graph, mode, init, np.random.default_rng(seed))
    if existing.mask != graph:
        raise ValueError("saved conversion layer does not match the supplied graph")
    if existing.mode == mode:
        return existing
    if existing.mode == MODE_HARD and mode == MODE_SOFT:
        return MaskedLinearLayer(graph, MODE_SOFT, existing.to_dense())
    raise ValueError("cannot warm-start a hard layer from a soft one")


def _cmd_train_conversion(args):
    net, existing = modelio.load_model(args.model)
    if not net.frozen:
        raise InvalidStateError(f"model in {args.model} is not frozen")
    targets = orthograph.read_gene_list(args.target_genes)
    sources = orthograph.read_gene_list(args.source_genes)
    graph = orthograph.tsv_to_graph(args.graph, targets, sources)
    if net.input_dim != graph.n_targets:
        raise ValueError(
            f"model {args.model} expects {net.input_dim} target genes "
            f"but graph {args.graph} has {graph.n_targets}"
        )

    kind = _label_kind_for(net)
    data = _load_labeled(args.expr, args.labels, kind)
    data = _align_checked(data, graph.source_gene_ids, args.expr)

    layer = _resolve_start_layer(existing, graph, args.mode, args.init, args.seed)
    cfg = training.TrainConfig(
        mode=args.mode,
        learning_rate=args.lr,
        steps=args.steps,
        batch_size=args.batch_size,
        alpha=args.alpha,
        beta=args.beta,
        loss_kind=training.LOSS_MSE if kind == dataio.KIND_REGRESSION else training.LOSS_CE,
        optimizer=args.optimizer,
        seed=args.seed,
        init=args.init,
    )
    trained, report = training.train_conversion(layer, net, data, cfg)
    modelio.save_model(net, trained, args.out)
    training.write_report_tsv(report, args.report)
    print(f"final training loss {report.losses[-1]!r}; eval {report.final_eval!r}")
    return EXIT_OK


def _prepare_inputs(net, conversion, dataset, expr_path):
    if conversion is not None:
        dataset = _align_checked(dataset, conversion.mask.source_gene_ids, expr_path)
        return dataset, forward_conversion_batch(conversion, dataset.samples)
    if dataset.n_genes != net.input_dim:
        raise ValueError(
            f"{expr_path} has {dataset.n_genes} genes but model expects {net.input_dim} "
            "(model has no conversion layer; columns are used in file order)"
        )
    return dataset, dataset.samples


def _cmd_predict(args):
    net, conversion = modelio.load_model(args.model)
    dataset = dataio.read_expression_tsv(args.expr)
    dataset, inputs = _prepare_inputs(net, conversion, dataset, args.expr)
    pred, _ = mlp_forward_batch(net, inputs)
    if not np.all(np.isfinite(pred)):
        raise NumericalError("non-finite prediction")
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sample_id\tprediction\n")
        if net.output_dim == 1:
            for sid, value in zip(dataset.sample_ids, pred[:, 0]):
                fh.write(f"{sid}\t{modelio.float_repr(value)}\n")
        else:
            for sid, row in zip(dataset.sample_ids, pred):
                fh.write(f"{sid}\t{int(np.argmax(row))}\n")
    return EXIT_OK


def _cmd_inspect_weights(args):
    net, conversion = modelio.load_model(args.model)
    if conversion is None:
        raise ValueError(f"model in {args.model} has no conversion layer to inspect")
    if args.target_gene is None:
        interpret.export_weight_table(conversion, args.out)
        return EXIT_OK
    ranked = interpret.top_contributors(conversion, args.target_gene, args.top)
    support = conversion.mask.edge_set()
    t_idx = conversion.mask.target_index()[args.target_gene]
    s_idx = conversion.mask.source_index()
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(interpret.WEIGHT_TABLE_HEADER + "\n")
        for s_gene, weight in ranked:
            flag = "true" if (t_idx, s_idx[s_gene]) in support else "false"
            fh.write(f"{args.target_gene}\t{s_gene}\t{modelio.float_repr(weight)}\t{flag}\n")
    return EXIT_OK


def _cmd_eval(args):
    net, conversion = modelio.load_model(args.model)
    dataset = dataio.read_expression_tsv(args.expr)
    dataset = dataio.attach_labels(dataset, args.labels, _label_kind_for(net))
    if dataset.n_samples == 0:
        raise ValueError(f"no samples in {args.expr}")
    if conversion is not None:
        dataset = _align_checked(dataset, conversion.mask.source_gene_ids, args.expr)
    elif dataset.n_genes != net.input_dim:
        raise ValueError(
            f"{args.expr} has {dataset.n_genes} genes but model expects {net.input_dim}"
        )
    value = training.evaluate(net, conversion, dataset)
    print(modelio.float_repr(value))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"orthomask: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"orthomask: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ParseError, UnknownGeneError, InvalidStateError, ValueError, OSError) as exc:
        print(f"orthomask: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
