import logging
from typing import Callable, List, Tuple

from asrc import config
from asrc.adapters import matrix_io, result_store
from asrc.domain import commands, events, metrics, model, pipeline, synthetic
from asrc.domain.numerics import normalize_minmax
from asrc.service_layer import unit_of_work

logger = logging.getLogger(__name__)


class UnknownDataset(Exception):
    pass


def run_clustering(
    message: commands.RunClustering, uow: unit_of_work.AbstractUnitOfWork
) -> model.RunResult:
    X = matrix_io.load_matrix(message.data_path, message.fmt, message.header)
    labels = None
    if message.labels_path:
        labels = matrix_io.load_labels(message.labels_path)
    cfg = pipeline.with_overrides(
        config.parse_config(message.config_path),
        variant=message.variant,
        seed=message.seed,
        n_clusters=message.n_clusters,
    )
    result = pipeline.run_variant(normalize_minmax(X), cfg, labels)

    with uow:
        uow.runs.add(
            model.Run.record(result, message.out_path, message.timings)
        )
        uow.commit()
    return result


def sweep(
    message: commands.Sweep, write_document: Callable
) -> List[pipeline.SweepPoint]:
    X = matrix_io.load_matrix(message.data_path, message.fmt, message.header)
    labels = matrix_io.load_labels(message.labels_path)
    cfg = pipeline.with_overrides(
        config.parse_config(message.config_path),
        variant=message.variant,
        seed=message.seed,
    )
    points = pipeline.run_sweep(normalize_minmax(X), cfg, message.grid, labels)
    if message.out_path:
        write_document(
            message.out_path,
            {
                "variant": cfg.variant,
                "seed": cfg.seed,
                "grid": message.grid,
                "points": [point.to_row() for point in points],
            },
        )
    return points


def synthesize(message: commands.Synthesize) -> Tuple[int, int]:
    if message.kind == "moons":
        X, labels = synthetic.gen_two_moons(
            message.n, message.noise, message.seed
        )
    elif message.kind == "blobs":
        X, labels = synthetic.gen_blobs(
            message.n,
            message.c,
            message.separation,
            message.spread,
            message.seed,
        )
    else:
        raise UnknownDataset(f"no generator called {message.kind!r}")
    matrix_io.write_matrix(message.out_path, X, message.fmt)
    matrix_io.write_labels(message.labels_path, labels)
    return X.shape


def evaluate(message: commands.Evaluate) -> Tuple[float, float]:
    if str(message.pred_path).endswith(".json"):
        predicted = result_store.read_assignments(message.pred_path)
    else:
        predicted = matrix_io.load_labels(message.pred_path)
    truth = matrix_io.load_labels(message.labels_path)
    return (
        metrics.adjusted_mutual_info(truth, predicted),
        metrics.adjusted_rand_index(truth, predicted),
    )


def write_result_document(
    message: events.ResultRequested, write_document: Callable
) -> None:
    write_document(message.out_path, message.document)


def log_run_completed(message: events.RunCompleted) -> None:
    scores = ""
    if message.ami is not None:
        scores = f", AMI {100 * message.ami:.2f}, ARI {100 * message.ari:.2f}"
    logger.info(
        f"Run {message.run_id} ({message.variant}): "
        f"{message.n_clusters} clusters{scores}"
    )


EVENT_HANDLERS = {
    events.RunCompleted: [log_run_completed],
    events.ResultRequested: [write_result_document],
}


COMMAND_HANDLERS = {
    commands.RunClustering: run_clustering,
    commands.Synthesize: synthesize,
    commands.Evaluate: evaluate,
    commands.Sweep: sweep,
}
