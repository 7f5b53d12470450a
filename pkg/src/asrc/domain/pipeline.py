import itertools
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from asrc.domain import contrastive, encoder, graph, metrics, rcc
from asrc.domain.model import (
    ClusterAssignment,
    ConfigError,
    PipelineConfig,
    RunResult,
    run_digest,
)
from asrc.domain.numerics import (
    DataMatrix,
    SeededRng,
    check_finite,
    pca_reduce,
)

logger = logging.getLogger(__name__)

CHANGE_THRESHOLD = 0.01


class MissingClusterCount(ConfigError):
    pass


@dataclass(frozen=True)
class VariantPlan:
    inner_rounds: int
    resync: bool
    contrastive: bool
    feedback: bool


def plan_for(cfg: PipelineConfig) -> VariantPlan:
    if cfg.variant == "asrc":
        return VariantPlan(cfg.t2, resync=True, contrastive=True, feedback=True)
    if cfg.variant == "asrc1":
        return VariantPlan(1, resync=False, contrastive=True, feedback=False)
    if cfg.variant == "asrc2":
        return VariantPlan(cfg.t2, resync=True, contrastive=True, feedback=False)
    if cfg.variant == "adagae":
        return VariantPlan(1, resync=False, contrastive=False, feedback=False)
    raise ConfigError(f"variant {cfg.variant!r} does not train an encoder")


@dataclass
class _Training:
    """Mutable state threaded through the graph and training schedule."""

    X1: np.ndarray
    X2: np.ndarray
    params: encoder.EncoderParams
    state: encoder.OptimizerState
    Z: np.ndarray
    P: Optional[graph.SparseRowGraph] = None
    losses: List[float] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)


@contextmanager
def _timed(timings: Dict[str, float], phase: str) -> Iterator[None]:
    start = time.perf_counter()
    try:
        yield
    finally:
        timings[phase] = timings.get(phase, 0.0) + time.perf_counter() - start


def prepare_features(
    X: DataMatrix, cfg: PipelineConfig, rng: SeededRng
) -> DataMatrix:
    X = check_finite(X, "data")
    if X.shape[0] < 2:
        raise ConfigError("clustering needs at least two samples")
    if not cfg.pca_components:
        return X
    n, d = X.shape
    # centred data spans at most n - 1 directions
    r = min(cfg.pca_components, n - 1, d)
    if r == d:
        logger.warning(
            f"pca_components={cfg.pca_components} keeps all {d} features, "
            "skipping PCA"
        )
        return X
    if r < cfg.pca_components:
        logger.warning(
            f"pca_components={cfg.pca_components} exceeds what {n} samples "
            f"span, using {r}"
        )
    logger.debug(f"reducing {d} features to {r}")
    return pca_reduce(X, r, rng.spawn("pca"))


def assignment_change(old: ClusterAssignment, new: ClusterAssignment) -> float:
    """Fraction of samples off their best-overlapping cluster, worst direction."""
    table = metrics.contingency(old, new)
    matched = min(table.counts.max(axis=1).sum(), table.counts.max(axis=0).sum())
    return 1.0 - float(matched) / table.n


def _train_rounds(
    run: _Training,
    cfg: PipelineConfig,
    plan: VariantPlan,
    k: int,
    rounds: int,
    clusters: Optional[np.ndarray] = None,
):
    beta = cfg.beta if plan.contrastive else 0.0
    for _ in range(rounds):
        with _timed(run.timings, "graph"):
            sym = graph.symmetrize_normalize(run.P)
        with _timed(run.timings, "train"):
            phase = encoder.train(
                run.X1,
                run.X2,
                sym,
                run.P,
                run.params,
                run.state,
                cfg.lambda2,
                beta,
                clusters=clusters,
                tau=cfg.tau,
                max_steps=cfg.inner_steps,
            )
            run.params, run.state = phase.params, phase.state
            run.losses.extend(phase.losses)
            run.Z = encoder.encode_views(run.X1, run.X2, sym, run.params).Z
        if plan.resync:
            with _timed(run.timings, "graph"):
                run.P = graph.learn_graph(run.Z, k)


def _start_training(
    X: np.ndarray, cfg: PipelineConfig, plan: VariantPlan, rng: SeededRng
) -> _Training:
    if plan.contrastive:
        X2 = contrastive.augment_gaussian(
            X, contrastive.AugmentConfig(cfg.noise_std, rng.spawn("augment"))
        )
    else:
        X2 = X
    d, h1, h2 = encoder.parse_struct(cfg.struct, X.shape[1])
    params = encoder.EncoderParams.initialize(d, h1, h2, rng.spawn("encoder"))
    return _Training(
        X1=X,
        X2=X2,
        params=params,
        state=encoder.OptimizerState.for_params(params, cfg.eta),
        Z=X,
    )


def learn_embeddings(
    X: np.ndarray, cfg: PipelineConfig, plan: VariantPlan, rng: SeededRng
) -> Tuple[_Training, int]:
    """Alternate graph learning and encoder training over the sparsity schedule.

    Returns the training state and the sparsity of the last level; the
    state's P always describes the state's Z on return.
    """
    run = _start_training(X, cfg, plan, rng)
    sched = graph.SparsitySchedule.start(cfg.k0, cfg.s, cfg.t1, X.shape[0])
    k = sched.k
    while not sched.finished:
        k = sched.k
        with _timed(run.timings, "graph"):
            run.P = graph.learn_graph(run.Z, k)
        logger.debug(f"sparsity level {sched.iteration + 1}/{sched.T1}: k={k}")
        _train_rounds(run, cfg, plan, k, plan.inner_rounds)
        sched = graph.advance_sparsity(sched)
    if not plan.resync:
        with _timed(run.timings, "graph"):
            run.P = graph.learn_graph(run.Z, k)
    return run, k


def _cluster(
    run: _Training, cfg: PipelineConfig, rng: SeededRng
) -> ClusterAssignment:
    with _timed(run.timings, "graph"):
        edges = graph.symmetrize_normalize(run.P).edges
    with _timed(run.timings, "rcc"):
        assignment, state = rcc.rcc_run(run.Z, edges, _rcc_config(cfg), rng)
    logger.debug(
        f"rcc found {assignment.n_clusters} clusters after {state.iteration} sweeps"
    )
    return assignment


def _rcc_config(cfg: PipelineConfig) -> rcc.RccConfig:
    return rcc.RccConfig(
        max_sweeps=cfg.t3,
        interval=cfg.interval,
        delta=cfg.delta,
        tol=cfg.rcc_tol,
        cg_tol=cfg.cg_tol,
    )


def _result(
    X: np.ndarray,
    cfg: PipelineConfig,
    assignment: ClusterAssignment,
    labels: Optional[np.ndarray],
    **extra,
) -> RunResult:
    ami = ari = None
    if labels is not None:
        ami = metrics.adjusted_mutual_info(labels, assignment)
        ari = metrics.adjusted_rand_index(labels, assignment)
    return RunResult(
        run_id=run_digest(X, cfg.echo()),
        variant=cfg.variant,
        seed=cfg.seed,
        assignments=assignment,
        config=cfg.echo(),
        ami=ami,
        ari=ari,
        **extra,
    )


def run_asrc(
    X: DataMatrix, cfg: PipelineConfig, labels: Optional[np.ndarray] = None
) -> RunResult:
    """Graph learning, contrastive training and robust clustering.

    Rounds after the first retrain with negatives drawn from outside each
    sample's current cluster, then cluster again; they stop early once
    fewer than 1% of the samples change cluster.
    """
    cfg = cfg.validate()
    plan = plan_for(cfg)
    rng = SeededRng(cfg.seed)
    raw = np.asarray(X, dtype=float)
    X = prepare_features(raw, cfg, rng)

    run, k = learn_embeddings(X, cfg, plan, rng)
    assignment = _cluster(run, cfg, rng.spawn("rcc-1"))
    rounds = 1
    if plan.feedback:
        for round_ in range(2, cfg.rounds + 1):
            _train_rounds(
                run, cfg, plan, k, plan.inner_rounds, clusters=assignment.labels
            )
            updated = _cluster(run, cfg, rng.spawn(f"rcc-{round_}"))
            change = assignment_change(assignment, updated)
            assignment, rounds = updated, round_
            logger.debug(
                f"feedback round {round_}: {change:.2%} of samples moved, "
                f"{assignment.n_clusters} clusters"
            )
            if change < CHANGE_THRESHOLD:
                break

    return _result(
        raw,
        cfg,
        assignment,
        labels,
        loss_trace=run.losses,
        timings=run.timings,
        rounds=rounds,
        embeddings=run.Z,
        graph=run.P,
    )


def run_adagae(
    X: DataMatrix, cfg: PipelineConfig, labels: Optional[np.ndarray] = None
) -> RunResult:
    """Adaptive graph auto-encoder followed by k-means on the embeddings."""
    cfg = cfg.validate()
    if cfg.n_clusters is None:
        raise MissingClusterCount("the adagae variant needs n_clusters")
    plan = plan_for(cfg)
    rng = SeededRng(cfg.seed)
    raw = np.asarray(X, dtype=float)
    X = prepare_features(raw, cfg, rng)
    if cfg.n_clusters > X.shape[0]:
        raise ConfigError(f"n_clusters={cfg.n_clusters} exceeds {X.shape[0]} samples")

    run, _ = learn_embeddings(X, cfg, plan, rng)
    with _timed(run.timings, "kmeans"):
        assignment = metrics.kmeans_pp(run.Z, cfg.n_clusters, rng.spawn("kmeans"))
    return _result(
        raw,
        cfg,
        assignment,
        labels,
        loss_trace=run.losses,
        timings=run.timings,
        embeddings=run.Z,
        graph=run.P,
    )


def run_rcc_baseline(
    X: DataMatrix, cfg: PipelineConfig, labels: Optional[np.ndarray] = None
) -> RunResult:
    """Robust clustering on a mutual kNN graph of the input features."""
    cfg = cfg.validate()
    rng = SeededRng(cfg.seed)
    raw = np.asarray(X, dtype=float)
    X = prepare_features(raw, cfg, rng)
    timings: Dict[str, float] = {}
    with _timed(timings, "graph"):
        edges = rcc.mutual_knn_graph(
            X, min(cfg.knn_k, X.shape[0] - 1), cfg.metric, connect=True
        )
    with _timed(timings, "rcc"):
        assignment, _ = rcc.rcc_run(X, edges, _rcc_config(cfg), rng.spawn("rcc-1"))
    return _result(raw, cfg, assignment, labels, timings=timings, embeddings=X)


def run_variant(
    X: DataMatrix, cfg: PipelineConfig, labels: Optional[np.ndarray] = None
) -> RunResult:
    if cfg.variant == "rcc":
        return run_rcc_baseline(X, cfg, labels)
    if cfg.variant == "adagae":
        return run_adagae(X, cfg, labels)
    return run_asrc(X, cfg, labels)


def with_overrides(cfg: PipelineConfig, **overrides) -> PipelineConfig:
    """Apply the non-None overrides, e.g. command-line flags over a file."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **changes).validate() if changes else cfg


@dataclass(frozen=True)
class SweepPoint:
    settings: Dict[str, object]
    n_clusters: int
    ami: Optional[float] = None
    ari: Optional[float] = None

    def to_row(self) -> Dict:
        def percent(value):
            return None if value is None else round(100.0 * value, 4)

        return {
            **self.settings,
            "n_clusters": self.n_clusters,
            "ami": percent(self.ami),
            "ari": percent(self.ari),
        }


def grid_points(grid: Dict[str, Sequence]) -> List[Dict[str, object]]:
    """Every combination of the grid values, first key varying slowest."""
    known = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(grid) - known)
    if unknown:
        raise ConfigError(f"cannot sweep unknown settings {unknown}")
    if any(len(values) == 0 for values in grid.values()):
        raise ConfigError("every swept setting needs at least one value")
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*grid.values())]


def run_sweep(
    X: DataMatrix,
    cfg: PipelineConfig,
    grid: Dict[str, Sequence],
    labels: Optional[np.ndarray] = None,
) -> List[SweepPoint]:
    """Rerun one variant over a parameter grid, e.g. lambda2 x beta or PCA sizes."""
    points = []
    for settings in grid_points(grid):
        result = run_variant(X, replace(cfg, **settings).validate(), labels)
        point = SweepPoint(settings, result.n_clusters, result.ami, result.ari)
        logger.info(f"sweep {settings}: {point.n_clusters} clusters")
        points.append(point)
    return points
