import hashlib
from dataclasses import asdict, dataclass, field
from typing import Dict, List, NewType, Optional

import numpy as np

from asrc.domain.events import Event, ResultRequested, RunCompleted

RunId = NewType("RunId", str)

VARIANTS = ("asrc", "asrc1", "asrc2", "adagae", "rcc")
METRICS = ("euclidean", "cosine")
TRAINING_VARIANTS = ("asrc", "asrc1", "asrc2", "adagae")


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray

    @classmethod
    def from_labels(cls, labels) -> "ClusterAssignment":
        """Relabel to 0..c-1 in order of first occurrence."""
        labels = np.asarray(labels).ravel()
        _, first, inverse = np.unique(
            labels, return_index=True, return_inverse=True
        )
        rank = np.empty(first.size, dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(first.size)
        return cls(rank[inverse.ravel()])

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClusterAssignment):
            return False
        return np.array_equal(self.labels, other.labels)

    def __hash__(self):
        return hash(self.labels.tobytes())

    def __len__(self):
        return self.n


@dataclass(frozen=True)
class PipelineConfig:
    variant: str = "asrc"
    k0: int = 5
    s: int = 5
    t1: int = 5
    t2: int = 2
    lambda2: float = 1.0
    beta: float = 1.0
    tau: float = 1.0
    noise_std: float = 0.01
    eta: float = 1e-3
    inner_steps: int = 100
    t3: int = 100
    interval: int = 4
    delta: float = 0.0
    pca_components: int = 0
    metric: str = "euclidean"
    knn_k: int = 10
    rounds: int = 2
    seed: int = 0
    struct: str = "d-256-64"
    n_clusters: Optional[int] = None
    rcc_tol: float = 1e-5
    cg_tol: float = 1e-8

    def validate(self) -> "PipelineConfig":
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}")
        if self.k0 < 2:
            raise ConfigError(f"k0 must be at least 2, got {self.k0}")
        if self.s < 0:
            raise ConfigError(f"s must be non-negative, got {self.s}")
        for name in ("t1", "t2", "t3", "interval", "inner_steps", "rounds"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.knn_k < 1:
            raise ConfigError("knn_k must be at least 1")
        if self.pca_components < 0:
            raise ConfigError("pca_components must be non-negative")
        if self.delta < 0:
            raise ConfigError("delta must be non-negative (0 means auto)")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.n_clusters is not None and self.n_clusters < 1:
            raise ConfigError("n_clusters must be at least 1")
        if self.variant in TRAINING_VARIANTS:
            for name in ("lambda2", "eta"):
                if getattr(self, name) <= 0:
                    raise ConfigError(f"{name} must be positive")
            if self.variant != "adagae" and self.beta <= 0:
                raise ConfigError("beta must be positive")
        return self

    def echo(self) -> Dict:
        return asdict(self)


@dataclass
class RunResult:
    run_id: str
    variant: str
    seed: int
    assignments: ClusterAssignment
    config: Dict
    ami: Optional[float] = None
    ari: Optional[float] = None
    loss_trace: List[float] = field(default_factory=list)
    timings: Dict[str, float] = field(default_factory=dict)
    rounds: int = 1
    embeddings: Optional[np.ndarray] = None
    graph: Optional[object] = None

    @property
    def n_clusters(self) -> int:
        return self.assignments.n_clusters

    @property
    def n_samples(self) -> int:
        return self.assignments.n

    def to_document(self, include_timings: bool = False) -> Dict:
        def percent(value):
            return None if value is None else round(100.0 * value, 4)

        document = {
            "run_id": self.run_id,
            "variant": self.variant,
            "seed": self.seed,
            "n_samples": self.n_samples,
            "n_clusters": self.n_clusters,
            "assignments": self.assignments.labels.tolist(),
            "ami": percent(self.ami),
            "ari": percent(self.ari),
            "rounds": self.rounds,
            "loss_trace": [float(v) for v in self.loss_trace],
            "config": self.config,
        }
        if include_timings:
            document["timings"] = dict(self.timings)
        return document


def run_digest(X: np.ndarray, config: Dict) -> RunId:
    digest = hashlib.sha256(np.ascontiguousarray(X, dtype="<f8").tobytes())
    digest.update(repr(sorted(config.items())).encode("utf-8"))
    return RunId(digest.hexdigest()[:16])


class Run:
    """A finished clustering run as recorded in the run history."""

    events: List[Event] = []

    def __init__(
        self,
        run_id: RunId,
        variant: str,
        seed: int,
        n_samples: int,
        n_clusters: int,
        ami: Optional[float] = None,
        ari: Optional[float] = None,
    ):
        self.run_id = run_id
        self.variant = variant
        self.seed = seed
        self.n_samples = n_samples
        self.n_clusters = n_clusters
        self.ami = ami
        self.ari = ari
        self.events = []  # type: List[Event]

    def __repr__(self):
        return f"<Run {self.run_id} {self.variant}>"

    def __hash__(self):
        return hash(self.run_id)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Run):
            return False
        return self.run_id == other.run_id

    @classmethod
    def record(
        cls,
        result: RunResult,
        out_path: Optional[str] = None,
        include_timings: bool = False,
    ) -> "Run":
        run = cls(
            RunId(result.run_id),
            result.variant,
            result.seed,
            result.n_samples,
            result.n_clusters,
            result.ami,
            result.ari,
        )
        run.events.append(
            RunCompleted(
                run.run_id, run.variant, run.n_clusters, run.ami, run.ari
            )
        )
        if out_path:
            run.events.append(
                ResultRequested(
                    run.run_id,
                    out_path,
                    result.to_document(include_timings),
                )
            )
        return run
