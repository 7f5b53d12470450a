from dataclasses import dataclass, field
from typing import Dict, List, Optional


class Command:
    pass


@dataclass
class RunClustering(Command):
    data_path: str
    config_path: Optional[str] = None
    labels_path: Optional[str] = None
    variant: Optional[str] = None
    seed: Optional[int] = None
    out_path: Optional[str] = None
    fmt: str = "csv"
    header: bool = False
    n_clusters: Optional[int] = None
    timings: bool = False


@dataclass
class Synthesize(Command):
    kind: str
    n: int
    out_path: str
    labels_path: str
    noise: float = 0.05
    c: int = 4
    separation: float = 10.0
    spread: float = 1.0
    seed: int = 0
    fmt: str = "csv"


@dataclass
class Evaluate(Command):
    pred_path: str
    labels_path: str


@dataclass
class Sweep(Command):
    data_path: str
    labels_path: str
    grid: Dict[str, List] = field(default_factory=dict)
    config_path: Optional[str] = None
    variant: Optional[str] = None
    seed: Optional[int] = None
    out_path: Optional[str] = None
    fmt: str = "csv"
    header: bool = False
