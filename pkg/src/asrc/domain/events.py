from dataclasses import dataclass, field
from typing import Dict, Optional


class Event:
    pass


@dataclass
class RunCompleted(Event):
    run_id: str
    variant: str
    n_clusters: int
    ami: Optional[float] = None
    ari: Optional[float] = None


@dataclass
class ResultRequested(Event):
    run_id: str
    out_path: str
    document: Dict = field(default_factory=dict)
