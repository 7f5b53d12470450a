import json
import logging
from pathlib import Path
from typing import Dict, Union

import numpy as np

logger = logging.getLogger(__name__)


def write_document(path: Union[str, Path], document: Dict) -> None:
    logger.debug(f"Writing result document: {path}")
    with open(path, "w") as f:
        json.dump(document, f, sort_keys=True, indent=2)
        f.write("\n")


def read_assignments(path: Union[str, Path]) -> np.ndarray:
    """The cluster labels stored in a result document."""
    with open(path) as f:
        document = json.load(f)
    return np.asarray(document["assignments"], dtype=np.int64)
