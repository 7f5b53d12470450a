import numpy as np
import pytest
from sqlalchemy import create_engine
from sqlalchemy.orm import clear_mappers, sessionmaker
from sqlalchemy.pool import StaticPool

from asrc.adapters.orm import metadata, start_mappers
from asrc.domain.model import PipelineConfig
from asrc.domain.numerics import SeededRng


@pytest.fixture
def in_memory_db():
    engine = create_engine(
        "sqlite://",
        connect_args={"check_same_thread": False},
        poolclass=StaticPool,
    )
    metadata.create_all(engine)
    return engine


@pytest.fixture
def session_factory(in_memory_db):
    start_mappers()
    yield sessionmaker(bind=in_memory_db)
    clear_mappers()


@pytest.fixture
def session(session_factory):
    return session_factory()


@pytest.fixture
def rng():
    return SeededRng(1234)


@pytest.fixture
def small_config():
    """A schedule short enough for unit tests on a few dozen samples."""
    return PipelineConfig(
        k0=3,
        s=2,
        t1=2,
        t2=1,
        inner_steps=10,
        t3=30,
        rounds=1,
        struct="d-16-8",
        seed=3,
    )


@pytest.fixture
def write_csv(tmp_path):
    def _write_csv(name, rows):
        path = tmp_path / name
        path.write_text(
            "".join(",".join(str(v) for v in row) + "\n" for row in rows)
        )
        return str(path)

    return _write_csv


@pytest.fixture
def write_labels(tmp_path):
    def _write_labels(name, labels):
        path = tmp_path / name
        path.write_text("".join(f"{int(v)}\n" for v in np.ravel(labels)))
        return str(path)

    return _write_labels
