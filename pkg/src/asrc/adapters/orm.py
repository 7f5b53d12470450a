from sqlalchemy import (
    Column,
    Float,
    Integer,
    MetaData,
    String,
    Table,
    event,
    inspect,
)
from sqlalchemy.exc import NoInspectionAvailable
from sqlalchemy.orm import mapper

from asrc.domain import model

metadata = MetaData()
runs = Table(
    "runs",
    metadata,
    Column("run_id", String(16), primary_key=True),
    Column("variant", String(16), nullable=False),
    Column("seed", Integer, nullable=False),
    Column("n_samples", Integer, nullable=False),
    Column("n_clusters", Integer, nullable=False),
    Column("ami", Float, nullable=True),
    Column("ari", Float, nullable=True),
)


def start_mappers():
    try:
        inspect(model.Run)
    except NoInspectionAvailable:
        mapper(model.Run, runs)


@event.listens_for(model.Run, "load")
def receive_load(run, _):
    run.events = []
