import abc
import logging
from typing import Iterator, List

from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool

from asrc import config
from asrc.adapters import repository
from asrc.domain import events

logger = logging.getLogger(__name__)


def _engine(uri: str):
    if uri in ("sqlite://", "sqlite:///:memory:"):
        # one shared connection, or every session sees an empty database
        return create_engine(
            uri,
            connect_args={"check_same_thread": False},
            poolclass=StaticPool,
        )
    return create_engine(uri)


DEFAULT_ENGINE = _engine(config.get_database_uri())
DEFAULT_SESSION_FACTORY = sessionmaker(bind=DEFAULT_ENGINE)


class AbstractUnitOfWork(abc.ABC):
    """One write to the run history.

    Events raised by recorded runs are published only once the runs are
    committed; a rollback drops them.
    """

    runs: repository.AbstractRepository

    def __init__(self):
        self.outbox: List[events.Event] = []

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, traceback):
        if exc is not None:
            logger.warning(f"rolling back run history: {type(exc).__name__}: {exc}")
        self.rollback()

    @abc.abstractmethod
    def _commit(self):
        raise NotImplementedError

    @abc.abstractmethod
    def _rollback(self):
        raise NotImplementedError

    def commit(self):
        self._commit()
        for run in self.runs.seen:
            if run.events:
                logger.debug(f"committed {run.run_id}")
            self.outbox.extend(run.events)
            run.events.clear()

    def rollback(self):
        self._rollback()
        for run in self.runs.seen:
            if run.events:
                logger.debug(f"dropping {len(run.events)} events of {run.run_id}")
            run.events.clear()

    def collect_new_events(self) -> Iterator[events.Event]:
        while self.outbox:
            yield self.outbox.pop(0)


class SqlAlchemyUnitOfWork(AbstractUnitOfWork):
    def __init__(self, session_factory=DEFAULT_SESSION_FACTORY):
        super().__init__()
        self.session_factory = session_factory

    def __enter__(self):
        self.session = self.session_factory()
        self.runs = repository.TrackingRepository(
            repository.SqlAlchemyRepository(self.session)
        )
        return super().__enter__()

    def __exit__(self, *args):
        super().__exit__(*args)
        self.session.close()

    def _commit(self):
        self.session.commit()

    def _rollback(self):
        self.session.rollback()
