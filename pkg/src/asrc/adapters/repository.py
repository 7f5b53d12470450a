import abc
from typing import List, Optional, Protocol, Set

from sqlalchemy.orm.session import Session

from asrc.domain import model


class AbstractRepository(Protocol):
    @abc.abstractmethod
    def add(self, run: model.Run):
        raise NotImplementedError

    @abc.abstractmethod
    def get(self, run_id: str) -> Optional[model.Run]:
        raise NotImplementedError

    @abc.abstractmethod
    def list(self) -> List[model.Run]:
        raise NotImplementedError


class TrackingRepository:
    seen: Set[model.Run]

    def __init__(self, repo: AbstractRepository):
        self._repo = repo
        self.seen = set()

    def add(self, run: model.Run):
        self._repo.add(run)
        self.seen.add(run)

    def get(self, run_id: str) -> Optional[model.Run]:
        run = self._repo.get(run_id)
        if run:
            self.seen.add(run)
        return run

    def list(self) -> List[model.Run]:
        return self._repo.list()


class SqlAlchemyRepository:
    def __init__(self, session: Session):
        self.session = session

    def add(self, run: model.Run):
        # re-running an identical job replaces its history row
        self.session.merge(run)

    def get(self, run_id: str) -> Optional[model.Run]:
        return self.session.query(model.Run).filter_by(run_id=run_id).first()

    def list(self) -> List[model.Run]:
        return self.session.query(model.Run).order_by(model.Run.run_id).all()
