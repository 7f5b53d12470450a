import functools
import inspect
from typing import Callable, Dict, Optional

from asrc.adapters import orm, result_store
from asrc.service_layer import handlers, messagebus, unit_of_work


def bootstrap(
    start_orm: bool = True,
    uow: Optional[unit_of_work.AbstractUnitOfWork] = None,
    write_document: Callable = result_store.write_document,
    retry_wait: float = 2,
    retry_attempts: int = 3,
) -> messagebus.MessageBus:
    """Wire handlers to the run history and the result writer."""
    if uow is None:
        uow = unit_of_work.SqlAlchemyUnitOfWork()

    if start_orm:
        orm.start_mappers()
        if isinstance(uow, unit_of_work.SqlAlchemyUnitOfWork):
            orm.metadata.create_all(uow.session_factory.kw["bind"])

    dependencies = {"uow": uow, "write_document": write_document}
    return messagebus.MessageBus(
        uow=uow,
        event_handlers={
            event_type: [inject_dependencies(h, dependencies) for h in subscribers]
            for event_type, subscribers in handlers.EVENT_HANDLERS.items()
        },
        command_handlers={
            command_type: inject_dependencies(handler, dependencies)
            for command_type, handler in handlers.COMMAND_HANDLERS.items()
        },
        retry_wait=retry_wait,
        retry_attempts=retry_attempts,
    )


def inject_dependencies(handler: Callable, dependencies: Dict) -> Callable:
    """Bind the dependencies a handler names; it keeps its own __name__."""
    wanted = inspect.signature(handler).parameters
    bound = {name: dep for name, dep in dependencies.items() if name in wanted}
    if not bound:
        return handler
    return functools.update_wrapper(functools.partial(handler, **bound), handler)
