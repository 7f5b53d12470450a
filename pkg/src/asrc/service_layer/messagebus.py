import logging
from typing import Any, Callable, Dict, List, Type, Union

from tenacity import RetryError, Retrying, stop_after_attempt, wait_exponential

from asrc.domain import commands, events
from asrc.service_layer import unit_of_work

Message = Union[commands.Command, events.Event]
logger = logging.getLogger(__name__)


class MessageBus:
    """Runs a command and then every event the recorded runs raise.

    Event handlers only have side effects (logging, result documents), so a
    failing one is retried and then dropped; a failing command propagates.
    """

    def __init__(
        self,
        uow: unit_of_work.AbstractUnitOfWork,
        event_handlers: Dict[Type[events.Event], List[Callable]],
        command_handlers: Dict[Type[commands.Command], Callable],
        retry_wait: float = 2,
        retry_attempts: int = 3,
    ) -> None:
        self.uow = uow
        self.event_handlers = event_handlers
        self.command_handlers = command_handlers
        self.retry_wait = retry_wait
        self.retry_attempts = retry_attempts
        self.queue: List[Message] = []

    def handle(self, message: Message) -> List:
        results = []
        self.queue = [message]
        while self.queue:
            message = self.queue.pop(0)
            if isinstance(message, commands.Command):
                results.append(self.handle_command(message))
            elif isinstance(message, events.Event):
                self.handle_event(message)
            else:
                raise TypeError(f"Unknown message type {type(message)}")
        return results

    def _retrying(self) -> Retrying:
        return Retrying(
            stop=stop_after_attempt(self.retry_attempts),
            wait=wait_exponential(multiplier=self.retry_wait),
        )

    def handle_event(self, event: events.Event) -> None:
        name = type(event).__name__
        for handler in self.event_handlers.get(type(event), []):
            try:
                for attempt in self._retrying():
                    with attempt:
                        number = attempt.retry_state.attempt_number
                        logger.debug(
                            f"{handler.__name__} <- {name} (attempt {number})"
                        )
                        handler(event)
                        self.queue.extend(self.uow.collect_new_events())
            except RetryError as retry_failure:
                cause = retry_failure.last_attempt.exception()
                logger.error(
                    f"Retry error: {handler.__name__} gave up on {name}: {cause}"
                )

    def handle_command(self, command: commands.Command) -> Any:
        handler = self.command_handlers[type(command)]
        logger.debug(f"Handling command: {command}")
        try:
            result = handler(command)
        except Exception:
            logger.exception(f"{type(command).__name__} failed")
            raise
        self.queue.extend(self.uow.collect_new_events())
        return result
