import logging
import sys
from typing import TYPE_CHECKING, Callable

from .config import LabSettings, RunConfig
from .errors import LabError
from .helpers import async_write_atomic

if TYPE_CHECKING:
    from .handler import BaseHandler, Outcome

logger = logging.getLogger(__name__)


class Dispatcher(object):
    def __init__(self, settings: LabSettings, depends: list[Callable] | None = None):
        self.settings = settings
        self.handlers: list["BaseHandler"] = []
        self.depends = depends or []

    async def dispatch(self, config: RunConfig) -> "Outcome":
        for handler in self.handlers:
            if handler.check(config):
                outcome = await handler.handle(config, self)
                if config.out is None:
                    sys.stdout.write(outcome.content)
                    sys.stdout.flush()
                else:
                    await async_write_atomic(config.out, outcome.content)
                for path, content in outcome.extra_files:
                    await async_write_atomic(path, content)
                logger.info(f"{config.subcommand} wrote {config.out or 'stdout'}")
                return outcome
        raise LabError(f"no handler for {config.subcommand}")

    def add_handler(self, handler: "BaseHandler"):
        self.handlers.append(handler)
