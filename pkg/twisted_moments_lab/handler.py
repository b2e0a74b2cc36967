import inspect
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Awaitable, Callable

from .config import RunConfig
from .constants import Subcommand
from .schemas import LabReport

if TYPE_CHECKING:
    from .dispatcher import Dispatcher


@dataclass(slots=True)
class Outcome:
    """
    Artifacts of one subcommand

    Attributes:
        content: text written to --out
        report: the audited report, when the subcommand produces one
        extra_files: further (path, text) artifacts such as a plot
    """

    content: str
    report: LabReport | None = None
    extra_files: list[tuple[Path, str]] = field(default_factory=list)


class BaseHandler(object):
    def __init__(self, callback: Callable[..., Awaitable[Outcome]]):
        self.callback = callback

    def check(self, config: RunConfig) -> bool:
        raise NotImplementedError

    async def check_signature(self, dispatcher: "Dispatcher") -> dict:
        """Parameters annotated with a provider the dispatcher knows"""
        signature = inspect.signature(self.callback)
        depends = {}

        for key, value in signature.parameters.items():
            metadata = getattr(value.annotation, "__metadata__", None)
            provider = metadata[0] if metadata else value.annotation
            if provider in dispatcher.depends:
                depends[key] = provider
        return depends

    async def handle(self, config: RunConfig, dispatcher: "Dispatcher") -> Outcome:
        handle_kwargs = await self.check_signature(dispatcher)

        objects = {}
        for item_name, item_func in handle_kwargs.items():
            if inspect.iscoroutinefunction(item_func):
                objects[item_name] = await item_func(config, dispatcher.settings)
                continue
            objects[item_name] = item_func(config, dispatcher.settings)
        return await self.callback(config, **objects)


class SubcommandHandler(BaseHandler):
    def __init__(self, subcommand: Subcommand, callback):
        super(SubcommandHandler, self).__init__(callback=callback)
        self.subcommand = subcommand

    def check(self, config: RunConfig) -> bool:
        return config.subcommand == self.subcommand
