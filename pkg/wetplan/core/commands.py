"""Sub-command routing.

Each feature module owns a ``CommandRouter`` and registers its handlers with
``@router.command(...)``; ``main`` includes every router into one
``CommandLine``, mirroring ``APIRouter`` / ``include_router``.
"""

import argparse
import logging
from typing import Callable, List, NamedTuple, Optional, Sequence, Tuple

from .errors import UsageError, WetError

logger = logging.getLogger(__name__)

ArgumentSpec = Tuple[Tuple[str, ...], dict]


def argument(*flags: str, **kwargs) -> ArgumentSpec:
    return flags, kwargs


class Command(NamedTuple):
    name: str
    help: str
    arguments: Sequence[ArgumentSpec]
    handler: Callable[[argparse.Namespace], int]


class CommandRouter:
    def __init__(self):
        self.commands: List[Command] = []

    def command(self, name: str, help: str = "", arguments: Sequence[ArgumentSpec] = ()):
        def decorator(fn):
            self.commands.append(Command(name, help, list(arguments), fn))
            return fn
        return decorator


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for infeasibility here
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class CommandLine:
    def __init__(self, prog: str, description: str = ""):
        self.parser = _Parser(prog=prog, description=description)
        self.subparsers = self.parser.add_subparsers(dest="command", required=True)

    def include_router(self, router: CommandRouter, common: Sequence[ArgumentSpec] = ()):
        for command in router.commands:
            sub = self.subparsers.add_parser(command.name, help=command.help)
            for flags, kwargs in list(common) + list(command.arguments):
                sub.add_argument(*flags, **kwargs)
            sub.set_defaults(handler=command.handler)

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        try:
            args = self.parser.parse_args(argv)
            return int(args.handler(args) or 0)
        except WetError as e:
            logger.error(e.detail)
            return e.exit_code
