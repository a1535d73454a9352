import logging
import sys

from .core.commands import CommandLine, argument
from .core.config import LOG_LEVEL
from .routers import compare, gen, hil, plan, simulate

OUTPUT_ARGS = [argument("--out", default="out", help="output directory")]

cli = CommandLine(prog="wetplan", description="Mission planning and simulation for a mobile WET robot")

cli.include_router(gen.router)
cli.include_router(plan.router, common=OUTPUT_ARGS)
cli.include_router(simulate.router, common=OUTPUT_ARGS)
cli.include_router(hil.router, common=OUTPUT_ARGS)
cli.include_router(compare.router, common=OUTPUT_ARGS)


def main(argv=None) -> int:
    logging.basicConfig(level=LOG_LEVEL, format="%(levelname)s %(name)s: %(message)s")
    return cli.run(argv)


if __name__ == "__main__":
    sys.exit(main())
