import logging
from pathlib import Path
from typing import Optional

from ..core.commands import CommandRouter, argument
from ..core.config import CONFIG_DIR
from ..core.store import save_document
from ..engine.scenario import ScenarioFile, generate_scenario

logger = logging.getLogger(__name__)

router = CommandRouter()


def cmd_gen(out_path: Optional[str], blobs: int, ehs: int, arena: float, movers: int, seed: int,
            spread: float = 0.3, eps: Optional[float] = None) -> Path:
    scenario: ScenarioFile = generate_scenario(blobs=blobs, ehs=ehs, arena_size=arena, movers=movers, seed=seed,
                                               spread=spread, eps=eps)
    target = Path(out_path) if out_path else Path(CONFIG_DIR) / f"{scenario.name}.json"
    return save_document(target, scenario)


@router.command("gen", help="synthesize a random clustered scenario", arguments=[
    argument("--blobs", type=int, default=6),
    argument("--ehs", type=int, default=20),
    argument("--arena", type=float, default=10.0, help="square arena side in m"),
    argument("--movers", type=int, default=5),
    argument("--seed", type=int, default=0),
    argument("--spread", type=float, default=0.3, help="blob standard deviation in m"),
    argument("--eps", type=float, default=None, help="clustering radius in m (default twice the spread)"),
    argument("--out", default=None, help="scenario file to write (default under WET_CONFIG_DIR)"),
])
def gen_command(args) -> int:
    print(cmd_gen(args.out, args.blobs, args.ehs, args.arena, args.movers, args.seed, args.spread, args.eps))
    return 0
