import argparse
import logging
import sys

from . import __version__
from .cli.commands import COMMANDS, run_command
from .core import settings

# Configure basic structured logging
logging.basicConfig(
    level=settings.LOG_LEVEL,
    format='{"ts":"%(asctime)s","level":"%(levelname)s","logger":"%(name)s","msg":"%(message)s"}',
)
logger = logging.getLogger("kpzlab")


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"se esperaba un entero ≥ 1, recibido {value}")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kpzlab",
        description="Toolkit espectral para KPZ acoplado y Burgers estocástico en el toro.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="configuración JSON (SimConfig)")
        p.add_argument("--out", default=settings.OUT_DIR, help="directorio de salida")
        p.add_argument("--seed", type=int, default=None, help="sustituye seed del fichero")
        p.add_argument("--replicas", type=_positive_int, default=None)
        p.add_argument("--workers", type=_positive_int, default=None)
        if name == "check-tensor":
            p.add_argument(
                "--random",
                type=int,
                default=0,
                help="autocomprobación con N tensores aleatorios trilineales y genéricos",
            )
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logger.info(f"command={args.command} config={args.config} out={args.out}")
    return run_command(args)


if __name__ == "__main__":
    sys.exit(main())
