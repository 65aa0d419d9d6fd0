"""
Un manejador por subcomando.

Construyen el servicio sobre un ResultsRepository y traducen los errores de
dominio a códigos de salida.
"""
from __future__ import annotations

import argparse
import logging

from ..core import settings
from ..core.errors import EXIT_OK, EXIT_TEST_FAILURE, KpzError
from ..models.schemas import ExperimentReport
from ..repositories.results_repo import ResultsRepository
from ..services.experiment_service import ExperimentService

logger = logging.getLogger("kpzlab.cli.commands")

COMMANDS = ("check-tensor", "renorm", "simulate", "invariance-test", "moments", "drift")


def _overrides(args: argparse.Namespace) -> dict:
    return {"seed": args.seed, "replicas": args.replicas}


def _dispatch(service: ExperimentService, args: argparse.Namespace, cfg) -> ExperimentReport:
    workers = args.workers or settings.WORKERS
    if args.command == "check-tensor":
        return service.check_tensor(cfg, random_count=args.random, workers=workers)
    if args.command == "renorm":
        return service.renorm(cfg, workers)
    if args.command == "simulate":
        return service.simulate(cfg, workers)
    if args.command == "invariance-test":
        return service.invariance_experiment(cfg, workers)
    if args.command == "moments":
        return service.moments(cfg, workers)
    return service.drift_experiment(cfg, workers)


def run_command(args: argparse.Namespace) -> int:
    repo = ResultsRepository(args.out)
    service = ExperimentService(repo)
    try:
        cfg = repo.load_config(args.config, _overrides(args))
        report = _dispatch(service, args, cfg)
    except KpzError as e:
        logger.error(f"{args.command} error={type(e).__name__} exit_code={e.exit_code} msg={e}")
        return e.exit_code
    return EXIT_OK if report.passed else EXIT_TEST_FAILURE
