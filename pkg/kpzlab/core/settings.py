import os

from dotenv import load_dotenv

load_dotenv()

LOG_LEVEL = os.getenv("KPZ_LOG_LEVEL", "INFO")
OUT_DIR = os.getenv("KPZ_OUT_DIR", "results")
# Trabajadores para las réplicas Monte-Carlo (1 = sin multiprocessing)
WORKERS = int(os.getenv("KPZ_WORKERS", "1"))
# Réplicas por bloque; fija la aritmética independientemente de WORKERS
CHUNK_SIZE = int(os.getenv("KPZ_CHUNK_SIZE", "25"))
K_HARD_LIMIT = int(os.getenv("KPZ_K_HARD_LIMIT", "4096"))
DEFAULT_TOL = float(os.getenv("KPZ_DEFAULT_TOL", "1e-12"))

ARTIFACT_VERSION = "1.0.0"
SCHEMA_VERSION = 1

REPORT_FILE = "report.json"
RUN_META_FILE = "run_meta.json"
