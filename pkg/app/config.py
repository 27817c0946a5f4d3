import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


class Settings:
    # Base directory for the application
    BASE_DIR: Path = Path(__file__).resolve().parent.parent

    # Where CLI runs write their CSV files unless an explicit path is given
    OUTPUT_DIR: Path = Path(os.getenv("FRACFPE_OUTPUT_DIR", str(BASE_DIR / "output")))

    # Logging
    LOG_LEVEL: str = os.getenv("FRACFPE_LOG_LEVEL", "INFO")
    LOG_FORMAT: str = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    # Parallelism cap for grid evaluation
    THREADS: int = max(1, int(os.getenv("FRACFPE_THREADS", os.cpu_count() or 1)))

    # Series / quadrature defaults
    REL_TOL: float = float(os.getenv("FRACFPE_REL_TOL", "1e-10"))
    MAX_TERMS: int = int(os.getenv("FRACFPE_MAX_TERMS", "10000"))
    MAX_QUAD_DEPTH: int = int(os.getenv("FRACFPE_MAX_QUAD_DEPTH", "200"))

    # Knots of the cached tau table for quadrature-backed time maps
    TAU_KNOTS: int = int(os.getenv("FRACFPE_TAU_KNOTS", "512"))

    # |denominator| below POLE_RTOL * local scale counts as a pole
    POLE_RTOL: float = 1e-12
    # Largest exponent accepted before a RangeError
    EXP_CUTOFF: float = 700.0

    # Half-width of the velocity window (in units of sqrt(B/eta)) used when an
    # ingredient function has to be integrated numerically
    RECONCILE_HALF_WIDTH: float = 6.0

    # CSV float format: 17 significant digits round-trips binary64 exactly
    FLOAT_FORMAT: str = ".17g"

    def ensure_output_dir(self) -> Path:
        os.makedirs(self.OUTPUT_DIR, exist_ok=True)
        return self.OUTPUT_DIR


# Instantiate settings object
settings = Settings()
