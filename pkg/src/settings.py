"""Process-level settings read from the environment (and .env)."""

import os
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class Settings:
    """Defaults shared by the CLI and the library."""
    jobs: int = 1
    out_dir: Path = Path("results")
    log_level: str = "INFO"

    @classmethod
    def from_env(cls) -> "Settings":
        """Build settings from HCDD_* environment variables."""
        return cls(
            jobs=max(1, int(os.getenv("HCDD_JOBS", "1"))),
            out_dir=Path(os.getenv("HCDD_OUT_DIR", "results")),
            log_level=os.getenv("HCDD_LOG_LEVEL", "INFO").upper(),
        )


def max_dense_dimension() -> int:
    """Dimension below which direct solves use dense Cholesky."""
    return int(os.getenv("HCDD_MAX_DENSE", "400"))


def factor_cache_bytes() -> int:
    """Memory the hybrid preconditioner may spend on kept local factorizations."""
    return int(float(os.getenv("HCDD_FACTOR_CACHE_MB", "2048")) * 2 ** 20)
