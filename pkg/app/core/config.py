# app/core/config.py
from typing import Optional
from pydantic import BaseModel
import os

class Settings(BaseModel):
    PROJECT_NAME: str = "tailsift"
    APP_NAME: str = "tailsift"
    APP_VERSION: str = "1.0.0"
    VERSION: str = "1.0.0"

    # Artifact schema version, bumped whenever a persisted layout changes
    ARTIFACT_VERSION: int = int(os.getenv("TAILSIFT_ARTIFACT_VERSION", "1"))

    # Execution settings
    N_WORKERS: int = int(os.getenv("TAILSIFT_WORKERS", "1"))
    TORCH_THREADS: int = int(os.getenv("TAILSIFT_TORCH_THREADS", "1"))
    OUTPUT_DIR: str = os.getenv("TAILSIFT_OUTPUT_DIR", "runs")

    # Logging settings
    LOG_LEVEL: str = os.getenv("TAILSIFT_LOG_LEVEL", "INFO")
    LOG_FORMAT: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

    # Optional default run config, used when --config is omitted
    DEFAULT_CONFIG: Optional[str] = os.getenv("TAILSIFT_CONFIG")

settings = Settings()
