# toimit/config.py - process settings read from the environment
import os
from pathlib import Path


class Settings:
    def __init__(self):
        self.environment = os.getenv("TOIMIT_ENVIRONMENT", "development")

        self.registry_url = os.getenv("TOIMIT_REGISTRY_URL", "sqlite:///./toimit_runs.db")
        self.log_level = os.getenv("TOIMIT_LOG_LEVEL", "INFO").upper()

        raw_jobs = os.getenv("TOIMIT_JOBS", "")
        if raw_jobs.strip():
            self.jobs = max(1, int(raw_jobs))
        else:
            self.jobs = os.cpu_count() or 1

        # Model files and task ranges ship with the package
        default_resources = Path(__file__).resolve().parent / "resources"
        self.resources_dir = Path(os.getenv("TOIMIT_RESOURCES", str(default_resources)))

    @property
    def models_dir(self) -> Path:
        return self.resources_dir / "models"

    @property
    def tasks_dir(self) -> Path:
        return self.resources_dir / "tasks"


settings = Settings()
