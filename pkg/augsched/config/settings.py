from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level settings"""

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")

    # Base settings
    APP_NAME: str = "augsched"
    LOG_LEVEL: str = "INFO"

    # Upper bound on concurrently executing runs in run_suite
    AUGSCHED_THREADS: int = 1

    # Default root for run artifacts when a config does not name one
    AUGSCHED_OUTPUT_DIR: str = "runs"


# Initialize settings object
settings = Settings()
