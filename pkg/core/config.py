"""Application configuration settings"""

from typing import Optional
from pydantic_settings import BaseSettings, SettingsConfigDict
from pydantic import Field, field_validator


class Settings(BaseSettings):
    # Application
    APP_NAME: str = "Factor Research Framework"
    APP_VERSION: str = "1.0.0"
    APP_ENV: str = Field(default="development")
    DEBUG: bool = Field(default=False)

    # Paths
    DATA_DIR: str = Field(default="data")
    OUT_DIR: str = Field(default="out")
    CONFIG_FILE: Optional[str] = Field(default=None)

    # Execution
    SEED: int = Field(default=0)
    THREADS: int = Field(default=1)

    # Monitoring
    LOG_LEVEL: str = Field(default="INFO")
    LOG_FORMAT: str = Field(default="console")

    @field_validator("THREADS")
    @classmethod
    def validate_threads(cls, v):
        if v == 0 or v < -1:
            raise ValueError("THREADS must be a positive integer or -1 (all cores)")
        return v

    @field_validator("LOG_FORMAT")
    @classmethod
    def validate_log_format(cls, v):
        if v not in ("json", "console"):
            raise ValueError("LOG_FORMAT must be 'json' or 'console'")
        return v

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )


settings = Settings()
