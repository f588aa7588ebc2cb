from pathlib import Path
from typing import Optional

from pydantic_settings import BaseSettings, JsonConfigSettingsSource, SettingsConfigDict


class Settings(BaseSettings):
    REGISTRY: Optional[Path] = None
    CACHE: Optional[Path] = None

    CRAN_URL: str = "https://cran.r-project.org"
    CRANDB_URL: str = "https://crandb.r-pkg.org"
    BIOC_URL: str = "https://bioconductor.org"
    GITHUB_API_URL: str = "https://api.github.com"
    GITHUB_RAW_URL: str = "https://raw.githubusercontent.com"
    CODELOAD_URL: str = "https://codeload.github.com"
    GITHUB_TOKEN: Optional[str] = None

    HTTP_TIMEOUT: float = 30.0
    MAX_WORKERS: int = 8
    DOWNLOAD_WORKERS: int = 4

    DEFAULT_OS: str = "ubuntu-18.04"
    BIOC_NAMES_FILE: Optional[Path] = None
    SYSREQS_RULES_FILE: Optional[Path] = None

    model_config = SettingsConfigDict(env_prefix="CHRONO_", env_file=".env", extra="ignore")


def load_settings(config_file: Optional[Path] = None, **overrides) -> Settings:
    """Build settings from defaults, an optional JSON config file, .env and the environment.

    Explicit ``overrides`` (CLI flags) win over everything else.
    """
    if config_file is None:
        return Settings(**overrides)

    class FileSettings(Settings):
        model_config = SettingsConfigDict(json_file=config_file)

        @classmethod
        def settings_customise_sources(cls, settings_cls, init_settings, env_settings,
                                       dotenv_settings, file_secret_settings):
            return (init_settings, env_settings, dotenv_settings,
                    JsonConfigSettingsSource(settings_cls), file_secret_settings)

    return FileSettings(**overrides)


settings = Settings()
