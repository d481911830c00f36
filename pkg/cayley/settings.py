"""
Ajustes del proceso desde variables de entorno CAYLEY_FORGE_* y .env
"""
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class ForgeSettings(BaseSettings):
    """Ajustes que no dependen del escenario"""

    model_config = SettingsConfigDict(env_prefix="CAYLEY_FORGE_", env_file=".env", extra="ignore")

    threads: int = Field(1, ge=1, description="Tamaño del pool para barridos en t")
    cache_dir: Path = Field(Path(".cache"), description="Directorio de la caché de operadores")
    log_level: str = Field("INFO", description="Nivel de logging")
    output_dir: Path = Field(Path("out"), description="Directorio de salida por defecto")
