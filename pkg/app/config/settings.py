import os
from pydantic_settings import BaseSettings
from dotenv import load_dotenv

# Cargar variables de entorno desde el archivo .env
load_dotenv()

class Settings(BaseSettings):
    # Configuraciones de la App
    OUTPUT_DIR: str = os.getenv("OUTPUT_DIR", "./data/out")
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    LOG_FILE: str = os.getenv("LOG_FILE", "")

    # Paralelismo (nunca cambia los bytes de salida)
    STRUCTMC_THREADS: int = int(os.getenv("STRUCTMC_THREADS", 1))

    # Estadística
    BOOTSTRAP_RESAMPLES: int = int(os.getenv("BOOTSTRAP_RESAMPLES", 500))
    CONFIDENCE_LEVEL: float = float(os.getenv("CONFIDENCE_LEVEL", 0.95))
    VERDICT_LEVEL: float = float(os.getenv("VERDICT_LEVEL", 0.99))

    # Muestreo
    HALTON_SKIP: int = int(os.getenv("HALTON_SKIP", 20))

    # Oráculos Monte Carlo congelados (kernels Tanh / Sine)
    ORACLE_SAMPLES: int = int(os.getenv("ORACLE_SAMPLES", 10_000_000))
    ORACLE_SEED: int = int(os.getenv("ORACLE_SEED", 20200406))
    ORACLE_CHUNK: int = int(os.getenv("ORACLE_CHUNK", 1_000_000))

    # Sliced Wasserstein
    SWD_ORACLE_DIRECTIONS: int = int(os.getenv("SWD_ORACLE_DIRECTIONS", 1_000_000))
    SWD_REFERENCE_DIRECTIONS: int = int(os.getenv("SWD_REFERENCE_DIRECTIONS", 4000))

    # Regla de escalado de datasets (distancia al 50º vecino)
    NN_SAMPLE_SIZE: int = int(os.getenv("NN_SAMPLE_SIZE", 1000))
    NN_RANK: int = int(os.getenv("NN_RANK", 50))

    model_config = {
        "env_file": ".env",
        "extra": "ignore"  # Ignorar campos adicionales en lugar de lanzar un error
    }

settings = Settings()
