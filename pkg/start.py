"""
Script para ejecutar structmc desde la raíz del repositorio.

Uso:
- python start.py sample --config config.json
- python start.py bench-kernel --config bench.json --threads 4 --out ./data/out
- python start.py diagnose --config nd.json
"""

import os
import sys

# Añadir el directorio actual al path para importaciones
sys.path.insert(0, os.path.abspath(os.path.dirname(__file__)))

from app.main import main

if __name__ == "__main__":
    sys.exit(main())
