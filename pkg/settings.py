#!/usr/bin/env python3
"""
Runtime settings for the gw-shm toolkit.
Everything here can be overridden from the environment.
"""
import os

# Configuration
DEFAULT_SEED = int(os.environ.get("GWSHM_SEED", 1234))
LOG_LEVEL = os.environ.get("GWSHM_LOG_LEVEL", "INFO").upper()
OUT_DIR = os.environ.get("GWSHM_OUT_DIR", "out")
WORKERS = max(1, int(os.environ.get("GWSHM_WORKERS", 1)))

# Inference service
PORT = int(os.environ.get("PORT", 10000))
MODEL_IMAGE = os.environ.get("GWSHM_MODEL_IMAGE", os.path.join(OUT_DIR, "model", "detector.gwae"))

# Capture defaults (10 Msps, 4096 samples)
SAMPLE_RATE_HZ = 10_000_000
RECORD_LENGTH = 4096
WINDOW_SECONDS = 200e-6
REFERENCE_TEMPERATURE_C = 30.0

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
