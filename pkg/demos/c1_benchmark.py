"""Regenerate tests/fixtures/c1_benchmark.csv (and raw_c1_benchmark.csv).

Twenty sim51 replications with every estimator under the natural course.
Set BGFORMULA_WORKERS to spread replications over processes; a single core
needs several hours.
"""
import json
import logging
import sys
from pathlib import Path

import numpy as np

from bgformula.benchmark import benchmark_csv, raw_csv, run_benchmark
from bgformula.config import load_config

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"

logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
cfg = load_config(FIXTURES / "c1_benchmark.ini")
truth = json.loads((FIXTURES / "sim51_natural_truth.json").read_text())
res = run_benchmark(cfg, np.asarray(truth["risk"]), np.asarray(truth["se"]))

out = Path(sys.argv[1]) if len(sys.argv) > 1 else FIXTURES
benchmark_csv(res, out / "c1_benchmark.csv")
raw_csv(res, out / "raw_c1_benchmark.csv")
print(benchmark_csv(res), end="")
