"""Four treatment-initiation regimes on a four-period synthetic cohort, from the CLI."""
# %%
import tempfile
from pathlib import Path

from bgformula.cli import main

regimes = "static:1,1,1,1;static:0,1,1,1;static:0,0,1,1;static:0,0,0,1"
with tempfile.TemporaryDirectory() as tmp:
    data = Path(tmp) / "cohort.csv"
    main(["simulate", "--dgp", "mixed", "--T", "4", "--n", "2000", "--seed", "5",
          "--set", "data.a_on_y=-0.8", "-o", str(data)])
    main(["estimate", "--data", str(data), "--schema", str(data.with_suffix(".schema.ini")),
          "--T", "4", "--regimes", regimes, "--specs", "cov-bs",
          "--n-iter", "1500", "--n-burn", "500", "--K", "2000", "--R", "50",
          "--set", "bart.num_trees=50", "--out", tmp])
    print((Path(tmp) / "summary.csv").read_text())
