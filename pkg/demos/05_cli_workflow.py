"""
Command-line workflow
=====================

Write synthetic CSVs, then drive ``gbst train``, ``gbst predict`` and
``gbst evaluate`` with the bundled ``run.toml``. The same commands work
from a shell, for example::

    gbst train -c demos/run.toml --out out/
"""

import shutil
import tempfile
from pathlib import Path

from gbst.cli import main
from gbst.synthetic import make_survival_data, write_csv

work = Path(tempfile.mkdtemp(prefix="gbst_demo_"))
shutil.copy(Path(__file__).with_name("run.toml"), work / "run.toml")
write_csv(make_survival_data(2000, 10, 12, seed=0), work / "train.csv", segments=3, seed=0)
write_csv(make_survival_data(1000, 10, 12, seed=1), work / "test.csv", segments=3, seed=1)

cfg = str(work / "run.toml")
assert main(["train", "-c", cfg, "--threads", "2"]) == 0
out = work / "out"
print("train wrote:", sorted(p.name for p in out.iterdir()))
print((out / "loss_trace.csv").read_text().splitlines()[:4])

assert main(["predict", "-c", cfg, "--data", str(work / "test.csv"),
             "--out", str(work / "predictions.csv")]) == 0
print("first prediction row:", (work / "predictions.csv").read_text().splitlines()[1][:90], "...")

assert main(["evaluate", "-c", cfg, "--data", str(work / "test.csv"),
             "--out", str(work / "report")]) == 0
print("evaluate wrote:", sorted(p.name for p in (work / "report").iterdir()))
print("outputs kept in", work)
