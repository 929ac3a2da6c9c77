"""
A reproducible experiment through the command line
==================================================

Runs the gasket configs at levels 3 and 4 and compares their constants.
Equivalent shell session::

    hkelab run demos/configs/gasket3.ini --out runs/g3 --seed 7
    hkelab run demos/configs/gasket4.ini --out runs/g4 --seed 7
    hkelab compare runs/g3 runs/g4
"""
import json
import tempfile
from pathlib import Path

from hkelab import cli

here = Path(__file__).parent / "configs"
with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    for level in (3, 4):
        manifest = cli.run(here / f"gasket{level}.ini", out=tmp / f"g{level}", seed=7)
        print(f"gasket({level}):", {k: v["status"] for k, v in manifest["steps"].items()})
    drift = cli.compare(tmp / "g3", tmp / "g4")
    for row in drift["drift"]:
        print(f"  {row['step']:10s} {row['constant']:12s} x{row['ratio']:.3f}")
    print("flagged:", json.dumps(drift["flagged"]))
