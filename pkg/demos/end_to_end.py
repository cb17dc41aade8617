"""Run the whole pipeline on a synthetic meter file, then compare K=2 with a single GAN.

Writes two workspaces under ./demo-runs and prints their L1 reports.
A small training budget keeps this under a minute on one core.
"""

import sys
from pathlib import Path

from ergan import cli, data

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-runs")
out.mkdir(parents=True, exist_ok=True)

ds = data.fixture_generate([("morning_peak", 40, 0.05), ("evening_peak", 40, 0.05)], seed=0)
meter = out / "meter.csv"
meter.write_bytes(data.profiles_to_readings(ds, households=8))
print(f"wrote {meter} ({len(ds)} household-days)")

budget = ["--hidden", "8", "--layers", "2", "--epochs", "150", "--lr", "0.003",
          "--stat-mode", "hourly", "--svg"]
for name, k in (("ensemble", "2"), ("baseline", "1")):
    ws = out / name
    code = cli.main(["pipeline", "--input", str(meter), "--workspace", str(ws), "--k", k, *budget])
    if code:
        sys.exit(code)
    print(f"\n{name} (K={k})")
    print((ws / "reports" / "l1_report.csv").read_text().strip())
