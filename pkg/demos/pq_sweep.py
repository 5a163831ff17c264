"""
Small (p, q) sweep through the batch pipeline, the same code path as
``gmdp mix`` followed by ``gmdp sweep``. Prints the best cells next to the
MDP baseline.
"""
import csv
import io
import tempfile
from pathlib import Path

from gmdp.experiment import MixSettings, RunConfig, SweepSettings, cmd_mix, cmd_sweep, parse_grid
from gmdp.simulate import MixConfig

with tempfile.TemporaryDirectory() as tmp:
    settings = MixSettings(mix=MixConfig(K=2, seed=100), n_scenarios=4, duration=5.0)
    manifest = cmd_mix(settings, Path(tmp) / "mix")
    grid = parse_grid("0.25:2.0:0.25")
    sweep = SweepSettings(p_grid=grid, q_grid=grid, baselines=True)
    rows = list(csv.DictReader(io.StringIO(cmd_sweep(manifest, RunConfig(), sweep))))

base = {r["method"]: r for r in rows if r["method"] != "gmdp"}
cells = [r for r in rows if r["method"] == "gmdp"]
for name in ("pb", "mdp"):
    print(f"{name:>4}: SDR {float(base[name]['mean_si_sdr']):6.2f}  SIR {float(base[name]['mean_si_sir']):6.2f}")
for key in ("mean_si_sdr", "mean_si_sir"):
    top = sorted(cells, key=lambda r: -float(r[key]))[:3]
    print(f"best by {key}:")
    for r in top:
        print(f"  p={r['p']:<5} q={r['q']:<5} SDR {float(r['mean_si_sdr']):6.2f}  "
              f"SIR {float(r['mean_si_sir']):6.2f}  median iters {r['median_iters']}")
