# %% [markdown]
# # Interference sweep on the RK3568
#
# A victim on core 0 runs while core 1 streams through a growing working set.
# Slowdown is victim cycles over the victim's solo baseline. A reduced grid
# keeps this quick; the CLI `sweep` subcommand runs the full one.

# %%
from cachepart.geometry import KiB, MiB, platform_preset
from cachepart.harness import SweepGrid, max_slowdown_table, sweep

rk = platform_preset("rk3568")
grid = SweepGrid(rk, modes=("None", "Way", "Set"), ratios=("1/3", "3/1"),
                 kinds=("read", "modify"), wss=(64 * KiB, 512 * KiB, 2 * MiB))
report = sweep(grid)
print("baseline cycles:", report.baseline.victim_cycles)
for r in report.rows:
    print(f"{r.mode:>4} {r.ratio:>3} {r.kind:>7} {r.wss // KiB:5d} KiB  {r.slowdown:.3f}")

# %% [markdown]
# The maxima per configuration: the unpartitioned run suffers, both
# partitioned layouts keep the victim close to its baseline.

# %%
for key, v in sorted(max_slowdown_table(report).items()):
    print(key[1:], round(v, 3))
