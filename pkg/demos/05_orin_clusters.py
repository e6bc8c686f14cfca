# %% [markdown]
# # Orin: same-cluster vs cross-cluster interference
#
# Each Orin cluster has its own L3, and the clusters meet at a system-level
# cache. Interference from another cluster only reaches the victim through
# that shared level and memory.

# %%
from cachepart.geometry import KiB, MiB, platform_preset
from cachepart.harness import default_victim_wss, run_baseline, run_cell
from cachepart.workloads import VictimSpec

orin = platform_preset("orin")
v = VictimSpec(default_victim_wss(orin))
base = run_baseline(orin, v).victim_cycles
for core, label in ((1, "same cluster"), (orin.clusters[1][0], "other cluster")):
    row = [run_cell(orin, "None", "No", "modify", w, v, baseline_cycles=base,
                    interference_core=core).slowdown for w in (512 * KiB, 2 * MiB, 8 * MiB)]
    print(f"{label:>13}: " + "  ".join(f"{x:.3f}" for x in row))
