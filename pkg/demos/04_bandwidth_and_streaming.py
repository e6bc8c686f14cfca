# %% [markdown]
# # Memory bandwidth and write streaming
#
# Interference bandwidth is derived from BUS_ACCESS over a fixed window. It
# climbs once the working set stops fitting in the cache share the
# interference owns, then flattens at the controller limit.

# %%
from cachepart.geometry import KiB, MiB, platform_preset
from cachepart.harness import RunSettings, bandwidth_profile, default_victim_wss, run_baseline, run_cell
from cachepart.workloads import VictimSpec

rk = platform_preset("rk3568")
wss = [256 * KiB, 512 * KiB, 768 * KiB, 1 * MiB, 4 * MiB]
for mode, ratio in (("None", "No"), ("Way", "1/3")):
    bw = bandwidth_profile(rk, wss, mode=mode, ratio=ratio)
    print(mode, ratio, [round(p.bytes_per_kcycle) for p in bw], "B/kcycle")

# %% [markdown]
# Full-line write runs engage streaming and skip allocation, so write
# interference barely touches the victim. With streaming switched off the
# writes allocate, and only a partition protects the victim.

# %%
v = VictimSpec(default_victim_wss(rk))
for flag in (True, False):
    s = RunSettings(write_streaming=(flag,) * 3)
    base = run_baseline(rk, v, s).victim_cycles
    for mode, ratio in (("None", "No"), ("Way", "3/1")):
        r = run_cell(rk, mode, ratio, "write", 512 * KiB, v, s, base)
        print(f"streaming={flag!s:5} {mode:>4} {ratio}: slowdown {r.slowdown:.3f}")
