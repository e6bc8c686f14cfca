# %% [markdown]
# # Page colors and the coloring probe
#
# Each linear-indexed cache level splits into page colors: the set-index bits
# above the page offset. This demo prints the color math for every preset and
# then runs the probe on the RK3568 L3. The probe reads same-color chunks
# twice and counts pass-2 prefetch misses.

# %%
from cachepart.cli import cmd_colors
from cachepart.config import RunConfig
from cachepart.geometry import KiB, platform_preset
from cachepart.harness import RunSettings, run_probe

for name in ("zcu102", "rk3568", "rk3588", "orin"):
    print(cmd_colors(RunConfig(platform=name)))

# %% [markdown]
# One color of the 512 KiB 16-way L3 holds 64 KiB. Up to that size, pass 2
# hits everywhere. Past it, same-color chunks start evicting each other.

# %%
rk = platform_preset("rk3568")
sizes = [16, 32, 48, 64, 80, 96, 128, 192]
for p in run_probe(rk, [s * KiB for s in sizes], settings=RunSettings(hw_prefetch=False)):
    print(f"{p.size // KiB:4d} KiB  miss ratio {p.miss_ratio:.3f}")
