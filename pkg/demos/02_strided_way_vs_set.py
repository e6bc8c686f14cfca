# %% [markdown]
# # Strided conflicts: way vs set partitioning
#
# A core that owns a quarter of the L3 can get it as 4 of 16 ways over all
# sets, or as all 16 ways over a quarter of the sets. A strided stream that
# puts 16 lines into each of 128 sets fits the second shape and thrashes the
# first.

# %%
from cachepart.geometry import platform_preset
from cachepart.harness import run_strided

rk = platform_preset("rk3568")
print(f"{'sets':>5} {'mode':>5} {'cycles':>10} {'L3 misses':>10}")
for p in run_strided(rk, (128, 256, 384), repetitions=8):
    print(f"{p.sets:5d} {p.mode:>5} {p.cycles:10d} {p.l3_misses:10d}")
