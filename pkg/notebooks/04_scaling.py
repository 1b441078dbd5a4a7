# %% [markdown]
# # Scaling of the best upper bound
#
# The theory says the acquisition number of `G(n, r)` is of order
# `n / (r lg r)^2` in the middle range of `r`.  The sweep in
# `configs/scaling.yaml` measures the best protocol found at `n = 10^6` for
# `r` in {4, 8, 16, 32}; the acceptance suite leaves its CSV in `results/`.
# If the file is missing, a small sweep is run instead.

# %%
import io
import math
import pathlib

import numpy as np

from acquire_rgg import experiments as exp

here = pathlib.Path(__file__).resolve().parent if "__file__" in globals() else pathlib.Path.cwd()
csv_path = here.parent / "results" / "scaling.csv"
if csv_path.exists():
    with open(csv_path, newline="") as fh:
        records = exp.read_records(fh)
    min_seeds = 10
else:
    cfg = exp.parse_config({"seed": 1, "trials": 2, "methods": ["greedy"],
                            "grid": [{"n": 100_000, "r": [4, 8, 16, 32]}]})
    records = exp.run_sweep(cfg, io.StringIO())
    min_seeds = 2
print(len(records), "trials")

# %% [markdown]
# ## Per-radius summary
#
# `const` is the residual times `(r lg r)^2 / n`: flat if the law holds with
# no extra logarithms.

# %%
print(f"{'r':>4s} {'lower':>7s} {'greedy':>8s} {'tess':>8s} {'const':>7s}")
for r in sorted({rec.r for rec in records}):
    rows = [rec for rec in records if rec.r == r]
    lo = np.median([rec.best_lower for rec in rows if rec.best_lower is not None])
    gr = np.median([rec.upper_greedy for rec in rows if rec.upper_greedy is not None])
    ts = [rec.upper_tessellation for rec in rows if rec.upper_tessellation is not None]
    ts = np.median(ts) if ts else float("nan")
    const = gr * (r * math.log2(r)) ** 2 / rows[0].n
    print(f"{r:4.0f} {lo:7.0f} {gr:8.0f} {ts:8.0f} {const:7.2f}")

# %% [markdown]
# ## Fit
#
# The slope of `log(best upper)` against `log(r lg r)` lands near -1.42: the
# greedy residual behaves like `n / r^2` at these radii, so the normalised
# constant drifts like `lg^2 r` and the drift flag fires.  The slope still sits
# inside the pre-registered window [-2.6, -1.4].

# %%
res = exp.fit_scaling(records, exp.MID, "best_upper", min_seeds=min_seeds)
for k, v in res.summary().items():
    print(f"{k:11s} {v}")

# %% [markdown]
# ## Plotting recipe
#
# With matplotlib installed:
#
# ```python
# import matplotlib.pyplot as plt
# x = [math.log(rec.r * math.log2(rec.r)) for rec in records]
# y = [math.log(rec.best_upper) for rec in records]
# plt.scatter(x, y)
# xs = np.linspace(min(x), max(x), 50)
# plt.plot(xs, res.slope * xs + res.intercept)
# plt.xlabel("log(r lg r)"); plt.ylabel("log residual")
# ```
