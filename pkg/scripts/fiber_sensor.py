"""Twisted-fiber sensor: mode solution, propagation on both sides of the racemate, sensitivity."""

import numpy as np

from _common import out_dir
from enantio_ep import fiber as fb
from enantio_ep.io import write_csv, write_json, write_rows

out = out_dir("fiber_sensor")
fib, sol = fb.FiberConfig(), fb.SolutionConfig()
m = fb.solve_lp01(fib)
summary = {"V": m.V, "beta_over_k_ncore": m.beta_ratio, "Gamma_evan": m.Gamma_evan,
           "alpha_derived_per_m": fb.alpha_from_solution(sol, m.Gamma_evan), "alpha_used_per_m": sol.alpha_eff}
for ee in (-0.01, -0.001, 0.0, 0.001, 0.01):
    tr = fb.propagate_fiber(fib, sol.with_ee(ee), "RCP", n_out=2000)
    write_csv(out / f"trace_ee{ee:+.3f}.csv", tr.table())
    summary[f"P_end_ee{ee:+.3f}"] = float(tr.P[-1])
grid = np.linspace(-0.05, 0.05, 401)
for kind in ("power", "ellipticity"):
    rows = fb.sensitivity(fib, sol, grid, kind)
    write_rows(out / f"sensitivity_{kind}.csv", rows)
    summary[f"peak_ee_{kind}"] = fb.peak_sensitivity(rows, 1)
phi = np.linspace(-3, 3, 121)
for ee in (-1.0, 0.0, 1.0):
    write_json(out / f"gap_map_ee{ee:+.0f}.json", fb.gap_map(fib.replace(phi_t=0.0), sol.with_ee(ee), phi, phi / 2))
write_json(out / "summary.json", summary)
print(summary)
