"""alpha for loops with deformed radius or shifted centre."""

import numpy as np

from _common import out_dir
from enantio_ep.encircle import stability_sweep
from enantio_ep.io import write_rows
from enantio_ep.three_level import reference_config

out = out_dir("stability")
R = reference_config("R")
for mode, grid in (("radius", np.linspace(0.25, 2.0, 15)), ("center", np.linspace(0.0, 2.0, 17))):
    rows = stability_sweep(R, R.mirrored(), mode, grid)
    write_rows(out / f"{mode}.csv", rows)
    for r in rows:
        print(f"{mode}={r[mode]:.3f} alpha_R={r['alpha_R']:+.3f} alpha_L={r['alpha_L']:+.3f} "
              f"enclosed={r['encloses_R']}")
