"""EP positions of both enantiomers versus the field ratio eta and the light phase."""

import numpy as np

from _common import out_dir
from enantio_ep.io import write_rows
from enantio_ep.three_level import reference_config, ep_trajectory_sweep

out = out_dir("ep_trajectories")
ref = reference_config("R")
write_rows(out / "eta_sweep.csv", ep_trajectory_sweep(ref, eta=np.linspace(0, 2, 81)))
write_rows(out / "phase_sweep.csv", ep_trajectory_sweep(ref.with_eta(np.sqrt(2)), dphi=np.linspace(0, np.pi / 2, 41)))
write_rows(out / "eta_sweep_flipped_field.csv",
           ep_trajectory_sweep(ref.field_handedness_flipped(), eta=np.linspace(0, 2, 81)))
print(f"wrote {out}")
