"""Dynamical encirclement of the reference loop: eight runs, alpha and residuals."""

import numpy as np

from _common import out_dir
from enantio_ep import encircle as enc
from enantio_ep.io import write_csv, write_json
from enantio_ep.three_level import reference_config

out = out_dir("encircle_reference")
R = reference_config("R")
path = enc.make_loop(enc.reference_ep(R))
summary = {"T_loop_ps": path.T_loop * enc.AU_TIME_PS}
for cfg in (R, R.mirrored()):
    runs = enc.run_four(cfg, path)
    for (direction, branch), res in runs.items():
        write_csv(out / f"loop_{cfg.handedness}_{direction}_{branch}.csv", res.table())
        summary[f"{cfg.handedness}_{direction}_{branch}"] = res.summary()
    summary[f"alpha_{cfg.handedness}"] = enc.switch_alpha(runs)
    summary[f"alpha_{cfg.handedness}_printed_form"] = enc.switch_alpha(runs, printed=True)
    summary[f"residual_mean_{cfg.handedness}"] = float(np.mean([r.residual for r in runs.values()]))
write_json(out / "summary.json", summary)
print({k: v for k, v in summary.items() if k.startswith(("alpha", "residual"))})
