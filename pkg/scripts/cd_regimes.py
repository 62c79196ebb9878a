"""Circular dichroism of the residual bound population across the decay-rate regimes."""

import numpy as np

from _common import out_dir
from enantio_ep import shape_resonance as sr
from enantio_ep.io import write_csv, write_json

out = out_dir("cd_regimes")
R, L = sr.enantiomer_pair()
ratios = np.linspace(0.2, 8.0, 157)
m = sr.cd_gamma_map(sr.ResonanceConfig(), ratios, 2000 / sr.AU_TIME_FS, n_t=400)
write_csv(out / "cd_map.csv", {"Gamma_over_Omega_d": np.repeat(ratios, m["CD"].shape[1]),
                               "t_fs": np.tile(m["t_au"] * sr.AU_TIME_FS, len(ratios)), "CD": m["CD"].ravel()})
spectrum = {"Gamma_over_Omega_d": ratios}
for tag, c in (("R", R), ("L", L)):
    ev = np.array([sr.eigenvalues2(c.with_gamma(g * c.Omega_d)) for g in ratios])
    for k, name in enumerate(("plus", "minus")):
        spectrum[f"Re_lambda_{name}_{tag}_au"] = ev[:, k].real
        spectrum[f"Im_lambda_{name}_{tag}_au"] = ev[:, k].imag
write_csv(out / "eigenvalues.csv", spectrum)
picks = {"below": 1.0, "between": 2.0, "both_broken": 3.5}
for name, ratio in picks.items():
    g = ratio * R.Omega_d
    tr = sr.evolve_cd(R.with_gamma(g), L.with_gamma(g), 1700 / sr.AU_TIME_FS, n_out=2000)
    write_csv(out / f"cd_{name}.csv", tr.table())
write_json(out / "summary.json", {"Gamma_EP_R_over_Omega_d": sr.ep_gamma(R)[0] / R.Omega_d,
                                  "Gamma_EP_L_over_Omega_d": sr.ep_gamma(L)[0] / L.Omega_d, "picks": picks})
print(f"wrote {out}")
