"""Chiral metastable two-level system driven by a circularly polarized field.

    H = [[0, Omega], [Omega*, Delta - i Gamma]],   Omega = Omega_d (1 + epsilon)

Omega_d is the electric-dipole Rabi coupling and epsilon = Omega_m/Omega_d
the magnetic-to-electric ratio, whose sign distinguishes the enantiomers.
The upper level tunnels out at rate Gamma. At Delta = 0 the EP sits at
Gamma = 2|Omega|, so the two enantiomers have distinct EPs and there is a
window of Gamma where one is PT-symmetric (oscillating) and the other
PT-broken (one slowly decaying state). That window gives saturating
circular dichroism of the bound population.

The R enantiomer is the one with epsilon < 0 (lower EP). This matches the
sign obtained from the reference dipoles in :func:`from_vectors`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import InvalidArgument, StepControl, eig2, ep_locate, propagate

C_AU = 137.035999
AU_TIME_FS = 0.02418884
OMEGA_D_REF = 2.5e-4


@dataclass(frozen=True)
class ResonanceConfig:
    Omega_d: float = OMEGA_D_REF
    epsilon: complex = -1.0 / C_AU
    Delta: float = 0.0
    Gamma: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.Omega_d) and self.Omega_d > 0):
            raise InvalidArgument("Omega_d must be positive")
        if not (math.isfinite(self.Delta) and math.isfinite(self.Gamma)) or self.Gamma < 0:
            raise InvalidArgument("need finite Delta and Gamma >= 0")
        if not np.isfinite(complex(self.epsilon)):
            raise InvalidArgument("epsilon must be finite")

    @property
    def Omega_m(self) -> complex:
        return self.epsilon * self.Omega_d

    @property
    def coupling(self) -> complex:
        return self.Omega_d + self.Omega_m

    def mirrored(self) -> "ResonanceConfig":
        return replace(self, epsilon=-self.epsilon)

    def with_gamma(self, Gamma: float) -> "ResonanceConfig":
        return replace(self, Gamma=Gamma)


def enantiomer_pair(Omega_d: float = OMEGA_D_REF, epsilon: float = 1.0 / C_AU, Delta: float = 0.0,
                    Gamma: float = 0.0) -> tuple[ResonanceConfig, ResonanceConfig]:
    """(R, L) configurations; R carries -|epsilon|."""
    e = abs(epsilon)
    R = ResonanceConfig(Omega_d, -e, Delta, Gamma)
    return R, R.mirrored()


def circular_field(A0_omega: float, sign: int = +1):
    """E and B amplitudes of a circular plane wave along z, unnormalized e_+- = x -+ i y.

    With A = A0 e exp(i(kz - wt)): E = i w A0 e and B = i k z x e A0, k = w/c.
    """
    e = np.array([1.0, -1.0j * sign, 0.0])
    E = 1j * A0_omega * e
    B = 1j * (A0_omega / C_AU) * np.cross([0.0, 0.0, 1.0], e)
    return E, B


def from_vectors(d, m, E, B, Delta: float = 0.0, Gamma: float = 0.0) -> ResonanceConfig:
    """Build the scalar model from dipoles and field vectors.

    Omega_d = -d.E/2 and Omega_m = -m.B/2 (rotating-wave halves). The common
    phase is removed so that Omega_d is real positive; epsilon may be complex.
    """
    Od = -0.5 * complex(np.dot(np.asarray(d, complex), np.asarray(E, complex)))
    Om = -0.5 * complex(np.dot(np.asarray(m, complex), np.asarray(B, complex)))
    if Od == 0:
        raise InvalidArgument("electric coupling vanishes")
    eps = Om / Od
    return ResonanceConfig(abs(Od), eps.real if eps.imag == 0 else eps, Delta, Gamma)


def reference_dipoles() -> tuple[np.ndarray, np.ndarray]:
    """Molecular-frame d = y and purely imaginary m = i (x + y)/sqrt2, so Im[d.m*] = -1/sqrt2."""
    return np.array([0, 1, 0], dtype=complex), 1j * np.array([1, 1, 0], dtype=complex) / math.sqrt(2)


def build_h2(cfg: ResonanceConfig) -> np.ndarray:
    w = cfg.coupling
    return np.array([[0.0, w], [np.conj(w), cfg.Delta - 1j * cfg.Gamma]], dtype=complex)


def eigenvalues2(cfg: ResonanceConfig) -> tuple[complex, complex]:
    z = cfg.Delta - 1j * cfg.Gamma
    root = np.sqrt(complex(z * z + 4 * abs(cfg.coupling) ** 2))
    return complex((z + root) / 2), complex((z - root) / 2)


def ep_gamma(cfg: ResonanceConfig) -> tuple[float, float]:
    """EP decay rates (Gamma_EP of cfg, Gamma_EP of its mirror image) at Delta = 0."""
    return 2 * abs(cfg.Omega_d + cfg.Omega_m), 2 * abs(cfg.Omega_d - cfg.Omega_m)


def locate_ep(cfg: ResonanceConfig, tol: float = 1e-6) -> list:
    G = 2 * abs(cfg.coupling)
    region = {"Delta": (-0.5 * G, 0.53 * G), "Gamma": (0.4 * G, 1.7 * G)}
    return ep_locate(lambda Delta, Gamma: build_h2(replace(cfg, Delta=Delta, Gamma=Gamma)), region, tol=tol)


def splitting(cfg: ResonanceConfig) -> float:
    lp, lm = eigenvalues2(cfg)
    return abs(lp - lm)


def phase_class(cfg: ResonanceConfig, rtol: float = 1e-9) -> str:
    lp, lm = eigenvalues2(cfg)
    d = lp - lm
    if abs(d) <= rtol * max(cfg.Gamma, abs(cfg.coupling)):
        return "EP"
    return "PT_symmetric" if abs(d.real) > abs(d.imag) else "PT_broken"


def slow_lifetime(cfg: ResonanceConfig) -> float:
    """Amplitude lifetime 1/|Im lambda| of the longer-lived eigenstate."""
    im = min(abs(l.imag) for l in eigenvalues2(cfg))
    return math.inf if im == 0 else 1.0 / im


def fast_lifetime(cfg: ResonanceConfig) -> float:
    im = max(abs(l.imag) for l in eigenvalues2(cfg))
    return math.inf if im == 0 else 1.0 / im


@dataclass(frozen=True, eq=False)
class CDTrace:
    times_au: np.ndarray
    P_R: np.ndarray
    P_L: np.ndarray
    CD: np.ndarray
    Gamma: float
    Gamma_EP_R: float
    Gamma_EP_L: float
    periods: dict
    lifetimes: dict

    @property
    def times_fs(self) -> np.ndarray:
        return self.times_au * AU_TIME_FS

    @property
    def residual_R(self) -> float:
        return float(self.P_R[-1])

    @property
    def residual_L(self) -> float:
        return float(self.P_L[-1])

    def table(self) -> dict[str, np.ndarray]:
        return {"t_fs": self.times_fs, "P_R": self.P_R, "P_L": self.P_L, "CD": self.CD}


def _characteristics(cfg):
    lp, lm = eigenvalues2(cfg)
    d = lp - lm
    if abs(d.real) > abs(d.imag):
        return 2 * math.pi / abs(d.real), None
    return None, slow_lifetime(cfg)


def bound_population(cfg: ResonanceConfig, t_eval: np.ndarray, ctl: StepControl | None = None) -> np.ndarray:
    ctl = ctl or StepControl(rtol=1e-10, atol=1e-16)
    H = build_h2(cfg)
    tr = propagate(lambda t: H, [1.0, 0.0], float(t_eval[0]), float(t_eval[-1]), ctl, t_eval=t_eval)
    return tr.norms


def evolve_cd(cfg_R: ResonanceConfig, cfg_L: ResonanceConfig, T_end: float,
              ctl: StepControl | None = None, n_out: int = 2000) -> CDTrace:
    """Bound populations of both enantiomers from the lower level; T_end in a.u."""
    if not T_end > 0:
        raise InvalidArgument("T_end must be positive")
    if (cfg_R.Delta, cfg_R.Gamma, cfg_R.Omega_d) != (cfg_L.Delta, cfg_L.Gamma, cfg_L.Omega_d):
        raise InvalidArgument("enantiomers must share Omega_d, Delta and Gamma")
    t = np.linspace(0.0, T_end, n_out + 1)
    PR = bound_population(cfg_R, t, ctl)
    PL = bound_population(cfg_L, t, ctl)
    with np.errstate(invalid="ignore", divide="ignore"):
        CD = np.where(PR + PL > 0, (PR - PL) / (PR + PL), 0.0)
    pR, tR = _characteristics(cfg_R)
    pL, tL = _characteristics(cfg_L)
    return CDTrace(t, PR, PL, np.clip(CD, -1, 1), cfg_R.Gamma, 2 * abs(cfg_R.coupling),
                   2 * abs(cfg_L.coupling), {"R": pR, "L": pL}, {"R": tR, "L": tL})


def cd_gamma_map(template: ResonanceConfig, ratios: Sequence[float], T_end: float,
                 n_t: int = 400) -> dict[str, np.ndarray]:
    """CD(t) rows for Gamma = ratio * Omega_d, with the slow lifetimes of both enantiomers."""
    R0 = template if np.real(template.epsilon) <= 0 else template.mirrored()
    rows, tau_R, tau_L = [], [], []
    for r in ratios:
        R = R0.with_gamma(r * R0.Omega_d)
        L = R.mirrored()
        tr = evolve_cd(R, L, T_end, n_out=n_t)
        rows.append(tr.CD)
        tau_R.append(slow_lifetime(R))
        tau_L.append(slow_lifetime(L))
    return {"ratio": np.asarray(ratios, float), "t_au": np.linspace(0, T_end, n_t + 1),
            "CD": np.array(rows), "tau_slow_R": np.array(tau_R), "tau_slow_L": np.array(tau_L)}


def cd_tanh_estimate(tau_R: float, tau_L: float, T: float) -> float:
    """tanh(T (1/tau_L - 1/tau_R)) for amplitude lifetimes tau (populations decay as exp(-2t/tau))."""
    if tau_R == tau_L:
        return 0.0
    return math.tanh(T * (1.0 / tau_L - 1.0 / tau_R))
