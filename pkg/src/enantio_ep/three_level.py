"""Chiral three-level molecule reduced to a dissipative two-level problem.

Two bound states are coupled to a common continuum by fields F1 and F2 and
to each other by a one-photon field F3 detuned by Delta. Eliminating the
continuum gives the effective Hamiltonian

    H = [[-Delta/2 - i gamma/2,  M12* + i pi M1* M2],
         [M12 + i pi M1 M2*,      Delta/2 + i gamma/2]]  - i Gamma/2 * 1

with Gamma_i = 2 pi |M_i|^2, Gamma = (Gamma_1 + Gamma_2)/2 and
gamma = (Gamma_1 - Gamma_2)/2. The common decay term is optional because it
never affects eigenvectors or EP positions. The enantiomers differ by a
pi shift of the molecular phase, carried by M12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .core import EPCandidate, InvalidArgument, discriminant, eig2, ep_locate

SQRT2 = math.sqrt(2.0)
E_PLUS = np.array([1.0, -1.0j, 0.0]) / SQRT2
E_MINUS = np.array([1.0, 1.0j, 0.0]) / SQRT2
X_HAT = np.array([1.0, 0.0, 0.0], dtype=complex)
Y_HAT = np.array([0.0, 1.0, 0.0], dtype=complex)
Z_HAT = np.array([0.0, 0.0, 1.0], dtype=complex)

CONVENTIONS = ("full-amplitude", "half-amplitude")


@dataclass(frozen=True, eq=False)
class Polarization3:
    e: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.e, dtype=complex)
        if e.shape != (3,) or not np.all(np.isfinite(e)):
            raise InvalidArgument("polarization must be a finite complex 3-vector")
        if abs(np.vdot(e, e).real - 1.0) > 1e-12:
            raise InvalidArgument("polarization must have unit norm")
        object.__setattr__(self, "e", e)

    @classmethod
    def circular(cls, sign: int = +1) -> "Polarization3":
        return cls(E_PLUS if sign > 0 else E_MINUS)

    @classmethod
    def linear(cls, axis: str = "z") -> "Polarization3":
        return cls({"x": X_HAT, "y": Y_HAT, "z": Z_HAT}[axis])


def _vec(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise InvalidArgument("dipoles must be finite complex 3-vectors")
    return v


@dataclass(frozen=True, eq=False)
class MolecularFieldConfig:
    """Molecule plus fields. Amplitudes in atomic units, phases in radians.

    ``conjugate_polarization`` switches the matrix element from the bilinear
    d.e to the sesquilinear d.e*.
    """

    d1E: np.ndarray
    d2E: np.ndarray
    d12: np.ndarray
    F1: float
    F2: float
    e1: Polarization3
    e2: Polarization3
    e3: Polarization3
    phase_light: float = 0.0
    phase_mol: float = 0.0
    rabi_convention: str = "full-amplitude"
    handedness: str = "R"
    conjugate_polarization: bool = False

    def __post_init__(self):
        for name in ("d1E", "d2E", "d12"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        if not any(np.any(getattr(self, n) != 0) for n in ("d1E", "d2E", "d12")):
            raise InvalidArgument("at least one dipole must be nonzero")
        if self.rabi_convention not in CONVENTIONS:
            raise InvalidArgument(f"rabi_convention must be one of {CONVENTIONS}")
        if self.handedness not in ("R", "L"):
            raise InvalidArgument("handedness must be 'R' or 'L'")
        for name in ("F1", "F2", "phase_light", "phase_mol"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidArgument(f"{name} must be finite")

    def replace(self, **kw) -> "MolecularFieldConfig":
        return replace(self, **kw)

    def mirrored(self) -> "MolecularFieldConfig":
        return self.replace(handedness="L" if self.handedness == "R" else "R")

    def field_handedness_flipped(self) -> "MolecularFieldConfig":
        return self.replace(phase_light=self.phase_light + math.pi)

    def with_eta(self, eta: float) -> "MolecularFieldConfig":
        return self.replace(F2=eta * self.F1)

    def rotated(self, rot: np.ndarray | Rotation) -> "MolecularFieldConfig":
        """Rotate every molecular dipole by the same proper rotation."""
        R = rot.as_matrix() if isinstance(rot, Rotation) else np.asarray(rot, dtype=float)
        if R.shape != (3, 3) or not np.allclose(R @ R.T, np.eye(3), atol=1e-12):
            raise InvalidArgument("rotation must be an orthogonal 3x3 matrix")
        return self.replace(d1E=R @ self.d1E, d2E=R @ self.d2E, d12=R @ self.d12)

    @property
    def total_phase(self) -> float:
        shift = math.pi if self.handedness == "L" else 0.0
        return self.phase_light + self.phase_mol + shift


def rotation_z(beta: float) -> np.ndarray:
    return Rotation.from_euler("z", beta).as_matrix()


def rotation_euler(seq: str, angles: Sequence[float]) -> np.ndarray:
    return Rotation.from_euler(seq, angles).as_matrix()


def matrix_element(d, amplitude: float, pol: Polarization3, convention: str = "full-amplitude",
                   conjugate: bool = False) -> complex:
    """M = (d.e) F, halved in the half-amplitude convention."""
    if convention not in CONVENTIONS:
        raise InvalidArgument(f"unknown convention {convention!r}")
    e = pol.e.conj() if conjugate else pol.e
    m = complex(np.dot(_vec(d), e)) * amplitude
    return 0.5 * m if convention == "half-amplitude" else m


@dataclass(frozen=True)
class RateSet:
    Gamma1: float
    Gamma2: float

    @property
    def Gamma_avg(self) -> float:
        return 0.5 * (self.Gamma1 + self.Gamma2)

    @property
    def gamma(self) -> float:
        return 0.5 * (self.Gamma1 - self.Gamma2)

    @property
    def geometric(self) -> float:
        return math.sqrt(self.Gamma1 * self.Gamma2)


def _m1(cfg):
    return matrix_element(cfg.d1E, cfg.F1, cfg.e1, cfg.rabi_convention, cfg.conjugate_polarization)


def _m2(cfg):
    return matrix_element(cfg.d2E, cfg.F2, cfg.e2, cfg.rabi_convention, cfg.conjugate_polarization)


def one_photon_coupling(cfg: MolecularFieldConfig, F3: float) -> complex:
    """M12 including the light and molecular phases (and the enantiomer pi shift)."""
    m = matrix_element(cfg.d12, F3, cfg.e3, cfg.rabi_convention, cfg.conjugate_polarization)
    return m * complex(math.cos(cfg.total_phase), math.sin(cfg.total_phase))


def rates(cfg: MolecularFieldConfig) -> RateSet:
    return RateSet(2 * math.pi * abs(_m1(cfg)) ** 2, 2 * math.pi * abs(_m2(cfg)) ** 2)


def omega123(cfg: MolecularFieldConfig, F3: float) -> complex:
    """Cyclic three-photon element 2 pi M1* M2 M12."""
    return 2 * math.pi * _m1(cfg).conjugate() * _m2(cfg) * one_photon_coupling(cfg, F3)


def hamiltonian_factory(cfg: MolecularFieldConfig, include_common_decay: bool = False):
    """Return ``H(Delta, F3)`` with all field-independent factors precomputed."""
    r = rates(cfg)
    m1, m2 = _m1(cfg), _m2(cfg)
    u12 = one_photon_coupling(cfg, 1.0)
    up = 1j * math.pi * m1.conjugate() * m2
    lo = 1j * math.pi * m1 * m2.conjugate()
    shift = -0.5j * r.Gamma_avg if include_common_decay else 0.0
    g = 0.5j * r.gamma

    def H(Delta: float, F3: float) -> np.ndarray:
        m12 = u12 * F3
        return np.array([[-0.5 * Delta - g + shift, m12.conjugate() + up],
                         [m12 + lo, 0.5 * Delta + g + shift]], dtype=complex)

    return H


def build_hamiltonian(cfg: MolecularFieldConfig, Delta: float, F3: float,
                      include_common_decay: bool = False) -> np.ndarray:
    return hamiltonian_factory(cfg, include_common_decay)(Delta, F3)


def discriminant_parts(cfg: MolecularFieldConfig, Delta: float, F3: float) -> tuple[float, float]:
    """Independent closed form of (Re delta, Im delta) with lambda = +-sqrt(delta)."""
    r = rates(cfg)
    m12 = one_photon_coupling(cfg, F3)
    re = Delta**2 / 4 - r.Gamma_avg**2 / 4 + abs(m12) ** 2
    im = r.gamma * Delta / 2 + omega123(cfg, F3).real
    return re, im


def _coefficients(cfg):
    """Per-unit-F3 constants: K = Re Omega123 / F3 and mu = |M12| / F3."""
    return omega123(cfg, 1.0).real, abs(one_photon_coupling(cfg, 1.0))


def _candidate(cfg, Delta, F3) -> EPCandidate:
    es = eig2(build_hamiltonian(cfg, Delta, F3))
    return EPCandidate({"Delta": float(Delta), "F3": float(F3)}, es.gap, es.phase_rigidity, True)


def ep_closed_form(cfg: MolecularFieldConfig) -> list[EPCandidate]:
    """The two EPs of ``cfg`` in the (Delta, F3) plane, ordered (+root, -root).

    Setting delta = 0 gives Delta = -2 K F3 / gamma and
    F3 = +-Gamma |gamma| / (2 sqrt(K^2 + mu^2 gamma^2)).
    """
    r = rates(cfg)
    G, g = r.Gamma_avg, r.gamma
    K, mu = _coefficients(cfg)
    if G <= 0 or G * G < g * g:
        return []
    scale = max(G, 1e-300)
    if abs(g) <= 1e-14 * scale:
        if abs(K) <= 1e-300 and mu <= 1e-300:
            return []
        # labels continue the gamma -> 0+ limit of the general branches
        sk = -1.0 if K > 0 else 1.0
        return [_candidate(cfg, sk * G, 0.0), _candidate(cfg, -sk * G, 0.0)]
    root = math.sqrt(K * K + mu * mu * g * g)
    if root == 0:
        return []
    out = []
    for sgn in (1.0, -1.0):
        F3 = sgn * G * abs(g) / (2 * root)
        out.append(_candidate(cfg, -2 * K * F3 / g, F3))
    return out


def ep_pair(cfg: MolecularFieldConfig) -> dict[str, list[EPCandidate]]:
    """Closed-form EPs for both enantiomers sharing the fields of ``cfg``."""
    c_r = cfg.replace(handedness="R")
    return {"R": ep_closed_form(c_r), "L": ep_closed_form(c_r.mirrored())}


def default_region(cfg: MolecularFieldConfig, margin: float = 3.0) -> dict[str, tuple[float, float]]:
    r = rates(cfg)
    _, mu = _coefficients(cfg)
    G = max(r.Gamma_avg, 1e-300)
    f = G / max(mu, 1e-300)
    # asymmetric bounds keep grid nodes off the symmetry axes
    return {"Delta": (-margin * G, margin * 1.013 * G), "F3": (-margin * f, margin * 1.021 * f)}


def locate_eps(cfg: MolecularFieldConfig, region=None, tol: float = 1e-6, grid: int = 64) -> list[EPCandidate]:
    """Numerical EP search on the implemented Hamiltonian."""
    region = region or default_region(cfg)
    return ep_locate(hamiltonian_factory(cfg), region, tol=tol, grid=grid)


def ep_trajectory_sweep(cfg: MolecularFieldConfig, eta: Iterable[float] | None = None,
                        dphi: Iterable[float] | None = None) -> list[dict]:
    """EP positions of both enantiomers along an eta = F2/F1 or light-phase sweep.

    Returns one record per (parameter, enantiomer, branch).
    """
    if (eta is None) == (dphi is None):
        raise InvalidArgument("give exactly one of eta or dphi")
    key, values = ("eta", eta) if eta is not None else ("dphi", dphi)
    rows = []
    for v in values:
        c = cfg.with_eta(v) if key == "eta" else cfg.replace(phase_light=v)
        for hand, eps in ep_pair(c).items():
            for branch, ep in enumerate(eps):
                rows.append({key: float(v), "handedness": hand, "branch": branch,
                             "Delta": ep.params["Delta"], "F3": ep.params["F3"]})
    return rows


def reference_config(handedness: str = "R", rabi_convention: str = "full-amplitude",
                      conjugate_polarization: bool = True) -> MolecularFieldConfig:
    """Reference molecule and fields of the encirclement study.

    F1 = 2e-3 a.u. and F2 = sqrt(2)e-3 a.u. (intensity ratio 2), co-rotating
    circular F1, F2 and a linear z-polarized F3, with d1E = d2E = e_+ and
    d12 = z. The sesquilinear overlap makes every overlap equal to one.
    """
    return MolecularFieldConfig(
        d1E=E_PLUS, d2E=E_PLUS, d12=Z_HAT,
        F1=2e-3, F2=SQRT2 * 1e-3,
        e1=Polarization3.circular(+1), e2=Polarization3.circular(+1), e3=Polarization3.linear("z"),
        rabi_convention=rabi_convention, handedness=handedness,
        conjugate_polarization=conjugate_polarization,
    )


# anchor of the reference EP quoted with the reference parameters, (Delta, F3) in a.u.
ANCHOR_EP_R = (-1.77e-5, 1.57e-6)


def calibrate_convention(anchor: tuple[float, float] = ANCHOR_EP_R) -> tuple[str, dict[str, float]]:
    """Pick the amplitude convention whose R-enantiomer EP (Delta<0) is closest to ``anchor``.

    The score is the summed absolute log-ratio over both coordinates.
    """
    scores = {}
    for conv in CONVENTIONS:
        eps = ep_closed_form(reference_config("R", conv))
        ep = min(eps, key=lambda e: e.params["Delta"])
        scores[conv] = (abs(math.log(abs(ep.params["Delta"] / anchor[0])))
                        + abs(math.log(abs(ep.params["F3"] / anchor[1]))))
    return min(scores, key=scores.get), scores
