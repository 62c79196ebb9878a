"""Twisted lossy single-mode fiber in a chiral solution.

Coupled-mode equation in the co-rotating circular basis psi = (Psi_-, Psi_+):

    d psi/dz = H psi,
    H = [[i(k_t - ee a), -i dB - dG], [-i dB - dG, -i(k_t - ee a)]]

where k_t is the torsion coupling, dB the linear birefringence, dG the
differential loss and ``a`` the signed optical-rotation rate of the
solution in the evanescent field. Common loss is dropped, so P(z) is the
power relative to an isotropic fiber. EPs sit at k_t - ee a = +-dG, dB = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, special
from scipy.linalg import expm

from .core import InvalidArgument, StepControl, eig2, ep_locate, propagate

J01 = 2.404825557695773
ALPHA_REFERENCE = 2.104  # rad/m, quoted effective rotation rate for the reference solution
ROTATION_CONVENTIONS = {"figure": -1.0, "literal": 1.0}


@dataclass(frozen=True)
class FiberConfig:
    """Fiber geometry (SI units) and polarization-dependent parameters (1/m)."""

    n_core: float = 1.4905
    n_solution: float = 1.459
    r_core: float = 0.5e-6
    wavelength: float = 589e-9
    DeltaGamma: float = 2.39
    DeltaBeta: float = 0.0
    phi_t: float = 2.39
    length: float = 10.0
    photoelastic: float = 0.0  # R*G*n_c product; k_t = phi_t (1 - photoelastic)

    def __post_init__(self):
        vals = [self.n_core, self.n_solution, self.r_core, self.wavelength, self.DeltaGamma,
                self.DeltaBeta, self.phi_t, self.length, self.photoelastic]
        if not all(math.isfinite(v) for v in vals):
            raise InvalidArgument("fiber parameters must be finite")
        if self.n_core <= self.n_solution:
            raise InvalidArgument("need n_core > n_solution for guidance")
        if min(self.r_core, self.wavelength, self.length) <= 0:
            raise InvalidArgument("r_core, wavelength and length must be positive")

    @property
    def k_t(self) -> float:
        return self.phi_t * (1.0 - self.photoelastic)

    @property
    def V(self) -> float:
        return 2 * math.pi * self.r_core / self.wavelength * math.sqrt(self.n_core**2 - self.n_solution**2)

    def replace(self, **kw) -> "FiberConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class SolutionConfig:
    """Chiral solution. ``alpha_eff`` (rad/m, >= 0) overrides the derived value."""

    ee: float = 0.0
    specific_rotation: float = 57.24  # deg dm^-1 (g/mL)^-1
    density: float = 0.948  # g/mL
    alpha_eff: float | None = ALPHA_REFERENCE
    convention: str = "figure"

    def __post_init__(self):
        if not (math.isfinite(self.ee) and abs(self.ee) <= 1):
            raise InvalidArgument("|ee| must be <= 1")
        if self.alpha_eff is not None and not (math.isfinite(self.alpha_eff) and self.alpha_eff >= 0):
            raise InvalidArgument("alpha_eff must be finite and >= 0")
        if self.convention not in ROTATION_CONVENTIONS:
            raise InvalidArgument(f"convention must be one of {tuple(ROTATION_CONVENTIONS)}")

    def with_ee(self, ee: float) -> "SolutionConfig":
        return replace(self, ee=ee)

    def signed_alpha(self, Gamma_evan: float | None = None) -> float:
        a = self.alpha_eff
        if a is None:
            if Gamma_evan is None:
                raise InvalidArgument("alpha_eff missing and no evanescent fraction given")
            a = alpha_from_solution(self, Gamma_evan)
        return ROTATION_CONVENTIONS[self.convention] * a


@dataclass(frozen=True)
class ModeSolution:
    beta: float
    X: float
    Y: float
    V: float
    Gamma_core: float
    Gamma_evan: float
    single_mode: bool
    k0: float
    n_core: float

    @property
    def beta_ratio(self) -> float:
        """beta / (k0 n_core)."""
        return self.beta / (self.k0 * self.n_core)


class ModeError(InvalidArgument):
    pass


def solve_lp01(fib: FiberConfig) -> ModeSolution:
    """Weakly guiding LP01 mode: X J1(X)/J0(X) = Y K1(Y)/K0(Y), X^2 + Y^2 = V^2."""
    V = fib.V
    if V >= J01:
        raise ModeError(f"V = {V:.4f} >= 2.405: fiber is multi-mode")
    if V <= 0:
        raise ModeError("non-guiding fiber")

    def f(X):
        Y = math.sqrt(V * V - X * X)
        return X * special.j1(X) / special.j0(X) - Y * special.k1(Y) / special.k0(Y)

    hi = V * (1 - 1e-12)
    lo = min(V, 1e-8)
    if f(lo) * f(hi) > 0:
        raise ModeError("no guided root found")
    X = optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    Y = math.sqrt(V * V - X * X)
    # radial power with E = J0(X rho) in the core and J0(X) K0(Y rho)/K0(Y) outside (rho = r/a)
    p_core, _ = integrate.quad(lambda p: special.j0(X * p) ** 2 * p, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    c = special.j0(X) / special.k0(Y)
    p_clad, _ = integrate.quad(lambda p: (c * special.k0(Y * p)) ** 2 * p, 1.0, np.inf,
                               epsabs=1e-14, epsrel=1e-13, limit=200)
    tot = p_core + p_clad
    k0 = 2 * math.pi / fib.wavelength
    beta = math.sqrt((k0 * fib.n_core) ** 2 - (X / fib.r_core) ** 2)
    return ModeSolution(beta, X, Y, V, p_core / tot, p_clad / tot, V < J01, k0, fib.n_core)


def alpha_from_solution(sol: SolutionConfig, Gamma_evan: float) -> float:
    """[alpha] rho Gamma_evan in rad/m ([alpha] in deg/dm per g/mL)."""
    deg_per_m = sol.specific_rotation * sol.density * 10.0
    return math.radians(deg_per_m) * Gamma_evan


def build_fiber_h(fib: FiberConfig, sol: SolutionConfig, Gamma_evan: float | None = None) -> np.ndarray:
    d = fib.k_t - sol.ee * sol.signed_alpha(Gamma_evan)
    off = -1j * fib.DeltaBeta - fib.DeltaGamma
    return np.array([[1j * d, off], [off, -1j * d]], dtype=complex)


def eigenvalues_closed_form(fib: FiberConfig, sol: SolutionConfig) -> tuple[complex, complex]:
    d = fib.k_t - sol.ee * sol.signed_alpha()
    lam = np.sqrt(complex((1j * fib.DeltaBeta + fib.DeltaGamma) ** 2 - d * d))
    return complex(lam), complex(-lam)


def fiber_ep_positions(sol: SolutionConfig, DeltaGamma: float) -> list[tuple[float, float]]:
    """EPs in the (phi_t, DeltaBeta) plane."""
    a = sol.ee * sol.signed_alpha()
    return [(a - DeltaGamma, 0.0), (a + DeltaGamma, 0.0)]


def locate_fiber_eps(fib: FiberConfig, sol: SolutionConfig, tol: float = 1e-6) -> list:
    a = sol.ee * sol.signed_alpha()
    dG = abs(fib.DeltaGamma)
    region = {"phi_t": (a - 2.03 * dG, a + 2.07 * dG), "DeltaBeta": (-0.97 * dG, 1.01 * dG)}
    return ep_locate(lambda phi_t, DeltaBeta: build_fiber_h(
        fib.replace(phi_t=phi_t, DeltaBeta=DeltaBeta, photoelastic=0.0), sol), region, tol=tol)


def classify(H: np.ndarray, DeltaGamma: float, tol: float = 1e-6) -> str:
    es = eig2(H)
    d = es.lambda_plus - es.lambda_minus
    scale = abs(DeltaGamma) if DeltaGamma != 0 else max(es.scale, 1e-300)
    if abs(d) <= tol * scale:
        return "EP"
    return "PT_broken" if abs(d.real) > abs(d.imag) else "PT_symmetric"


def input_state(kind) -> np.ndarray:
    """RCP, LCP, or ("linear", theta) as (Psi_-, Psi_+)."""
    if kind == "RCP":
        return np.array([0.0, 1.0], dtype=complex)
    if kind == "LCP":
        return np.array([1.0, 0.0], dtype=complex)
    if isinstance(kind, (tuple, list)) and len(kind) == 2 and kind[0] == "linear":
        th = float(kind[1])
        return np.array([np.exp(1j * th), np.exp(-1j * th)]) / math.sqrt(2)
    raise InvalidArgument(f"unknown input polarization {kind!r}")


@dataclass(frozen=True, eq=False)
class PropagationTrace:
    z: np.ndarray
    psi: np.ndarray  # columns (Psi_-, Psi_+)
    phase_class: str
    phi_t: float

    @property
    def P(self) -> np.ndarray:
        return np.sum(np.abs(self.psi) ** 2, axis=1)

    @property
    def xi(self) -> np.ndarray:
        return (np.abs(self.psi[:, 1]) ** 2 - np.abs(self.psi[:, 0]) ** 2) / self.P

    def table(self) -> dict[str, np.ndarray]:
        return {"z_m": self.z, "P": self.P, "xi": self.xi,
                "Re_psi_minus": self.psi[:, 0].real, "Im_psi_minus": self.psi[:, 0].imag,
                "Re_psi_plus": self.psi[:, 1].real, "Im_psi_plus": self.psi[:, 1].imag}


def propagate_fiber(fib: FiberConfig, sol: SolutionConfig, input="RCP", ctl: StepControl | None = None,
                    n_out: int = 1000, length: float | None = None) -> PropagationTrace:
    L = fib.length if length is None else float(length)
    H = build_fiber_h(fib, sol)
    ctl = ctl or StepControl(rtol=1e-11, atol=1e-14)
    z = np.linspace(0.0, L, n_out + 1)
    tr = propagate(lambda _: H, input_state(input), 0.0, L, ctl, convention="spatial", t_eval=z)
    return PropagationTrace(z, tr.states, classify(H, fib.DeltaGamma), fib.phi_t)


def transfer(fib: FiberConfig, sol: SolutionConfig, z: float | None = None) -> np.ndarray:
    """Exact z-independent propagator exp(H z)."""
    return expm(build_fiber_h(fib, sol) * (fib.length if z is None else z))


def observable(fib: FiberConfig, sol: SolutionConfig, kind: str = "power", input="RCP") -> float:
    psi = transfer(fib, sol) @ input_state(input)
    P = float(np.sum(np.abs(psi) ** 2))
    if kind == "power":
        return P
    if kind == "ellipticity":
        return float((abs(psi[1]) ** 2 - abs(psi[0]) ** 2) / P)
    raise InvalidArgument("observable must be 'power' or 'ellipticity'")


def sensitivity(fib: FiberConfig, sol: SolutionConfig, ee_grid: Sequence[float], kind: str = "power",
                input="RCP") -> list[dict]:
    """R(ee) = |dS/dee| / |S| by central differences of the exact end-of-fiber observable."""
    ee = np.asarray(ee_grid, dtype=float)
    spacing = float(np.min(np.diff(ee))) if ee.size > 1 else 1e-3
    h = min(1e-4, spacing / 4)
    rows = []
    for e in ee:
        S = observable(fib, sol.with_ee(e), kind, input)
        dS = (observable(fib, sol.with_ee(e + h), kind, input)
              - observable(fib, sol.with_ee(e - h), kind, input)) / (2 * h)
        sat = abs(S) < 1e-12
        rows.append({"ee": float(e), "S": S, "dS": dS, "R": math.inf if sat else abs(dS) / abs(S),
                     "saturated": sat})
    return rows


def peak_sensitivity(rows: Sequence[dict], sign: int) -> float:
    """ee of maximal R on one side of zero, ignoring saturated points."""
    pts = [r for r in rows if np.sign(r["ee"]) == sign and not r["saturated"]]
    return max(pts, key=lambda r: r["R"])["ee"]


def gap_map(fib: FiberConfig, sol: SolutionConfig, phi_over_alpha: Sequence[float],
            dbeta_over_alpha: Sequence[float]) -> dict:
    """|lambda_+ - lambda_-| over (phi_t/alpha, DeltaBeta/alpha) at the solution's ee."""
    a = abs(sol.signed_alpha())
    if a == 0:
        raise InvalidArgument("gap map needs a nonzero rotation rate")
    grid = [[eig2(build_fiber_h(fib.replace(phi_t=p * a, DeltaBeta=b * a, photoelastic=0.0), sol)).gap
             for b in dbeta_over_alpha] for p in phi_over_alpha]
    return {"ee": sol.ee, "alpha_per_m": a, "DeltaGamma_per_m": fib.DeltaGamma,
            "phi_over_alpha": list(map(float, phi_over_alpha)),
            "dbeta_over_alpha": list(map(float, dbeta_over_alpha)), "gap_per_m": grid}


def growth_rate(trace: PropagationTrace, window: tuple[float, float] = (0.5, 1.0)) -> float:
    """Least-squares slope of log P(z) over a fraction of the trace."""
    z0, z1 = window[0] * trace.z[-1], window[1] * trace.z[-1]
    m = (trace.z >= z0) & (trace.z <= z1)
    return float(np.polyfit(trace.z[m], np.log(trace.P[m]), 1)[0])


def beat_period(trace: PropagationTrace) -> float:
    """Mean spacing of local maxima of P(z)."""
    P = trace.P
    idx = np.where((P[1:-1] > P[:-2]) & (P[1:-1] >= P[2:]))[0] + 1
    if idx.size < 2:
        return math.nan
    return float(np.mean(np.diff(trace.z[idx])))


def lab_frame(trace: PropagationTrace) -> np.ndarray:
    """Cartesian laboratory-frame field: rotate the co-rotating (x, y) components by phi_t z."""
    pm, pp = trace.psi[:, 0], trace.psi[:, 1]
    x = (pp + pm) / math.sqrt(2)
    y = 1j * (pp - pm) / math.sqrt(2)
    c, s = np.cos(trace.phi_t * trace.z), np.sin(trace.phi_t * trace.z)
    return np.column_stack([c * x - s * y, s * x + c * y])


def torsion_pseudoscalar(trace: PropagationTrace) -> np.ndarray:
    """Re[(E x dE/dz).z / (E.E)] in the laboratory frame, by finite differences along z.

    For a linearly polarized field in a lossless fiber the frame rotation
    phi_t adds to the in-frame rotation k_t, so the value is phi_t + k_t and
    its sign recovers the handedness of the twist.
    """
    E = lab_frame(trace)
    dE = np.gradient(E, trace.z, axis=0)
    num = E[:, 0] * dE[:, 1] - E[:, 1] * dE[:, 0]
    den = E[:, 0] ** 2 + E[:, 1] ** 2
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.real(num / den)
