"""Dynamical and adiabatic encirclement of three-level EPs.

The loop is an ellipse in the (Delta, F3) plane starting on F3 = 0. The
state is propagated with the full Hamiltonian (common decay included), and
at every output time it is decomposed on the instantaneous adiabatic states
by biorthogonal projection. The normalized inversion A = (P+ - P-)/(P+ + P-)
gives S = A(0) A(T) and, from the four (direction, initial branch) runs,
the switch parameter alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import (EPCandidate, InvalidArgument, StepControl, eig2, propagate,
                   track_branches)
from .three_level import MolecularFieldConfig, ep_closed_form, hamiltonian_factory

DIRECTIONS = ("counterclockwise", "clockwise")
BRANCHES = ("plus", "minus")
T_REFERENCE = 3e5
AU_TIME_PS = 2.418884326585747e-5


@dataclass(frozen=True)
class PathSpec:
    """Elliptic loop around (x0, y0), starting and ending at F3 = 0."""

    x0: float
    y0: float
    rho_x: float
    rho_y: float
    direction: str = "counterclockwise"
    T_loop: float = T_REFERENCE
    t0: float = 0.0

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise InvalidArgument(f"direction must be one of {DIRECTIONS}")
        if not (self.rho_x > 0 and self.rho_y > 0):
            raise InvalidArgument("radii must be positive")
        if not self.T_loop > 0:
            raise InvalidArgument("T_loop must be positive")
        if abs(abs(self.y0) - self.rho_y) > 1e-12 * self.rho_y:
            raise InvalidArgument("loop must start on F3 = 0 (need |y0| == rho_y)")

    def point(self, t):
        # angle measured from the start point, which is the bottom (y0>0) or top (y0<0)
        th = 2 * np.pi * (np.asarray(t) - self.t0) / self.T_loop
        s = 1.0 if self.direction == "counterclockwise" else -1.0
        up = 1.0 if self.y0 > 0 else -1.0
        return (self.x0 + s * up * self.rho_x * np.sin(th),
                self.y0 - up * self.rho_y * np.cos(th))

    def reversed(self) -> "PathSpec":
        other = DIRECTIONS[1 - DIRECTIONS.index(self.direction)]
        return PathSpec(self.x0, self.y0, self.rho_x, self.rho_y, other, self.T_loop, self.t0)

    def same_loop(self, other: "PathSpec") -> bool:
        return (self.x0, self.y0, self.rho_x, self.rho_y, self.T_loop, self.t0) == (
            other.x0, other.y0, other.rho_x, other.rho_y, other.T_loop, other.t0)

    def encloses(self, point) -> bool:
        x, y = point
        return ((x - self.x0) / self.rho_x) ** 2 + ((y - self.y0) / self.rho_y) ** 2 < 1.0


def _ep_xy(ep) -> tuple[float, float]:
    if isinstance(ep, EPCandidate):
        return ep.params["Delta"], ep.params["F3"]
    x, y = ep
    return float(x), float(y)


def make_loop(ep, scale: float = 1.0, shift: float = 1.0, direction: str = "counterclockwise",
              T_loop: float = T_REFERENCE, t0: float = 0.0) -> PathSpec:
    """Reference loop centred on ``ep`` with optional radius scale or centre shift along Delta."""
    x, y = _ep_xy(ep)
    if not T_loop > 0:
        raise InvalidArgument("T_loop must be positive")
    return PathSpec(shift * x, y, scale * abs(x), abs(y), direction, T_loop, t0)


def reference_ep(cfg_R: MolecularFieldConfig) -> EPCandidate:
    """The R-enantiomer EP on the negative-detuning side."""
    eps = ep_closed_form(cfg_R.replace(handedness="R"))
    if not eps:
        raise InvalidArgument("configuration has no exceptional point")
    return min(eps, key=lambda e: e.params["Delta"])


def _H(cfg, path, include_decay=True):
    H = hamiltonian_factory(cfg, include_decay)

    def gen(t):
        d, f = path.point(t)
        return H(float(d), float(f))
    return gen


@dataclass(frozen=True)
class AdiabaticTrace:
    times: np.ndarray
    eigenvalues: np.ndarray  # (n, 2) in tracked order
    swap_flag: bool
    min_gap: float


def adiabatic_trace(cfg: MolecularFieldConfig, path: PathSpec, n_samples: int = 4096,
                    max_depth: int = 12) -> AdiabaticTrace:
    """Branch-tracked eigenvalues along the loop with refinement near small gaps.

    An interval is bisected while an eigenvalue moves by more than half the
    local gap between its endpoints.
    """
    if n_samples < 256:
        raise InvalidArgument("n_samples must be >= 256")
    gen = _H(cfg, path, include_decay=False)
    t = np.linspace(path.t0, path.t0 + path.T_loop, n_samples + 1)
    systems = [eig2(gen(x)) for x in t]
    times = [t[0]]
    refined = [systems[0]]

    def subdivide(ta, sa, tb, sb, depth):
        step = min(max(abs(sa.lambda_plus - sb.lambda_plus), abs(sa.lambda_minus - sb.lambda_minus)),
                   max(abs(sa.lambda_plus - sb.lambda_minus), abs(sa.lambda_minus - sb.lambda_plus)))
        if depth < max_depth and step > 0.5 * min(sa.gap, sb.gap):
            tm = 0.5 * (ta + tb)
            sm = eig2(gen(tm))
            subdivide(ta, sa, tm, sm, depth + 1)
            subdivide(tm, sm, tb, sb, depth + 1)
        else:
            times.append(tb)
            refined.append(sb)

    for i in range(n_samples):
        subdivide(t[i], systems[i], t[i + 1], systems[i + 1], 0)
    track = track_branches(refined, closed=True)
    lam = np.array([[s.lambda_plus, s.lambda_minus] for s in refined])
    return AdiabaticTrace(np.array(times), track.tracked(lam), track.swapped,
                          float(min(s.gap for s in refined)))


@dataclass(frozen=True, eq=False)
class LoopResult:
    times: np.ndarray
    amplitudes: np.ndarray
    Delta: np.ndarray
    F3: np.ndarray
    P_plus: np.ndarray
    P_minus: np.ndarray
    A_of_t: np.ndarray
    S: float
    residual: float
    swap_flag: bool
    path: PathSpec
    handedness: str
    initial_branch: str

    @property
    def norm(self) -> np.ndarray:
        return np.sum(np.abs(self.amplitudes) ** 2, axis=1)

    def table(self) -> dict[str, np.ndarray]:
        return {"t_au": self.times, "Delta_au": self.Delta, "F3_au": self.F3,
                "P_plus": self.P_plus, "P_minus": self.P_minus, "A": self.A_of_t, "norm": self.norm}

    def summary(self) -> dict:
        return {"handedness": self.handedness, "direction": self.path.direction,
                "initial_branch": self.initial_branch, "A_initial": float(self.A_of_t[0]),
                "A_final": float(self.A_of_t[-1]), "S": self.S, "residual": self.residual,
                "swap_flag": self.swap_flag}


def _inversion(p_plus, p_minus):
    tot = p_plus + p_minus
    with np.errstate(invalid="ignore", divide="ignore"):
        A = np.where(tot > 1e-300, (p_plus - p_minus) / tot, 0.0)
    return np.clip(A, -1.0, 1.0)


def run_loop(cfg: MolecularFieldConfig, path: PathSpec, initial_branch: str = "plus",
             ctl: StepControl | None = None, n_out: int = 4096,
             trace: AdiabaticTrace | None = None) -> LoopResult:
    """Propagate one enantiomer around ``path`` starting in an adiabatic state.

    ``residual`` is the surviving norm |psi(T)|^2.
    """
    if initial_branch not in BRANCHES:
        raise InvalidArgument(f"initial_branch must be one of {BRANCHES}")
    ctl = ctl or StepControl(rtol=1e-10, atol=1e-14, max_step=path.T_loop / 200)
    gen = _H(cfg, path)
    es0 = eig2(gen(path.t0))
    psi0 = es0.r_plus if initial_branch == "plus" else es0.r_minus
    t_eval = np.linspace(path.t0, path.t0 + path.T_loop, n_out + 1)
    tr = propagate(gen, psi0, path.t0, path.t0 + path.T_loop, ctl, t_eval=t_eval)
    D, F = path.point(tr.times)
    pops = np.array([eig2(gen(t)).populations(psi) for t, psi in zip(tr.times, tr.states)])
    A = _inversion(pops[:, 0], pops[:, 1])
    if trace is None:
        trace = adiabatic_trace(cfg, path)
    return LoopResult(tr.times, tr.states, np.asarray(D), np.asarray(F), pops[:, 0], pops[:, 1], A,
                      float(A[0] * A[-1]), float(np.sum(np.abs(tr.states[-1]) ** 2)),
                      trace.swap_flag, path, cfg.handedness, initial_branch)


def run_four(cfg: MolecularFieldConfig, path: PathSpec, ctl: StepControl | None = None,
             n_out: int = 4096) -> dict[tuple[str, str], LoopResult]:
    """All four (direction, initial branch) runs on the loop of ``path``."""
    out = {}
    for direction in DIRECTIONS:
        p = path if path.direction == direction else path.reversed()
        trace = adiabatic_trace(cfg, p, n_samples=1024)
        for br in BRANCHES:
            out[(direction, br)] = run_loop(cfg, p, br, ctl, n_out, trace)
    return out


def switch_alpha(results: Mapping[tuple[str, str], LoopResult], printed: bool = False) -> float:
    """alpha = (S_ccw+ S_cw+ + S_ccw- S_cw- + S_ccw+ S_ccw- + S_cw+ S_cw-)/4.

    ``printed=True`` swaps the second term for S_ccw- S_cw+ (kept only for
    comparison; it returns -1/2 for loops that never switch).
    """
    keys = [(d, b) for d in DIRECTIONS for b in BRANCHES]
    missing = [k for k in keys if k not in results]
    if missing:
        raise InvalidArgument(f"missing runs {missing}")
    ref = results[keys[0]]
    for k in keys[1:]:
        r = results[k]
        if not r.path.same_loop(ref.path) or r.handedness != ref.handedness:
            raise InvalidArgument("all four runs must share the loop and enantiomer")
        if r.path.direction != k[0] or r.initial_branch != k[1]:
            raise InvalidArgument(f"run stored under {k} does not match its metadata")
    cp, cm = results[("counterclockwise", "plus")].S, results[("counterclockwise", "minus")].S
    wp, wm = results[("clockwise", "plus")].S, results[("clockwise", "minus")].S
    second = cm * wp if printed else cm * wm
    return float((cp * wp + second + cp * cm + wp * wm) / 4)


def alpha_for(cfg: MolecularFieldConfig, path: PathSpec, ctl=None, n_out: int = 1024) -> float:
    return switch_alpha(run_four(cfg, path, ctl, n_out))


def stability_sweep(cfg_R: MolecularFieldConfig, cfg_L: MolecularFieldConfig, mode: str,
                    grid: Sequence[float], T_loop: float = T_REFERENCE,
                    ctl: StepControl | None = None, n_out: int = 1024) -> list[dict]:
    """alpha for both enantiomers on loops deformed in radius or centre.

    ``mode`` is ``"radius"`` (rho_x scaled by rho) or ``"center"`` (x0 scaled by delta).
    """
    if mode not in ("radius", "center"):
        raise InvalidArgument("mode must be 'radius' or 'center'")
    lo, hi = (0.25, 2.0) if mode == "radius" else (0.0, 2.0)
    ep = reference_ep(cfg_R)
    eps_L = ep_closed_form(cfg_L)
    rows = []
    for v in grid:
        if not lo - 1e-12 <= v <= hi + 1e-12:
            raise InvalidArgument(f"{mode} value {v} outside [{lo}, {hi}]")
        path = make_loop(ep, scale=v if mode == "radius" else 1.0,
                         shift=v if mode == "center" else 1.0, T_loop=T_loop)
        rows.append({
            mode: float(v),
            "alpha_R": alpha_for(cfg_R, path, ctl, n_out),
            "alpha_L": alpha_for(cfg_L, path, ctl, n_out),
            "encloses_R": bool(path.encloses(_ep_xy(ep))),
            "encloses_L": bool(any(path.encloses(_ep_xy(e)) for e in eps_L)),
        })
    return rows
