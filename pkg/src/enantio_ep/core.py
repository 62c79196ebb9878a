"""Two-level non-Hermitian machinery shared by every model in the package.

Contents: closed-form eigenanalysis of complex 2x2 generators, an adaptive
Dormand-Prince 5(4) integrator with dense output, overlap-based branch
tracking and a Newton search for exceptional points (EPs) over two real
parameters.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import optimize
from scipy.integrate import RK45


class InvalidArgument(ValueError):
    """Raised for malformed inputs (shape, non-finite entries, bad ranges)."""


class IntegrationFailure(RuntimeError):
    """Step size underflow or non-finite state during propagation."""

    def __init__(self, message: str, t_last: float, times=None, states=None):
        super().__init__(message)
        self.t_last = t_last
        self.times = times
        self.states = states


class AmbiguousTrackingWarning(UserWarning):
    pass


def as_matrix2(H) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if H.shape != (2, 2):
        raise InvalidArgument(f"expected a 2x2 matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise InvalidArgument("matrix has non-finite entries")
    return H


def _norm2(x, y) -> float:
    return math.sqrt(abs(x) ** 2 + abs(y) ** 2)


def _fix_phase(x: complex, y: complex) -> np.ndarray:
    n = _norm2(x, y)
    x, y = x / n, y / n
    for comp in (x, y):
        a = abs(comp)
        if a > 1e-14:
            ph = comp.conjugate() / a
            return np.array([x * ph, y * ph])
    return np.array([x, y])


@dataclass(frozen=True)
class EigenSystem2:
    """Eigenpairs of a 2x2 matrix with biorthogonal left vectors.

    Right vectors have unit norm and a real non-negative first non-zero
    component; left vectors (rows) are normalised the same way, so
    ``c_k = l_k . r_k`` carries the biorthogonal normalisation.
    """

    lambda_plus: complex
    lambda_minus: complex
    r_plus: np.ndarray
    r_minus: np.ndarray
    l_plus: np.ndarray
    l_minus: np.ndarray
    defective: bool
    scale: float

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([self.lambda_plus, self.lambda_minus])

    @property
    def gap(self) -> float:
        return abs(self.lambda_plus - self.lambda_minus)

    @property
    def c_plus(self) -> complex:
        return complex(self.l_plus @ self.r_plus)

    @property
    def c_minus(self) -> complex:
        return complex(self.l_minus @ self.r_minus)

    @property
    def phase_rigidity(self) -> float:
        # |l.r| / (|l||r|), averaged over both branches; tends to 0 at an EP
        return 0.5 * (abs(self.c_plus) + abs(self.c_minus))

    @property
    def right(self) -> np.ndarray:
        return np.column_stack([self.r_plus, self.r_minus])

    @property
    def left(self) -> np.ndarray:
        return np.vstack([self.l_plus, self.l_minus])

    def reconstruct(self) -> np.ndarray:
        R = self.right
        return R @ np.diag(self.eigenvalues) @ np.linalg.inv(R)

    def populations(self, psi) -> np.ndarray:
        """Adiabatic populations |l_k psi / c_k|^2 (unit-norm right vectors)."""
        psi = np.asarray(psi, dtype=complex)
        out = np.empty(2)
        for k, (l, c) in enumerate(((self.l_plus, self.c_plus), (self.l_minus, self.c_minus))):
            out[k] = abs(l @ psi) ** 2 / abs(c) ** 2 if c != 0 else math.inf
        return out


def eig2(H) -> EigenSystem2:
    """Closed-form eigensystem of a complex 2x2 matrix.

    ``lambda_plus`` has the larger real part (ties broken by the larger
    imaginary part), which is what the principal square root of the
    discriminant gives directly.
    """
    H = as_matrix2(H)
    a, b, c, d = (complex(v) for v in H.ravel())
    m = 0.5 * (a + d)
    h = 0.5 * (a - d)
    s = cmath.sqrt(h * h + b * c)
    lam = (m + s, m - s)
    scale = math.sqrt(abs(a) ** 2 + abs(b) ** 2 + abs(c) ** 2 + abs(d) ** 2)

    vecs_r, vecs_l = [], []
    for k, sg in enumerate((1.0, -1.0)):
        p, q = -h + sg * s, h + sg * s
        # two candidate null vectors; the longer one is better conditioned
        rx, ry = (b, p) if _norm2(b, p) >= _norm2(q, c) else (q, c)
        lx, ly = (c, p) if _norm2(c, p) >= _norm2(q, b) else (q, b)
        if _norm2(rx, ry) < 1e-300:
            rx, ry = (1.0, 0.0) if k == 0 else (0.0, 1.0)
        if _norm2(lx, ly) < 1e-300:
            lx, ly = (1.0, 0.0) if k == 0 else (0.0, 1.0)
        vecs_r.append(_fix_phase(complex(rx), complex(ry)))
        vecs_l.append(_fix_phase(complex(lx), complex(ly)))

    gap = abs(2 * s)
    overlap = abs(np.vdot(vecs_r[0], vecs_r[1]))
    defective = bool(gap <= 1e-12 * max(scale, 1e-300) and overlap > 1 - 1e-8)
    return EigenSystem2(lam[0], lam[1], vecs_r[0], vecs_r[1], vecs_l[0], vecs_l[1], defective, scale)


def discriminant(H) -> complex:
    """((a-d)/2)^2 + bc; zero exactly at degeneracies."""
    H = np.asarray(H, dtype=complex)
    h = 0.5 * (H[0, 0] - H[1, 1])
    return complex(h * h + H[0, 1] * H[1, 0])


# ---------------------------------------------------------------- propagation

@dataclass(frozen=True)
class StepControl:
    """Tolerances for :func:`propagate`.

    ``dense_output_stride`` is the number of equal intervals of the output
    grid when no explicit ``t_eval`` is passed.
    """

    rtol: float = 1e-10
    atol: float = 1e-12
    max_step: float = math.inf
    initial_step: float | None = None
    dense_output_stride: int = 1000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise InvalidArgument("rtol and atol must be positive")
        if self.max_step <= 0:
            raise InvalidArgument("max_step must be positive")
        if int(self.dense_output_stride) < 1:
            raise InvalidArgument("dense_output_stride must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    n_steps: int = 0
    n_rejected: int = 0

    @property
    def norms(self) -> np.ndarray:
        return np.sum(np.abs(self.states) ** 2, axis=1)


def propagate(
    generator: Callable[[float], np.ndarray],
    psi0,
    t0: float,
    t1: float,
    ctl: StepControl | None = None,
    convention: str = "schrodinger",
    t_eval: Sequence[float] | None = None,
) -> Trajectory:
    """Integrate d psi/dt = -i H(t) psi (or d psi/dz = H(z) psi).

    Steps with scipy's Dormand-Prince 5(4) pair. ``convention`` is
    ``"schrodinger"`` or ``"spatial"``. Output is sampled on ``t_eval`` if
    given, otherwise on a uniform grid with ``ctl.dense_output_stride``
    intervals, through the pair's quartic continuous extension.
    """
    ctl = ctl or StepControl()
    if convention == "schrodinger":
        pref = -1j
    elif convention == "spatial":
        pref = 1.0
    else:
        raise InvalidArgument(f"unknown convention {convention!r}")
    y = np.asarray(psi0, dtype=complex).copy()
    if y.shape != (2,) or not np.all(np.isfinite(y)):
        raise InvalidArgument("psi0 must be a finite complex 2-vector")
    if not (math.isfinite(t0) and math.isfinite(t1)) or t1 < t0:
        raise InvalidArgument("need finite t0 <= t1")

    if t_eval is None:
        t_out = np.linspace(t0, t1, int(ctl.dense_output_stride) + 1)
    else:
        t_out = np.asarray(t_eval, dtype=float)
        if t_out.ndim != 1 or np.any(np.diff(t_out) < 0) or t_out[0] < t0 or t_out[-1] > t1:
            raise InvalidArgument("t_eval must be sorted and inside [t0, t1]")
    out = np.empty((t_out.size, 2), dtype=complex)
    iout = int(np.searchsorted(t_out, t0, side="right"))
    out[:iout] = y
    if t1 == t0:
        out[iout:] = y
        return Trajectory(t_out, out)

    def f(t, v):
        return pref * (np.asarray(generator(t), dtype=complex) @ v)

    solver = RK45(f, t0, y, t1, rtol=ctl.rtol, atol=ctl.atol, max_step=ctl.max_step,
                  first_step=ctl.initial_step)
    n_steps = 0
    while solver.status == "running":
        # overflow in a trial step shows up as a non-finite error norm and is rejected
        with np.errstate(over="ignore", invalid="ignore"):
            msg = solver.step()
        if solver.status == "failed" or not np.all(np.isfinite(solver.y)):
            raise IntegrationFailure(f"{msg or 'non-finite state'} (t={solver.t})", solver.t,
                                     t_out[:iout], out[:iout])
        n_steps += 1
        stop = int(np.searchsorted(t_out, solver.t, side="right"))
        if stop > iout:
            out[iout:stop] = solver.dense_output()(t_out[iout:stop]).T
            iout = stop
    out[iout:] = solver.y
    if t_eval is None:
        out[-1] = solver.y
    # every attempt costs six evaluations; one more for the start, one for the step guess
    attempts = (solver.nfev - 1 - (ctl.initial_step is None)) // 6
    return Trajectory(t_out, out, n_steps, max(attempts - n_steps, 0))


# ------------------------------------------------------------ branch tracking

@dataclass(frozen=True)
class BranchTrack:
    """``order[i, j]`` is the raw index (0 = plus, 1 = minus) of tracked branch j at sample i."""

    order: np.ndarray
    swapped: bool
    ambiguous: tuple[int, ...] = ()

    def tracked(self, values: np.ndarray) -> np.ndarray:
        """Reorder per-sample pairs ``values[i, raw]`` into tracked order."""
        idx = np.arange(len(self.order))[:, None]
        return np.asarray(values)[idx, self.order]


def track_branches(systems: Sequence[EigenSystem2], closed: bool = True) -> BranchTrack:
    """Follow eigenbranches along a sampled path by maximal biorthogonal overlap."""
    n = len(systems)
    if n == 0:
        raise InvalidArgument("empty path")
    order = np.zeros((n, 2), dtype=int)
    order[0] = (0, 1)
    ambiguous = []
    for i in range(1, n):
        a, b = systems[i - 1], systems[i]
        L = (a.l_plus, a.l_minus)
        R = (b.r_plus, b.r_minus)
        O = np.array([[abs(L[k] @ R[q]) for q in range(2)] for k in range(2)])
        swap = O[0, 1] + O[1, 0] > O[0, 0] + O[1, 1]
        if b.gap <= 1e-12 * max(b.scale, 1e-300) and i < n - 1:
            ambiguous.append(i)
        order[i] = 1 - order[i - 1] if swap else order[i - 1]
    if ambiguous:
        warnings.warn(f"degenerate samples at {ambiguous}", AmbiguousTrackingWarning, stacklevel=2)
    swapped = bool(closed and order[-1, 0] != order[0, 0])
    return BranchTrack(order, swapped, tuple(ambiguous))


# -------------------------------------------------------------- EP location

@dataclass(frozen=True)
class EPCandidate:
    params: Mapping[str, float]
    gap: float
    phase_rigidity: float
    converged: bool

    def point(self) -> tuple[float, ...]:
        return tuple(self.params.values())


def ep_locate(
    H_of_params: Callable[..., np.ndarray],
    region: Mapping[str, tuple[float, float]],
    tol: float = 1e-6,
    grid: int = 64,
    max_starts: int = 24,
) -> list[EPCandidate]:
    """Find EPs of a two-parameter family inside a rectangular region.

    Local minima of |D|/|H|^2 on a ``grid x grid`` lattice seed a Newton
    (hybrid Powell) solve of D = 0, where D is the 2x2 discriminant.
    Accepted points have gap < tol*|H| and phase rigidity < 1e-3 (this
    rejects Hermitian diabolic points). Duplicates are merged.
    """
    names = list(region)
    if len(names) != 2:
        raise InvalidArgument("region must have exactly two parameters")
    lo = np.array([region[k][0] for k in names], dtype=float)
    hi = np.array([region[k][1] for k in names], dtype=float)
    if not np.all(hi > lo):
        raise InvalidArgument("empty parameter region")
    if not tol > 0:
        raise InvalidArgument("tol must be positive")

    def H_at(u):
        p = lo + np.asarray(u) * (hi - lo)
        return as_matrix2(H_of_params(**dict(zip(names, map(float, p)))))

    def dnorm(u):
        H = H_at(u)
        return abs(discriminant(H)) / max(float(np.linalg.norm(H)) ** 2, 1e-300)

    g = np.linspace(0.0, 1.0, grid)
    Z = np.array([[dnorm((x, y)) for y in g] for x in g])
    pad = np.pad(Z, 1, constant_values=np.inf)
    is_min = np.ones_like(Z, dtype=bool)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            if dx or dy:
                is_min &= Z <= pad[1 + dx:1 + dx + grid, 1 + dy:1 + dy + grid]
    cand = np.argwhere(is_min)
    cand = cand[np.argsort(Z[is_min], kind="stable")][:max_starts]

    xtol = min(1e-12, tol * 1e-6)
    found: list[tuple[np.ndarray, EigenSystem2, bool]] = []
    for i, j in cand:
        u0 = np.array([g[i], g[j]])
        s2 = max(float(np.linalg.norm(H_at(u0))) ** 2, 1e-300)

        def F(u):
            D = discriminant(H_at(u)) / s2
            return [D.real, D.imag]

        sol = optimize.root(F, u0, method="hybr", options={"xtol": xtol})
        u = sol.x
        if not np.all((u >= -1e-9) & (u <= 1 + 1e-9)):
            continue
        u = np.clip(u, 0.0, 1.0)
        es = eig2(H_at(u))
        if es.gap < tol * max(es.scale, 1e-300) and es.phase_rigidity < 1e-3:
            found.append((u, es, bool(sol.success)))

    merged: list[tuple[np.ndarray, EigenSystem2, bool]] = []
    for u, es, ok in found:
        for k, (v, ev, okv) in enumerate(merged):
            if np.linalg.norm(u - v) < 1e-3:
                if es.gap < ev.gap:
                    merged[k] = (u, es, ok)
                break
        else:
            merged.append((u, es, ok))
    merged.sort(key=lambda item: tuple(item[0]))
    result = []
    for u, es, ok in merged:
        p = lo + u * (hi - lo)
        result.append(EPCandidate(dict(zip(names, map(float, p))), es.gap, es.phase_rigidity, ok))
    return result
