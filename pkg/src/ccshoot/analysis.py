"""Energy, analytical thresholds and checks on computed solutions."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.integrate import simpson

from .odecore import DomainError, ProblemParams, Trajectory

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


# --------------------------------------------------------------------------
# energy

@dataclass(frozen=True)
class EnergyBreakdown:
    bending: float
    concave: float
    convex: float
    total: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def _energy_terms(x: np.ndarray, y: np.ndarray, params: ProblemParams, rule) -> EnergyBreakdown:
    p, q, r, lam = params.p, params.q, params.r, params.lam
    u, v = y[0], y[1]
    vp = np.maximum(v, 0.0)
    bending = q / (q + 1) * rule(np.abs(u) ** (q + 1), x=x)
    concave = lam / (r + 1) * rule(vp ** (r + 1), x=x)
    convex = 1.0 / (p + 1) * rule(vp ** (p + 1), x=x)
    return EnergyBreakdown(float(bending), float(concave), float(convex),
                           float(bending - concave - convex))


def energy(traj: Trajectory, params: ProblemParams | None = None) -> EnergyBreakdown:
    """J split into its three terms, by composite Simpson on the dense samples.

    The bending term uses |v''|^((q+1)/q) = |u|^(q+1), which holds exactly
    along the first-order flow.
    """
    params = params or traj.params
    if traj.x.size < 3 or traj.x[-1] != 1.0:
        raise DomainError("trajectory must be sampled up to x = 1")
    return _energy_terms(traj.x, traj.y, params, simpson)


def energy_trapezoid(traj: Trajectory, n: int = 4096,
                     params: ProblemParams | None = None) -> EnergyBreakdown:
    """Same functional by the trapezoid rule on ``n`` dense-output samples."""
    xs, ys = traj.uniform(n)
    return _energy_terms(xs, ys, params or traj.params, np.trapezoid)


def bending_from_z(traj: Trajectory, n: int | None = None) -> float:
    """int |v''|^((q+1)/q) with v'' taken from differences of z = v'."""
    xs, ys = (traj.x, traj.y) if n is None else traj.uniform(n)
    q = traj.params.q
    vpp = np.gradient(ys[3], xs, edge_order=2)
    return float(simpson(np.abs(vpp) ** ((q + 1) / q), x=xs))


def sup_norm(traj: Trajectory, component: int) -> float:
    """max |y_component| over [0, 1], refined around the best sample."""
    xs = np.union1d(traj.x, traj.step_x)
    vals = np.abs(traj.at(xs)[component])
    i = int(np.argmax(vals))
    best = float(vals[i])
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, xs.size - 1)]
    if b > a:
        xm = golden_section_max(lambda t: abs(float(traj.at(t)[component, 0])), a, b, 1e-12)
        best = max(best, abs(float(traj.at(xm)[component, 0])))
    return best


# --------------------------------------------------------------------------
# thresholds

def _check_regime(p: float, q: float, r: float) -> None:
    if not all(math.isfinite(t) for t in (p, q, r)):
        raise DomainError("exponents must be finite")
    if q <= 0 or r <= 0:
        raise DomainError(f"need q > 0 and r > 0, got q={q}, r={r}")
    if p * q <= 1:
        raise DomainError(f"need pq > 1, got pq={p * q}")
    if q * r >= 1:
        raise DomainError(f"need qr < 1, got qr={q * r}")
    if p <= r:
        raise DomainError(f"need p > r, got p={p}, r={r}")


def h_fn(t, p: float, q: float, r: float):
    t = np.asarray(t, dtype=float)
    out = q / (q + 1) * t ** (1 / q - r) - t ** (p - r) / (2 ** (p + 1) * (p + 1))
    return float(out) if out.ndim == 0 else out


def threshold_T(p: float, q: float, r: float) -> float:
    """Closed-form maximiser of h on (0, inf)."""
    _check_regime(p, q, r)
    base = 2 ** (p + 1) * (1 - q * r) * (p + 1) / ((q + 1) * (p - r))
    return base ** (q / (p * q - 1))


def lambda0_basic(p: float, q: float, r: float) -> float:
    return 2 ** (r + 1) * (r + 1) * h_fn(threshold_T(p, q, r), p, q, r)


_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma_fn(z: float) -> float:
    """Euler Gamma for z > 0 (Lanczos, g = 7, nine terms)."""
    z = float(z)
    if not (z > 0 and math.isfinite(z)):
        raise DomainError(f"gamma_fn needs a finite z > 0, got {z}")
    if z < 0.5:
        return math.pi / (math.sin(math.pi * z) * gamma_fn(1.0 - z))
    z -= 1.0
    acc = _LANCZOS[0]
    for k in range(1, 9):
        acc += _LANCZOS[k] / (z + k)
    t = z + _LANCZOS_G + 0.5
    return math.sqrt(2 * math.pi) * t ** (z + 0.5) * math.exp(-t) * acc


def conjugate_exponents(q: float) -> tuple[float, float]:
    if q <= 0:
        raise DomainError(f"q must be positive, got {q}")
    gamma = (q + 1) / q
    return gamma, gamma / (gamma - 1)


def _kemb_term(g: float) -> float:
    return (math.sqrt(math.pi) * gamma_fn(g) / gamma_fn(g + 0.5) - 1 / g) ** (1 / g)


def k_emb(q: float) -> float:
    """Upper bound for the embedding constant in terms of gamma = (q+1)/q."""
    g, gp = conjugate_exponents(q)
    return 0.125 * min(_kemb_term(g), _kemb_term(gp))


def lambda0_improved(p: float, q: float, r: float) -> float:
    T = threshold_T(p, q, r)
    return (r + 1) / k_emb(q) ** (r + 1) * h_fn(T, p, q, r)


@dataclass(frozen=True)
class ThresholdReport:
    p: float
    q: float
    r: float
    T: float
    hT: float
    lambda0_basic: float
    gamma: float
    gamma_prime: float
    K_emb: float
    lambda0_improved: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def threshold_report(p: float, q: float, r: float) -> ThresholdReport:
    T = threshold_T(p, q, r)
    g, gp = conjugate_exponents(q)
    return ThresholdReport(p, q, r, T, h_fn(T, p, q, r), lambda0_basic(p, q, r), g, gp,
                           k_emb(q), lambda0_improved(p, q, r))


def golden_section_max(f: Callable[[float], float], a: float, b: float,
                       tol: float = 1e-10, max_iter: int = 500) -> float:
    """Maximiser of a unimodal f on [a, b] by golden-section search."""
    if not a < b:
        raise DomainError(f"empty bracket [{a}, {b}]")
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


# --------------------------------------------------------------------------
# checks on solutions

@dataclass(frozen=True)
class SymmetryReport:
    v_sym_defect: float
    u_sym_defect: float
    v_max_location: float
    u_max_location: float
    critical_point_count: int
    u_critical_point_count: int

    def relative_v_defect(self, sup_v: float) -> float:
        return self.v_sym_defect / sup_v if sup_v > 0 else self.v_sym_defect

    def as_dict(self) -> dict:
        return asdict(self)


def _argmax_location(x: np.ndarray, f: np.ndarray) -> float:
    top = f.max()
    idx = np.flatnonzero(f == top)
    dist = np.abs(x[idx] - 0.5)
    near = idx[dist == dist.min()]
    return float(x[near].mean())


def _sign_changes(f: np.ndarray) -> int:
    s = np.sign(f)
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


def verify_symmetry(traj: Trajectory) -> SymmetryReport:
    """Reflection defects about x = 1/2, argmax locations on the dense grid
    and the number of sign changes of v' and u'."""
    x, (u, v, w, z) = traj.x, traj.y
    xr = 1.0 - x
    if np.allclose(xr[::-1], x, rtol=0, atol=1e-15):
        u_ref, v_ref = u[::-1], v[::-1]
    else:
        u_ref, v_ref = traj.at(xr)[:2]
    return SymmetryReport(
        v_sym_defect=float(np.max(np.abs(v - v_ref))),
        u_sym_defect=float(np.max(np.abs(u - u_ref))),
        v_max_location=_argmax_location(x, v),
        u_max_location=_argmax_location(x, u),
        critical_point_count=_sign_changes(z[1:-1]),
        u_critical_point_count=_sign_changes(w[1:-1]),
    )


@dataclass(frozen=True)
class ResidualReport:
    n: int
    max_defect: float
    interior_defect: float
    margin: float


def residual_defects(traj: Trajectory, params: ProblemParams | None = None,
                     n: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise defect of -u'' = lam v_+^r + v_+^p and -v'' = |u|^(q-1) u at
    interior points of an n-point uniform grid (second differences)."""
    params = params or traj.params
    xs, ys = (traj.x, traj.y) if n is None else traj.uniform(n)
    hsq = (xs[1] - xs[0]) ** 2
    u, v = ys[0], ys[1]
    upp = (u[2:] - 2 * u[1:-1] + u[:-2]) / hsq
    vpp = (v[2:] - 2 * v[1:-1] + v[:-2]) / hsq
    ui, vi = u[1:-1], v[1:-1]
    vp = np.maximum(vi, 0.0)
    if params.system == "linear":
        fu = vi + params.lam
        fv = ui
    else:
        fu = params.lam * vp ** params.r + vp ** params.p
        fv = np.sign(ui) * np.abs(ui) ** params.q
    defect = np.maximum(np.abs(-upp - fu), np.abs(-vpp - fv))
    return xs[1:-1], defect


def verify_residual(traj: Trajectory, params: ProblemParams | None = None,
                    n: int | None = None, margin: float = 0.0) -> float:
    """Max pointwise second-difference defect over interior grid points with
    ``margin <= x <= 1 - margin``."""
    xs, defect = residual_defects(traj, params, n)
    keep = (xs >= margin - 1e-12) & (xs <= 1 - margin + 1e-12)
    return float(defect[keep].max()) if keep.any() else 0.0


def residual_report(traj: Trajectory, params: ProblemParams | None = None,
                    n: int | None = None, margin: float = 0.05) -> ResidualReport:
    xs, _ = (traj.x, None) if n is None else (np.linspace(0, 1, n), None)
    return ResidualReport(xs.size, verify_residual(traj, params, n, 0.0),
                          verify_residual(traj, params, n, margin), margin)
