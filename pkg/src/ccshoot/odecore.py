"""First-order form of the concave-convex Hamiltonian system and its IVP integrator.

The state is ``(u, v, w, z)`` with ``w = u'`` and ``z = v'``::

    u' = w
    v' = z
    w' = -lam * (v_+)**r - (v_+)**p
    z' = -|u|**(q - 1) * u

Shooting starts from ``(0, 0, du0, dv0)`` at ``x = 0`` and integrates to
``x = 1`` with an embedded Dormand-Prince 5(4) pair under PI step control.
The stepping loop is compiled with numba; everything that touches the loop
goes through :func:`_dp45` so that single shots, grid scans and trajectory
recording share one arithmetic path.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from numba import njit

__all__ = [
    "SYSTEMS",
    "DEFAULT_IVP_TOL",
    "POLISH_IVP_TOL",
    "OVERFLOW_GUARD",
    "N_DENSE",
    "DomainError",
    "IntegrationError",
    "ProblemParams",
    "ShootState",
    "Trajectory",
    "rhs",
    "integrate",
]

# Model codes understood by the compiled kernel. "linear" is the manufactured
# test system u'' = -v - lam, v'' = -u (lam acts as a constant source).
SYSTEMS = {"concave_convex": 0, "linear": 1}

DEFAULT_IVP_TOL = (1e-8, 1e-10)
POLISH_IVP_TOL = (1e-12, 1e-15)
OVERFLOW_GUARD = 1e12
N_DENSE = 512
MAX_STEPS = 1_000_000

# kernel status codes
OK, BLOWUP, UNDERFLOW, TOO_MANY_STEPS = 0, 1, 2, 3
_STATUS_TEXT = {BLOWUP: "state blow-up", UNDERFLOW: "step-size underflow",
                TOO_MANY_STEPS: "step budget exhausted"}


class DomainError(ValueError):
    """Invalid parameters or non-finite inputs."""


class IntegrationError(RuntimeError):
    """The IVP solve stopped before reaching x = 1."""

    def __init__(self, message: str, x_reached: float, state: np.ndarray, status: int):
        super().__init__(f"{message} at x={x_reached:.6g}")
        self.x_reached = x_reached
        self.state = state
        self.status = status


@dataclass(frozen=True)
class ProblemParams:
    """Parameter tuple ``(lam, p, q, r)`` of the system.

    ``system`` selects the right-hand side; only tests use anything other
    than the default.
    """

    lam: float
    p: float = 3.0
    q: float = 1.5
    r: float = 1.0 / 3.0
    system: str = "concave_convex"

    def __post_init__(self):
        for name in ("lam", "p", "q", "r"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite, got {getattr(self, name)}")
        if self.lam < 0:
            raise DomainError(f"lambda must be nonnegative, got {self.lam}")
        if self.q <= 0:
            raise DomainError(f"q must be positive, got {self.q}")
        if self.system not in SYSTEMS:
            raise DomainError(f"unknown system {self.system!r}")

    def with_lam(self, lam: float) -> ProblemParams:
        return ProblemParams(lam, self.p, self.q, self.r, self.system)

    def in_concave_convex_regime(self) -> bool:
        q, r, p = self.q, self.r, self.p
        return 0 < r < 1 / q and p > max(1.0, 1 / q)

    def check_concave_convex_regime(self) -> None:
        if not self.in_concave_convex_regime():
            raise DomainError(
                f"(p, q, r) = ({self.p}, {self.q}, {self.r}) violates "
                "0 < r < 1/q and p > max(1, 1/q)"
            )

    @property
    def model(self) -> int:
        return SYSTEMS[self.system]

    def kernel_args(self) -> tuple[float, float, float, float, int]:
        return float(self.lam), float(self.p), float(self.q), float(self.r), self.model


@dataclass(frozen=True)
class ShootState:
    x: float
    u: float
    v: float
    w: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.u, self.v, self.w, self.z])


# --------------------------------------------------------------------------
# compiled core

# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# 5th-order minus embedded 4th-order weights
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920,
                                -17253 / 339200, 22 / 525, -1 / 40)

# Continuous extension (4th order) of the Dormand-Prince pair:
# y(x + th*h) = y + h * sum_s K[s] * (P[s] @ [th, th^2, th^3, th^4])
_DENSE_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

_SAFETY = 0.9
_FAC_MIN, _FAC_MAX = 0.2, 10.0
_BETA = 0.04
_ALPHA = 0.2 - 0.75 * _BETA
_GRADE_MIN = 1e-9


@njit(cache=True, nogil=True)
def _rhs_into(y, lam, p, q, r, model, out):
    u = y[0]
    v = y[1]
    out[0] = y[2]
    out[1] = y[3]
    if model == 1:
        out[2] = -v - lam
        out[3] = -u
        return
    if v > 0.0:
        out[2] = -lam * v ** r - v ** p
    else:
        out[2] = 0.0
    au = abs(u)
    if au > 0.0:
        out[3] = -math.copysign(au ** q, u)
    else:
        out[3] = 0.0


@njit(cache=True, nogil=True)
def _err_norm(e, y, ynew, rtol, atol):
    s = 0.0
    for i in range(4):
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        s += (e[i] / sc) ** 2
    return math.sqrt(s / 4.0)


@njit(cache=True, nogil=True)
def _initial_step(y, f, lam, p, q, r, model, rtol, atol):
    # Hairer-Norsett-Wanner starting step heuristic
    d0 = 0.0
    d1 = 0.0
    for i in range(4):
        sc = atol + rtol * abs(y[i])
        d0 += (y[i] / sc) ** 2
        d1 += (f[i] / sc) ** 2
    d0 = math.sqrt(d0 / 4.0)
    d1 = math.sqrt(d1 / 4.0)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, 1.0)
    y1 = np.empty(4)
    for i in range(4):
        y1[i] = y[i] + h0 * f[i]
    f1 = np.empty(4)
    _rhs_into(y1, lam, p, q, r, model, f1)
    d2 = 0.0
    for i in range(4):
        sc = atol + rtol * abs(y[i])
        d2 += ((f1[i] - f[i]) / sc) ** 2
    d2 = math.sqrt(d2 / 4.0) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 5.0)
    return min(100.0 * h0, h1, 1.0)


@njit(cache=True, nogil=True)
def _dp45(du0, dv0, lam, p, q, r, model, rtol, atol, record):
    """Integrate from x=0 to x=1.

    Returns (status, x, y, nsteps, nrejected, errsum, supu, supv, xs, ys, ks).
    The last three arrays are only filled when ``record`` is true.
    """
    y = np.array([0.0, 0.0, du0, dv0])
    ynew = np.empty(4)
    yt = np.empty(4)
    e = np.empty(4)
    k = np.zeros((7, 4))
    errsum = np.zeros(4)

    cap = 256 if record else 1
    xs = np.empty(cap)
    ys = np.empty((cap, 4))
    ks = np.empty((cap, 7, 4))
    if record:
        xs[0] = 0.0
        ys[0, :] = y

    _rhs_into(y, lam, p, q, r, model, k[0])
    h = _initial_step(y, k[0], lam, p, q, r, model, rtol, atol)
    x = 0.0
    nsteps = 0
    nrej = 0
    errold = 1e-4
    rejected = False
    grade = model == 0
    supu = 0.0
    supv = 0.0
    status = 0

    while x < 1.0:
        if nsteps + nrej >= 1000000:
            status = 3
            break
        if h < 16.0 * 2.220446049250313e-16 * max(x, 1e-3):
            status = 2
            break
        # grade steps toward both ends: the v_+**r term is only Holder
        # continuous where v vanishes, which happens at x = 0 and, for
        # shots near a root, at x = 1
        if grade:
            if x < 0.5:
                hcap = max(x, _GRADE_MIN)
            else:
                hcap = max(0.5 * (1.0 - x), _GRADE_MIN)
            if h > hcap:
                h = hcap
        last = False
        if x + h >= 1.0 or 1.0 - x - h < _GRADE_MIN:
            h = 1.0 - x
            last = True

        for i in range(4):
            yt[i] = y[i] + h * _A21 * k[0, i]
        _rhs_into(yt, lam, p, q, r, model, k[1])
        for i in range(4):
            yt[i] = y[i] + h * (_A31 * k[0, i] + _A32 * k[1, i])
        _rhs_into(yt, lam, p, q, r, model, k[2])
        for i in range(4):
            yt[i] = y[i] + h * (_A41 * k[0, i] + _A42 * k[1, i] + _A43 * k[2, i])
        _rhs_into(yt, lam, p, q, r, model, k[3])
        for i in range(4):
            yt[i] = y[i] + h * (_A51 * k[0, i] + _A52 * k[1, i] + _A53 * k[2, i]
                                + _A54 * k[3, i])
        _rhs_into(yt, lam, p, q, r, model, k[4])
        for i in range(4):
            yt[i] = y[i] + h * (_A61 * k[0, i] + _A62 * k[1, i] + _A63 * k[2, i]
                                + _A64 * k[3, i] + _A65 * k[4, i])
        _rhs_into(yt, lam, p, q, r, model, k[5])
        for i in range(4):
            ynew[i] = y[i] + h * (_B1 * k[0, i] + _B3 * k[2, i] + _B4 * k[3, i]
                                  + _B5 * k[4, i] + _B6 * k[5, i])
        _rhs_into(ynew, lam, p, q, r, model, k[6])
        for i in range(4):
            e[i] = h * (_E1 * k[0, i] + _E3 * k[2, i] + _E4 * k[3, i]
                        + _E5 * k[4, i] + _E6 * k[5, i] + _E7 * k[6, i])
        err = _err_norm(e, y, ynew, rtol, atol)

        if not (err <= 1.0):
            # rejected (also catches NaN from a blown-up trial state)
            nrej += 1
            if err != err:
                fac = _FAC_MIN
            else:
                fac = max(_FAC_MIN, _SAFETY * err ** (-1.0 / 5.0))
            h *= fac
            rejected = True
            continue

        x = 1.0 if last else x + h
        nsteps += 1
        if record:
            if nsteps + 1 > cap:
                cap *= 2
                xs2 = np.empty(cap)
                ys2 = np.empty((cap, 4))
                ks2 = np.empty((cap, 7, 4))
                xs2[:nsteps] = xs[:nsteps]
                ys2[:nsteps] = ys[:nsteps]
                ks2[:nsteps - 1] = ks[:nsteps - 1]
                xs, ys, ks = xs2, ys2, ks2
            xs[nsteps] = x
            ys[nsteps, :] = ynew
            ks[nsteps - 1, :, :] = k[:, :]
        for i in range(4):
            errsum[i] += abs(e[i])
            y[i] = ynew[i]
            k[0, i] = k[6, i]
        if abs(y[0]) > supu:
            supu = abs(y[0])
        if abs(y[1]) > supv:
            supv = abs(y[1])

        blown = False
        for i in range(4):
            if not (abs(y[i]) <= 1e12):
                blown = True
        if blown:
            status = 1
            break

        if err == 0.0:
            fac = _FAC_MAX
        else:
            fac = _SAFETY * err ** (-_ALPHA) * errold ** _BETA
            fac = min(_FAC_MAX, max(_FAC_MIN, fac))
        if rejected:
            fac = min(1.0, fac)
        errold = max(err, 1e-4)
        rejected = False
        h *= fac

    n = nsteps + 1 if record else 1
    return (status, x, y, nsteps, nrej, errsum, supu, supv,
            xs[:n], ys[:n], ks[:max(n - 1, 0)])


@njit(cache=True, nogil=True)
def _final_residues(du, dv, lam, p, q, r, model, rtol, atol):
    """Shoot every (du[i], dv[i]); return terminal u, v and status codes."""
    n = du.shape[0]
    u1 = np.empty(n)
    v1 = np.empty(n)
    status = np.empty(n, dtype=np.int8)
    for i in range(n):
        res = _dp45(du[i], dv[i], lam, p, q, r, model, rtol, atol, False)
        status[i] = res[0]
        u1[i] = res[2][0]
        v1[i] = res[2][1]
    return u1, v1, status


# --------------------------------------------------------------------------
# Python surface

def rhs(state: ShootState | np.ndarray, params: ProblemParams) -> np.ndarray:
    """Right-hand side of the first-order system at ``state``.

    ``state`` may be a :class:`ShootState` or any length-4 sequence
    ``(u, v, w, z)``.
    """
    y = state.as_array() if isinstance(state, ShootState) else np.asarray(state, dtype=float)
    if y.shape != (4,):
        raise DomainError(f"state must have 4 components, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise DomainError(f"non-finite state {y}")
    out = np.empty(4)
    _rhs_into(y.copy(), *params.kernel_args(), out)
    return out


def _check_tol(ivp_tol) -> tuple[float, float]:
    rtol, atol = (float(t) for t in ivp_tol)
    if not (rtol > 0 and atol > 0):
        raise DomainError(f"tolerances must be positive, got {ivp_tol}")
    return rtol, atol


@dataclass
class Trajectory:
    """Dense solution of one shot over [0, 1].

    ``x``/``y`` hold the uniform sample grid (``y`` has shape ``(4, n)`` in
    the order u, v, w, z); ``step_x``/``step_y`` are the accepted step
    nodes. :meth:`at` evaluates the 4th-order continuous extension anywhere
    in [0, 1].
    """

    du0: float
    dv0: float
    params: ProblemParams
    step_x: np.ndarray
    step_y: np.ndarray
    stages: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    nsteps: int
    nrejected: int
    rtol: float
    atol: float
    error_estimate: np.ndarray

    def at(self, xq) -> np.ndarray:
        xq = np.atleast_1d(np.asarray(xq, dtype=float))
        if np.any(xq < 0.0) or np.any(xq > 1.0):
            raise ValueError("query points must lie in [0, 1]")
        if self.nsteps == 0:
            return np.repeat(self.step_y[0][:, None], xq.size, axis=1)
        idx = np.searchsorted(self.step_x, xq, side="right") - 1
        idx = np.clip(idx, 0, self.nsteps - 1)
        x0 = self.step_x[idx]
        h = self.step_x[idx + 1] - x0
        th = (xq - x0) / h
        powers = np.stack([th, th ** 2, th ** 3, th ** 4], axis=1)   # (m, 4)
        weights = powers @ _DENSE_P.T                                  # (m, 7)
        incr = np.einsum("ms,msj->mj", weights, self.stages[idx])
        out = self.step_y[idx] + h[:, None] * incr
        # exact node values where the query hits a node
        hit = xq == self.step_x[idx + 1]
        out[hit] = self.step_y[idx[hit] + 1]
        return out.T

    @property
    def u(self) -> np.ndarray:
        return self.y[0]

    @property
    def v(self) -> np.ndarray:
        return self.y[1]

    @property
    def w(self) -> np.ndarray:
        return self.y[2]

    @property
    def z(self) -> np.ndarray:
        return self.y[3]

    @property
    def final(self) -> ShootState:
        return ShootState(1.0, *map(float, self.step_y[-1]))

    def states(self) -> Iterator[ShootState]:
        for xi, yi in zip(self.x, self.y.T):
            yield ShootState(float(xi), *map(float, yi))

    def uniform(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Samples on an n-point uniform grid including both end points."""
        xs = np.linspace(0.0, 1.0, n)
        return xs, self.at(xs)


def integrate(du0: float, dv0: float, params: ProblemParams,
              ivp_tol: tuple[float, float] = DEFAULT_IVP_TOL,
              n_samples: int = N_DENSE) -> Trajectory:
    """Shoot from slopes ``(du0, dv0)`` and return the dense trajectory.

    Raises IntegrationError on step-size underflow or when a component
    exceeds ``OVERFLOW_GUARD``.
    """
    if not (math.isfinite(du0) and math.isfinite(dv0)):
        raise DomainError(f"initial slopes must be finite, got ({du0}, {dv0})")
    rtol, atol = _check_tol(ivp_tol)
    (status, x_end, y_end, nsteps, nrej, errsum, _supu, _supv,
     xs, ys, ks) = _dp45(float(du0), float(dv0), *params.kernel_args(), rtol, atol, True)
    if status != OK:
        raise IntegrationError(_STATUS_TEXT[status], float(x_end), y_end.copy(), int(status))
    traj = Trajectory(
        du0=float(du0), dv0=float(dv0), params=params,
        step_x=xs, step_y=ys, stages=ks,
        x=np.empty(0), y=np.empty((4, 0)),
        nsteps=int(nsteps), nrejected=int(nrej), rtol=rtol, atol=atol,
        error_estimate=errsum,
    )
    traj.x, traj.y = traj.uniform(n_samples)
    return traj
