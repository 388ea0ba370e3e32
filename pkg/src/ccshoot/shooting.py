"""Shooting map, four-colour sign classification and root localisation.

A vertex ``(du0, dv0)`` of the slope plane is coloured by the signs of
``Phi(du0, dv0) = (u(1), v(1))``. Places where all four colours meet are
candidates for zeros of ``Phi`` (Poincare-Miranda heuristic). Candidates are
polished by quadrisection that keeps all four colours, falling back to a
Broyden iteration when the colours stop nesting.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np
from scipy import ndimage

from .odecore import (
    DEFAULT_IVP_TOL,
    OK,
    POLISH_IVP_TOL,
    DomainError,
    IntegrationError,
    ProblemParams,
    Trajectory,
    _dp45,
    _final_residues,
    integrate,
)

log = logging.getLogger(__name__)

ZERO_GUARD = 1e-14
DEFAULT_EPS = 1e-6
DEFAULT_REL_EPS = 1e-7
DEFAULT_NEIGHBORHOOD = 3


class Quadrant(IntEnum):
    GREEN = 0   # u(1) > 0, v(1) > 0
    YELLOW = 1  # u(1) > 0, v(1) < 0
    BLUE = 2    # u(1) < 0, v(1) > 0
    RED = 3     # u(1) < 0, v(1) < 0


MASKED = -1


@dataclass(frozen=True)
class Residue:
    u1: float
    v1: float
    status: str = "ok"          # "ok" | "blowup"
    sup_u: float = math.nan
    sup_v: float = math.nan

    @property
    def size(self) -> float:
        return max(abs(self.u1), abs(self.v1))


@dataclass(frozen=True)
class ScanWindow:
    """Rectangle of the slope plane with its vertex spacing.

    ``dv_delta`` defaults to ``delta``; a separate value gives an
    anisotropic grid for windows whose sides differ by orders of magnitude.
    """

    du_min: float
    du_max: float
    dv_min: float
    dv_max: float
    delta: float
    dv_delta: float | None = None

    def __post_init__(self):
        if not (self.du_min < self.du_max and self.dv_min < self.dv_max):
            raise DomainError(f"degenerate window {self}")
        if not (self.delta > 0 and self.step_v > 0):
            raise DomainError(f"grid spacing must be positive in {self}")

    @property
    def step_u(self) -> float:
        return self.delta

    @property
    def step_v(self) -> float:
        return self.delta if self.dv_delta is None else self.dv_delta

    @property
    def shape(self) -> tuple[int, int]:
        nu = int(math.floor((self.du_max - self.du_min) / self.step_u + 1e-9))
        nv = int(math.floor((self.dv_max - self.dv_min) / self.step_v + 1e-9))
        return nu + 1, nv + 1

    def du_values(self) -> np.ndarray:
        return self.du_min + np.arange(self.shape[0]) * self.step_u

    def dv_values(self) -> np.ndarray:
        return self.dv_min + np.arange(self.shape[1]) * self.step_v

    @property
    def diameter(self) -> float:
        return math.hypot(self.du_max - self.du_min, self.dv_max - self.dv_min)


@dataclass
class ColorGrid:
    """Per-vertex colours of a window; vertex (i, j) sits at
    ``(du_min + i*step_u, dv_min + j*step_v)``. Unevaluated vertices carry
    ``MASKED`` and NaN residues."""

    window: ScanWindow
    labels: np.ndarray      # int8, shape window.shape
    u1: np.ndarray
    v1: np.ndarray
    blowup: np.ndarray      # bool

    @property
    def evaluated(self) -> np.ndarray:
        return self.labels != MASKED

    @property
    def du(self) -> np.ndarray:
        return self.window.du_values()

    @property
    def dv(self) -> np.ndarray:
        return self.window.dv_values()

    def colors_present(self) -> set[Quadrant]:
        return {Quadrant(c) for c in np.unique(self.labels) if c != MASKED}

    def to_csv(self) -> str:
        """CSV with header ``du0,dv0,u1,v1,quadrant`` over evaluated vertices,
        row-major in (i, j)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["du0", "dv0", "u1", "v1", "quadrant"])
        du, dv = self.du, self.dv
        for i, j in zip(*np.nonzero(self.evaluated)):
            w.writerow([repr(float(du[i])), repr(float(dv[j])), repr(float(self.u1[i, j])),
                        repr(float(self.v1[i, j])), Quadrant(self.labels[i, j]).name.lower()])
        return buf.getvalue()


@dataclass(frozen=True)
class MeetingCell:
    """Bounding box of a cluster of k x k vertex blocks that see all four colours."""

    du_lo: float
    du_hi: float
    dv_lo: float
    dv_hi: float
    i0: int
    j0: int
    i1: int
    j1: int
    colors: int = 4

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.du_lo + self.du_hi), 0.5 * (self.dv_lo + self.dv_hi)


@dataclass
class SolutionRecord:
    lam: float
    du0: float
    dv0: float
    sup_v: float
    sup_u: float
    energy: float
    residue_u1: float
    residue_v1: float
    branch: str = "unlabeled"
    symmetry_defect: float = math.nan
    iterations: int = 0
    method: str = ""
    min_u: float = math.nan
    min_v: float = math.nan
    trajectory: Trajectory | None = field(default=None, repr=False, compare=False)

    @property
    def residue(self) -> float:
        return max(abs(self.residue_u1), abs(self.residue_v1))


# --------------------------------------------------------------------------
# shooting map and classification

def shoot(du0: float, dv0: float, params: ProblemParams,
          ivp_tol: tuple[float, float] = DEFAULT_IVP_TOL) -> Residue:
    """Evaluate ``Phi(du0, dv0) = (u(1), v(1))``.

    A shot that blows up returns ``status="blowup"`` with the state at the
    last accepted step, whose signs stand in for the terminal signs.
    """
    rtol, atol = ivp_tol
    status, x, y, _n, _nr, _e, supu, supv, *_ = _dp45(
        float(du0), float(dv0), *params.kernel_args(), float(rtol), float(atol), False)
    if status == OK:
        return Residue(float(y[0]), float(y[1]), "ok", float(supu), float(supv))
    if y[0] == 0.0 and y[1] == 0.0:
        raise IntegrationError("cannot infer terminal signs", float(x), y.copy(), int(status))
    return Residue(float(y[0]), float(y[1]), "blowup", float(supu), float(supv))


def _label_codes(u1: np.ndarray, v1: np.ndarray) -> np.ndarray:
    u_neg = u1 <= -ZERO_GUARD
    v_neg = v1 <= -ZERO_GUARD
    return (2 * u_neg + v_neg).astype(np.int8)


def classify(res: Residue) -> Quadrant:
    """Colour of a residue; values within ZERO_GUARD of zero count as positive."""
    return Quadrant(int(_label_codes(np.array([res.u1]), np.array([res.v1]))[0]))


def _evaluate(du: np.ndarray, dv: np.ndarray, params: ProblemParams,
              ivp_tol, workers: int = 1) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rtol, atol = (float(t) for t in ivp_tol)
    args = params.kernel_args()
    du = np.ascontiguousarray(du, dtype=float)
    dv = np.ascontiguousarray(dv, dtype=float)
    if workers <= 1 or du.size < 2 * workers:
        return _final_residues(du, dv, *args, rtol, atol)
    # each chunk writes its own slice; the merged arrays do not depend on
    # how the work was split
    bounds = np.linspace(0, du.size, workers + 1).astype(int)
    u1 = np.empty(du.size)
    v1 = np.empty(du.size)
    st = np.empty(du.size, dtype=np.int8)

    def run(k):
        a, b = bounds[k], bounds[k + 1]
        u1[a:b], v1[a:b], st[a:b] = _final_residues(du[a:b], dv[a:b], *args, rtol, atol)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(run, range(workers)))
    return u1, v1, st


def _fill(grid: ColorGrid, mask: np.ndarray, params: ProblemParams, ivp_tol, workers: int):
    ii, jj = np.nonzero(mask)
    if ii.size == 0:
        return
    du = grid.du[ii]
    dv = grid.dv[jj]
    u1, v1, st = _evaluate(du, dv, params, ivp_tol, workers)
    grid.u1[ii, jj] = u1
    grid.v1[ii, jj] = v1
    grid.blowup[ii, jj] = st != OK
    grid.labels[ii, jj] = _label_codes(u1, v1)


def _empty_grid(window: ScanWindow) -> ColorGrid:
    shape = window.shape
    return ColorGrid(window, np.full(shape, MASKED, dtype=np.int8),
                     np.full(shape, np.nan), np.full(shape, np.nan),
                     np.zeros(shape, dtype=bool))


def scan_grid(window: ScanWindow, params: ProblemParams,
              ivp_tol: tuple[float, float] = DEFAULT_IVP_TOL,
              workers: int = 1, mask: np.ndarray | None = None) -> ColorGrid:
    """Shoot and colour every vertex of ``window`` (or only where ``mask`` is set)."""
    grid = _empty_grid(window)
    if mask is None:
        mask = np.ones(window.shape, dtype=bool)
    _fill(grid, mask, params, ivp_tol, workers)
    return grid


def boundary_cells(grid: ColorGrid, dilate: int = 1) -> np.ndarray:
    """Cells (i, j) spanning vertices i..i+1, j..j+1 whose evaluated corners
    disagree in colour, grown by ``dilate`` cells in every direction."""
    lab = grid.labels
    corners = [lab[:-1, :-1], lab[1:, :-1], lab[:-1, 1:], lab[1:, 1:]]
    ref = np.max(np.stack(corners), axis=0)
    active = np.zeros(ref.shape, dtype=bool)
    for c in corners:
        active |= (c != MASKED) & (ref != MASKED) & (c != ref)
    if dilate and active.any():
        active = ndimage.binary_dilation(active, iterations=dilate)
    return active


def refine_to_dense(coarse: ColorGrid, dense_delta: float, params: ProblemParams,
                    ivp_tol: tuple[float, float] = DEFAULT_IVP_TOL,
                    workers: int = 1, dilate: int = 1) -> ColorGrid:
    """Re-scan at ``dense_delta`` only inside coarse cells next to a colour change.

    The dense grid spans the coarse window; all other vertices stay masked
    (the blank rectangles of the diagram). The dv spacing is scaled by the
    same factor as du, so anisotropic windows keep their aspect.
    """
    cw = coarse.window
    if not dense_delta < cw.step_u:
        raise DomainError(f"dense delta {dense_delta} must be below coarse delta {cw.step_u}")
    ratio = dense_delta / cw.step_u
    dw = ScanWindow(cw.du_min, cw.du_max, cw.dv_min, cw.dv_max, dense_delta,
                    None if cw.dv_delta is None else cw.step_v * ratio)
    dense = _empty_grid(dw)
    active = boundary_cells(coarse, dilate)
    if not active.any():
        return dense
    du, dv = dense.du, dense.dv
    cdu, cdv = coarse.du, coarse.dv
    mask = np.zeros(dw.shape, dtype=bool)
    tol_u = 1e-9 * cw.step_u
    tol_v = 1e-9 * cw.step_v
    for ci, cj in zip(*np.nonzero(active)):
        ia = np.searchsorted(du, cdu[ci] - tol_u)
        ib = np.searchsorted(du, cdu[ci + 1] + tol_u, side="right")
        ja = np.searchsorted(dv, cdv[cj] - tol_v)
        jb = np.searchsorted(dv, cdv[cj + 1] + tol_v, side="right")
        mask[ia:ib, ja:jb] = True
    _fill(dense, mask, params, ivp_tol, workers)
    return dense


def find_meeting_points(grid: ColorGrid, k: int = DEFAULT_NEIGHBORHOOD,
                        min_colors: int = 4) -> list[MeetingCell]:
    """Clusters of k x k vertex blocks whose evaluated vertices show at least
    ``min_colors`` of the four colours (all four by default).

    Overlapping blocks around one meeting point are merged into a single
    cell, so an isolated root yields one candidate.
    """
    if k < 2:
        raise ValueError("neighbourhood must be at least 2 x 2")
    lab = grid.labels
    nu, nv = lab.shape
    if nu < k or nv < k:
        return []
    count = np.zeros((nu - k + 1, nv - k + 1), dtype=np.int8)
    for c in Quadrant:
        ind = (lab == c).astype(np.int32)
        s = np.pad(ind.cumsum(0).cumsum(1), ((1, 0), (1, 0)))
        box = s[k:, k:] - s[:-k, k:] - s[k:, :-k] + s[:-k, :-k]
        count += box > 0
    hits = count >= min_colors
    if not hits.any():
        return []
    comp, n = ndimage.label(hits, structure=np.ones((3, 3)))
    du, dv = grid.du, grid.dv
    cells = []
    for sl in ndimage.find_objects(comp):
        i0, i1 = sl[0].start, sl[0].stop - 1 + k - 1
        j0, j1 = sl[1].start, sl[1].stop - 1 + k - 1
        cells.append(MeetingCell(float(du[i0]), float(du[i1]), float(dv[j0]), float(dv[j1]),
                                 i0, j0, i1, j1, int(count[sl].max())))
    cells.sort(key=lambda c: (c.i0, c.j0))
    return cells


# --------------------------------------------------------------------------
# polishing

@dataclass(frozen=True)
class PolishSettings:
    """Acceptance and iteration controls for :func:`polish_root`.

    A point is accepted when both residues are below ``eps`` in absolute
    value and below ``rel_eps`` relative to the sup norms of u and v, and
    its slopes are not all below ``min_slope`` (the trivial solution).
    """

    eps: float = DEFAULT_EPS
    rel_eps: float = DEFAULT_REL_EPS
    max_iter: int = 80
    ivp_tol: tuple[float, float] = POLISH_IVP_TOL
    min_slope: float = 1e-10
    max_quadrisections: int = 40
    confine: float = 1.0

    def __post_init__(self):
        if not (self.eps > 0 and self.rel_eps > 0):
            raise DomainError("eps and rel_eps must be positive")
        if self.max_iter < 0:
            raise DomainError("max_iter must be non-negative")


def _as_box(cell) -> tuple[float, float, float, float]:
    if isinstance(cell, MeetingCell):
        return cell.du_lo, cell.du_hi, cell.dv_lo, cell.dv_hi
    if isinstance(cell, ScanWindow):
        return cell.du_min, cell.du_max, cell.dv_min, cell.dv_max
    a, b, c, d = (float(t) for t in cell)
    if a > b or c > d:
        raise DomainError(f"malformed cell {cell}")
    return a, b, c, d


class _Shooter:
    """Cached evaluations of Phi at the polishing tolerance."""

    def __init__(self, params: ProblemParams, ivp_tol):
        self.params = params
        self.ivp_tol = ivp_tol
        self.cache: dict[tuple[float, float], Residue] = {}

    def __call__(self, du: float, dv: float) -> Residue:
        key = (float(du), float(dv))
        res = self.cache.get(key)
        if res is None:
            try:
                res = shoot(key[0], key[1], self.params, self.ivp_tol)
            except IntegrationError:
                res = Residue(math.nan, math.nan, "blowup")
            self.cache[key] = res
        return res


def _rel_residue(res: Residue) -> float:
    if res.status != "ok":
        return math.inf
    su = res.sup_u if res.sup_u > 0 else 1.0
    sv = res.sup_v if res.sup_v > 0 else 1.0
    return max(abs(res.u1) / su, abs(res.v1) / sv)


def _accepted(du: float, dv: float, res: Residue, cfg: PolishSettings) -> bool:
    return (res.status == "ok" and res.size < cfg.eps and _rel_residue(res) < cfg.rel_eps
            and max(abs(du), abs(dv)) >= cfg.min_slope)


def _lattice(box) -> list[tuple[float, float]]:
    a, b, c, d = box
    us = (a, 0.5 * (a + b), b)
    vs = (c, 0.5 * (c + d), d)
    return [(u, v) for v in vs for u in us]


def _lattice_colors(box, phi: _Shooter) -> int:
    seen = set()
    for du, dv in _lattice(box):
        res = phi(du, dv)
        if res.status == "ok" or math.isfinite(res.u1):
            seen.add(classify(res))
    return len(seen)


def _quadrisect(box, phi: _Shooter, cfg: PolishSettings, budget: int):
    """Halve the box while some quarter keeps all four colours on its 3x3
    lattice. Returns (box, best point, iterations, hit) where ``hit`` says
    whether an accepted point turned up."""
    it = 0
    best = min(_lattice(box), key=lambda pt: _rel_residue(phi(*pt)))
    if _lattice_colors(box, phi) < 4:
        return box, best, it, False
    while it < min(budget, cfg.max_quadrisections):
        a, b, c, d = box
        mu, mv = 0.5 * (a + b), 0.5 * (c + d)
        quarters = [(a, mu, c, mv), (mu, b, c, mv), (a, mu, mv, d), (mu, b, mv, d)]
        keep = [qb for qb in quarters if _lattice_colors(qb, phi) == 4]
        it += 1
        for qb in quarters:
            for pt in _lattice(qb):
                if _rel_residue(phi(*pt)) < _rel_residue(phi(*best)):
                    best = pt
        if _accepted(*best, phi(*best), cfg):
            return box, best, it, True
        if not keep:
            break
        box = min(keep, key=lambda qb: _rel_residue(phi(0.5 * (qb[0] + qb[1]),
                                                          0.5 * (qb[2] + qb[3]))))
    return box, best, it, False


def _fd_jacobian(x: np.ndarray, fx: np.ndarray, phi: _Shooter, scale: np.ndarray):
    jac = np.empty((2, 2))
    for k in range(2):
        h = 1e-7 * max(abs(x[k]), 1e-3 * scale[k], 1e-14)
        xp = x.copy()
        xp[k] += h
        res = phi(*xp)
        if res.status != "ok":
            xp[k] = x[k] - h
            res = phi(*xp)
            h = -h
        if res.status != "ok":
            return None
        jac[:, k] = (np.array([res.u1, res.v1]) - fx) / h
    return jac


def _broyden(x0, phi: _Shooter, cfg: PolishSettings, budget: int, box):
    """Broyden iteration (good update, backtracking, finite-difference
    restarts) on the residues scaled by the sup norms at the start point."""
    x = np.array(x0, dtype=float)
    r0 = phi(*x)
    if r0.status != "ok":
        return tuple(x), 0, False
    w = np.array([1.0 / max(r0.sup_u, 1e-300), 1.0 / max(r0.sup_v, 1e-300)])
    size = np.array([box[1] - box[0], box[3] - box[2]])
    scale = np.maximum(size, np.abs(x) * 1e-3)
    lo = np.array([box[0], box[2]]) - cfg.confine * np.maximum(size, 1e-3 * np.abs(x))
    hi = np.array([box[1], box[3]]) + cfg.confine * np.maximum(size, 1e-3 * np.abs(x))

    def F(pt):
        res = phi(*pt)
        if res.status != "ok":
            return None, res
        return np.array([res.u1, res.v1]), res

    fx, res = F(x)
    jac = _fd_jacobian(x, fx, phi, scale)
    it = 0
    extra = 0
    fresh = True
    while it < budget and jac is not None:
        if _accepted(x[0], x[1], res, cfg):
            # a few more steps push the residue well inside the tolerance
            tight = res.size < 1e-3 * cfg.eps and _rel_residue(res) < 1e-3 * cfg.rel_eps
            if tight or extra >= 4:
                return tuple(x), it, True
            extra += 1
        it += 1
        try:
            step = -np.linalg.solve(jac, fx)
        except np.linalg.LinAlgError:
            step = -np.linalg.lstsq(jac, fx, rcond=None)[0]
        norm0 = np.linalg.norm(w * fx)
        t = 1.0
        moved = False
        while t > 1e-4:
            xt = np.clip(x + t * step, lo, hi)
            ft, rt = F(xt)
            if ft is not None and np.linalg.norm(w * ft) < (1 - 1e-4 * t) * norm0:
                moved = True
                break
            t *= 0.5
        if not moved:
            if fresh:
                break
            jac = _fd_jacobian(x, fx, phi, scale)
            fresh = True
            continue
        s = xt - x
        y = ft - fx
        denom = float(s @ s)
        if denom > 0:
            jac = jac + np.outer(y - jac @ s, s) / denom
        x, fx, res = xt, ft, rt
        fresh = False
    return tuple(x), it, _accepted(x[0], x[1], res, cfg)


def polish_root(cell, params: ProblemParams, eps: float = DEFAULT_EPS,
                max_iter: int = 80, settings: PolishSettings | None = None
                ) -> SolutionRecord | None:
    """Refine a meeting candidate to an accepted root of Phi.

    Quadrisection keeps a quarter whose corners, edge midpoints and centre
    show all four colours; when no quarter does, a Broyden iteration starts
    from the best point seen. Returns None when ``max_iter`` iterations pass
    without an accepted point. ``cell`` is a MeetingCell, a ScanWindow or a
    ``(du_lo, du_hi, dv_lo, dv_hi)`` tuple.
    """
    cfg = settings or PolishSettings()
    cfg = replace(cfg, eps=eps, max_iter=max_iter)
    box = _as_box(cell)
    phi = _Shooter(params, cfg.ivp_tol)
    center = (0.5 * (box[0] + box[1]), 0.5 * (box[2] + box[3]))
    if _accepted(*center, phi(*center), cfg):
        return make_record(*center, params, cfg.ivp_tol, iterations=0, method="center")
    qbox, best, it_q, hit = _quadrisect(box, phi, cfg, cfg.max_iter)
    if hit:
        return make_record(*best, params, cfg.ivp_tol, iterations=it_q, method="quadrisection")
    x, it_b, ok = _broyden(best, phi, cfg, cfg.max_iter - it_q, box)
    if not ok:
        log.debug("polish failed in box %s after %d+%d iterations", box, it_q, it_b)
        return None
    return make_record(*x, params, cfg.ivp_tol, iterations=it_q + it_b,
                       method="quadrisection+broyden" if it_q else "broyden")


def make_record(du0: float, dv0: float, params: ProblemParams,
                ivp_tol: tuple[float, float] = POLISH_IVP_TOL, *,
                iterations: int = 0, method: str = "") -> SolutionRecord:
    """Integrate an accepted root once more and collect its diagnostics."""
    from .analysis import energy, sup_norm, verify_symmetry

    traj = integrate(du0, dv0, params, ivp_tol)
    fin = traj.final
    sym = verify_symmetry(traj)
    return SolutionRecord(
        lam=params.lam, du0=float(du0), dv0=float(dv0),
        sup_v=sup_norm(traj, 1), sup_u=sup_norm(traj, 0),
        energy=energy(traj).total,
        residue_u1=fin.u, residue_v1=fin.v,
        symmetry_defect=sym.v_sym_defect,
        iterations=iterations, method=method,
        min_u=float(traj.u.min()), min_v=float(traj.v.min()),
        trajectory=traj,
    )


# --------------------------------------------------------------------------
# full pipeline for one lambda

NEIGHBORHOOD_LADDER = (3, 5, 9, 17, 33)


def meeting_points_widening(grid: ColorGrid, k: int = DEFAULT_NEIGHBORHOOD,
                            escalate: bool = True) -> tuple[list[MeetingCell], int]:
    """Meeting cells at neighbourhood ``k``, widened along
    ``NEIGHBORHOOD_LADDER`` until some are found. Returns (cells, k used)."""
    ladder = [k] + ([j for j in NEIGHBORHOOD_LADDER if j > k] if escalate else [])
    cells: list[MeetingCell] = []
    for j in ladder:
        cells = find_meeting_points(grid, j)
        if cells:
            return cells, j
    return cells, ladder[-1]


@dataclass
class LocateResult:
    coarse: ColorGrid
    dense: ColorGrid
    cells: list[MeetingCell]
    roots: list[SolutionRecord]
    neighborhood: int


def _dedupe(records: list[SolutionRecord]) -> list[SolutionRecord]:
    out: list[SolutionRecord] = []
    for rec in sorted(records, key=lambda r: (r.du0, r.dv0)):
        dup = False
        for o in out:
            if (abs(o.du0 - rec.du0) <= 1e-6 * max(1.0, abs(rec.du0))
                    and abs(o.dv0 - rec.dv0) <= 1e-6 * max(1.0, abs(rec.dv0))):
                dup = True
                if rec.residue < o.residue:
                    out[out.index(o)] = rec
                break
        if not dup:
            out.append(rec)
    return out


def locate_roots(window: ScanWindow, params: ProblemParams, dense_delta: float | None = None,
                 *, eps: float = DEFAULT_EPS, ivp_tol: tuple[float, float] = DEFAULT_IVP_TOL,
                 settings: PolishSettings | None = None, neighborhood: int = DEFAULT_NEIGHBORHOOD,
                 escalate: bool = True, workers: int = 1) -> LocateResult:
    """Coarse scan, dense refinement, meeting-point search and polishing.

    When the dense grid has no k x k block with all four colours the
    neighbourhood is widened along ``NEIGHBORHOOD_LADDER`` (if ``escalate``):
    where the zero sets of u(1) and v(1) cross at a shallow angle the red
    and green wedges are several vertices apart at any resolution.
    """
    if dense_delta is None:
        dense_delta = window.delta / 20
    coarse = scan_grid(window, params, ivp_tol, workers)
    dense = refine_to_dense(coarse, dense_delta, params, ivp_tol, workers)
    cells, used = meeting_points_widening(dense, neighborhood, escalate)
    cfg = settings or PolishSettings(eps=eps)
    roots = []
    for cell in cells:
        rec = polish_root(cell, params, cfg.eps, cfg.max_iter, cfg)
        if rec is not None:
            roots.append(rec)
    return LocateResult(coarse, dense, cells, _dedupe(roots), used)
