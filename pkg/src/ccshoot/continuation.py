"""Branch tracing in lambda with warm-started scan windows."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .odecore import DEFAULT_IVP_TOL, DomainError, ProblemParams
from .shooting import (
    DEFAULT_EPS,
    DEFAULT_NEIGHBORHOOD,
    PolishSettings,
    ScanWindow,
    SolutionRecord,
    locate_roots,
    meeting_points_widening,
    polish_root,
    scan_grid,
)

log = logging.getLogger(__name__)

LOWER, UPPER = "lower", "upper"
SUP_TIE = 1e-9


@dataclass(frozen=True)
class SweepConfig:
    """Lambda range, one initial window per branch and the window policy.

    After the first root of a branch, the window at the next lambda is
    centred on the predicted root with per-axis half width
    ``max(inflation * |predicted - previous|, rel_floor * |previous|,
    abs_floor)``, split into ``cells`` coarse cells per axis, refined by
    ``dense_factor``.
    """

    lambda_start: float
    lambda_end: float
    lambda_step: float
    lower_window: ScanWindow | None = None
    upper_window: ScanWindow | None = None
    inflation: float = 1.5
    rel_floor: float = 0.05
    abs_floor: float = 1e-12
    cells: int = 16
    dense_factor: int = 20
    retries: int = 2
    bisections: int = 12
    fallback_window: ScanWindow | None = field(
        default_factory=lambda: ScanWindow(0.0, 100.0, 0.0, 100.0, 1.0))
    neighborhood: int = DEFAULT_NEIGHBORHOOD
    eps: float = DEFAULT_EPS
    ivp_tol: tuple[float, float] = DEFAULT_IVP_TOL
    workers: int = 1

    def __post_init__(self):
        if not self.lambda_step > 0:
            raise DomainError("lambda_step must be positive")
        if not self.lambda_end >= self.lambda_start:
            raise DomainError("lambda_end must not be below lambda_start")
        if self.inflation <= 0 or self.cells < 2 or self.dense_factor < 2:
            raise DomainError("inflation > 0, cells >= 2 and dense_factor >= 2 required")

    def lambdas(self) -> np.ndarray:
        n = int(math.floor((self.lambda_end - self.lambda_start) / self.lambda_step + 1e-9))
        return self.lambda_start + self.lambda_step * np.arange(n + 1)


@dataclass
class Branch:
    label: str
    records: list[SolutionRecord] = field(default_factory=list)
    gaps: list[float] = field(default_factory=list)
    death: float | None = None

    def append(self, rec: SolutionRecord) -> None:
        if self.records and not rec.lam > self.records[-1].lam:
            raise ValueError("lambda must increase along a branch")
        rec.branch = self.label
        self.records.append(rec)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([r.lam for r in self.records])

    @property
    def sup_v(self) -> np.ndarray:
        return np.array([r.sup_v for r in self.records])

    def at(self, lam: float) -> SolutionRecord | None:
        for r in self.records:
            if abs(r.lam - lam) <= 1e-9 * max(1.0, abs(lam)):
                return r
        return None

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class TraceResult:
    lower: Branch
    upper: Branch
    lambda_bif: float | None
    bracket: tuple[float, float] | None = None
    review: list[SolutionRecord] = field(default_factory=list)


# --------------------------------------------------------------------------
# labelling

def label_branches(records: list[SolutionRecord],
                   previous: dict[str, SolutionRecord | None] | None = None) -> list[str]:
    """Labels for the records found at one lambda, in input order.

    Two or more records: smallest sup_v is lower, largest upper (ties within
    SUP_TIE go to the smaller du0 as lower); any others are marked
    ``"review"``. A single record takes the label of the nearest previous
    root, or ``"unlabeled"`` when there is none.
    """
    n = len(records)
    if n == 0:
        return []
    if n == 1:
        prev = {k: v for k, v in (previous or {}).items() if v is not None}
        if not prev:
            return ["unlabeled"]
        rec = records[0]

        def dist(o: SolutionRecord) -> float:
            return math.hypot((rec.du0 - o.du0) / max(abs(o.du0), 1e-300),
                              (rec.dv0 - o.dv0) / max(abs(o.dv0), 1e-300))

        return [min(sorted(prev), key=lambda k: dist(prev[k]))]

    def key(i: int):
        r = records[i]
        return (r.sup_v, r.du0)

    order = sorted(range(n), key=key)
    # equal sup_v within SUP_TIE: order by du0
    for a in range(n - 1):
        for b in range(n - 1 - a):
            i, j = order[b], order[b + 1]
            if (abs(records[i].sup_v - records[j].sup_v) <= SUP_TIE
                    and records[j].du0 < records[i].du0):
                order[b], order[b + 1] = j, i
    labels = ["review"] * n
    labels[order[0]] = LOWER
    labels[order[-1]] = UPPER
    return labels


# --------------------------------------------------------------------------
# windows

def _predict(history: list[SolutionRecord], lam: float) -> np.ndarray:
    """Secant extrapolation of the last two roots; log-log when slopes and
    lambdas are positive (the lower branch grows like a power of lambda)."""
    last = np.array([history[-1].du0, history[-1].dv0])
    if len(history) < 2:
        return last
    prev = np.array([history[-2].du0, history[-2].dv0])
    l0, l1 = history[-2].lam, history[-1].lam
    if np.all(last > 0) and np.all(prev > 0) and min(l0, l1, lam) > 0:
        t = (math.log(lam) - math.log(l1)) / (math.log(l1) - math.log(l0))
        return np.exp(np.log(last) + t * (np.log(last) - np.log(prev)))
    t = (lam - l1) / (l1 - l0)
    return last + t * (last - prev)


def tangent_probe(rec: SolutionRecord, params: ProblemParams, cfg: SweepConfig,
                  rel_step: float = 1e-4) -> SolutionRecord | None:
    """Root at a slightly larger lambda, reached by Broyden from ``rec``;
    gives the predictor a secant before the branch has two points."""
    dl = rel_step * max(abs(rec.lam), cfg.lambda_step)
    box = (rec.du0, rec.du0, rec.dv0, rec.dv0)
    return polish_root(box, params.with_lam(rec.lam + dl), cfg.eps,
                       settings=PolishSettings(eps=cfg.eps))


def predicted_window(history: list[SolutionRecord], lam: float, cfg: SweepConfig,
                     grow: float = 1.0) -> ScanWindow:
    last = np.array([history[-1].du0, history[-1].dv0])
    pred = _predict(history, lam)
    half = np.maximum(cfg.inflation * np.abs(pred - last),
                      np.maximum(cfg.rel_floor * np.abs(last), cfg.abs_floor)) * grow
    lo = np.maximum(pred - half, 0.0)
    hi = pred + half
    du_d = (hi[0] - lo[0]) / cfg.cells
    dv_d = (hi[1] - lo[1]) / cfg.cells
    return ScanWindow(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]), du_d, dv_d)


def _dense_delta(window: ScanWindow, cfg: SweepConfig) -> float:
    return window.step_u / cfg.dense_factor


def _search(window: ScanWindow, params: ProblemParams, cfg: SweepConfig,
            observer=None) -> list[SolutionRecord]:
    res = locate_roots(window, params, _dense_delta(window, cfg), eps=cfg.eps,
                       ivp_tol=cfg.ivp_tol, settings=PolishSettings(eps=cfg.eps),
                       neighborhood=cfg.neighborhood, workers=cfg.workers)
    if observer is not None:
        observer(params.lam, res)
    return res.roots


def _scaled_distance(rec: SolutionRecord, target: np.ndarray) -> float:
    return math.hypot((rec.du0 - target[0]) / max(abs(target[0]), 1e-300),
                      (rec.dv0 - target[1]) / max(abs(target[1]), 1e-300))


def continue_branch(history: list[SolutionRecord], lam: float, params: ProblemParams,
                    cfg: SweepConfig, observer=None) -> list[SolutionRecord]:
    """Roots near the predicted continuation of ``history`` at ``lam``,
    widening the window by 2x up to ``cfg.retries`` times."""
    p = params.with_lam(lam)
    if len(history) == 1:
        probe = tangent_probe(history[0], params, cfg)
        if probe is not None:
            history = [history[0], probe]
    grow = 1.0
    for _ in range(cfg.retries + 1):
        win = predicted_window(history, lam, cfg, grow)
        roots = _search(win, p, cfg, observer)
        if roots:
            return roots
        grow *= 2.0
    return []


def fallback_search(params: ProblemParams, cfg: SweepConfig,
                    observer=None) -> list[SolutionRecord]:
    """Roots in the generous fallback window: coarse scan, meeting clusters
    (widening the neighbourhood as in :func:`locate_roots`), then a local
    search around each cluster."""
    fw = cfg.fallback_window
    if fw is None:
        return []
    grid = scan_grid(fw, params, cfg.ivp_tol, cfg.workers)
    cells, _ = meeting_points_widening(grid, cfg.neighborhood)
    found: list[SolutionRecord] = []
    for c in cells:
        pad_u, pad_v = fw.step_u, fw.step_v
        win = ScanWindow(max(c.du_lo - pad_u, fw.du_min), c.du_hi + pad_u,
                         max(c.dv_lo - pad_v, fw.dv_min), c.dv_hi + pad_v,
                         (c.du_hi - c.du_lo + 2 * pad_u) / cfg.cells,
                         (c.dv_hi - c.dv_lo + 2 * pad_v) / cfg.cells)
        found.extend(_search(win, params, cfg, observer))
    return found


def _same_root(a: SolutionRecord, b: SolutionRecord) -> bool:
    return (abs(a.du0 - b.du0) <= 1e-6 * max(1.0, abs(a.du0))
            and abs(a.dv0 - b.dv0) <= 1e-6 * max(1.0, abs(a.dv0)))


def _unique(records: list[SolutionRecord]) -> list[SolutionRecord]:
    out: list[SolutionRecord] = []
    for r in records:
        if not any(_same_root(r, o) for o in out):
            out.append(r)
    return out


def _bisect_fold(history: list[SolutionRecord], lam_fail: float, params: ProblemParams,
                 cfg: SweepConfig) -> tuple[float, float]:
    lo, hi = history[-1].lam, lam_fail
    hist = list(history)
    for _ in range(cfg.bisections):
        mid = 0.5 * (lo + hi)
        roots = continue_branch(hist, mid, params, cfg)
        if roots:
            pred = _predict(hist, mid)
            hist.append(min(roots, key=lambda r: _scaled_distance(r, pred)))
            lo = mid
        else:
            hi = mid
    return lo, hi


# --------------------------------------------------------------------------
# sweep

def trace_branches(cfg: SweepConfig, params: ProblemParams, observer=None,
                   on_lambda=None) -> TraceResult:
    """Follow the lower and upper branches over the lambda range.

    A branch starts from a root found in its initial window and is then
    warm-started from its own history. When a running branch finds nothing
    in its (widened) predicted window nor in the fallback window, it ends,
    and lambda_bif is bracketed between its last root and the failing
    lambda and bisected ``cfg.bisections`` times. The estimate is the mean
    of the bracket midpoints of the branches that ended.

    ``observer(lam, LocateResult)`` sees every windowed search of the sweep
    proper; ``on_lambda(lam, records)`` runs after each lambda is settled.
    """
    lower, upper = Branch(LOWER), Branch(UPPER)
    branches = {LOWER: lower, UPPER: upper}
    initial = {LOWER: cfg.lower_window, UPPER: cfg.upper_window}
    review: list[SolutionRecord] = []
    brackets: dict[str, tuple[float, float]] = {}

    for lam in cfg.lambdas():
        lam = float(lam)
        p = params.with_lam(lam)
        found: list[SolutionRecord] = []
        active = [k for k in (LOWER, UPPER) if branches[k].death is None
                  and (branches[k].records or initial[k] is not None)]
        if not active:
            break
        for key in active:
            br = branches[key]
            if br.records:
                found.extend(continue_branch(br.records, lam, params, cfg, observer))
            elif initial[key] is not None:
                found.extend(_search(initial[key], p, cfg, observer))
        found = _unique(found)
        running = [k for k in active if branches[k].records]
        missing = len(found) < len(active)
        if missing and running and cfg.fallback_window is not None:
            found = _unique(found + fallback_search(p, cfg, observer))

        prev = {k: (branches[k].records[-1] if branches[k].records else None)
                for k in (LOWER, UPPER)}
        if len(found) == 1 and not running:
            # first root of the sweep: place it on whichever branch's
            # initial window contains it
            rec = found[0]
            for key in active:
                w = initial[key]
                if w is not None and w.du_min <= rec.du0 <= w.du_max \
                        and w.dv_min <= rec.dv0 <= w.dv_max:
                    labels = [key]
                    break
            else:
                labels = ["unlabeled"]
        else:
            labels = label_branches(found, prev)
        assigned = set()
        for rec, lab in zip(found, labels):
            if lab in branches and branches[lab].death is None and lab not in assigned:
                branches[lab].append(rec)
                assigned.add(lab)
            else:
                rec.branch = lab
                review.append(rec)

        for key in active:
            br = branches[key]
            if key in assigned:
                continue
            br.gaps.append(lam)
            if br.records:
                br.death = lam
                brackets[key] = _bisect_fold(br.records, lam, params, cfg)
                log.info("%s branch ends between %.6g and %.6g", key, *brackets[key])
        if on_lambda is not None:
            on_lambda(lam, [r for r in found if r.branch in (LOWER, UPPER)])

    lam_bif = None
    bracket = None
    if brackets:
        mids = [0.5 * (a + b) for a, b in brackets.values()]
        lam_bif = float(np.mean(mids))
        bracket = (min(a for a, _ in brackets.values()), max(b for _, b in brackets.values()))
    return TraceResult(lower, upper, lam_bif, bracket, review)


# --------------------------------------------------------------------------
# output table

BIFURCATION_COLUMNS = ("lambda", "branch", "du0", "dv0", "sup_v", "sup_u", "energy",
                       "residue_u1", "residue_v1", "symmetry_defect")


def bifurcation_rows(branches) -> list[dict]:
    rows = []
    for br in branches:
        for r in br.records:
            rows.append({
                "lambda": r.lam, "branch": br.label, "du0": r.du0, "dv0": r.dv0,
                "sup_v": r.sup_v, "sup_u": r.sup_u, "energy": r.energy,
                "residue_u1": r.residue_u1,
                "residue_v1": r.residue_v1, "symmetry_defect": r.symmetry_defect,
            })
    rows.sort(key=lambda d: (d["lambda"], d["branch"]))
    return rows


def emit_bifurcation_data(branches, out_dir: str | Path | None = None,
                          lambda_bif: float | None = None) -> list[dict]:
    """Table of (lambda, branch, sup_v, ...) rows; with ``out_dir`` also
    writes bifurcation.csv, bifurcation.json and bifurcation.svg."""
    rows = bifurcation_rows(branches)
    if out_dir is not None:
        from .reporting.persist import write_bifurcation
        write_bifurcation(Path(out_dir), rows, list(branches), lambda_bif)
    return rows
