from __future__ import annotations

import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from ccshoot.continuation import (
    BIFURCATION_COLUMNS,
    Branch,
    SweepConfig,
    continue_branch,
    emit_bifurcation_data,
    fallback_search,
    label_branches,
    predicted_window,
    trace_branches,
)
from ccshoot.odecore import DomainError, ProblemParams
from ccshoot.shooting import ScanWindow, SolutionRecord

P0 = ProblemParams(0.0)
LOWER_10 = ScanWindow(0.9, 1.1, 0.0, 0.1, 0.01, 0.005)
UPPER_10 = ScanWindow(43.0, 45.0, 15.5, 17.5, 0.1)


def _rec(lam=1.0, du0=1.0, dv0=1.0, sup_v=1.0):
    return SolutionRecord(lam, du0, dv0, sup_v, 1.0, 0.0, 0.0, 0.0)


# -- labelling

def test_label_pair():
    recs = [_rec(sup_v=5.6, du0=44), _rec(sup_v=0.014, du0=1)]
    assert label_branches(recs) == ["upper", "lower"]


def test_label_single_by_continuity():
    prev = {"lower": _rec(du0=1.0, dv0=0.04), "upper": _rec(du0=44.0, dv0=16.4)}
    assert label_branches([_rec(du0=1.05, dv0=0.045)], prev) == ["lower"]
    assert label_branches([_rec(du0=43.0, dv0=16.0)], prev) == ["upper"]
    assert label_branches([_rec()], {"lower": None, "upper": None}) == ["unlabeled"]
    assert label_branches([_rec()]) == ["unlabeled"]


def test_label_tie_goes_to_smaller_du0():
    recs = [_rec(du0=3.0, sup_v=2.0), _rec(du0=2.0, sup_v=2.0 + 1e-10)]
    assert label_branches(recs) == ["upper", "lower"]


def test_label_more_than_two_flags_review():
    recs = [_rec(sup_v=3.0), _rec(sup_v=1.0), _rec(sup_v=2.0), _rec(sup_v=9.0)]
    assert label_branches(recs) == ["review", "lower", "review", "upper"]
    assert label_branches([]) == []


# -- configuration and branches

def test_sweep_config_validation_and_grid():
    assert np.allclose(SweepConfig(1, 2, 0.25).lambdas(), [1, 1.25, 1.5, 1.75, 2])
    assert np.allclose(SweepConfig(40, 52, 0.5).lambdas()[-1], 52)
    with pytest.raises(DomainError):
        SweepConfig(1, 2, 0.0)
    with pytest.raises(DomainError):
        SweepConfig(2, 1, 0.5)


def test_branch_requires_increasing_lambda():
    br = Branch("lower")
    br.append(_rec(lam=1.0))
    with pytest.raises(ValueError):
        br.append(_rec(lam=1.0))
    assert br.records[0].branch == "lower"


def test_predicted_window_contains_prediction():
    hist = [_rec(lam=1.0, du0=1.0, dv0=0.1), _rec(lam=2.0, du0=2.0, dv0=0.2)]
    cfg = SweepConfig(1, 3, 1)
    w = predicted_window(hist, 3.0, cfg)
    assert w.du_min <= 3.0 <= w.du_max and w.dv_min <= 0.3 <= w.dv_max
    assert w.du_min >= 0 and w.dv_min >= 0


# -- sweeps

@pytest.fixture(scope="module")
def short_sweeps():
    out = {}
    for step in (1.0, 0.5):
        cfg = SweepConfig(10, 12, step, LOWER_10, UPPER_10)
        out[step] = trace_branches(cfg, P0)
    return out


def test_short_sweep_tracks_both_branches(short_sweeps):
    res = short_sweeps[1.0]
    assert list(res.lower.lambdas) == [10, 11, 12] == list(res.upper.lambdas)
    assert res.lambda_bif is None and res.bracket is None and not res.review
    assert np.all(res.lower.sup_v < res.upper.sup_v)
    for br in (res.lower, res.upper):
        for a, b in zip(br.records, br.records[1:]):
            assert b.lam > a.lam
            assert max(abs(b.du0 - a.du0), abs(b.dv0 - a.dv0)) < max(a.du0, a.dv0)


def test_warm_start_consistency(short_sweeps):
    coarse, fine = short_sweeps[1.0], short_sweeps[0.5]
    for key in ("lower", "upper"):
        a, b = getattr(coarse, key), getattr(fine, key)
        for lam in a.lambdas:
            assert abs(a.at(lam).sup_v - b.at(lam).sup_v) < 1e-3


def test_sweep_above_fold_is_empty():
    cfg = SweepConfig(60, 70, 5, ScanWindow(0, 5, 0, 1, 0.25), ScanWindow(30, 60, 5, 30, 0.5))
    res = trace_branches(cfg, P0)
    assert len(res.lower) == 0 and len(res.upper) == 0
    assert res.lambda_bif is None and res.bracket is None


@pytest.mark.slow
def test_fold_bracket_validity(fold_run):
    """A root is found one step below the estimate and none one step above,
    under the same window policy."""
    result, _, _, cfg = fold_run
    sweep = cfg.sweep()
    est, step = result.lambda_bif, sweep.lambda_step
    assert est is not None
    lo, hi = result.bracket
    assert lo < est < hi
    for br in (result.lower, result.upper):
        hist = [r for r in br.records if r.lam <= est - step]
        assert hist, br.label
        assert continue_branch(hist, est - step, P0, sweep)
        assert not continue_branch(hist, est + step, P0, sweep)
    assert not fallback_search(P0.with_lam(est + step), sweep)


# -- bifurcation data

def test_emit_empty(tmp_path):
    rows = emit_bifurcation_data([Branch("lower"), Branch("upper")], tmp_path)
    assert rows == []
    lines = (tmp_path / "bifurcation.csv").read_text().splitlines()
    assert lines == [",".join(BIFURCATION_COLUMNS)]
    root = ET.fromstring((tmp_path / "bifurcation.svg").read_text())
    assert root.tag.endswith("svg")


def test_emit_one_point(tmp_path):
    br = Branch("upper")
    br.append(SolutionRecord(5.0, 44.0, 16.0, 5.7, 20.0, 1.0, 1e-9, -1e-9))
    rows = emit_bifurcation_data([Branch("lower"), br], tmp_path, lambda_bif=None)
    assert len(rows) == 1 and rows[0]["branch"] == "upper" and rows[0]["sup_v"] == 5.7
    svg = (tmp_path / "bifurcation.svg").read_text()
    ET.fromstring(svg)
    assert "upper" in svg
    assert math.isclose(float((tmp_path / "bifurcation.csv").read_text()
                              .splitlines()[1].split(",")[4]), 5.7)
