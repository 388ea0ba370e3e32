"""Run configuration: INI files with sections, overridable by CLI flags."""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..continuation import SweepConfig
from ..odecore import DEFAULT_IVP_TOL, POLISH_IVP_TOL, ProblemParams
from ..shooting import DEFAULT_EPS, DEFAULT_NEIGHBORHOOD, PolishSettings, ScanWindow


class ConfigError(ValueError):
    pass


Box = tuple[float, float, float, float]


def parse_box(text: str | None) -> Box | None:
    if text is None or str(text).strip() in ("", "none"):
        return None
    parts = [float(t) for t in str(text).replace(";", ",").split(",")]
    if len(parts) != 4:
        raise ConfigError(f"a window needs four numbers du_min,du_max,dv_min,dv_max, got {text!r}")
    return tuple(parts)  # type: ignore[return-value]


def format_box(box: Box | None) -> str:
    return "" if box is None else ",".join(repr(float(t)) for t in box)


def _opt_float(text: str) -> float | None:
    return None if text.strip() in ("", "none") else float(text)


def _fmt_opt(x) -> str:
    return "" if x is None else repr(float(x))


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# section, parser, formatter per field
_FLOAT = (float, repr)
_OPT = (_opt_float, _fmt_opt)
_INT = (int, str)
_BOX = (parse_box, format_box)
_BOOL = (_bool, lambda b: "true" if b else "false")
_STR = (str, str)


def _f(section: str, codec, default):
    return field(default=default, metadata={"section": section, "codec": codec})


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a run. ``lam`` may be left unset for sweeps."""

    p: float = _f("problem", _FLOAT, 3.0)
    q: float = _f("problem", _FLOAT, 1.5)
    r: float = _f("problem", _FLOAT, 1.0 / 3.0)
    lam: float | None = _f("problem", _OPT, None)
    system: str = _f("problem", _STR, "concave_convex")

    window: Box = _f("scan", _BOX, (0.0, 2.0, 0.0, 2.0))
    coarse_delta: float = _f("scan", _FLOAT, 0.1)
    dense_delta: float = _f("scan", _FLOAT, 0.005)
    dv_coarse_delta: float | None = _f("scan", _OPT, None)
    neighborhood: int = _f("scan", _INT, DEFAULT_NEIGHBORHOOD)
    workers: int = _f("scan", _INT, 1)

    eps: float = _f("solver", _FLOAT, DEFAULT_EPS)
    rtol: float = _f("solver", _FLOAT, DEFAULT_IVP_TOL[0])
    atol: float = _f("solver", _FLOAT, DEFAULT_IVP_TOL[1])
    polish_rtol: float = _f("solver", _FLOAT, POLISH_IVP_TOL[0])
    polish_atol: float = _f("solver", _FLOAT, POLISH_IVP_TOL[1])
    max_iter: int = _f("solver", _INT, 80)

    lambda_from: float | None = _f("sweep", _OPT, None)
    lambda_to: float | None = _f("sweep", _OPT, None)
    lambda_step: float = _f("sweep", _FLOAT, 1.0)
    lower_window: Box | None = _f("sweep", _BOX, None)
    upper_window: Box | None = _f("sweep", _BOX, None)
    window_delta: float = _f("sweep", _FLOAT, 0.5)
    lower_delta: float | None = _f("sweep", _OPT, None)
    upper_delta: float | None = _f("sweep", _OPT, None)
    lower_dv_delta: float | None = _f("sweep", _OPT, None)
    upper_dv_delta: float | None = _f("sweep", _OPT, None)
    inflation: float = _f("sweep", _FLOAT, 1.5)
    cells: int = _f("sweep", _INT, 16)
    dense_factor: int = _f("sweep", _INT, 20)
    bisections: int = _f("sweep", _INT, 12)
    fallback_window: Box | None = _f("sweep", _BOX, (0.0, 100.0, 0.0, 100.0))
    fallback_delta: float = _f("sweep", _FLOAT, 1.0)

    out_dir: str = _f("output", _STR, "out")
    emit_grids: bool = _f("output", _BOOL, False)
    emit_profiles: bool = _f("output", _BOOL, True)
    emit_bifurcation: bool = _f("output", _BOOL, True)

    def __post_init__(self):
        self.validate()

    # -- checks
    def validate(self) -> None:
        for name in ("p", "q", "r", "coarse_delta", "dense_delta", "eps", "rtol", "atol"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{_key(name)} must be finite")
        if not self.dense_delta > 0:
            raise ConfigError(f"scan.dense_delta must be positive, got {self.dense_delta}")
        if not self.coarse_delta > self.dense_delta:
            raise ConfigError(f"scan.coarse_delta ({self.coarse_delta}) must exceed "
                              f"scan.dense_delta ({self.dense_delta})")
        if not self.eps > 10 * self.atol:
            raise ConfigError(f"solver.eps ({self.eps}) must exceed 10 x solver.atol ({self.atol})")
        if not (self.rtol > 0 and self.atol > 0 and self.polish_rtol > 0 and self.polish_atol > 0):
            raise ConfigError("solver tolerances must be positive")
        if self.lam is not None and self.lam < 0:
            raise ConfigError(f"problem.lam must be non-negative, got {self.lam}")
        if not self.lambda_step > 0:
            raise ConfigError(f"sweep.lambda_step must be positive, got {self.lambda_step}")
        if self.neighborhood < 2:
            raise ConfigError(f"scan.neighborhood must be at least 2, got {self.neighborhood}")
        for name in ("window", "lower_window", "upper_window", "fallback_window"):
            box = getattr(self, name)
            if box is not None and not (box[0] < box[1] and box[2] < box[3]):
                raise ConfigError(f"{_key(name)} is degenerate: {format_box(box)}")

    # -- derived objects
    def params(self, lam: float | None = None) -> ProblemParams:
        lam = self.lam if lam is None else lam
        if lam is None:
            raise ConfigError("problem.lam is required for this command")
        return ProblemParams(lam, self.p, self.q, self.r, self.system)

    def scan_window(self, box: Box | None = None) -> ScanWindow:
        b = self.window if box is None else box
        return ScanWindow(*b, self.coarse_delta, self.dv_coarse_delta)

    @property
    def ivp_tol(self) -> tuple[float, float]:
        return self.rtol, self.atol

    @property
    def polish_tol(self) -> tuple[float, float]:
        return self.polish_rtol, self.polish_atol

    def polish_settings(self) -> PolishSettings:
        return PolishSettings(eps=self.eps, max_iter=self.max_iter, ivp_tol=self.polish_tol)

    def sweep(self) -> SweepConfig:
        if self.lambda_from is None or self.lambda_to is None:
            raise ConfigError("sweep.lambda_from and sweep.lambda_to are required for a sweep")

        def win(box, du, dv):
            if box is None:
                return None
            return ScanWindow(*box, self.window_delta if du is None else du, dv)

        fb = None if self.fallback_window is None else ScanWindow(*self.fallback_window,
                                                                  self.fallback_delta)
        return SweepConfig(self.lambda_from, self.lambda_to, self.lambda_step,
                           win(self.lower_window, self.lower_delta, self.lower_dv_delta),
                           win(self.upper_window, self.upper_delta, self.upper_dv_delta),
                           inflation=self.inflation, cells=self.cells,
                           dense_factor=self.dense_factor, bisections=self.bisections,
                           fallback_window=fb, neighborhood=self.neighborhood, eps=self.eps,
                           ivp_tol=self.ivp_tol, workers=self.workers)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _key(name: str) -> str:
    for f in fields(RunConfig):
        if f.name == name:
            return f"{f.metadata['section']}.{name}"
    return name


def serialize(cfg: RunConfig) -> str:
    """INI text that :func:`parse_config` maps back to ``cfg``."""
    cp = configparser.ConfigParser(interpolation=None)
    for f in fields(cfg):
        sec = f.metadata["section"]
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, f.name, f.metadata["codec"][1](getattr(cfg, f.name)))
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def parse_config(source: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """RunConfig from INI text or a file path, then ``overrides``
    (already-typed values, e.g. from CLI flags; None entries are ignored).
    Unknown sections or keys are errors."""
    values: dict = {}
    if source is not None:
        text = _read_source(source)
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        known = {f.name: f for f in fields(RunConfig)}
        for sec in cp.sections():
            for key, raw in cp.items(sec):
                f = known.get(key)
                if f is None or f.metadata["section"] != sec:
                    raise ConfigError(f"unknown key {sec}.{key}")
                try:
                    values[key] = f.metadata["codec"][0](raw)
                except ValueError as exc:
                    raise ConfigError(f"bad value for {sec}.{key}: {raw!r} ({exc})") from exc
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _read_source(source: str | Path) -> str:
    """A Path or an existing file name is read; any other string is INI text."""
    if isinstance(source, Path):
        return source.read_text()
    if not source.strip():
        return ""
    if "\n" not in source and "[" not in source:
        if not Path(source).is_file():
            raise ConfigError(f"config file not found: {source}")
        return Path(source).read_text()
    return source


def defaults_table() -> list[tuple[str, str]]:
    """(section.key, default) pairs, as documented in the README."""
    cfg = RunConfig()
    return [(_key(f.name), f.metadata["codec"][1](getattr(cfg, f.name))) for f in fields(cfg)]
