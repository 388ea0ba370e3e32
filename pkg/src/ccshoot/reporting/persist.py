"""Output files and the run manifest.

CSV files use LF line endings and ``repr`` floats, so identical runs give
identical bytes. ``manifest.json`` is rewritten after every file or lambda
outcome, so an interrupted run leaves a manifest of what was completed.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from ..continuation import BIFURCATION_COLUMNS
from .svg import render_bifurcation

SOLUTION_COLUMNS = BIFURCATION_COLUMNS + ("energy_bending", "energy_concave", "energy_convex",
                                          "min_u", "min_v", "iterations", "method")


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("nan" if math.isnan(v) else
                                                 ("inf" if v > 0 else "-inf"))
    return str(v)


def rows_to_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c, "")) for c in columns])
    return buf.getvalue()


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class RunManifest:
    """Config echo, tool version, per-lambda outcomes and hashed file list."""

    directory: Path
    config: dict = field(default_factory=dict)
    command: str = ""
    version: str = __version__
    outcomes: list[dict] = field(default_factory=list)
    files: dict[str, str] = field(default_factory=dict)
    errors: list[dict] = field(default_factory=list)
    complete: bool = False

    @property
    def path(self) -> Path:
        return self.directory / "manifest.json"

    def write_text(self, name: str, text: str) -> Path | None:
        """Write ``name`` under the output directory and hash it; an I/O
        failure is logged in the manifest instead of raised."""
        target = self.directory / name
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            with open(target, "w", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            self.errors.append({"file": name, "error": str(exc)})
            self.save()
            return None
        self.files[name] = sha256_file(target)
        self.save()
        return target

    def record_outcome(self, lam: float, **info) -> None:
        self.outcomes.append({"lambda": lam, **info})
        self.save()

    def finish(self) -> None:
        self.complete = True
        self.save()

    def as_dict(self) -> dict:
        return {
            "tool": "ccshoot", "version": self.version, "command": self.command,
            "complete": self.complete, "config": _jsonable(self.config),
            "outcomes": _jsonable(self.outcomes), "files": dict(sorted(self.files.items())),
            "errors": self.errors,
        }

    def save(self) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.as_dict(), indent=2, sort_keys=False) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def load_manifest(directory: Path) -> dict:
    return json.loads((Path(directory) / "manifest.json").read_text())


def verify_manifest(directory: Path) -> list[str]:
    """Names of listed files that are missing or whose hash differs."""
    directory = Path(directory)
    bad = []
    for name, digest in load_manifest(directory)["files"].items():
        p = directory / name
        if not p.is_file() or sha256_file(p) != digest:
            bad.append(name)
    return bad


def record_row(rec) -> dict:
    return {
        "lambda": rec.lam, "branch": rec.branch, "du0": rec.du0, "dv0": rec.dv0,
        "sup_v": rec.sup_v, "sup_u": rec.sup_u, "energy": rec.energy,
        "residue_u1": rec.residue_u1, "residue_v1": rec.residue_v1,
        "symmetry_defect": rec.symmetry_defect, "min_u": rec.min_u, "min_v": rec.min_v,
        "iterations": rec.iterations, "method": rec.method,
    }


def write_bifurcation(out_dir: Path, rows: list[dict], branches, lambda_bif: float | None,
                      manifest: RunManifest | None = None) -> RunManifest:
    manifest = manifest or RunManifest(Path(out_dir), command="bifurcation")
    manifest.write_text("bifurcation.csv", rows_to_csv(rows, BIFURCATION_COLUMNS))
    payload = {"lambda_bif": lambda_bif, "rows": rows}
    manifest.write_text("bifurcation.json", json.dumps(_jsonable(payload), indent=2) + "\n")
    manifest.write_text("bifurcation.svg", render_bifurcation(branches, lambda_bif))
    return manifest
