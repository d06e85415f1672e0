"""File formats: potentials (CSV + JSON sidecar), spectra, run records.

Every file is written once through a temporary file and an atomic rename.
Floats are written with ``repr`` so that values round-trip exactly.
"""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError
from .grid import PotentialField, SupportRegion, build_domain
from .spectrum import NegativeSpectrum, cluster_multiplicities


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def write_dict_rows(path: str | Path, rows: list[dict]) -> None:
    header: list[str] = []
    for row in rows:
        header.extend(k for k in row if k not in header)
    write_csv(path, header, ([row.get(k, "") for k in header] for row in rows))


def dumps_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def write_json(path: str | Path, obj) -> None:
    atomic_write_text(path, dumps_json(obj))


# ----------------------------------------------------------------------------
# potentials
# ----------------------------------------------------------------------------

def potential_metadata(V: PotentialField) -> dict:
    dom = V.domain
    return {"d": dom.d, "R": dom.R, "n": dom.n, "support": V.support.to_dict()}


def save_potential(V: PotentialField, path: str | Path) -> tuple[Path, Path]:
    """Write ``path`` (CSV: coordinates and value per node) and ``path.json`` metadata."""
    path = Path(path)
    dom = V.domain
    X = [x.ravel() for x in dom.mesh()]
    vals = V.values.ravel()
    header = [f"x{i + 1}" for i in range(dom.d)] + ["V"]
    write_csv(path, header, (tuple(x[i] for x in X) + (vals[i],) for i in range(dom.size)))
    meta = path.with_name(path.name + ".json")
    write_json(meta, potential_metadata(V))
    return path, meta


def load_potential(path: str | Path) -> PotentialField:
    path = Path(path)
    meta_path = path.with_name(path.name + ".json")
    try:
        meta = json.loads(meta_path.read_text())
        dom = build_domain(int(meta["d"]), float(meta["R"]), int(meta["n"]))
        K = SupportRegion(tuple(meta["support"]["lower"]), tuple(meta["support"]["upper"]))
    except (OSError, KeyError, ValueError) as exc:
        raise DomainError(f"cannot read potential metadata {meta_path}: {exc}") from exc
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape != (dom.size, dom.d + 1):
        raise DomainError(f"{path}: expected {dom.size} rows of {dom.d + 1} columns, got {data.shape}")
    for i, x in enumerate(dom.mesh()):
        if not np.allclose(data[:, i], x.ravel(), rtol=0, atol=1e-9 * dom.R):
            raise DomainError(f"{path}: coordinate column x{i + 1} does not match the grid in the metadata")
    return PotentialField(data[:, -1].reshape(dom.shape), dom, K)


# ----------------------------------------------------------------------------
# spectra
# ----------------------------------------------------------------------------

def spectrum_rows(s: NegativeSpectrum) -> list[tuple]:
    mu = cluster_multiplicities(s)
    return [(i + 1, float(lam), int(mu.cluster_of[i]), int(mu.weights[mu.cluster_of[i]]), float(s.residuals[i]))
            for i, lam in enumerate(s.eigenvalues)]


def write_spectrum_csv(path: str | Path, s: NegativeSpectrum) -> None:
    write_csv(path, ["index", "eigenvalue", "cluster_id", "multiplicity", "residual"], spectrum_rows(s))


def write_eigenvectors(path: str | Path, s: NegativeSpectrum) -> None:
    """Little-endian float64 array plus a JSON header next to it."""
    path = Path(path)
    if s.eigenvectors is None:
        raise ValueError("spectrum carries no eigenvectors")
    arr = np.ascontiguousarray(s.eigenvectors, dtype="<f8")
    atomic_write_bytes(path, arr.tobytes())
    write_json(path.with_name(path.name + ".json"), {
        "shape": list(arr.shape), "dtype": "float64", "endianness": "little", "order": "C",
        "dx": s.dx, "d": s.d, "normalisation": "sum(u^2) * dx^d = 1",
    })


def read_eigenvectors(path: str | Path) -> np.ndarray:
    path = Path(path)
    header = json.loads(path.with_name(path.name + ".json").read_text())
    return np.frombuffer(path.read_bytes(), dtype="<f8").reshape(header["shape"])
