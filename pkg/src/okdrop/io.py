"""Text and binary formats: droplet configs, energy records, CSV tables, phase-field dumps.

All decimals are written with 17 significant digits, so every float round-trips exactly.

Droplet config format, one record per line after the header:
    # okdrop droplets v1
    ell=<ell>
    kappa=<kappa>
    delta_bar=<delta_bar>
    epsilon=<epsilon>
    disk <cx> <cy> <radius>
    polygon <cx> <cy> <k> <x1> <y1> ... <xk> <yk>      (vertices relative to the center)

Phase-field dump: text header lines ending with "end", then n*n little-endian float64
values in row-major order.
"""
from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from .diffuse import PhaseField
from .droplets import DropletConfig, disk, polygon
from .errors import ParameterError
from .torus import TorusParams

_CONFIG_MAGIC = "# okdrop droplets v1"
_FIELD_MAGIC = "okdrop-phasefield 1"


def fmt(x) -> str:
    """17-significant-digit decimal for floats, plain text otherwise."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


# ---- droplet configs -------------------------------------------------------------------

def config_to_text(config: DropletConfig) -> str:
    p = config.params
    lines = [
        _CONFIG_MAGIC,
        f"ell={fmt(p.ell)}",
        f"kappa={fmt(p.kappa)}",
        f"delta_bar={fmt(p.delta_bar)}",
        f"epsilon={fmt(config.epsilon)}",
    ]
    for d in config.droplets:
        c = " ".join(fmt(float(v)) for v in d.center)
        if d.is_disk:
            lines.append(f"disk {c} {fmt(d.shape.radius)}")
        else:
            v = d.shape.vertices
            coords = " ".join(fmt(float(x)) for x in v.ravel())
            lines.append(f"polygon {c} {len(v)} {coords}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> DropletConfig:
    lines = [ln.strip() for ln in text.splitlines()]
    if not lines or lines[0] != _CONFIG_MAGIC:
        raise ParameterError("not an okdrop droplet file")
    head: dict[str, float] = {}
    drops = []
    for ln in lines[1:]:
        if not ln or ln.startswith("#"):
            continue
        if "=" in ln:
            k, v = ln.split("=", 1)
            head[k.strip()] = float(v)
            continue
        parts = ln.split()
        kind, vals = parts[0], [float(x) for x in parts[1:]]
        if kind == "disk" and len(vals) == 3:
            drops.append(disk(vals[:2], vals[2]))
        elif kind == "polygon" and len(vals) >= 3 and len(vals) == 3 + 2 * int(vals[2]):
            drops.append(polygon(vals[:2], np.array(vals[3:]).reshape(-1, 2)))
        else:
            raise ParameterError(f"malformed droplet record: {ln!r}")
    try:
        params = TorusParams(head["ell"], head["kappa"], head["delta_bar"])
        eps = head["epsilon"]
    except KeyError as e:
        raise ParameterError(f"missing header field {e}") from None
    return DropletConfig(params, eps, tuple(drops))


def write_config(path, config: DropletConfig) -> None:
    Path(path).write_text(config_to_text(config))


def read_config(path) -> DropletConfig:
    return config_from_text(Path(path).read_text())


# ---- JSON records ----------------------------------------------------------------------

def to_json(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with 17-digit floats; non-finite floats become null."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_json_str(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + to_json(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    return _json_str(str(obj))


def _json_str(s: str) -> str:
    return json.dumps(s)


def write_json(path, obj) -> None:
    Path(path).write_text(to_json(obj) + "\n")


# ---- CSV --------------------------------------------------------------------------------

def csv_text(columns, rows, comments=()) -> str:
    """Header row, one line per row, then '# '-prefixed comment lines."""
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    for c in comments:
        buf.write(f"# {c}\n")
    return buf.getvalue()


def read_csv(path) -> tuple[list[str], list[list[float]], list[str]]:
    """(columns, numeric rows, comment lines without the '# ' prefix)."""
    lines = Path(path).read_text().splitlines()
    comments = [ln[2:] if ln.startswith("# ") else ln[1:] for ln in lines if ln.startswith("#")]
    data = [ln for ln in lines if ln and not ln.startswith("#")]
    rows = list(csv.reader(data))
    return rows[0], [[float(x) for x in r] for r in rows[1:]], comments


# ---- phase fields ------------------------------------------------------------------------

def write_phase_field(path, field: PhaseField) -> None:
    p = field.params
    header = [
        _FIELD_MAGIC,
        f"n={field.n}",
        f"ell={fmt(p.ell)}",
        f"kappa={fmt(p.kappa)}",
        f"delta_bar={fmt(p.delta_bar)}",
        f"epsilon={fmt(field.epsilon)}",
        f"mass_constrained={fmt(bool(field.mass_constrained))}",
        "end",
    ]
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        f.write(np.ascontiguousarray(field.grid, dtype="<f8").tobytes())


def read_phase_field(path) -> PhaseField:
    with open(path, "rb") as f:
        if f.readline().decode("ascii").strip() != _FIELD_MAGIC:
            raise ParameterError("not an okdrop phase-field dump")
        head = {}
        while True:
            line = f.readline().decode("ascii").strip()
            if line == "end":
                break
            if not line:
                raise ParameterError("truncated phase-field header")
            k, v = line.split("=", 1)
            head[k] = v
        n = int(head["n"])
        data = np.frombuffer(f.read(), dtype="<f8")
    if data.size != n * n:
        raise ParameterError(f"expected {n * n} values, found {data.size}")
    params = TorusParams(float(head["ell"]), float(head["kappa"]), float(head["delta_bar"]))
    return PhaseField(data.reshape(n, n).copy(), float(head["epsilon"]), params, head["mass_constrained"] == "1")
