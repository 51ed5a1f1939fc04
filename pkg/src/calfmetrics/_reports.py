"""CSV report writing with a provenance header line.

Every report starts with a ``#`` comment carrying the tool name, seed, and
config hash so a regenerated file can be byte-compared against an earlier
run. Floats are formatted with repr (shortest round-trip form), which keeps
output independent of locale and library versions.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

LB_PER_KG = 0.45359237


def format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if value != value:  # NaN
            return "nan"
        return repr(value)
    return str(value)


def config_digest(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        if part is None:
            continue
        if isinstance(part, (bytes, bytearray)):
            h.update(part)
        else:
            h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()[:12]


def write_report(path, meta: dict, columns, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# " + " ".join(f"{k}={v}" for k, v in meta.items())]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(format_cell(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def comparison_rows(table, to_kg: bool = False):
    """Flatten a ComparisonTable into wide CSV rows (one per metric+split)."""
    rows = []
    for row in table.rows:
        values = []
        for mean, sd in zip(row.means, row.sds):
            mean, sd = _convert_metric(row.metric, mean, sd, to_kg)
            values.extend([mean, sd])
        rows.append(
            [row.metric, row.split]
            + values
            + [row.p, row.p_adjusted, row.eta2]
            + list(row.letters)
        )
    return rows


def comparison_columns(models):
    cols = ["metric", "split"]
    for m in models:
        cols.extend([f"mean_{m}", f"sd_{m}"])
    cols.extend(["p", "p_adjusted", "eta2"])
    cols.extend([f"letters_{m}" for m in models])
    return cols


def _convert_metric(metric, mean, sd, to_kg):
    if not to_kg:
        return mean, sd
    if metric in ("rmse", "mae"):
        return mean * LB_PER_KG, sd * LB_PER_KG
    if metric == "mse":
        return mean * LB_PER_KG**2, sd * LB_PER_KG**2
    return mean, sd
