"""Deterministic report rendering: canonical JSON and CSV.

Reports are the tool's only output, so two runs with the same configuration
and version must produce byte-identical files regardless of thread count or
machine.  That rules out timestamps, dict-iteration order, locale-dependent
formatting, and accumulation-order-dependent floats; the quadrature layer
already guarantees the last one, and this module pins the rest: keys are
sorted, floats go through `repr` (shortest round-trip form), and every value
is reduced to plain Python scalars/lists before encoding.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np

__all__ = ["plain", "build_report", "render_json", "render_csv",
           "render_table"]


def plain(obj):
    """Reduce nested numpy / dataclass / tuple structure to JSON-able form.

    Non-finite floats become the strings "nan" / "inf" / "-inf" (JSON has no
    spelling for them and silently emitting null would hide a numerical
    failure from the reader).
    """
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if np.isnan(x):
            return "nan"
        if np.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: plain(getattr(obj, f.name))
                for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    raise TypeError(f"cannot render {type(obj).__name__} into a report")


def build_report(subcommand: str, config: dict, results,
                 summary: dict | None = None) -> dict:
    """Assemble the standard report envelope.

    `config` must already be reduced to the semantic inputs of the run --
    in particular it must not contain the thread count or output paths,
    which may differ between byte-identical runs.
    """
    from . import __version__
    from .conventions import conventions_hash

    doc = {
        "version": __version__,
        "conventions_sha256": conventions_hash(),
        "subcommand": subcommand,
        "config": plain(config),
        "results": plain(results),
    }
    if summary is not None:
        doc["summary"] = plain(summary)
    return doc


def render_json(doc: dict) -> str:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=2,
                      separators=(",", ": ")) + "\n"


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_csv(columns, rows) -> str:
    """Comma-separated table with a header row; floats via repr."""
    lines = [",".join(columns)]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError("row width does not match the header")
        lines.append(",".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"


def render_table(columns, rows) -> str:
    """Whitespace-delimited data block (plot-friendly), header commented."""
    lines = ["# " + " ".join(columns)]
    for row in rows:
        lines.append(" ".join(_cell(v) for v in row))
    return "\n".join(lines) + "\n"
