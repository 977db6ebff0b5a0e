"""Output writers: CSV tables, SVG line plots, JSON reports and the run manifest.

Everything except the manifest's timestamp is a pure function of its input, so
repeated runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..errors import EmitError


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _write_bytes(path, data: bytes):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as err:
        raise EmitError(f"cannot write {path}: {err}") from err


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def emit_csv(header, rows, path) -> Path:
    """Header row plus data rows; floats carry 17 significant digits."""
    _write_bytes(path, csv_text(header, rows).encode())
    return Path(path)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        r = list(csv.reader(fh))
    return r[0], r[1:]


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def report_text(report) -> str:
    return json.dumps(_json_safe(report), sort_keys=True, indent=2) + "\n"


def emit_report(report, path) -> Path:
    """Single JSON document; non-finite numbers become null."""
    _write_bytes(path, report_text(report).encode())
    return Path(path)


def emit_svg(series, path, xlabel: str, ylabel: str, title: str = "", log_x: bool = True,
             windows=None, log_y: bool = False) -> Path:
    """Line plot of ``series`` (label -> (x, y)) with optional shaded windows.

    ``windows`` is a list of (x0, x1, label) spans drawn as translucent
    rectangles.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "irlab", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(7, 4.2))
        for i, (x0, x1, lab) in enumerate(windows or []):
            ax.axvspan(max(x0, 1) if log_x else x0, x1, alpha=0.12, color=f"C{i % 10}", lw=0, label=lab)
        for label, (x, y) in series.items():
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            if log_x:
                keep = x > 0
                x, y = x[keep], y[keep]
            ax.plot(x, y, lw=1.2, label=label)
        if log_x:
            ax.set_xscale("log")
        if log_y:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.legend(fontsize=7, loc="best")
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
        plt.close(fig)
    _write_bytes(path, buf.getvalue().encode())
    return Path(path)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def emit_manifest(out_dir, files, config_digest: str, seeds, version: str, command: str,
                  horizon: int | None = None) -> Path:
    """Written last: checksums of every emitted file plus run metadata."""
    out_dir = Path(out_dir)
    entries = {}
    for f in sorted(Path(p) for p in files):
        entries[os.path.relpath(f, out_dir)] = sha256_file(f)
    manifest = {
        "command": command,
        "config_sha256": config_digest,
        "seeds": list(seeds),
        "tool_version": version,
        "horizon": horizon,
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "files": entries,
    }
    path = out_dir / "manifest.json"
    _write_bytes(path, report_text(manifest).encode())
    return path
