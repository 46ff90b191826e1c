"""Bound reports: measured quantities against envelopes, with fitted constants."""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

COLUMNS = ("suite", "k", "j", "quantity", "measured", "bound", "ratio", "pass")


@dataclass
class BoundsReport:
    """Rows of ``(suite, k, j, quantity, measured, bound, ratio, pass)``.

    ``fitted`` holds named constants and slopes extracted from the rows.
    """

    rows: list = field(default_factory=list)
    fitted: dict = field(default_factory=dict)

    def add(self, suite, k, j, quantity, measured, bound, passed=None, ratio=None):
        measured = float(measured)
        bound = float(bound)
        if ratio is None:
            ratio = measured / bound if bound != 0 else (0.0 if measured == 0 else np.inf)
        if passed is None:
            passed = bool(np.isfinite(ratio))
        self.rows.append({
            "suite": suite, "k": k, "j": j, "quantity": quantity,
            "measured": measured, "bound": bound, "ratio": float(ratio), "pass": bool(passed),
        })

    def extend(self, other):
        self.rows.extend(other.rows)
        self.fitted.update(other.fitted)
        return self

    @property
    def ok(self):
        return all(r["pass"] for r in self.rows)

    def select(self, suite=None, quantity=None):
        return [r for r in self.rows
                if (suite is None or r["suite"] == suite)
                and (quantity is None or r["quantity"] == quantity)]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            out = dict(r)
            out["measured"] = repr(r["measured"])
            out["bound"] = repr(r["bound"])
            out["ratio"] = repr(r["ratio"])
            out["k"] = "" if r["k"] is None else r["k"]
            out["j"] = "" if r["j"] is None else r["j"]
            w.writerow(out)
        return buf.getvalue()

    def to_json(self):
        def clean(v):
            if isinstance(v, float) and not np.isfinite(v):
                return repr(v)
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v
        doc = {
            "ok": self.ok,
            "fitted": {k: clean(v) for k, v in self.fitted.items()},
            "rows": [{k: clean(v) for k, v in r.items()} for r in self.rows],
        }
        return json.dumps(doc, indent=1)


def fit_slope(x, y):
    """Least-squares slope of ``y`` against ``x``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or np.ptp(x) == 0:
        raise ValueError("need at least two distinct abscissae")
    A = np.vstack([x, np.ones_like(x)]).T
    slope, _ = np.linalg.lstsq(A, y, rcond=None)[0]
    return float(slope)
