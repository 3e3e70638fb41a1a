"""Log-log least-squares rate fits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateFit(ValueError):
    pass


@dataclass(frozen=True)
class RateFit:
    metric: str
    slope: float
    intercept: float
    r_squared: float
    points_used: int
    note: str = ""


def fit_power_law(x, y, metric: str = "", min_decades: float = 1.0) -> RateFit:
    """Fit log y = intercept + slope * log x over the positive entries."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    keep = (y > 0) & (x > 0)
    note = f"{int((~keep).sum())} nonpositive value(s) excluded" if not keep.all() else ""
    x, y = x[keep], y[keep]
    if x.size < 3:
        raise DegenerateFit(f"{metric}: need >= 3 positive points, got {x.size}")
    if np.log10(y.max() / y.min()) < min_decades:
        raise DegenerateFit(f"{metric}: values span less than {min_decades:g} decade(s)")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (intercept + slope * lx)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return RateFit(metric, float(slope), float(intercept), min(max(r2, 0.0), 1.0), int(x.size), note)


def fit_rate(records, x_field: str = "dt", y_field: str = "value", metric: str | None = None,
             min_decades: float = 1.0) -> RateFit:
    """Rate fit over ErrorRecords (optionally restricted to one metric)."""
    rows = [r for r in records if metric is None or r.metric == metric]
    name = metric or (rows[0].metric if rows else "")
    return fit_power_law([getattr(r, x_field) for r in rows], [getattr(r, y_field) for r in rows],
                         name, min_decades)
