"""Result rows, CSV files, grouped summaries and optional plots."""

import csv
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

__all__ = [
    "HEADER",
    "METRICS",
    "ResultRow",
    "write_results",
    "read_results",
    "summarize",
    "write_summary",
    "fit_slope",
    "slopes",
    "emit_outputs",
]

HEADER = "exp,model,case,lambda,epsilon,theta0,m,n,rep,seed,method,metric,value,millis"
METRICS = ("err_sq_final", "neg_log_err_sq", "converged", "err_frob", "log_err_sq")
GROUP_KEYS = ("exp", "model", "case", "lam", "eps", "theta0", "m", "n", "method", "metric")


@dataclass(frozen=True)
class ResultRow:
    exp: int
    model: str
    case: str
    lam: float
    eps: float
    theta0: int
    m: int
    n: int
    rep: int
    seed: int
    method: str
    metric: str
    value: float
    millis: int = 0

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        # repr gives the shortest string that parses back to the same double
        return repr(v)
    return str(v)


def _parse(text, kind):
    if text == "":
        return None
    if kind is float:
        return float(text)
    if kind is int:
        return int(text)
    return text


_KINDS = {
    "exp": int, "model": str, "case": str, "lam": float, "eps": float, "theta0": int, "m": int,
    "n": int, "rep": int, "seed": int, "method": str, "metric": str, "value": float, "millis": int,
}


def write_results(rows, path):
    """Write ``rows`` under the fixed header; an empty list gives a header-only file."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(HEADER + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        for row in rows:
            writer.writerow([_fmt(v) for v in astuple(row)])


def read_results(path):
    """Parse a results file written by :func:`write_results`."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if ",".join(header) != HEADER:
            raise ValueError("unexpected results header")
        names = [f.name for f in fields(ResultRow)]
        return [ResultRow(*(_parse(t, _KINDS[nm]) for t, nm in zip(rec, names))) for rec in reader]


def summarize(rows):
    """Group rows by everything except ``rep``/``seed`` and describe ``value``.

    Returns a list of dicts with the group keys plus ``count``, ``mean``,
    ``q25``, ``median`` and ``q75``, in first-appearance order.
    """
    groups = {}
    for row in rows:
        key = tuple(getattr(row, k) for k in GROUP_KEYS)
        groups.setdefault(key, []).append(row.value)
    out = []
    for key, vals in groups.items():
        v = np.asarray(vals, dtype=float)
        rec = dict(zip(GROUP_KEYS, key))
        with np.errstate(invalid="ignore"):
            rec.update(
                count=len(v),
                mean=float(np.mean(v)),
                q25=float(np.quantile(v, 0.25)),
                median=float(np.median(v)),
                q75=float(np.quantile(v, 0.75)),
            )
        out.append(rec)
    return out


SUMMARY_HEADER = ("exp", "model", "case", "lambda", "epsilon", "theta0", "m", "n", "method", "metric",
                  "count", "mean", "q25", "median", "q75")


def write_summary(summary, path):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_HEADER)
        for rec in summary:
            writer.writerow([_fmt(rec[k]) for k in GROUP_KEYS] + [_fmt(rec[k]) for k in ("count", "mean", "q25", "median", "q75")])


def fit_slope(x, y):
    """Least-squares line ``y = intercept + slope x``; returns ``(slope, intercept, r2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2 or not np.all(np.isfinite(y)):
        return math.nan, math.nan, math.nan
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (intercept + slope * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else math.nan
    return float(slope), float(intercept), r2


def slopes(summary, metric="neg_log_err_sq"):
    """Per (exp, model, case, epsilon) slope of the mean ``metric`` over ``m``."""
    lines = {}
    for rec in summary:
        if rec["metric"] != metric or rec["m"] is None:
            continue
        key = (rec["exp"], rec["model"], rec["case"], rec["eps"], rec["method"])
        lines.setdefault(key, []).append((rec["m"], rec["mean"]))
    out = []
    for key, pts in lines.items():
        pts.sort()
        s, c, r2 = fit_slope([p[0] for p in pts], [p[1] for p in pts])
        out.append(dict(zip(("exp", "model", "case", "eps", "method"), key), slope=s, intercept=c, r2=r2))
    return out


def _write_slopes(recs, path):
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("exp", "model", "case", "epsilon", "method", "slope", "intercept", "r2"))
        for r in recs:
            writer.writerow([_fmt(r[k]) for k in ("exp", "model", "case", "eps", "method", "slope", "intercept", "r2")])


# which summary metric each experiment plots, and along which axis
_PLOTS = {
    1: ("converged", "m", "lam"), 5: ("converged", "m", "lam"),
    2: ("neg_log_err_sq", "m", "eps"), 8: ("neg_log_err_sq", "m", "eps"),
    3: ("err_frob", "n", "theta0"), 6: ("err_frob", "n", "theta0"), 9: ("err_frob", "n", "theta0"),
    4: ("log_err_sq", "case", "method"), 7: ("log_err_sq", "case", "method"), 10: ("log_err_sq", "case", "method"),
}


def _plot(summary, exp, out_dir):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    metric, xkey, series = _PLOTS[exp]
    models = sorted({r["model"] for r in summary if r["metric"] == metric})
    written = []
    for model in models:
        recs = [r for r in summary if r["metric"] == metric and r["model"] == model]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for cases in sorted({r["case"] for r in recs}) if xkey != "case" else [None]:
            sub = [r for r in recs if cases is None or r["case"] == cases]
            for s in sorted({r[series] for r in sub}, key=str):
                pts = [r for r in sub if r[series] == s]
                if xkey == "case":
                    xs = [r["case"] for r in pts]
                    ax.errorbar(xs, [r["mean"] for r in pts],
                                yerr=[[r["mean"] - r["q25"] for r in pts], [r["q75"] - r["mean"] for r in pts]],
                                marker="o", capsize=3, label=str(s))
                else:
                    pts.sort(key=lambda r: r[xkey])
                    lbl = f"{series}={s}" + (f" ({cases})" if cases not in (None, "-") else "")
                    ax.plot([r[xkey] for r in pts], [r["mean"] for r in pts], marker="o", label=lbl)
        ax.set_xlabel(xkey)
        ax.set_ylabel(metric)
        ax.set_title(f"Experiment {exp}, model {model}")
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = Path(out_dir) / f"exp{exp}_model{model}.svg"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written


def emit_outputs(rows, exp, out_dir, plots=False):
    """Write ``results.csv``, ``summary.csv`` (and ``slopes.csv`` for the
    slope experiments) into ``out_dir``; SVG plots need matplotlib."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_results(rows, out_dir / "results.csv")
    summary = summarize(rows)
    write_summary(summary, out_dir / "summary.csv")
    files = [out_dir / "results.csv", out_dir / "summary.csv"]
    if exp in (2, 8):
        _write_slopes(slopes(summary), out_dir / "slopes.csv")
        files.append(out_dir / "slopes.csv")
    if plots and rows:
        files.extend(_plot(summary, exp, out_dir))
    return files
