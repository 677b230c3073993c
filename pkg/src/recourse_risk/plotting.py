"""SVG figures for results archives.

Figures are byte-reproducible: the SVG id salt is fixed and no creation date
is embedded.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {"svg.hashsalt": "recourse-risk", "svg.fonttype": "path", "font.size": 9}


def _save(fig, path):
    with matplotlib.rc_context(_RC):
        fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)


def risk_table_figure(table: list, path) -> None:
    """Grouped bars of mean R_P and R_Q (one panel per response) with std error bars."""
    responses = sorted({row["response"] for row in table})
    with matplotlib.rc_context(_RC):
        fig, axes = plt.subplots(1, len(responses), figsize=(4.5 * len(responses), 3.2), squeeze=False, sharey=True)
        for ax, resp in zip(axes[0], responses):
            rows = [r for r in table if r["response"] == resp]
            labels = [f"{r['classifier']}\n{r['method']}" for r in rows]
            pos = np.arange(len(rows))
            ax.bar(pos - 0.2, [r["r_p_mean"] for r in rows], 0.4, yerr=[r["r_p_std"] for r in rows], label=r"$R_P$", color="#4c72b0")
            ax.bar(pos + 0.2, [r["r_q_mean"] for r in rows], 0.4, yerr=[r["r_q_std"] for r in rows], label=r"$R_Q$", color="#dd8452")
            ax.set_xticks(pos)
            ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
            ax.set_title(resp)
            ax.set_ylabel("risk")
        axes[0][0].legend(frameon=False)
        _save(fig, path)


def sweep_figure(series: list, parameter: str, path) -> None:
    """Risk difference against the swept acceptance parameter, one line per curve."""
    curves = {}
    for pt in series:
        curves.setdefault((pt["classifier"], pt["method"], pt["response"]), []).append(pt)
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        for (clf, method, resp), pts in sorted(curves.items()):
            pts = sorted(pts, key=lambda p: p["value"])
            x = np.array([p["value"] for p in pts])
            m = np.array([p["diff_mean"] for p in pts])
            s = np.array([p["diff_std"] for p in pts])
            ax.plot(x, m, marker="o", ms=3, label=f"{clf} / {method} / {resp}")
            ax.fill_between(x, m - s, m + s, alpha=0.2)
        if parameter == "sigma2":
            ax.set_xscale("log")
            ax.set_xlabel(r"$\sigma^2$")
        else:
            ax.set_xlabel("p")
        ax.axhline(0.0, color="grey", lw=0.6)
        ax.set_ylabel(r"$R_Q - R_P$")
        ax.legend(frameon=False, fontsize=6)
        _save(fig, path)


def verify_figure(checks: list, path) -> None:
    """Standardised gap ``(lhs - rhs) / tolerance`` for each check; the 3-sigma band is shaded."""
    vals, labels, colors = [], [], []
    cmap = {"holds": "#55a868", "fails": "#c44e52", "inconclusive": "#8c8c8c"}
    for c in checks:
        if c.get("rhs") is not None:
            target = c["rhs"]
        elif c.get("lower") is not None and c["lhs"] < c["lower"]:
            target = c["lower"]
        elif c.get("upper") is not None and c["lhs"] > c["upper"]:
            target = c["upper"]
        else:
            target = c["lhs"]
        tol = c.get("tolerance") or 0.0
        vals.append((c["lhs"] - target) / (tol / 3.0) if tol > 0 else 0.0)
        labels.append(f"{c['theorem_id']} {c.get('classifier', '')}")
        colors.append(cmap.get(c["verdict"], "black"))
    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.0, max(2.0, 0.14 * len(vals) + 0.8)))
        pos = np.arange(len(vals))
        ax.barh(pos, vals, color=colors)
        ax.axvspan(-3, 3, color="grey", alpha=0.15)
        ax.set_yticks(pos)
        ax.set_yticklabels(labels, fontsize=5)
        ax.invert_yaxis()
        ax.set_xlabel("gap / sigma")
        _save(fig, path)
