"""Matplotlib figures written next to the JSON reports (Agg backend, files only)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "savefig.dpi": 120,
    "svg.hashsalt": "securetest",  # stable ids in SVG output
}


def _save(fig, path) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, metadata={"Date": None} if path.suffix in (".svg", ".pdf") else None)
    plt.close(fig)
    return str(path)


def plot_experiment(report: dict, path) -> str:
    """Empirical test mean vs estimated true mean per adaptive round."""
    rounds = report["rounds"]
    with plt.rc_context(STYLE):
        fig, (ax, ax_gap) = plt.subplots(2, 1, sharex=True, gridspec_kw={"height_ratios": [3, 1]})
        if rounds:
            q = np.array([r["query"] for r in rounds])
            emp = np.array([r["empirical_mean"] for r in rounds])
            true = np.array([r["true_mean"] for r in rounds])
            se = np.array([r["true_mean_stderr"] for r in rounds])
            ax.plot(q, emp, lw=0.8, label="empirical (reused tests)")
            ax.plot(q, true, lw=0.8, label="true (held-out estimate)")
            ax.fill_between(q, true - 2 * se, true + 2 * se, alpha=0.2, color="C1", lw=0)
            if "verdict" in rounds[0]:
                passed = np.array([r["verdict"] == "pass" for r in rounds])
                ax.plot(q[passed], emp[passed], "|", ms=4, color="C2", alpha=0.5, label="pass")
            ax_gap.plot(q, emp - true, lw=0.8, color="C3")
        ax_gap.axhline(0, color="k", lw=0.5)
        oracle = report.get("parameters", {}).get("oracle", {}).get("kind", "?")
        ax.set_title(f"{oracle} oracle, n = {report['parameters']['n']}")
        ax.set_ylabel("mean test score")
        ax.legend(loc="best")
        ax_gap.set_ylabel("gap")
        ax_gap.set_xlabel("query")
        return _save(fig, path)


def pass_probability(x, sigma: float) -> np.ndarray:
    """Pr[x + Lap(sigma) + Lap(2 sigma) > 0], closed form."""
    x = np.asarray(x, dtype=float)
    a, b = sigma, 2 * sigma
    t = np.abs(x)
    # tail of the sum of two independent Laplace variables with distinct scales
    tail = (a * a * np.exp(-t / a) - b * b * np.exp(-t / b)) / (2 * (a * a - b * b))
    return np.where(x >= 0, 1 - tail, tail)


def plot_pass_curve(sigma: float, path, observed: list | None = None) -> str:
    """Pass probability against s - n rho, with optional (offset, frequency) points."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        xs = np.linspace(-5 * sigma, 5 * sigma, 401)
        ax.plot(xs / sigma, pass_probability(xs, sigma), label="Lap(s) + Lap(2s)")
        if observed:
            ox, oy = zip(*observed)
            ax.plot(np.asarray(ox) / sigma, oy, "o", ms=4, label="observed")
        ax.set_xlabel("(score sum - n rho) / sigma")
        ax.set_ylabel("Pr[pass]")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(loc="upper left")
        return _save(fig, path)


def plot_comm(stats: dict, path) -> str:
    """Framed bytes per directed link."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        links = list(stats["bytes_sent"])
        ax.bar(links, [stats["bytes_sent"][k] for k in links], color="C0")
        ax.set_ylabel("bytes")
        ax.set_xlabel("link")
        total = sum(stats["bytes_sent"].values())
        ax.set_title(f"{total:,} bytes in {stats['round_count']} AND rounds")
        if total:
            ax.ticklabel_format(axis="y", style="sci", scilimits=(0, 3))
        return _save(fig, path)


def plot_scores(rows: list, path) -> str:
    """Bar chart of per-applicant scores (plaintext and MPC side by side)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        idx = np.arange(len(rows))
        ax.bar(idx - 0.2, [r["plaintext"] for r in rows], 0.4, label="plaintext")
        ax.bar(idx + 0.2, [r["mpc"] for r in rows], 0.4, label="mpc")
        ax.axhline(0, color="k", lw=0.5)
        ax.set_xticks(idx, [str(r.get("applicant", i)) for i, r in enumerate(rows)])
        ax.set_xlabel("applicant")
        ax.set_ylabel("predicted log repayment ratio")
        ax.legend(loc="best")
        return _save(fig, path)
