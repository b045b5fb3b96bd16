"""Figure rendering for the CLI report paths.

Each helper takes already-computed tabular results and writes a PNG next
to the delimited output. Rendering is headless (Agg) and optional: every
command accepts --no-plots.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def save_chart_figure(df, out_path, title="Phase II control chart"):
    """Shifted statistic per observation with the control limit and
    alarmed points highlighted. Expects columns index, z, signal, ucl."""
    fig, ax = plt.subplots(figsize=(9, 4))
    idx = df["index"].to_numpy()
    z = df["z"].to_numpy()
    sig = df["signal"].to_numpy().astype(bool)
    ax.plot(idx, z, lw=0.8, color="tab:blue", label="charting statistic")
    ax.plot(idx[sig], z[sig], "o", ms=4, color="tab:red", label="signal")
    ucl = df["ucl"].to_numpy()
    zalpha = df["z_alpha"].to_numpy() if "z_alpha" in df else None
    if zalpha is not None:
        ax.plot(idx, zalpha, ls="--", color="black", lw=1, label="UCL (z-scale)")
    else:
        ax.plot(idx, ucl, ls="--", color="black", lw=1, label="UCL")
    ax.set_xlabel("observation")
    ax.set_ylabel("z")
    ax.set_title(title)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def save_ecdf_figure(df, out_path, title="Empirical CDFs of the charting statistic"):
    """Group ECDFs against the standard normal CDF. Expects columns
    value, ecdf_group_a, ecdf_group_b, normal_cdf."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    v = df["value"].to_numpy()
    ax.step(v, df["ecdf_group_a"].to_numpy(), where="post",
            color="tab:green", label="group A")
    ax.step(v, df["ecdf_group_b"].to_numpy(), where="post",
            color="tab:blue", label="group B")
    ax.plot(v, df["normal_cdf"].to_numpy(), ls="--", color="black",
            lw=1, label="standard normal")
    ax.set_xlabel("charting statistic")
    ax.set_ylabel("CDF")
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def save_learning_curve_figure(df, out_path, title="Learning-time effect on ARL1"):
    """ARL1 vs tau, one line per dimension, with the nominal asymptote."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for p, grp in df.groupby("p"):
        grp = grp.sort_values("tau")
        ax.errorbar(grp["tau"], grp["arl_hat"], yerr=grp["std_err"],
                    marker="o", ms=4, capsize=3, label=f"p={p}")
    if "nominal_arl1" in df:
        ax.axhline(float(df["nominal_arl1"].iloc[0]), ls="--",
                   color="black", lw=1, label="nominal")
    ax.set_xlabel("in-control period length tau")
    ax.set_ylabel("ARL1")
    ax.set_xscale("log")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def save_arl_grid_figure(df, out_path, title="Simulated ARL"):
    """Generic ARL plot: picks the grid axis with the most variation."""
    candidates = [c for c in ("p", "a", "alpha", "tau") if c in df and df[c].nunique() > 1]
    xkey = candidates[0] if candidates else "p"
    hue_keys = [c for c in ("alpha", "cf_order", "a") if c != xkey and c in df and df[c].nunique() > 1]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if hue_keys:
        for vals, grp in df.groupby(hue_keys):
            vals = vals if isinstance(vals, tuple) else (vals,)
            label = ", ".join(f"{k}={v}" for k, v in zip(hue_keys, vals))
            grp = grp.sort_values(xkey)
            ax.errorbar(grp[xkey], grp["arl_hat"], yerr=grp["std_err"],
                        marker="o", ms=4, capsize=3, label=label)
        ax.legend(fontsize=8)
    else:
        grp = df.sort_values(xkey)
        ax.errorbar(grp[xkey], grp["arl_hat"], yerr=grp["std_err"],
                    marker="o", ms=4, capsize=3)
    ax.set_xlabel(xkey)
    ax.set_ylabel("ARL")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
