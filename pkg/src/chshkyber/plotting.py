"""Figure rendering for the ``report`` command.

One figure per named parameter set: bit security against the noise
inflation factor for each attack family, with the three variants marked and
NIST level reference lines. PNG output carries no timestamp or version
metadata so repeated renders are byte-identical.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from . import chsh, security  # noqa: E402

golden_mean = (math.sqrt(5) - 1.0) / 2.0
fig_width = 9.0

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 5,
    "svg.hashsalt": "chshkyber",
}

VARIANT_STYLE = {
    security.STANDARD: dict(color="#4d4d4d", marker="o"),
    security.QCS: dict(color="#2b8cbe", marker="s"),
    security.CHSH: dict(color="#d95f02", marker="^"),
}

PNG_METADATA = {"Software": None}


def _save(fig, path: Path):
    fig.savefig(path, dpi=120, metadata=PNG_METADATA)
    plt.close(fig)


def security_figure(paramset: str, path, base_bits=None, model: str = security.MULTIPLICATIVE):
    """Bits vs beta per attack family for one parameter set."""
    betas = np.linspace(0.0, 0.4, 81)
    curves = security.family_curves(paramset, betas, base_bits, model)
    row_beta = security.ROW_BETA[paramset]
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(fig_width, fig_width * golden_mean / 2.2), sharey=True)
        for ax, family in zip(axes, security.FAMILIES):
            ax.plot(betas, curves[family], color="#999999", lw=1.0, zorder=1)
            base = (base_bits or {}).get(family, security.BASE_BITS[paramset])
            for tag in security.VARIANT_TAGS:
                b = row_beta[tag]
                bits = security.enhanced_bits(base, b, model)
                ax.plot([b], [bits], linestyle="none", label=f"{tag} ({bits:.1f})", **VARIANT_STYLE[tag])
            for level, bits in security.NIST_LEVEL_BITS.items():
                ax.axhline(bits, color="#bbbbbb", ls="--", lw=0.8)
                ax.text(betas[-1], bits, level, ha="right", va="bottom", fontsize=6, color="#777777")
            ax.set_title(family)
            ax.set_xlabel("noise inflation factor")
            ax.legend(loc="upper left", frameon=False)
        axes[0].set_ylabel(r"security [bits, $\log_2 T$]")
        fig.suptitle(paramset.replace("kyber", "Kyber-"))
        fig.tight_layout()
        _save(fig, Path(path))


def visibility_figure(path):
    """Exact mean correlation vs source visibility against the classical bound."""
    vs = np.linspace(0, 1, 101)
    means = [chsh.expected_c(chsh.QuantumNoisy(float(v))) for v in vs]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(fig_width / 2, fig_width * golden_mean / 2))
        ax.plot(vs, means, color=VARIANT_STYLE[security.CHSH]["color"], label="Werner source")
        ax.axhline(chsh.CLASSICAL_BOUND, color="#4d4d4d", ls="--", lw=0.8, label="classical bound")
        ax.axvline(1 / math.sqrt(2), color="#bbbbbb", ls=":", lw=0.8)
        ax.set_xlabel("visibility")
        ax.set_ylabel("mean correlation")
        ax.legend(loc="upper left", frameon=False)
        fig.tight_layout()
        _save(fig, Path(path))


def render_all(outdir, base_bits=None, model: str = security.MULTIPLICATIVE) -> list:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for name in security.PARAMSET_NAMES:
        path = outdir / f"{name}_security.png"
        security_figure(name, path, base_bits, model)
        written.append(path)
    path = outdir / "chsh_visibility.png"
    visibility_figure(path)
    written.append(path)
    return written
