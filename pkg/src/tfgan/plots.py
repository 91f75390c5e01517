"""SVG loss curves and spectrogram comparisons."""

from __future__ import annotations

import csv
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

from .dsp import StftConfig, magnitude, stft  # noqa: E402

GRAY64 = ListedColormap(np.repeat(np.linspace(0.0, 1.0, 64)[:, None], 3, axis=1), name="gray64")
SPEC_CFG = StftConfig(512, 120, 480)
MAX_CELLS = (64, 96)  # (bins, frames) drawn per panel

# fixed metadata and id salt keep the SVG bytes reproducible
_SVG_RC = {"svg.hashsalt": "tfgan", "svg.fonttype": "none", "font.size": 8, "axes.linewidth": 0.6}


def read_log(path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Step column and every loss column that holds at least one value; blanks become NaN."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: no rows")
    if "step" not in rows[0]:
        raise ValueError(f"{path}: missing 'step' column")
    steps = np.array([float(r["step"]) for r in rows])
    series = {}
    for name in rows[0]:
        if name in ("step", "wall_ms"):
            continue
        col = np.array([float(r[name]) if r[name] not in ("", None) else np.nan for r in rows])
        if np.any(np.isfinite(col)):
            series[name] = col
    return steps, series


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def plot_curves(steps: np.ndarray, series: dict[str, np.ndarray], path, title: str = "") -> None:
    """One polyline per series; each line gets the SVG id ``curve-<name>``."""
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for name, values in series.items():
            ok = np.isfinite(values)
            (line,) = ax.plot(steps[ok], values[ok], lw=0.9, label=name)
            line.set_gid(f"curve-{name}")
        ax.set_xlabel("step")
        ax.set_ylabel("loss")
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend(fontsize=6, frameon=False, ncol=2)
        fig.tight_layout()
        _save(fig, path)


def loss_report(log_path, out_dir) -> list[Path]:
    """A combined figure plus one figure per column; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    steps, series = read_log(log_path)
    written = [out_dir / "losses.svg"]
    plot_curves(steps, series, written[0], "training losses")
    for name, values in series.items():
        path = out_dir / f"curve_{name}.svg"
        plot_curves(steps, {name: values}, path, name)
        written.append(path)
    with open(out_dir / "loss_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["component", "first", "last", "min", "n"])
        for name, values in series.items():
            ok = values[np.isfinite(values)]
            w.writerow([name, repr(float(ok[0])), repr(float(ok[-1])), repr(float(ok.min())), len(ok)])
    written.append(out_dir / "loss_summary.csv")
    return written


def log_spectrogram(samples: np.ndarray, cfg: StftConfig = SPEC_CFG) -> np.ndarray:
    """Natural-log magnitude, shape (bins, frames)."""
    return np.log(magnitude(stft(np.asarray(samples, dtype=np.float64), cfg)).data).T


def _block_mean(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Average-pool to at most ``shape`` cells so the SVG stays small."""
    out = img
    for axis, limit in enumerate(shape):
        n = out.shape[axis]
        if n > limit:
            edges = np.linspace(0, n, limit + 1).astype(int)
            out = np.add.reduceat(out, edges[:-1], axis=axis) / np.diff(edges).reshape([-1 if a == axis else 1 for a in range(2)])
    return out


def plot_spectrograms(a: np.ndarray, b: np.ndarray, path, labels=("a", "b"), note: str = "") -> None:
    """Side-by-side log-magnitude panels drawn as filled cells on a shared 64-level gray scale."""
    sa, sb = (_block_mean(log_spectrogram(s), MAX_CELLS) for s in (a, b))
    lo, hi = min(sa.min(), sb.min()), max(sa.max(), sb.max())
    with plt.rc_context(_SVG_RC):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3), sharey=True)
        for ax, img, label in zip(axes, (sa, sb), labels):
            mesh = ax.pcolormesh(img, cmap=GRAY64, vmin=lo, vmax=hi if hi > lo else lo + 1, shading="flat")
            mesh.set_gid(f"spectrogram-{label}")
            ax.set_title(label)
            ax.set_xlabel("frame cell")
        axes[0].set_ylabel("bin cell")
        if note:
            fig.suptitle(note)
        fig.tight_layout()
        _save(fig, path)


def svg_polyline(svg_path, name: str) -> np.ndarray:
    """Vertex ordinates of the ``curve-<name>`` path in SVG coordinates (y grows downward)."""
    import xml.etree.ElementTree as ET

    ns = {"svg": "http://www.w3.org/2000/svg"}
    root = ET.parse(os.fspath(svg_path)).getroot()
    for g in root.iter("{http://www.w3.org/2000/svg}g"):
        if g.get("id") == f"curve-{name}":
            p = g.find("svg:path", ns)
            tokens = p.get("d").replace("M", " ").replace("L", " ").split()
            coords = np.array([float(t) for t in tokens]).reshape(-1, 2)
            return coords[:, 1]
    raise KeyError(f"no curve named {name!r} in {svg_path}")
