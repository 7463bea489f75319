"""Optional static SVG plots. matplotlib is imported lazily."""


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - optional dependency
        raise RuntimeError("plotting needs matplotlib (pip install featstab[plot])") from exc
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "featstab"
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})


def line_plot(path, series, xlabel, ylabel, title="", xscale="linear", vlines=None):
    """``series`` maps a label to ``(x, y)``."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (x, y) in series.items():
        ax.plot(x, y, marker="o", markersize=3, label=label)
    ax.set_xscale(xscale)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)


def histogram_plot(path, counts, edges, mean=None, title=""):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.stairs(counts, edges, fill=True, alpha=0.6)
    if mean is not None:
        ax.axvline(mean, color="red")
    ax.set_xlabel("Sharpe ratio")
    ax.set_ylabel("models")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
    plt.close(fig)
