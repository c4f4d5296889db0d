"""CSV data files and plain SVG renderings for the analysis outputs.

Layout under ``out_dir``::

    metrics/accuracy.csv            flight,accuracy (+ macro and micro rows)
    metrics/confusion_<flight>.csv  true\\pred matrix
    plots/confusion_<flight>.svg    heatmap
    plots/rgb_scatter.csv|svg       per-patch mean colour (three 2-D projections)
    plots/rgb_histograms.csv|svg    per-class 256-bin channel histograms
    tsne/<strategy>.csv             x,y,label
    plots/tsne_<strategy>.svg       scatter
"""
import csv
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from ..data import NUM_CLASSES, STAGE_LABELS, AttackStage

PALETTE = ("#2e8b3a", "#d4b21c", "#c0392b", "#7f7f7f")
CHANNEL_COLORS = ("#d62728", "#2ca02c", "#1f77b4")
CANVAS = 480


def _writer(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def _svg(width, height, body, title):
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n<rect width="100%" height="100%" fill="white"/>\n'
            f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-family="sans-serif" '
            f'font-size="14">{escape(title)}</text>\n' + "\n".join(body) + "\n</svg>\n")


def write_accuracy_csv(report, path):
    fh, w = _writer(path)
    with fh:
        w.writerow(["flight", "accuracy"])
        for flight, acc in report.per_flight.items():
            w.writerow([flight, f"{acc:.6f}"])
        w.writerow(["macro", f"{report.macro:.6f}"])
        w.writerow(["micro", f"{report.micro:.6f}"])


def write_confusion_csv(matrix, path):
    fh, w = _writer(path)
    with fh:
        w.writerow(["true\\pred"] + list(STAGE_LABELS))
        w.writerows(matrix.to_rows())


def svg_heatmap(matrix, title):
    counts = matrix.counts
    cell, x0, y0 = 80, 110, 60
    top = max(int(counts.max()), 1)
    body = []
    for t in range(NUM_CLASSES):
        body.append(f'<text x="{x0 - 8}" y="{y0 + t * cell + cell / 2 + 4:.1f}" text-anchor="end" '
                    f'font-family="sans-serif" font-size="12">{STAGE_LABELS[t]}</text>')
        body.append(f'<text x="{x0 + t * cell + cell / 2:.1f}" y="{y0 + NUM_CLASSES * cell + 18}" '
                    f'text-anchor="middle" font-family="sans-serif" font-size="12">{STAGE_LABELS[t]}</text>')
        for p in range(NUM_CLASSES):
            v = int(counts[t, p])
            shade = int(255 - 200 * v / top)
            body.append(f'<rect x="{x0 + p * cell}" y="{y0 + t * cell}" width="{cell}" height="{cell}" '
                        f'fill="rgb({shade},{shade},255)" stroke="#444"/>')
            body.append(f'<text x="{x0 + p * cell + cell / 2:.1f}" y="{y0 + t * cell + cell / 2 + 5:.1f}" '
                        f'text-anchor="middle" font-family="sans-serif" font-size="14">{v}</text>')
    return _svg(x0 + NUM_CLASSES * cell + 20, y0 + NUM_CLASSES * cell + 40, body, title)


def _scatter_panel(points, labels, x0, y0, size, xlabel="", ylabel=""):
    pts = np.asarray(points, dtype=np.float64)
    body = [f'<rect x="{x0}" y="{y0}" width="{size}" height="{size}" fill="none" stroke="#444"/>']
    if len(pts):
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        for (px, py), lab in zip((pts - lo) / span, labels):
            body.append(f'<circle cx="{x0 + 6 + px * (size - 12):.2f}" cy="{y0 + size - 6 - py * (size - 12):.2f}" '
                        f'r="2.5" fill="{PALETTE[int(lab)]}" fill-opacity="0.75"/>')
    if xlabel:
        body.append(f'<text x="{x0 + size / 2:.1f}" y="{y0 + size + 16}" text-anchor="middle" '
                    f'font-family="sans-serif" font-size="11">{escape(xlabel)}</text>')
    if ylabel:
        body.append(f'<text x="{x0 - 6}" y="{y0 + size / 2:.1f}" text-anchor="end" '
                    f'font-family="sans-serif" font-size="11">{escape(ylabel)}</text>')
    return body


def _legend(x0, y0):
    body = []
    for k, lab in enumerate(STAGE_LABELS):
        body.append(f'<circle cx="{x0}" cy="{y0 + 16 * k}" r="5" fill="{PALETTE[k]}"/>')
        body.append(f'<text x="{x0 + 10}" y="{y0 + 16 * k + 4}" font-family="sans-serif" font-size="11">{lab}</text>')
    return body


def svg_scatter(points, labels, title):
    body = _scatter_panel(points, labels, 40, 40, CANVAS - 120) + _legend(CANVAS - 70, 50)
    return _svg(CANVAS, CANVAS - 40, body, title)


def svg_rgb_scatter(colors, labels, title="Mean crown colour"):
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    body = []
    for k, (a, b, la, lb) in enumerate(((0, 1, "R", "G"), (1, 2, "G", "B"), (0, 2, "R", "B"))):
        body += _scatter_panel(colors[:, [a, b]], labels, 40 + k * 200, 40, 170, la, lb)
    body += _legend(640, 50)
    return _svg(720, 250, body, title)


def svg_histograms(hists, title="Per-class RGB histograms"):
    body = []
    panel_w, panel_h = 260, 120
    for k, (stage, hist) in enumerate(sorted(hists.items())):
        x0, y0 = 20 + (k % 2) * (panel_w + 30), 40 + (k // 2) * (panel_h + 40)
        body.append(f'<text x="{x0}" y="{y0 - 4}" font-family="sans-serif" font-size="12">'
                    f'{AttackStage(stage).label}</text>')
        body.append(f'<rect x="{x0}" y="{y0}" width="{panel_w}" height="{panel_h}" fill="none" stroke="#444"/>')
        top = max(int(hist.max()), 1)
        bw = panel_w / 256.0
        for c in range(3):
            for b in np.flatnonzero(hist[c]):
                hgt = panel_h * hist[c, b] / top
                body.append(f'<rect x="{x0 + b * bw:.2f}" y="{y0 + panel_h - hgt:.2f}" width="{bw:.2f}" '
                            f'height="{hgt:.2f}" fill="{CHANNEL_COLORS[c]}" fill-opacity="0.5"/>')
    return _svg(2 * panel_w + 60, 2 * (panel_h + 40) + 40, body, title)


def write_tsne_csv(embedding, path):
    fh, w = _writer(path)
    with fh:
        w.writerow(["x", "y", "label"])
        for (x, y), lab in zip(embedding.points, embedding.labels):
            w.writerow([f"{x:.6f}", f"{y:.6f}", STAGE_LABELS[int(lab)]])


def render_outputs(out_dir, report=None, matrices=None, histograms=None, embeddings=None, scatter=None):
    """Write every supplied artifact; returns the list of written paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc
    written = []

    def put(rel, text):
        p = out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text)
        written.append(p)

    if report is not None:
        write_accuracy_csv(report, out / "metrics" / "accuracy.csv")
        written.append(out / "metrics" / "accuracy.csv")
    for flight, m in (matrices or {}).items():
        write_confusion_csv(m, out / "metrics" / f"confusion_{flight}.csv")
        written.append(out / "metrics" / f"confusion_{flight}.csv")
        put(f"plots/confusion_{flight}.svg", svg_heatmap(m, f"Confusion matrix: {flight}"))
    if scatter is not None:
        colors = np.array([c for c, _ in scatter]).reshape(-1, 3)
        labels = [int(s) for _, s in scatter]
        fh, w = _writer(out / "plots" / "rgb_scatter.csv")
        with fh:
            w.writerow(["r", "g", "b", "label"])
            for c, lab in zip(colors, labels):
                w.writerow([f"{c[0]:.4f}", f"{c[1]:.4f}", f"{c[2]:.4f}", STAGE_LABELS[lab]])
        written.append(out / "plots" / "rgb_scatter.csv")
        put("plots/rgb_scatter.svg", svg_rgb_scatter(colors, labels))
    if histograms is not None:
        fh, w = _writer(out / "plots" / "rgb_histograms.csv")
        with fh:
            w.writerow(["label", "channel"] + [str(b) for b in range(256)])
            for stage, hist in sorted(histograms.items()):
                for c, ch in enumerate("RGB"):
                    w.writerow([AttackStage(stage).label, ch] + [int(v) for v in hist[c]])
        written.append(out / "plots" / "rgb_histograms.csv")
        put("plots/rgb_histograms.svg", svg_histograms(histograms))
    for name, emb in (embeddings or {}).items():
        write_tsne_csv(emb, out / "tsne" / f"{name}.csv")
        written.append(out / "tsne" / f"{name}.csv")
        put(f"plots/tsne_{name}.svg", svg_scatter(emb.points, emb.labels, f"t-SNE: {name}"))
    return written
