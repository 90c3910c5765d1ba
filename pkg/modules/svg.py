"""
MÓDULO: SVG
Responsabilidad: Gráfico estático de la curva dosis-respuesta (mediana del posterior
y banda 2.5%–97.5%) armado con elementos SVG primitivos. Salida determinista.
"""
import xml.etree.ElementTree as ET

import numpy as np

ANCHO = 640
ALTO = 400
MARGEN = 60
TICKS_Y = 5
SVG_NS = "http://www.w3.org/2000/svg"


def _fmt(v):
    return f"{v:.2f}"


def _scale(lo, hi, a, b):
    if hi <= lo:
        mid = (a + b) / 2.0
        return lambda v: np.full_like(np.asarray(v, dtype=float), mid)
    return lambda v: a + (np.asarray(v, dtype=float) - lo) * (b - a) / (hi - lo)


def _points(xs, ys):
    return " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys))


def render_svg(summary, title="Curva dosis-respuesta"):
    """`summary` con columnas dose, median, q025, q975 (p. ej. la salida de summarize)."""
    dose = summary["dose"].to_numpy(dtype=float)
    median = summary["median"].to_numpy(dtype=float)
    lo_band = summary["q025"].to_numpy(dtype=float)
    hi_band = summary["q975"].to_numpy(dtype=float)

    y_lo, y_hi = float(lo_band.min()), float(hi_band.max())
    if y_hi <= y_lo:
        y_lo, y_hi = y_lo - 1.0, y_hi + 1.0
    sx = _scale(dose.min(), dose.max(), MARGEN, ANCHO - MARGEN)
    sy = _scale(y_lo, y_hi, ALTO - MARGEN, MARGEN)

    root = ET.Element("svg", {
        "xmlns": SVG_NS, "version": "1.1",
        "width": str(ANCHO), "height": str(ALTO), "viewBox": f"0 0 {ANCHO} {ALTO}",
    })
    ET.SubElement(root, "title").text = title
    ET.SubElement(root, "rect", {"x": "0", "y": "0", "width": str(ANCHO), "height": str(ALTO), "fill": "white"})

    # Ejes
    axes = ET.SubElement(root, "g", {"stroke": "black", "stroke-width": "1"})
    ET.SubElement(axes, "line", {"x1": str(MARGEN), "y1": str(ALTO - MARGEN), "x2": str(ANCHO - MARGEN), "y2": str(ALTO - MARGEN)})
    ET.SubElement(axes, "line", {"x1": str(MARGEN), "y1": str(MARGEN), "x2": str(MARGEN), "y2": str(ALTO - MARGEN)})

    labels = ET.SubElement(root, "g", {"font-family": "sans-serif", "font-size": "11", "fill": "black"})
    for d, x in zip(dose, sx(dose)):
        ET.SubElement(labels, "text", {"x": _fmt(x), "y": str(ALTO - MARGEN + 16), "text-anchor": "middle"}).text = f"{d:.3g}"
    for v in np.linspace(y_lo, y_hi, TICKS_Y):
        ET.SubElement(labels, "text", {"x": str(MARGEN - 6), "y": _fmt(float(sy(v))), "text-anchor": "end"}).text = f"{v:.3g}"
    ET.SubElement(labels, "text", {"x": str(ANCHO // 2), "y": str(ALTO - 15), "text-anchor": "middle"}).text = "dosis"
    ET.SubElement(labels, "text", {"x": str(ANCHO // 2), "y": "25", "text-anchor": "middle"}).text = title

    # Banda q2.5–q97.5: borde superior ascendente y borde inferior descendente
    band = _points(np.r_[sx(dose), sx(dose)[::-1]], np.r_[sy(hi_band), sy(lo_band)[::-1]])
    ET.SubElement(root, "polygon", {"points": band, "fill": "#9ecae1", "fill-opacity": "0.5", "stroke": "none"})
    ET.SubElement(root, "polyline", {
        "points": _points(sx(dose), sy(median)), "fill": "none", "stroke": "#08519c", "stroke-width": "2",
    })
    for x, y in zip(sx(dose), sy(median)):
        ET.SubElement(root, "circle", {"cx": _fmt(x), "cy": _fmt(y), "r": "3", "fill": "#08519c"})

    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def write_svg(summary, path, title="Curva dosis-respuesta"):
    with open(path, "w", encoding="utf-8") as f:
        f.write(render_svg(summary, title))
