"""File emitters.

Numbers are written with ``repr(float)``, the shortest string that reads
back to the same double, so every CSV reloads bit-for-bit.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .render import PointCloud, SurfaceSample


def _f(v) -> str:
    return repr(float(v))


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False, default=_plain)
                    + "\n")


def write_matrix_csv(A: np.ndarray, path: Path) -> None:
    with open(path, "w") as fh:
        for row in np.asarray(A):
            fh.write(",".join(_f(v) if A.dtype.kind == "f" else str(int(v)) for v in row))
            fh.write("\n")


def write_surface_csv(sample: SurfaceSample, path: Path) -> None:
    """Header ``x,y,f``; y-major rows (x varies fastest)."""
    xs = [_f(v) for v in sample.xs]
    ys = [_f(v) for v in sample.ys]
    v = sample.values
    with open(path, "w") as fh:
        fh.write("x,y,f\n")
        for iy, y in enumerate(ys):
            col = v[:, iy]
            fh.write("".join(f"{x},{y},{_f(f)}\n" for x, f in zip(xs, col)))


def read_surface_csv(path: Path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    nx = int(np.count_nonzero(data[:, 1] == data[0, 1]))
    ny = data.shape[0] // nx
    return data[:, 2].reshape(ny, nx).T.copy()


def pgm_bytes(values: np.ndarray) -> tuple[bytes, dict]:
    """16-bit big-endian binary PGM; image row k is raster line y_k.

    Values are min-max scaled to 0..65535.  A constant raster has no scale and
    is written as mid-gray 32768.
    """
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    degenerate = hi == lo
    if degenerate:
        q = np.full(v.shape, 32768, dtype=">u2")
    else:
        q = np.rint((v - lo) / (hi - lo) * 65535).astype(">u2")
    width, height = v.shape
    header = f"P5\n{width} {height}\n65535\n".encode("ascii")
    meta = {"width": width, "height": height, "maxval": 65535, "min": lo, "max": hi,
            "degenerate": degenerate, "row_order": "row k = y index k (y increasing)",
            "scale": "pixel = round((f - min) / (max - min) * 65535); 32768 if max == min"}
    return header + q.T.tobytes(), meta


def write_pgm(sample: SurfaceSample, path: Path) -> None:
    data, meta = pgm_bytes(sample.values)
    path.write_bytes(data)
    write_json(meta, path.with_suffix(path.suffix + ".json"))


def read_pgm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    width, height = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=">u2").reshape(height, width).T


def write_obj_raster(sample: SurfaceSample, path: Path) -> None:
    xs, ys, v = sample.xs, sample.ys, sample.values
    nx, ny = v.shape
    with open(path, "w") as fh:
        fh.write(f"# raster {nx}x{ny} depth {sample.depth}\n")
        for iy in range(ny):
            y = _f(ys[iy])
            fh.write("".join(f"v {_f(xs[ix])} {y} {_f(v[ix, iy])}\n" for ix in range(nx)))
        for iy in range(ny - 1):
            base = iy * nx + 1
            fh.write("".join(f"f {base + ix} {base + ix + 1} {base + nx + ix + 1} {base + nx + ix}\n"
                             for ix in range(nx - 1)))


def write_obj_cloud(cloud: PointCloud, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# chaos game seed {cloud.seed} burn_in {cloud.burn_in} chains {cloud.chains}\n")
        fh.write("".join(f"v {_f(x)} {_f(y)} {_f(z)}\n" for x, y, z in cloud.points))


def write_cloud_csv(cloud: PointCloud, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("x,y,z\n")
        fh.write("".join(f"{_f(x)},{_f(y)},{_f(z)}\n" for x, y, z in cloud.points))


def write_counts_csv(counts, path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("r,epsilon,count\n")
        for c in counts:
            fh.write(f"{c.r},{_f(c.epsilon)},{c.count}\n")


def loglog_svg(counts, slope: float, intercept: float, a: int, title: str = "") -> str:
    """log N'(eps) against log(1/eps) with the fitted line."""
    X = [c.r * math.log(a) for c in counts]
    Y = [math.log(c.count) for c in counts]
    W, H, pad = 480, 360, 50
    x0, x1 = min(X), max(X)
    y0, y1 = min(Y), max(Y)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1

    def px(x):
        return pad + (x - x0) / (x1 - x0) * (W - 2 * pad)

    def py(y):
        return H - pad - (y - y0) / (y1 - y0) * (H - 2 * pad)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<line x1="{pad}" y1="{H - pad}" x2="{W - pad}" y2="{H - pad}" stroke="black"/>',
           f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{H - pad}" stroke="black"/>',
           f'<text x="{W / 2:.1f}" y="{H - 12}" text-anchor="middle" font-size="13">'
           f'log(1/eps)</text>',
           f'<text x="14" y="{H / 2:.1f}" text-anchor="middle" font-size="13" '
           f'transform="rotate(-90 14 {H / 2:.1f})">log N\'(eps)</text>']
    for x, y in zip(X, Y):
        out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="4" fill="steelblue"/>')
    out.append(f'<line x1="{px(x0):.2f}" y1="{py(slope * x0 + intercept):.2f}" '
               f'x2="{px(x1):.2f}" y2="{py(slope * x1 + intercept):.2f}" '
               f'stroke="crimson" stroke-width="1.5"/>')
    out.append(f'<text x="{pad + 10}" y="{pad + 16}" font-size="13">slope = {slope:.4f}</text>')
    if title:
        out.append(f'<text x="{W / 2:.1f}" y="24" text-anchor="middle" font-size="14">'
                   f'{title}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
