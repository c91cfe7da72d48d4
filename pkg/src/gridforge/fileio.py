"""CSV and binary PGM/PPM readers and writers.

Floats are written with ``repr`` so a CSV round trip is bit exact.  Image
values map linearly [0, 1] <-> [0, 255] with round-half-up.
"""

import csv
import io
from pathlib import Path

import numpy as np

from .encode import MultiSeries
from .errors import DataError, ShapeError
from .tensor import Tensor


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_columns(path):
    """Read a comma separated file of numeric columns.

    Returns ``(names, values)`` with ``values`` shaped ``(n_columns, n_rows)``.
    A first row that does not parse as numbers is taken as the header.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DataError(f"{path}: empty file")
    names = None
    if not all(_is_number(c) for c in rows[0]):
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    try:
        values = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if values.ndim != 2:
        raise DataError(f"{path}: ragged rows")
    if names is None:
        names = [f"x{i + 1}" for i in range(values.shape[1])]
    return names, values.T


def write_columns(path, names, columns):
    columns = np.atleast_2d(np.asarray(columns, dtype=np.float64))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in columns.T:
            w.writerow([repr(float(v)) for v in row])


def read_multiseries(path):
    names, values = read_columns(path)
    return MultiSeries(values, names)


def write_multiseries(path, ms):
    write_columns(path, ms.names, ms.values)


def read_pointcloud(path):
    names, values = read_columns(path)
    if values.shape[0] != 2:
        raise DataError(f"{path}: expected two columns (fsc, ssc)")
    return values.T.copy()


def write_pointcloud(path, points):
    write_columns(path, ["fsc", "ssc"], np.asarray(points, dtype=np.float64).reshape(-1, 2).T)


# -- netpbm ------------------------------------------------------------------

def to_bytes(a):
    a = np.asarray(a, dtype=np.float64)
    if np.any(a < 0) or np.any(a > 1):
        raise DataError("image values must lie in [0, 1]")
    return np.floor(a * 255.0 + 0.5).astype(np.uint8)


def pnm_bytes(img):
    """Encode a [0, 1] tensor as binary grayscale (P5) or RGB (P6) netpbm."""
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim == 2:
        magic = b"P5"
    elif a.ndim == 3 and a.shape[2] == 3:
        magic = b"P6"
    else:
        raise ShapeError(f"cannot write image of shape {a.shape}")
    rows, cols = a.shape[:2]
    return b"%s\n%d %d\n255\n" % (magic, cols, rows) + to_bytes(a).tobytes()


def write_pnm(path, img):
    Path(path).write_bytes(pnm_bytes(img))


def _tokens(buf, count, pos):
    out = []
    while len(out) < count:
        while buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while buf[pos:pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        out.append(buf[start:pos])
    return out, pos + 1


def read_pnm(path):
    """Read a P5/P6 file into a rows x cols x (1|3) tensor scaled to [0, 1]."""
    buf = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _tokens(buf, 4, 0)
    if magic not in (b"P5", b"P6"):
        raise DataError(f"{path}: unsupported format {magic!r}")
    if int(maxval) != 255:
        raise DataError(f"{path}: only maxval 255 supported")
    ch = 1 if magic == b"P5" else 3
    w, h = int(w), int(h)
    data = np.frombuffer(buf, dtype=np.uint8, count=w * h * ch, offset=pos)
    return Tensor(data.reshape(h, w, ch) / 255.0)


def csv_text(header, rows):
    """Render rows as CSV text (used for reports held in memory)."""
    sio = io.StringIO()
    w = csv.writer(sio, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return sio.getvalue()
