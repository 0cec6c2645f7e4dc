"""Binary PGM (P5) images and the layered text weight-snapshot format."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def write_pgm(path, image) -> None:
    """Write a grayscale image (values 0..255) as binary PGM."""
    arr = np.asarray(image, dtype=float)
    if arr.ndim != 2:
        raise ConfigError("PGM image must be 2-D")
    data = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (data.shape[1], data.shape[0]))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM into a float array of shape (height, width)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(b"P5"):
        raise ConfigError(f"{path}: not a binary PGM (P5) file")
    # Header: magic, width, height, maxval; '#' comments allowed between tokens.
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    width, height, maxval = (int(t) for t in tokens)
    if maxval != 255:
        raise ConfigError(f"{path}: unsupported maxval {maxval}")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
    return pixels.reshape(height, width).astype(float)


def write_weight_snapshot(path, matrices) -> None:
    """Dump weight matrices as text, one `layer <l> rows <r> cols <c>` header
    per layer followed by row-major values (one matrix row per line)."""
    with open(path, "w") as fh:
        for l, w in enumerate(matrices, start=1):
            w = np.asarray(w, dtype=float)
            fh.write(f"layer {l} rows {w.shape[0]} cols {w.shape[1]}\n")
            for row in w:
                fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def read_weight_snapshot(path) -> list[np.ndarray]:
    """Read back a snapshot written by :func:`write_weight_snapshot`."""
    matrices = []
    with open(path) as fh:
        lines = fh.read().splitlines()
    pos = 0
    while pos < len(lines):
        header = lines[pos].split()
        if len(header) != 6 or header[0] != "layer":
            raise ConfigError(f"{path}: bad snapshot header at line {pos + 1}")
        rows, cols = int(header[3]), int(header[5])
        block = lines[pos + 1 : pos + 1 + rows]
        if len(block) != rows:
            raise ConfigError(f"{path}: truncated snapshot at line {pos + 1}")
        w = np.array([[float(v) for v in line.split()] for line in block])
        if w.shape != (rows, cols):
            raise ConfigError(f"{path}: matrix shape mismatch at line {pos + 1}")
        matrices.append(w)
        pos += 1 + rows
    return matrices
