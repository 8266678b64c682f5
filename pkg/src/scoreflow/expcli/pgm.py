"""8-bit PGM masks (plain ``P2`` and binary ``P5``)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._io import atomic_write_bytes

WHITESPACE = b" \t\r\n\v\f"


class PgmError(ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class GrayscaleMask:
    pixels: np.ndarray  # (height, width) uint8, row 0 at the top

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 2 or p.size == 0:
            raise ValueError(f"mask must be a nonempty 2-D array, got shape {p.shape}")
        if p.dtype != np.uint8:
            if np.any((p < 0) | (p > 255)) or np.any(p != np.round(p)):
                raise ValueError("pixel values must be integers in [0, 255]")
            p = p.astype(np.uint8)
        object.__setattr__(self, "pixels", p)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def skip_space(self):
        d = self.data
        while self.pos < len(d):
            c = d[self.pos:self.pos + 1]
            if c == b"#":
                end = d.find(b"\n", self.pos)
                self.pos = len(d) if end < 0 else end + 1
            elif c in WHITESPACE:
                self.pos += 1
            else:
                break

    def token(self, what):
        self.skip_space()
        start = self.pos
        d = self.data
        while self.pos < len(d) and d[self.pos:self.pos + 1] not in WHITESPACE and d[self.pos:self.pos + 1] != b"#":
            self.pos += 1
        if self.pos == start:
            raise PgmError(f"unexpected end of file while reading {what}", start)
        return d[start:self.pos], start

    def integer(self, what):
        tok, at = self.token(what)
        if not tok.isdigit():
            raise PgmError(f"expected an unsigned integer for {what}, got {tok[:16]!r}", at)
        return int(tok), at


def pgm_parse(data):
    """Parse PGM bytes into a :class:`GrayscaleMask`."""
    rd = _Reader(bytes(data))
    magic, at = rd.token("magic number")
    if magic not in (b"P2", b"P5"):
        raise PgmError(f"unsupported magic {magic[:8]!r}; expected P2 or P5", at)
    width, at = rd.integer("width")
    if width < 1:
        raise PgmError("width must be positive", at)
    height, at = rd.integer("height")
    if height < 1:
        raise PgmError("height must be positive", at)
    maxval, at = rd.integer("maxval")
    if maxval != 255:
        raise PgmError(f"maxval must be 255, got {maxval}", at)
    count = width * height
    if magic == b"P5":
        if rd.pos >= len(rd.data) or rd.data[rd.pos:rd.pos + 1] not in WHITESPACE:
            raise PgmError("expected one whitespace byte after maxval", rd.pos)
        start = rd.pos + 1
        body = rd.data[start:start + count]
        if len(body) < count:
            raise PgmError(f"truncated raster: need {count} bytes, found {len(body)}", start + len(body))
        pixels = np.frombuffer(body, dtype=np.uint8).reshape(height, width).copy()
    else:
        vals = np.empty(count, dtype=np.uint8)
        for i in range(count):
            rd.skip_space()
            if rd.pos >= len(rd.data):
                raise PgmError(f"truncated raster: found {i} of {count} samples", rd.pos)
            v, at = rd.integer(f"sample {i}")
            if v > 255:
                raise PgmError(f"sample {v} exceeds maxval 255", at)
            vals[i] = v
        pixels = vals.reshape(height, width)
    return GrayscaleMask(pixels)


def pgm_load(path):
    with open(path, "rb") as fh:
        return pgm_parse(fh.read())


def pgm_dumps(mask, binary=True):
    head = f"{'P5' if binary else 'P2'}\n{mask.width} {mask.height}\n255\n".encode()
    if binary:
        return head + mask.pixels.tobytes()
    rows = (" ".join(str(int(v)) for v in row) for row in mask.pixels)
    return head + ("\n".join(rows) + "\n").encode()


def pgm_save(path, mask, binary=True):
    atomic_write_bytes(path, pgm_dumps(mask, binary))
