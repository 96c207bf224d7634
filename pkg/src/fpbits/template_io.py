"""Minutia template and gray image I/O.

Three on-disk forms are supported:

* a native line-oriented text format (``FPT`` header, one minutia per line),
* the single-finger ISO/IEC 19794-2:2005 binary minutia record subset
  (6-byte minutia encoding, zero-length extended data),
* binary 8-bit PGM (``P5``) images.

Parsers validate every field and raise typed errors from :mod:`fpbits.errors`;
they never raise bare exceptions on malformed input.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import (
    AngleUnparseable,
    BadMagic,
    DimensionMismatch,
    FieldOutOfRange,
    MalformedHeader,
    TruncatedRecord,
    UnsupportedVersion,
)

TWO_PI = 2.0 * math.pi

TEXT_MAGIC = "FPT"
TEXT_VERSION = 1

ISO_MAGIC = b"FMR\x00"
ISO_VERSION = b" 20\x00"
ISO_HEADER_LEN = 24
ISO_VIEW_HEADER_LEN = 4
ISO_MINUTIA_LEN = 6
ISO_DEFAULT_RESOLUTION = 197  # pixels per cm, the common 500 dpi sensor

_KIND_CODES = {"T": 1, "B": 2, "O": 0}


class MinutiaKind(enum.Enum):
    """Minutia point type."""

    TERMINATION = "T"
    BIFURCATION = "B"
    OTHER = "O"


_ISO_TYPE_TO_KIND = {
    1: MinutiaKind.TERMINATION,
    2: MinutiaKind.BIFURCATION,
}
_KIND_TO_ISO_TYPE = {
    MinutiaKind.TERMINATION: 1,
    MinutiaKind.BIFURCATION: 2,
    MinutiaKind.OTHER: 0,
}


def wrap_angle(theta: float) -> float:
    """Map an angle in radians onto [0, 2*pi)."""
    theta = math.fmod(theta, TWO_PI)
    if theta < 0.0:
        theta += TWO_PI
    # fmod can round back up to the period itself for tiny negatives
    if theta >= TWO_PI:
        theta = 0.0
    return theta


@dataclass(frozen=True)
class Minutia:
    """One minutia point: position in pixels, direction in radians.

    ``theta`` is stored normalized to [0, 2*pi). ``quality`` is an integer
    confidence in [0, 100]; it is carried through parsing and serialization
    but ignored by every downstream stage.
    """

    x: float
    y: float
    theta: float
    kind: MinutiaKind = MinutiaKind.OTHER
    quality: int = 0

    def __post_init__(self):
        if not (0.0 <= self.theta < TWO_PI):
            object.__setattr__(self, "theta", wrap_angle(self.theta))
        if not (0 <= self.quality <= 100):
            raise FieldOutOfRange(f"quality {self.quality} outside [0, 100]")


@dataclass
class MinutiaTemplate:
    """An ordered list of minutiae plus the capture geometry they live in."""

    minutiae: List[Minutia]
    width: int
    height: int
    subject_id: str = ""
    impression_id: str = ""
    resolution: Optional[int] = None  # pixels per cm, when the source had one

    def __post_init__(self):
        for m in self.minutiae:
            _check_bounds(m.x, m.y, self.width, self.height)

    def __len__(self) -> int:
        return len(self.minutiae)


@dataclass
class GrayImage:
    """8-bit grayscale raster, pixels row-major with pixel[0] at top-left."""

    pixels: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 2:
            raise DimensionMismatch(
                f"expected a 2-d pixel array, got shape {self.pixels.shape}"
            )

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def _check_bounds(x: float, y: float, width: int, height: int, line: int | None = None):
    if not (math.isfinite(x) and math.isfinite(y)):
        raise FieldOutOfRange(f"non-finite position ({x}, {y})", line)
    if not (0.0 <= x < width) or not (0.0 <= y < height):
        raise FieldOutOfRange(
            f"position ({x}, {y}) outside image bounds {width}x{height}", line
        )


# ---------------------------------------------------------------------------
# native text format
# ---------------------------------------------------------------------------

def parse_text_template(
    text: str, subject_id: str = "", impression_id: str = ""
) -> MinutiaTemplate:
    """Parse the native text template format.

    Layout::

        FPT 1 <width> <height>
        # comment lines and blank lines are skipped
        <x> <y> <theta> <kind> <quality>

    ``kind`` is one of T (termination), B (bifurcation), O (other).
    ``theta`` is radians, any finite real; it is normalized onto [0, 2*pi).

    Subject and impression identity are not part of the format; callers carry
    them in the filename and may pass them through here.

    Raises:
        MalformedHeader: first line is not a valid ``FPT`` header.
        FieldOutOfRange: a coordinate or quality violates its range.
        AngleUnparseable: a direction field is not a finite number.
    """
    lines = text.splitlines()
    if not lines:
        raise MalformedHeader("empty input")

    head = lines[0].split()
    if len(head) != 4 or head[0] != TEXT_MAGIC:
        raise MalformedHeader(f"bad header line: {lines[0]!r}")
    try:
        version, width, height = int(head[1]), int(head[2]), int(head[3])
    except ValueError:
        raise MalformedHeader(f"non-integer header fields: {lines[0]!r}") from None
    if version != TEXT_VERSION:
        raise MalformedHeader(f"unknown text template version {version}")
    if width < 0 or height < 0:
        raise MalformedHeader(f"negative image bounds {width}x{height}")

    minutiae: List[Minutia] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 5:
            raise FieldOutOfRange(
                f"expected 5 fields, got {len(parts)}: {stripped!r}", lineno
            )
        sx, sy, stheta, skind, squal = parts
        try:
            x, y = float(sx), float(sy)
        except ValueError:
            raise FieldOutOfRange(f"unparseable position {sx!r} {sy!r}", lineno) from None
        _check_bounds(x, y, width, height, lineno)
        try:
            theta = float(stheta)
        except ValueError:
            raise AngleUnparseable(f"unparseable direction {stheta!r}", lineno) from None
        if not math.isfinite(theta):
            raise AngleUnparseable(f"non-finite direction {stheta!r}", lineno)
        try:
            kind = MinutiaKind(skind)
        except ValueError:
            raise FieldOutOfRange(f"unknown minutia kind {skind!r}", lineno) from None
        try:
            quality = int(squal)
        except ValueError:
            raise FieldOutOfRange(f"unparseable quality {squal!r}", lineno) from None
        if not (0 <= quality <= 100):
            raise FieldOutOfRange(f"quality {quality} outside [0, 100]", lineno)
        minutiae.append(Minutia(x, y, wrap_angle(theta), kind, quality))

    return MinutiaTemplate(
        minutiae, width, height, subject_id=subject_id, impression_id=impression_id
    )


def serialize_text_template(template: MinutiaTemplate) -> str:
    """Render a template in the native text format.

    Positions and directions are written with ``repr`` precision, so
    ``parse_text_template(serialize_text_template(t))`` reproduces every
    geometric field exactly. Subject/impression ids and resolution are not
    part of the format and are not written.
    """
    out = [f"{TEXT_MAGIC} {TEXT_VERSION} {template.width} {template.height}"]
    for m in template.minutiae:
        out.append(f"{m.x!r} {m.y!r} {m.theta!r} {m.kind.value} {m.quality}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# ISO/IEC 19794-2:2005 binary records
# ---------------------------------------------------------------------------

def parse_iso19794_2(data: bytes, subject_id: str = "") -> List[MinutiaTemplate]:
    """Parse a 2005-edition binary finger minutiae record.

    Returns one template per finger view. Only the plain subset is
    interpreted: 6-byte minutia encoding and (normally) zero-length extended
    data blocks; a nonzero extended block is skipped, never interpreted.
    The parser never reads past the record's declared length.

    The 8-bit angle field maps onto radians as ``angle_byte * (2*pi / 256)``.

    Raises:
        BadMagic: record does not start with ``FMR\\x00``.
        UnsupportedVersion: version field is not the 2005 ``" 20\\x00"``.
        TruncatedRecord: declared or actual length cuts a structure short.
        FieldOutOfRange: a minutia position lies outside the declared size.
    """
    if len(data) < 4:
        raise BadMagic("record shorter than the 4-byte magic")
    if data[:4] != ISO_MAGIC:
        raise BadMagic(f"bad magic {data[:4]!r}")
    if len(data) < ISO_HEADER_LEN:
        raise TruncatedRecord(f"header needs {ISO_HEADER_LEN} bytes, got {len(data)}")
    if data[4:8] != ISO_VERSION:
        raise UnsupportedVersion(f"unsupported version field {data[4:8]!r}")

    declared = int.from_bytes(data[8:12], "big")
    if declared > len(data):
        raise TruncatedRecord(
            f"declared length {declared} exceeds the {len(data)} bytes supplied"
        )
    buf = data[:declared]
    if len(buf) < ISO_HEADER_LEN:
        raise TruncatedRecord(f"declared length {declared} cuts the fixed header")

    width = int.from_bytes(buf[14:16], "big")
    height = int.from_bytes(buf[16:18], "big")
    res_x = int.from_bytes(buf[18:20], "big")
    view_count = buf[22]

    templates: List[MinutiaTemplate] = []
    pos = ISO_HEADER_LEN
    for view in range(view_count):
        if pos + ISO_VIEW_HEADER_LEN > len(buf):
            raise TruncatedRecord(f"view {view} header truncated at byte {pos}")
        view_number = buf[pos + 1] >> 4
        count = buf[pos + 3]
        pos += ISO_VIEW_HEADER_LEN

        minutiae: List[Minutia] = []
        for i in range(count):
            if pos + ISO_MINUTIA_LEN > len(buf):
                raise TruncatedRecord(f"minutia {i} of view {view} truncated")
            rec = buf[pos : pos + ISO_MINUTIA_LEN]
            pos += ISO_MINUTIA_LEN
            mtype = (rec[0] >> 6) & 0x3
            x = ((rec[0] & 0x3F) << 8) | rec[1]
            y = ((rec[2] & 0x3F) << 8) | rec[3]
            theta = rec[4] * (TWO_PI / 256.0)
            quality = rec[5]
            if quality > 100:
                raise FieldOutOfRange(f"minutia quality {quality} outside [0, 100]")
            _check_bounds(float(x), float(y), width, height)
            kind = _ISO_TYPE_TO_KIND.get(mtype, MinutiaKind.OTHER)
            minutiae.append(Minutia(float(x), float(y), theta, kind, quality))

        if pos + 2 > len(buf):
            raise TruncatedRecord(f"extended data length of view {view} truncated")
        ext_len = int.from_bytes(buf[pos : pos + 2], "big")
        pos += 2
        if pos + ext_len > len(buf):
            raise TruncatedRecord(f"extended data of view {view} truncated")
        pos += ext_len  # skipped, not interpreted

        templates.append(
            MinutiaTemplate(
                minutiae,
                width,
                height,
                subject_id=subject_id,
                impression_id=str(view_number),
                resolution=res_x or None,
            )
        )
    return templates


def serialize_iso19794_2(template: MinutiaTemplate) -> bytes:
    """Encode one template as a single-view 2005 binary record.

    Positions are rounded to integers (they must fit the 14-bit position
    fields), directions quantized onto the 8-bit angle scale, and the
    extended data block is written with length zero. Re-parsing recovers
    positions exactly and directions within one angle quantum (2*pi / 256).
    """
    if not (0 <= template.width < 1 << 16 and 0 <= template.height < 1 << 16):
        raise FieldOutOfRange(
            f"image size {template.width}x{template.height} too large for 16-bit fields"
        )
    body = bytearray()
    for m in template.minutiae:
        x, y = round(m.x), round(m.y)
        if not (0 <= x < 1 << 14 and 0 <= y < 1 << 14):
            raise FieldOutOfRange(f"position ({x}, {y}) exceeds 14-bit fields")
        angle_byte = round(m.theta / (TWO_PI / 256.0)) % 256
        mtype = _KIND_TO_ISO_TYPE[m.kind]
        body += bytes(
            [
                (mtype << 6) | (x >> 8),
                x & 0xFF,
                (y >> 8) & 0x3F,
                y & 0xFF,
                angle_byte,
                min(m.quality, 100),
            ]
        )

    total = ISO_HEADER_LEN + ISO_VIEW_HEADER_LEN + len(body) + 2
    resolution = template.resolution or ISO_DEFAULT_RESOLUTION
    head = bytearray()
    head += ISO_MAGIC
    head += ISO_VERSION
    head += total.to_bytes(4, "big")
    head += (0).to_bytes(2, "big")  # capture equipment: unreported
    head += template.width.to_bytes(2, "big")
    head += template.height.to_bytes(2, "big")
    head += resolution.to_bytes(2, "big")
    head += resolution.to_bytes(2, "big")
    head += bytes([1, 0])  # one finger view, reserved byte

    n = len(template.minutiae)
    if n > 255:
        raise FieldOutOfRange(f"{n} minutiae exceed the 8-bit view count")
    view = bytes([0, 0, 0, n])  # unknown finger position, view 0, quality 0

    return bytes(head) + view + bytes(body) + (0).to_bytes(2, "big")


# ---------------------------------------------------------------------------
# PGM images
# ---------------------------------------------------------------------------

def read_pgm(data: bytes) -> GrayImage:
    """Read a binary (P5) PGM image with maxval at most 255.

    Raises:
        BadMagic: not a P5 file.
        MalformedHeader: header tokens missing, non-numeric, or maxval > 255.
        DimensionMismatch: pixel payload shorter than width * height.
    """
    if len(data) < 2 or data[:2] != b"P5":
        raise BadMagic("not a binary PGM (P5) image")

    # header = 4 whitespace-separated tokens, '#' comments run to end of line
    pos = 2
    tokens: List[int] = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedHeader("PGM header ended before width/height/maxval")
        tok = data[start:pos]
        if not tok.isdigit():
            raise MalformedHeader(f"non-numeric PGM header token {tok!r}")
        tokens.append(int(tok))
    if pos >= len(data):
        raise MalformedHeader("PGM header ended before pixel data")
    pos += 1  # exactly one whitespace byte separates maxval from pixels

    width, height, maxval = tokens
    if width <= 0 or height <= 0:
        raise MalformedHeader(f"bad PGM dimensions {width}x{height}")
    if not (0 < maxval <= 255):
        raise MalformedHeader(f"unsupported PGM maxval {maxval}")

    need = width * height
    raw = data[pos : pos + need]
    if len(raw) < need:
        raise DimensionMismatch(
            f"PGM payload holds {len(raw)} bytes, header declares {need}"
        )
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width)
    return GrayImage(pixels.copy())


def write_pgm(image: GrayImage) -> bytes:
    """Encode an 8-bit image as binary PGM."""
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.pixels.tobytes()
