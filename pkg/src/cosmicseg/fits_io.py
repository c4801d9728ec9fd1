"""Reading and writing a small, strict subset of FITS, plus binary PGM export.

Only the primary HDU of a file is decoded. Pixel data are converted to
physical values (``BZERO + BSCALE * stored``), blank pixels are zeroed, and
the result is min-max normalized to [0, 1] so every downstream stage works on
the same intensity scale.

Images are plain 2-D ``float64`` arrays of shape ``(height, width)``; row 0
is the first row stored in the file (``NAXIS1`` is the fast axis).
"""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import (
    DimensionMismatch,
    MissingSimple,
    NonImageHdu,
    PgmFormatError,
    TruncatedData,
    UnsupportedBitpix,
)

BLOCK = 2880
CARD = 80

_DTYPES = {8: ">u1", 16: ">i2", 32: ">i4", -32: ">f4", -64: ">f8"}

# Stored-integer ranges used on write; the unsigned convention (BZERO offset)
# lets the full [0, 1] range use every code of the signed types.
_INT_CODES = {
    8: (255, 0),
    16: (65535, 32768),
    32: (4294967295, 2147483648),
}

_STRUCTURAL = ("SIMPLE", "BITPIX", "NAXIS", "NAXIS1", "NAXIS2", "BSCALE", "BZERO", "BLANK")


@dataclass
class Card:
    """One 80-column header record.

    ``image`` keeps the card text exactly as read so untouched records are
    written back byte for byte.
    """

    keyword: str
    value: Any = None
    comment: str = ""
    image: str | None = field(default=None, repr=False, compare=False)

    def format(self) -> str:
        if self.image is not None:
            return self.image
        return format_card(self.keyword, self.value, self.comment)


@dataclass
class FitsHeader:
    records: list[Card]
    bitpix: int
    naxis: int
    axis_lengths: list[int]
    bscale: float = 1.0
    bzero: float = 0.0
    blank: int | None = None
    # number of BLANK / NaN pixels replaced by 0.0 during the last decode
    blank_count: int = 0

    @classmethod
    def for_image(cls, width: int, height: int, bitpix: int = -32, extra=()) -> "FitsHeader":
        """Minimal conforming header for a ``width`` x ``height`` image."""
        if bitpix not in _DTYPES:
            raise UnsupportedBitpix(f"BITPIX={bitpix} is not one of {sorted(_DTYPES)}")
        records = [
            Card("SIMPLE", True, "conforms to FITS standard"),
            Card("BITPIX", bitpix, "array data type"),
            Card("NAXIS", 2, "number of array dimensions"),
            Card("NAXIS1", int(width)),
            Card("NAXIS2", int(height)),
        ]
        records.extend(Card(k, v, c) for k, v, c in extra)
        return cls(records, bitpix, 2, [int(width), int(height)])

    def __getitem__(self, keyword: str):
        for card in self.records:
            if card.keyword == keyword:
                return card.value
        raise KeyError(keyword)

    def get(self, keyword: str, default=None):
        try:
            return self[keyword]
        except KeyError:
            return default

    def __contains__(self, keyword: str) -> bool:
        return any(card.keyword == keyword for card in self.records)

    @property
    def shape(self) -> tuple[int, ...]:
        """Array shape in numpy (slowest-first) order."""
        return tuple(reversed(self.axis_lengths))


# -- header cards -----------------------------------------------------------

def _format_value(value) -> str:
    if isinstance(value, bool):
        return f"{'T' if value else 'F':>20}"
    if isinstance(value, (int, np.integer)):
        return f"{int(value):>20d}"
    if isinstance(value, (float, np.floating)):
        text = repr(float(value)).upper()
        if "." not in text and "E" not in text:
            text += ".0"
        return f"{text:>20}"
    if isinstance(value, str):
        escaped = value.replace("'", "''")
        return f"'{escaped:<8}'"
    raise TypeError(f"cannot encode {type(value).__name__} as a FITS value")


def format_card(keyword: str, value=None, comment: str = "") -> str:
    keyword = keyword.upper()
    if len(keyword) > 8:
        raise ValueError(f"keyword {keyword!r} longer than 8 characters")
    if value is None:
        text = f"{keyword:<8}{comment}"
    else:
        text = f"{keyword:<8}= {_format_value(value)}"
        if comment:
            text += f" / {comment}"
    if len(text) > CARD:
        text = text[:CARD]
    return f"{text:<{CARD}}"


def _parse_value(field_text: str):
    """Split the value field (columns 11-80) into (value, comment)."""
    text = field_text.lstrip()
    if text.startswith("'"):
        i = 1
        chars = []
        while i < len(text):
            ch = text[i]
            if ch == "'":
                if i + 1 < len(text) and text[i + 1] == "'":
                    chars.append("'")
                    i += 2
                    continue
                break
            chars.append(ch)
            i += 1
        rest = text[i + 1:]
        comment = rest.split("/", 1)[1].strip() if "/" in rest else ""
        return "".join(chars).rstrip(), comment

    raw, _, comment = text.partition("/")
    raw = raw.strip()
    comment = comment.strip()
    if raw == "":
        return None, comment
    if raw == "T":
        return True, comment
    if raw == "F":
        return False, comment
    try:
        return int(raw), comment
    except ValueError:
        pass
    try:
        return float(raw.replace("D", "E")), comment
    except ValueError:
        return raw, comment


def parse_card(image: str) -> Card:
    keyword = image[:8].rstrip()
    if image[8:10] == "= " and keyword not in ("COMMENT", "HISTORY", ""):
        value, comment = _parse_value(image[10:])
        return Card(keyword, value, comment, image)
    return Card(keyword, None, image[8:].rstrip(), image)


def _read_header(data: bytes) -> tuple[list[Card], int]:
    """Return the cards before END and the byte offset where data begins."""
    if len(data) < CARD or not data[:8].decode("ascii", "replace").startswith("SIMPLE"):
        raise MissingSimple("stream does not start with a SIMPLE card")
    cards = []
    pos = 0
    while True:
        if pos + CARD > len(data):
            raise TruncatedData("header ended without an END card")
        image = data[pos:pos + CARD].decode("ascii", "replace")
        pos += CARD
        if image[:8].rstrip() == "END":
            break
        cards.append(parse_card(image))
    if not cards or cards[0].keyword != "SIMPLE" or cards[0].value is not True:
        raise MissingSimple("first header card must be SIMPLE = T")
    return cards, BLOCK * math.ceil(pos / BLOCK)


def _header_from_cards(cards: list[Card]) -> FitsHeader:
    values = {}
    for card in cards:
        values.setdefault(card.keyword, card.value)

    bitpix = values.get("BITPIX")
    if bitpix not in _DTYPES or isinstance(bitpix, bool):
        raise UnsupportedBitpix(f"BITPIX={bitpix!r} is not one of {sorted(_DTYPES)}")
    naxis = values.get("NAXIS")
    if not isinstance(naxis, int) or naxis < 0:
        raise MissingSimple(f"NAXIS={naxis!r} is not a non-negative integer")
    axes = []
    for i in range(1, naxis + 1):
        n = values.get(f"NAXIS{i}")
        if not isinstance(n, int) or n < 0:
            raise NonImageHdu(f"NAXIS{i}={n!r} is missing or invalid")
        axes.append(n)
    blank = values.get("BLANK")
    return FitsHeader(
        records=cards,
        bitpix=bitpix,
        naxis=naxis,
        axis_lengths=axes,
        bscale=float(values.get("BSCALE", 1.0)),
        bzero=float(values.get("BZERO", 0.0)),
        blank=blank if isinstance(blank, int) and bitpix > 0 else None,
    )


def normalize(values: np.ndarray) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant array maps to all zeros."""
    lo = values.min()
    hi = values.max()
    if hi == lo:
        return np.zeros_like(values, dtype=np.float64)
    return (values - lo) / (hi - lo)


def parse_fits(data: bytes, normalize_output: bool = True) -> tuple[FitsHeader, np.ndarray]:
    """Decode the primary HDU of a FITS byte stream.

    Parameters
    ----------
    data : bytes
        Whole file contents.
    normalize_output : bool, optional
        Min-max scale the physical values to [0, 1] (default). Pass False to
        get physical values back, with blank pixels set to 0.0.

    Returns
    -------
    header : FitsHeader
        Parsed records; ``header.blank_count`` holds the number of blank or
        NaN pixels that were replaced.
    image : ndarray, shape (NAXIS2, NAXIS1)
    """
    data = bytes(data)
    cards, offset = _read_header(data)
    header = _header_from_cards(cards)
    if header.naxis != 2:
        raise NonImageHdu(f"primary HDU has NAXIS={header.naxis}; a 2-D image is required")
    width, height = header.axis_lengths
    if width < 1 or height < 1:
        raise NonImageHdu(f"empty image axes {header.axis_lengths}")

    nbytes = width * height * abs(header.bitpix) // 8
    if len(data) - offset < nbytes:
        raise TruncatedData(
            f"data section holds {max(len(data) - offset, 0)} bytes, "
            f"{width}x{height} at BITPIX={header.bitpix} needs {nbytes}"
        )
    if len(data) % BLOCK:
        warnings.warn(f"file length {len(data)} is not a multiple of {BLOCK} bytes", stacklevel=2)
    if len(data) > offset + BLOCK * math.ceil(nbytes / BLOCK):
        warnings.warn("extension HDUs present; only the primary HDU is read", stacklevel=2)

    stored = np.frombuffer(data, dtype=_DTYPES[header.bitpix], count=width * height, offset=offset)
    stored = stored.reshape(height, width)
    if header.blank is not None:
        bad = stored == header.blank
    else:
        bad = np.zeros(stored.shape, dtype=bool)
    physical = header.bzero + header.bscale * stored.astype(np.float64)
    bad |= ~np.isfinite(physical)
    header.blank_count = int(bad.sum())
    if header.blank_count:
        warnings.warn(f"{header.blank_count} blank/NaN pixels replaced by 0.0", stacklevel=2)
        physical[bad] = 0.0

    if not normalize_output:
        return header, physical
    return header, normalize(physical)


def round_half_up(x):
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def _check_unit_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise DimensionMismatch(f"expected a non-empty 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)) or img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image intensities must be finite and within [0, 1]")
    return img


def _encode_pixels(img: np.ndarray, bitpix: int) -> tuple[bytes, float, float]:
    if bitpix < 0:
        return img.astype(_DTYPES[bitpix]).tobytes(), 1.0, 0.0
    top, offset = _INT_CODES[bitpix]
    codes = round_half_up(img * top).astype(np.int64) - offset
    return codes.astype(_DTYPES[bitpix]).tobytes(), 1.0, float(offset)


def _pad(buf: bytes, fill: bytes) -> bytes:
    rem = len(buf) % BLOCK
    return buf if rem == 0 else buf + fill * (BLOCK - rem)


def write_fits(header: FitsHeader, img: np.ndarray) -> bytes:
    """Serialize ``img`` with the structure described by ``header``.

    Integer BITPIX values use the full unsigned code range (BZERO carries the
    offset for 16 and 32 bits); records other than the structural keywords
    are copied through unchanged.
    """
    img = _check_unit_image(img)
    if header.naxis != 2 or list(header.axis_lengths) != [img.shape[1], img.shape[0]]:
        raise DimensionMismatch(
            f"header axes {header.axis_lengths} do not describe a "
            f"{img.shape[1]}x{img.shape[0]} image"
        )
    if header.bitpix not in _DTYPES:
        raise UnsupportedBitpix(f"BITPIX={header.bitpix} is not one of {sorted(_DTYPES)}")

    payload, bscale, bzero = _encode_pixels(img, header.bitpix)
    wanted = {
        "SIMPLE": True,
        "BITPIX": header.bitpix,
        "NAXIS": 2,
        "NAXIS1": img.shape[1],
        "NAXIS2": img.shape[0],
    }
    scaling = {"BSCALE": bscale, "BZERO": bzero}

    cards: list[str] = []
    for key in ("SIMPLE", "BITPIX", "NAXIS", "NAXIS1", "NAXIS2"):
        old = next((c for c in header.records if c.keyword == key), None)
        if old is not None and old.value == wanted[key] and type(old.value) is type(wanted[key]):
            cards.append(old.format())
        else:
            cards.append(format_card(key, wanted[key], old.comment if old else ""))
    for key, value in scaling.items():
        old = next((c for c in header.records if c.keyword == key), None)
        if old is not None and old.value == value:
            cards.append(old.format())
        elif old is not None or value != (1.0 if key == "BSCALE" else 0.0):
            cards.append(format_card(key, value, old.comment if old else ""))
    for card in header.records:
        if card.keyword in _STRUCTURAL or card.keyword == "END":
            continue
        cards.append(card.format())
    cards.append(format_card("END"))

    head = _pad("".join(cards).encode("ascii"), b" ")
    return head + _pad(payload, b"\0")


def read_fits(path, normalize_output: bool = True) -> tuple[FitsHeader, np.ndarray]:
    with open(path, "rb") as fh:
        return parse_fits(fh.read(), normalize_output=normalize_output)


def save_fits(path, header: FitsHeader, img: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(write_fits(header, img))


# -- PGM --------------------------------------------------------------------

def write_pgm(img: np.ndarray, maxval: int = 255) -> bytes:
    """Binary (P5) PGM; each intensity becomes ``round_half_up(v * maxval)``."""
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    img = _check_unit_image(img)
    codes = round_half_up(img * maxval)
    dtype = ">u1" if maxval == 255 else ">u2"
    head = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode("ascii")
    return head + codes.astype(dtype).tobytes()


def write_mask_pgm(mask: np.ndarray) -> bytes:
    """Foreground 255, background 0."""
    return write_pgm(np.asarray(mask, dtype=np.float64), 255)


def parse_pgm(data: bytes) -> tuple[np.ndarray, int]:
    """Decode a binary PGM into ([0, 1] intensities, maxval)."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise PgmFormatError("truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != b"P5":
        raise PgmFormatError(f"unsupported PGM magic {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise PgmFormatError("malformed PGM header") from exc
    if not 0 < maxval < 65536:
        raise PgmFormatError(f"bad maxval {maxval}")
    dtype = ">u1" if maxval < 256 else ">u2"
    need = width * height * np.dtype(dtype).itemsize
    if len(data) - pos < need:
        raise PgmFormatError("PGM raster is truncated")
    raster = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    return raster.reshape(height, width).astype(np.float64) / maxval, maxval


def read_pgm(path) -> tuple[np.ndarray, int]:
    with open(os.fspath(path), "rb") as fh:
        return parse_pgm(fh.read())
