"""Binary tensor/mask files and PGM/PPM images.

Tensor files::

    b"FMAP"  version(u8)=1  rank(u8)  rank x dim(u32 LE)  payload(f32 LE)

Mask files use the magic ``b"BMSK"`` and one byte (0 or 1) per element.
Payloads are row-major, channel-major for rank 3.
"""

import struct
from pathlib import Path

import numpy as np

TENSOR_MAGIC = b"FMAP"
MASK_MAGIC = b"BMSK"
VERSION = 1


class FormatError(ValueError):
    """A file does not follow the expected binary layout."""


def _header(magic, shape):
    if not 1 <= len(shape) <= 255:
        raise ValueError(f"unsupported rank {len(shape)}")
    return magic + struct.pack(f"<BB{len(shape)}I", VERSION, len(shape), *shape)


def encode_tensor(x):
    x = np.asarray(x)
    if not np.all(np.isfinite(x)):
        raise ValueError("tensor contains NaN or Inf")
    return _header(TENSOR_MAGIC, x.shape) + x.astype("<f4").tobytes(order="C")


def encode_mask(m):
    m = np.asarray(m)
    if not np.all((m == 0) | (m == 1)):
        raise ValueError("mask values must be 0 or 1")
    return _header(MASK_MAGIC, m.shape) + m.astype(np.uint8).tobytes(order="C")


def _decode(buf, magic, dtype, source):
    if len(buf) < 6 or buf[:4] != magic:
        raise FormatError(f"{source}: bad magic, expected {magic!r}")
    version, rank = buf[4], buf[5]
    if version != VERSION:
        raise FormatError(f"{source}: unsupported version {version}")
    end = 6 + 4 * rank
    if rank == 0 or len(buf) < end:
        raise FormatError(f"{source}: truncated header")
    shape = struct.unpack(f"<{rank}I", buf[6:end])
    size = int(np.prod(shape)) * np.dtype(dtype).itemsize
    if len(buf) != end + size:
        raise FormatError(f"{source}: payload is {len(buf) - end} bytes, expected {size}")
    return np.frombuffer(buf, dtype=dtype, offset=end).reshape(shape)


def decode_tensor(buf, source="<bytes>"):
    """Decode a tensor; values come back as float64."""
    return _decode(buf, TENSOR_MAGIC, "<f4", source).astype(np.float64)


def decode_mask(buf, source="<bytes>"):
    raw = _decode(buf, MASK_MAGIC, np.uint8, source)
    if raw.size and raw.max() > 1:
        raise FormatError(f"{source}: mask bytes must be 0 or 1")
    return raw.astype(bool)


def write_tensor(path, x):
    Path(path).write_bytes(encode_tensor(x))


def read_tensor(path):
    return decode_tensor(Path(path).read_bytes(), str(path))


def write_mask(path, m):
    Path(path).write_bytes(encode_mask(m))


def read_mask(path):
    return decode_mask(Path(path).read_bytes(), str(path))


def write_pgm(path, img):
    """Write an ``(H, W)`` uint8 array as binary PGM (P5)."""
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim != 2:
        raise ValueError("PGM images are 2-D")
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + img.tobytes())


def write_ppm(path, img):
    """Write an ``(H, W, 3)`` uint8 array as binary PPM (P6)."""
    img = np.asarray(img, dtype=np.uint8)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("PPM images are (H, W, 3)")
    h, w = img.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + img.tobytes())


def read_pnm(path):
    """Read a binary P5/P6 file with maxval 255."""
    buf = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            pos = buf.index(b"\n", pos)
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        tokens.append(buf[start:pos])
    pos += 1
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic not in (b"P5", b"P6") or maxval != 255:
        raise FormatError(f"{path}: only 8-bit P5/P6 files are supported")
    channels = 1 if magic == b"P5" else 3
    img = np.frombuffer(buf, dtype=np.uint8, count=w * h * channels, offset=pos)
    return img.reshape(h, w) if channels == 1 else img.reshape(h, w, 3)


def save_episode(directory, episode):
    """Store an episode as tensor/mask files in ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for k, (f, m) in enumerate(episode.supports):
        write_tensor(directory / f"support_{k}.fmap", f)
        write_mask(directory / f"support_{k}.bmsk", m)
    write_tensor(directory / "query.fmap", episode.query)
    if episode.truth is not None:
        write_mask(directory / "truth.bmsk", episode.truth)


def load_episode(directory):
    from ..pipeline import Episode

    directory = Path(directory)
    supports = []
    k = 0
    while (directory / f"support_{k}.fmap").exists():
        supports.append((read_tensor(directory / f"support_{k}.fmap"),
                         read_mask(directory / f"support_{k}.bmsk")))
        k += 1
    if not supports:
        raise FileNotFoundError(f"{directory}: no support_0.fmap")
    truth_path = directory / "truth.bmsk"
    truth = read_mask(truth_path) if truth_path.exists() else None
    return Episode(supports, read_tensor(directory / "query.fmap"), truth)
