"""File formats: PFM images, PGM masks, light lists, dataset directories and
``key=value`` config files."""

import configparser
import re
from pathlib import Path

import numpy as np

from .exceptions import FormatError
from .render import RenderedSample


def write_pfm(path, image):
    """Write a 1- or 3-channel float image as little-endian PFM (rows bottom-up)."""
    img = np.asarray(image, dtype="<f4")
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim == 2:
        tag = b"Pf"
    elif img.ndim == 3 and img.shape[2] == 3:
        tag = b"PF"
    else:
        raise ValueError(f"PFM holds 1 or 3 channels, got shape {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(tag + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        fh.write(np.ascontiguousarray(np.flipud(img)).tobytes())


def read_pfm(path):
    """Read a PFM file into float32 (H, W) or (H, W, 3), top row first."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as exc:
        raise FormatError(path, "file not found") from exc
    parts = data.split(b"\n", 3)
    if len(parts) < 4:
        raise FormatError(path, "truncated PFM header")
    tag, dims, scale_line, body = parts
    tag = tag.strip()
    if tag not in (b"PF", b"Pf"):
        raise FormatError(path, f"bad PFM magic {tag[:8]!r}")
    try:
        w, h = (int(v) for v in dims.split())
        scale = float(scale_line)
    except ValueError as exc:
        raise FormatError(path, "malformed PFM header") from exc
    if w <= 0 or h <= 0 or scale == 0.0:
        raise FormatError(path, "malformed PFM header")
    channels = 3 if tag == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    n = w * h * channels
    if len(body) < 4 * n:
        raise FormatError(path, f"expected {4 * n} data bytes, found {len(body)}")
    arr = np.frombuffer(body[: 4 * n], dtype=dtype).astype(np.float32)
    arr = arr.reshape((h, w, 3) if channels == 3 else (h, w))
    return np.flipud(arr).copy()


def write_pgm(path, mask):
    """Binary 8-bit PGM (P5); nonzero pixels become 255."""
    m = (np.asarray(mask) != 0).astype(np.uint8) * 255
    h, w = m.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(m.tobytes())


def read_pgm(path):
    """Read a P5 or P2 PGM as a boolean mask (nonzero = True)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as exc:
        raise FormatError(path, "file not found") from exc
    # header: magic, width, height, maxval separated by whitespace, '#' comments allowed
    tokens, pos = [], 0
    pattern = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)")
    for _ in range(4):
        m = pattern.match(data, pos)
        if not m:
            raise FormatError(path, "truncated PGM header")
        tokens.append(m.group(2))
        pos = m.end()
    magic = tokens[0]
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(path, "malformed PGM header") from exc
    if magic == b"P5":
        body = data[pos + 1:]
        width = 2 if maxval > 255 else 1
        if len(body) < w * h * width:
            raise FormatError(path, "truncated PGM data")
        arr = np.frombuffer(body[: w * h * width], dtype=">u2" if width == 2 else np.uint8)
    elif magic == b"P2":
        arr = np.array(data[pos:].split(), dtype=int)
        if arr.size < w * h:
            raise FormatError(path, "truncated PGM data")
        arr = arr[: w * h]
    else:
        raise FormatError(path, f"bad PGM magic {magic[:8]!r}")
    return arr.reshape(h, w) != 0


def write_lights(path, lights):
    with open(path, "w") as fh:
        for l in np.asarray(lights, dtype=float).reshape(-1, 3):
            fh.write(f"{l[0]:.17g} {l[1]:.17g} {l[2]:.17g}\n")


def read_lights(path):
    """One whitespace-separated ``lx ly lz`` per line; blank lines and '#' ignored."""
    path = Path(path)
    rows = []
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise FormatError(path, "file not found") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(path, f"line {n}: expected 3 values, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise FormatError(path, f"line {n}: {exc}") from exc
    return np.array(rows, dtype=float).reshape(-1, 3)


def save_dataset(directory, sample):
    """Write ``images/NNN.pfm``, ``lights.txt``, ``normals_gt.pfm`` and ``mask.pgm``."""
    d = Path(directory)
    (d / "images").mkdir(parents=True, exist_ok=True)
    for j, img in enumerate(sample.images):
        write_pfm(d / "images" / f"{j:03d}.pfm", img)
    write_lights(d / "lights.txt", sample.lights)
    write_pfm(d / "normals_gt.pfm", sample.normals)
    write_pgm(d / "mask.pgm", sample.mask)
    return d


def load_dataset(directory):
    """Inverse of :func:`save_dataset`."""
    d = Path(directory)
    for required in ("lights.txt", "normals_gt.pfm", "mask.pgm"):
        if not (d / required).exists():
            raise FormatError(d / required, "missing dataset file")
    lights = read_lights(d / "lights.txt")
    files = sorted((d / "images").glob("*.pfm"))
    if len(files) != len(lights):
        raise FormatError(d / "lights.txt", f"{len(lights)} lights but {len(files)} images")
    images = np.stack([_as_rgb(read_pfm(f)) for f in files]) if files else np.zeros((0, 1, 1, 3))
    normals = read_pfm(d / "normals_gt.pfm")
    mask = read_pgm(d / "mask.pgm")
    if normals.shape[:2] != mask.shape or (len(files) and images.shape[1:3] != mask.shape):
        raise FormatError(d, "image, normal map and mask sizes disagree")
    return RenderedSample(images.astype(float), lights, normals.astype(float), mask, name=d.name)


def _as_rgb(img):
    return np.repeat(img[..., None], 3, axis=-1) if img.ndim == 2 else img


def load_datasets(directory):
    """A single dataset directory, or every dataset subdirectory (sorted) of it."""
    d = Path(directory)
    if (d / "lights.txt").exists():
        return [load_dataset(d)]
    subdirs = sorted(p for p in d.iterdir() if p.is_dir() and (p / "lights.txt").exists())
    if not subdirs:
        raise FormatError(d, "no dataset found (expected lights.txt here or in subdirectories)")
    return [load_dataset(p) for p in subdirs]


def read_config(path):
    """Parse ``key=value`` lines, optionally grouped under ``[section]`` headers.

    Keys before any header land in the ``""`` section. Returns a dict of
    section -> {key: raw string}.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError as exc:
        raise FormatError(path, "file not found") from exc
    return parse_config(text, path)


def parse_config(text, source="<config>"):
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
        interpolation=None, default_section="\0defaults",
    )
    parser.optionxform = str
    try:
        parser.read_string("[\0root]\n" + text, source=str(source))
    except configparser.Error as exc:
        raise FormatError(source, str(exc)) from exc
    out = {}
    for name in parser.sections():
        key = "" if name == "\0root" else name
        out[key] = dict(parser[name])
    return out
