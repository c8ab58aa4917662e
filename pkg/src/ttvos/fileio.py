"""Binary tensor files (TTEN), checkpoints and netpbm images.

TTEN layout: ``b"TTEN"``, u8 version (1), u8 dtype code (1 = float64),
u8 rank, rank little-endian u64 extents, then the row-major little-endian
payload. A checkpoint is a directory of TTEN files plus ``manifest.txt``
holding ``name<TAB>filename`` lines.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .errors import InputError

MAGIC = b"TTEN"
VERSION = 1
DTYPE_F64 = 1


def write_tensor(path, arr: np.ndarray) -> None:
    arr = np.asarray(arr, dtype="<f8")  # tobytes() below is C-order; keeps rank-0 arrays rank 0
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<BBB", VERSION, DTYPE_F64, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        fh.write(arr.tobytes())


def read_tensor(path) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise InputError(f"{path}: not a TTEN file")
    version, dtype, rank = struct.unpack_from("<BBB", blob, 4)
    if version != VERSION or dtype != DTYPE_F64:
        raise InputError(f"{path}: unsupported TTEN version {version} / dtype {dtype}")
    dims = struct.unpack_from(f"<{rank}Q", blob, 7)
    start = 7 + 8 * rank
    n = int(np.prod(dims)) if rank else 1
    if len(blob) - start != 8 * n:
        raise InputError(f"{path}: payload holds {len(blob) - start} bytes, expected {8 * n}")
    return np.frombuffer(blob, dtype="<f8", offset=start, count=n).astype(np.float64).reshape(dims)


def save_checkpoint(directory, state: dict[str, np.ndarray], extra: dict[str, str] | None = None) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, (name, arr) in enumerate(state.items()):
        fname = f"{i:04d}_{name}.tten"
        write_tensor(d / fname, arr)
        lines.append(f"{name}\t{fname}")
    (d / "manifest.txt").write_text("\n".join(lines) + "\n")
    if extra:
        (d / "config.txt").write_text("".join(f"{k}={v}\n" for k, v in extra.items()))


def load_checkpoint(directory) -> dict[str, np.ndarray]:
    d = Path(directory)
    manifest = d / "manifest.txt"
    if not manifest.is_file():
        raise InputError(f"{manifest}: checkpoint manifest not found")
    state = {}
    for line in manifest.read_text().splitlines():
        if not line.strip():
            continue
        name, fname = line.split("\t")
        state[name] = read_tensor(d / fname)
    return state


def read_checkpoint_config(directory) -> dict[str, str]:
    path = Path(directory) / "config.txt"
    if not path.is_file():
        return {}
    out = {}
    for line in path.read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


# -- netpbm ------------------------------------------------------------------


def _read_netpbm(path, magic: bytes):
    with open(path, "rb") as fh:
        blob = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        tokens.append(blob[start:pos])
    if tokens[0] != magic:
        raise InputError(f"{path}: expected netpbm {magic.decode()}, found {tokens[0]!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise InputError(f"{path}: only 8-bit netpbm is supported")
    return blob[pos + 1 :], h, w


def read_ppm(path) -> np.ndarray:
    """Binary P6 -> (3, H, W) float64 in [0, 1]."""
    payload, h, w = _read_netpbm(path, b"P6")
    arr = np.frombuffer(payload, dtype=np.uint8, count=h * w * 3).reshape(h, w, 3)
    return arr.transpose(2, 0, 1).astype(np.float64) / 255.0


def write_ppm(path, image: np.ndarray) -> None:
    """(3, H, W) floats in [0, 1] -> binary P6."""
    arr = np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(arr.tobytes())


def read_pgm(path) -> np.ndarray:
    """Binary P5 -> (H, W) uint8 label map."""
    payload, h, w = _read_netpbm(path, b"P5")
    return np.frombuffer(payload, dtype=np.uint8, count=h * w).reshape(h, w).copy()


def write_pgm(path, labels: np.ndarray) -> None:
    arr = np.asarray(labels)
    if arr.min(initial=0) < 0 or arr.max(initial=0) > 255:
        raise InputError(f"{path}: label values must lie in 0..255")
    arr = arr.astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(arr.tobytes())


# -- DAVIS-style layout --------------------------------------------------------


def sequence_root(data_dir) -> Path:
    d = Path(data_dir)
    return d / "seqs" if (d / "seqs").is_dir() else d


def list_sequences(data_dir) -> list[Path]:
    root = sequence_root(data_dir)
    if (root / "frames").is_dir():
        return [root]
    if not root.is_dir():
        raise InputError(f"{root}: dataset directory not found")
    return sorted(p for p in root.iterdir() if (p / "frames").is_dir())


def load_sequence(seq_dir) -> tuple[list[np.ndarray], list[np.ndarray]]:
    seq = Path(seq_dir)
    frame_files = sorted((seq / "frames").glob("*.ppm"))
    if not frame_files:
        raise InputError(f"{seq / 'frames'}: no .ppm frames")
    frames = [read_ppm(f) for f in frame_files]
    masks = []
    mask_dir = seq / "masks"
    if mask_dir.is_dir():
        missing = [f.stem + ".pgm" for f in frame_files if not (mask_dir / (f.stem + ".pgm")).is_file()]
        if missing:
            raise InputError(f"{mask_dir}: missing masks {', '.join(missing)}")
        masks = [read_pgm(mask_dir / (f.stem + ".pgm")) for f in frame_files]
    return frames, masks


def write_sequence(seq_dir, frames, masks) -> None:
    seq = Path(seq_dir)
    (seq / "frames").mkdir(parents=True, exist_ok=True)
    (seq / "masks").mkdir(parents=True, exist_ok=True)
    for i, (f, m) in enumerate(zip(frames, masks)):
        write_ppm(seq / "frames" / f"{i:05d}.ppm", f)
        write_pgm(seq / "masks" / f"{i:05d}.pgm", m)


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
