"""Image, histogram and run-manifest output."""

from __future__ import annotations

import csv
import json
import re

import numpy as np
from PIL import Image as PILImage


def write_pfm(path, image: np.ndarray) -> None:
    """Little-endian colour PFM (rows stored bottom-to-top)."""
    img = np.asarray(image)
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {img.shape}")
    h, w, _ = img.shape
    data = np.ascontiguousarray(img[::-1], dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(f"PF\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pfm(path) -> np.ndarray:
    """Returns float32 (H, W, 3) or (H, W) top-to-bottom."""
    with open(path, "rb") as fh:
        raw = fh.read()
    m = re.match(rb"(PF|Pf)\s+(\d+)\s+(\d+)\s+(\S+)\s", raw)
    if not m:
        raise ValueError(f"{path}: not a PFM file")
    color = m.group(1) == b"PF"
    w, h, scale = int(m.group(2)), int(m.group(3)), float(m.group(4))
    dtype = "<f4" if scale < 0 else ">f4"
    ch = 3 if color else 1
    data = np.frombuffer(raw, dtype=dtype, count=w * h * ch, offset=m.end())
    data = data.reshape(h, w, ch) if color else data.reshape(h, w)
    return data[::-1].astype(np.float32)


def srgb_encode(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * np.power(x, 1 / 2.4) - 0.055)


def tonemap(image: np.ndarray, quantile: float = 0.99) -> np.ndarray:
    """Normalise by the image's ``quantile`` value, clamp to [0, 1], sRGB-encode to 8 bit."""
    img = np.asarray(image, dtype=np.float64)
    q = float(np.quantile(img, quantile)) if img.size else 0.0
    norm = img / q if q > 0 else np.zeros_like(img)
    return np.round(srgb_encode(norm) * 255.0).astype(np.uint8)


def write_png(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    PILImage.fromarray(tonemap(img), mode="RGB").save(path)


def write_image(image: np.ndarray, path, format: str) -> None:
    if format == "pfm":
        write_pfm(path, image)
    elif format == "png_tonemapped":
        write_png(path, image)
    else:
        raise ValueError(f"unknown image format {format!r}")


def bin_samples(times, values, edges) -> np.ndarray:
    """Histogram rows (count, r, g, b) of samples at ``times``; ``values`` is (n, 3) or None."""
    edges = np.asarray(edges, float)
    nb = len(edges) - 1
    out = np.zeros((nb, 4))
    times = np.asarray(times, float)
    if times.size == 0:
        return out
    vals = np.zeros((len(times), 3)) if values is None else np.asarray(values, float).reshape(-1, 3)
    k = np.searchsorted(edges, times, side="right") - 1
    ok = (k >= 0) & (k < nb)
    np.add.at(out[:, 0], k[ok], 1.0)
    for c in range(3):
        np.add.at(out[:, 1 + c], k[ok], vals[ok, c])
    return out


def write_histogram(hist: np.ndarray, edges, path) -> None:
    """CSV with columns time_bin_center, count, r, g, b, one row per bin.

    A histogram without samples writes only the header row.
    """
    edges = np.asarray(edges, float)
    hist = np.asarray(hist, float).reshape(-1, 4)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["time_bin_center", "count", "r", "g", "b"])
        if hist.shape[0] == 0 or hist[:, 0].sum() == 0:
            return
        centers = 0.5 * (edges[:-1] + edges[1:])
        for t, row in zip(centers, hist):
            wr.writerow([repr(float(t)), int(row[0]), repr(float(row[1])), repr(float(row[2])), repr(float(row[3]))])


def read_histogram(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([[float(x) for x in r] for r in rows]).reshape(-1, 5)


def write_manifest(path, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
