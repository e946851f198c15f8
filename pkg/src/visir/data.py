"""Dataset construction: synthetic physical fields, RGB assembly, tiling,
bicubic 4x reduction, and on-disk pair/manifest formats.

The real climate-model archive is not distributed, so sources here are
synthetic fields with controllable frequency content.  Everything downstream
(normalize to unit interval, stack three fields as RGB, split into
non-overlapping tiles, bicubic-downsample each tile) follows the same
bookkeeping as the original 720x1440 -> 18 x 240x240 -> 60x60 pipe.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "FieldGrid",
    "SpectrumSpec",
    "SRPair",
    "DataConfig",
    "DatasetManifest",
    "ManifestEntry",
    "CHANNEL_NAMES",
    "synth_field",
    "normalize_field",
    "assemble_rgb",
    "tile_image",
    "reassemble_tiles",
    "bicubic_downsample",
    "build_dataset",
    "load_manifest",
    "load_pairs",
    "write_grid",
    "read_grid",
    "write_png",
    "read_png",
]

CHANNEL_NAMES = ("surface_temperature", "shortwave_heat_flux", "longwave_heat_flux")
CHANNEL_UNITS = ("K", "W m-2", "W m-2")

GRID_MAGIC = b"VSGR"
GRID_VERSION = 1


@dataclass(frozen=True)
class FieldGrid:
    """One real value per grid point; physical units carried as metadata."""

    values: np.ndarray
    units: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"field grid must be 2-d, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("field grid contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class SpectrumSpec:
    """Frequency content of a synthetic field.

    components: (amplitude, cycles across the unit square, orientation in
    radians) triples; each becomes one plane sinusoid with a seed-driven
    phase.  background_amplitude adds a smooth random low-frequency field
    built from integer modes up to background_max_cycles.
    """

    components: tuple[tuple[float, float, float], ...] = ()
    background_amplitude: float = 0.0
    background_max_cycles: int = 2


@dataclass(frozen=True)
class SRPair:
    """Aligned (HR, LR) images related by an integer scale factor."""

    hr: np.ndarray
    lr: np.ndarray
    scale: int
    tile_index: int = 0
    source_id: str = ""

    def __post_init__(self):
        hr = np.asarray(self.hr, dtype=np.float64)
        lr = np.asarray(self.lr, dtype=np.float64)
        s = self.scale
        if hr.ndim != 3 or lr.ndim != 3:
            raise ValueError("SRPair images must be HxWxC")
        if hr.shape[0] != lr.shape[0] * s or hr.shape[1] != lr.shape[1] * s or hr.shape[2] != lr.shape[2]:
            raise ValueError(f"hr {hr.shape} is not {s}x the lr {lr.shape}")
        for name, img in (("hr", hr), ("lr", lr)):
            if img.min() < 0.0 or img.max() > 1.0:
                raise ValueError(f"{name} image leaves the unit interval")
        object.__setattr__(self, "hr", hr)
        object.__setattr__(self, "lr", lr)


# ---------------------------------------------------------------------------
# Synthetic source fields
# ---------------------------------------------------------------------------

def synth_field(seed: int, h: int, w: int, spec: SpectrumSpec, units: str = "synthetic") -> FieldGrid:
    """Deterministic sum of 2-d sinusoids plus an optional smooth background."""
    if not spec.components and spec.background_amplitude == 0.0:
        raise ValueError("empty spectrum: no components and no background")
    rng = np.random.default_rng(seed)
    ys = (np.arange(h) + 0.5) / h
    xs = (np.arange(w) + 0.5) / w
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    out = np.zeros((h, w))
    for amp, cycles, theta in spec.components:
        phase = rng.uniform(0.0, 2.0 * np.pi)
        u = np.cos(theta) * xx + np.sin(theta) * yy
        out += amp * np.sin(2.0 * np.pi * cycles * u + phase)
    if spec.background_amplitude != 0.0:
        for ky in range(spec.background_max_cycles + 1):
            for kx in range(spec.background_max_cycles + 1):
                if kx == 0 and ky == 0:
                    continue
                coeff = rng.normal(0.0, 1.0) / (1.0 + kx * kx + ky * ky)
                phase = rng.uniform(0.0, 2.0 * np.pi)
                out += spec.background_amplitude * coeff * np.cos(
                    2.0 * np.pi * (kx * xx + ky * yy) + phase
                )
    return FieldGrid(out, units=units)


def normalize_field(f: FieldGrid | np.ndarray) -> tuple[np.ndarray, tuple[float, float]]:
    """Affine map to [0, 1]; returns the channel and the (min, max) range."""
    v = f.values if isinstance(f, FieldGrid) else np.asarray(f, dtype=np.float64)
    lo = float(v.min())
    hi = float(v.max())
    if hi <= lo:
        raise ValueError(f"degenerate field range [{lo}, {hi}]: cannot normalize a constant field")
    return (v - lo) / (hi - lo), (lo, hi)


def assemble_rgb(temp: np.ndarray, shortwave: np.ndarray, longwave: np.ndarray) -> np.ndarray:
    """Stack three unit-interval channels as R, G, B in that fixed order."""
    t = np.asarray(temp, dtype=np.float64)
    s = np.asarray(shortwave, dtype=np.float64)
    l = np.asarray(longwave, dtype=np.float64)
    if not (t.shape == s.shape == l.shape) or t.ndim != 2:
        raise ValueError(f"channel shapes differ or are not 2-d: {t.shape}, {s.shape}, {l.shape}")
    return np.stack([t, s, l], axis=-1)


# ---------------------------------------------------------------------------
# Tiling
# ---------------------------------------------------------------------------

def tile_image(img: np.ndarray, tile_h: int, tile_w: int) -> list[np.ndarray]:
    """Row-major non-overlapping tiles; reassembly reproduces img bit-exactly."""
    img = np.asarray(img)
    h, w = img.shape[0], img.shape[1]
    if h % tile_h != 0 or w % tile_w != 0:
        raise ValueError(f"tile {tile_h}x{tile_w} does not divide image {h}x{w}")
    tiles = []
    for i in range(h // tile_h):
        for j in range(w // tile_w):
            tiles.append(img[i * tile_h:(i + 1) * tile_h, j * tile_w:(j + 1) * tile_w].copy())
    return tiles


def reassemble_tiles(tiles: list[np.ndarray], grid_rows: int, grid_cols: int) -> np.ndarray:
    if len(tiles) != grid_rows * grid_cols:
        raise ValueError(f"{len(tiles)} tiles cannot fill a {grid_rows}x{grid_cols} grid")
    rows = [np.concatenate(tiles[r * grid_cols:(r + 1) * grid_cols], axis=1) for r in range(grid_rows)]
    return np.concatenate(rows, axis=0)


# ---------------------------------------------------------------------------
# Bicubic (Catmull-Rom) reduction
# ---------------------------------------------------------------------------

def _catmull_rom_weights(fx: float) -> np.ndarray:
    # Kernel a = -0.5 evaluated at the four neighbors around offset fx.
    a = -0.5
    ts = np.array([1.0 + fx, fx, 1.0 - fx, 2.0 - fx])
    w = np.empty(4)
    for k, t in enumerate(ts):
        t = abs(t)
        if t <= 1.0:
            w[k] = (a + 2.0) * t ** 3 - (a + 3.0) * t ** 2 + 1.0
        elif t < 2.0:
            w[k] = a * (t ** 3 - 5.0 * t ** 2 + 8.0 * t - 4.0)
        else:
            w[k] = 0.0
    return w


def _downsample_axis(arr: np.ndarray, s: int, axis: int) -> np.ndarray:
    n = arr.shape[axis]
    m = n // s
    # Output pixel centers mapped into input coordinates; for an integer
    # factor the fractional offset is the same for every output sample.
    x = (np.arange(m) + 0.5) * s - 0.5
    base = np.floor(x).astype(int)
    fx = float(x[0] - base[0])
    w = _catmull_rom_weights(fx)
    moved = np.moveaxis(arr, axis, 0)
    idx = [np.clip(base + d, 0, n - 1) for d in (-1, 0, 1, 2)]
    samples = [moved[i] for i in idx]
    # Anchored form of sum(w_k * v_k): the weights sum to one, so evaluating
    # around the floor sample keeps constant inputs bit-exact.
    out = samples[1] + w[0] * (samples[0] - samples[1]) \
        + w[2] * (samples[2] - samples[1]) + w[3] * (samples[3] - samples[1])
    return np.moveaxis(out, 0, axis)


def bicubic_downsample(img: np.ndarray, s: int) -> np.ndarray:
    """Catmull-Rom (a=-0.5) reduction by an integer factor, edge-clamped,
    sampled at output pixel centers, clamped back to [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if s < 1:
        raise ValueError(f"scale must be >= 1, got {s}")
    if img.shape[0] % s != 0 or img.shape[1] % s != 0:
        raise ValueError(f"scale {s} does not divide image {img.shape[0]}x{img.shape[1]}")
    if s == 1:
        return img.copy()
    out = _downsample_axis(img, s, axis=0)
    out = _downsample_axis(out, s, axis=1)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Raw grid files ("VSGR")
# ---------------------------------------------------------------------------

def write_grid(path, values: np.ndarray, units: str = "") -> None:
    """Raw grid file: magic, version, h, w, c, unit string, f64-LE row-major."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 2:
        v = v[:, :, None]
    if v.ndim != 3:
        raise ValueError(f"grid must be 2-d or 3-d, got shape {v.shape}")
    unit_bytes = units.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(GRID_MAGIC)
        fh.write(struct.pack("<IIIII", GRID_VERSION, v.shape[0], v.shape[1], v.shape[2], len(unit_bytes)))
        fh.write(unit_bytes)
        fh.write(v.astype("<f8").tobytes(order="C"))


def read_grid(path) -> tuple[np.ndarray, str]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != GRID_MAGIC:
            raise ValueError(f"bad grid magic {magic!r}")
        header = fh.read(20)
        if len(header) != 20:
            raise ValueError("truncated grid header")
        version, h, w, c, unit_len = struct.unpack("<IIIII", header)
        if version != GRID_VERSION:
            raise ValueError(f"unsupported grid version {version}")
        units = fh.read(unit_len).decode("utf-8")
        raw = fh.read(8 * h * w * c)
        if len(raw) != 8 * h * w * c:
            raise ValueError("truncated grid payload")
        values = np.frombuffer(raw, dtype="<f8").reshape(h, w, c).astype(np.float64)
    return values, units


# ---------------------------------------------------------------------------
# PNG export / import (8-bit, for inspection images)
# ---------------------------------------------------------------------------

def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    return struct.pack(">I", len(payload)) + tag + payload + \
        struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)


def write_png(path, img: np.ndarray) -> None:
    """8-bit grayscale or RGB PNG; values x255, rounded half-up."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 2:
        color_type, channels = 0, 1
        flat = arr[:, :, None]
    elif arr.ndim == 3 and arr.shape[2] == 3:
        color_type, channels = 2, 3
        flat = arr
    else:
        raise ValueError(f"cannot export image of shape {arr.shape} as PNG")
    quant = np.clip(np.floor(flat * 255.0 + 0.5), 0, 255).astype(np.uint8)
    h, w = quant.shape[0], quant.shape[1]
    raw = bytearray()
    for row in range(h):
        raw.append(0)  # filter type None
        raw.extend(quant[row].tobytes())
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    with open(path, "wb") as fh:
        fh.write(b"\x89PNG\r\n\x1a\n")
        fh.write(_png_chunk(b"IHDR", ihdr))
        fh.write(_png_chunk(b"IDAT", zlib.compress(bytes(raw), 9)))
        fh.write(_png_chunk(b"IEND", b""))


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    return b if pb <= pc else c


def read_png(path) -> np.ndarray:
    """Read an 8-bit grayscale/RGB PNG back to a float HxWxC array in [0, 1]."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != b"\x89PNG\r\n\x1a\n":
        raise ValueError("not a PNG file")
    pos = 8
    idat = bytearray()
    width = height = channels = None
    while pos < len(blob):
        length, = struct.unpack(">I", blob[pos:pos + 4])
        tag = blob[pos + 4:pos + 8]
        payload = blob[pos + 8:pos + 8 + length]
        pos += 12 + length
        if tag == b"IHDR":
            width, height, depth, color_type, comp, filt, interlace = struct.unpack(">IIBBBBB", payload)
            if depth != 8 or color_type not in (0, 2) or comp != 0 or filt != 0 or interlace != 0:
                raise ValueError("unsupported PNG flavor (need 8-bit gray/RGB, non-interlaced)")
            channels = 1 if color_type == 0 else 3
        elif tag == b"IDAT":
            idat.extend(payload)
        elif tag == b"IEND":
            break
    if width is None:
        raise ValueError("PNG missing IHDR")
    data = zlib.decompress(bytes(idat))
    stride = width * channels
    out = np.empty((height, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.int64)
    pos = 0
    for row in range(height):
        ftype = data[pos]
        line = np.frombuffer(data, dtype=np.uint8, count=stride, offset=pos + 1).astype(np.int64)
        pos += 1 + stride
        if ftype == 0:
            out[row] = line.astype(np.uint8)
            prev = line
            continue
        cur = np.zeros(stride, dtype=np.int64)
        for i in range(stride):
            left = cur[i - channels] if i >= channels else 0
            up = prev[i]
            ul = prev[i - channels] if i >= channels else 0
            if ftype == 0:
                val = line[i]
            elif ftype == 1:
                val = line[i] + left
            elif ftype == 2:
                val = line[i] + up
            elif ftype == 3:
                val = line[i] + (left + up) // 2
            elif ftype == 4:
                val = line[i] + _paeth(int(left), int(up), int(ul))
            else:
                raise ValueError(f"bad PNG filter type {ftype}")
            cur[i] = val & 0xFF
        out[row] = cur.astype(np.uint8)
        prev = cur
    return out.reshape(height, width, channels).astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# Dataset build
# ---------------------------------------------------------------------------

DEFAULT_SPECTRUM = SpectrumSpec(
    components=((1.0, 2.0, 0.3), (0.6, 7.0, 1.2), (0.35, 23.0, 0.0), (0.25, 31.0, 0.9)),
    background_amplitude=0.4,
    background_max_cycles=3,
)


@dataclass(frozen=True)
class DataConfig:
    sources: int = 10
    source_height: int = 720
    source_width: int = 1440
    tile: int = 240
    scale: int = 4
    seed: int = 0
    train_fraction: float = 0.8
    spectrum: SpectrumSpec = DEFAULT_SPECTRUM


@dataclass(frozen=True)
class ManifestEntry:
    pair_id: str
    source_id: str
    tile_index: int
    split: str
    hr_path: str
    lr_path: str


@dataclass
class DatasetManifest:
    seed: int
    scale: int
    tile_height: int
    tile_width: int
    entries: list[ManifestEntry]
    normalization: dict[str, list[tuple[float, float]]]
    root: Path | None = None

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def to_json(self) -> str:
        doc = {
            "format": "visir-manifest",
            "version": 1,
            "seed": self.seed,
            "scale": self.scale,
            "tile_height": self.tile_height,
            "tile_width": self.tile_width,
            "channels": list(CHANNEL_NAMES),
            "normalization": {k: [list(r) for r in v] for k, v in self.normalization.items()},
            "pairs": [
                {
                    "id": e.pair_id,
                    "source": e.source_id,
                    "tile": e.tile_index,
                    "split": e.split,
                    "hr": e.hr_path,
                    "lr": e.lr_path,
                }
                for e in self.entries
            ],
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _subseed(seed: int, *parts) -> int:
    key = "/".join(str(p) for p in (seed,) + parts)
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _split_of(seed: int, source_id: str, tile_index: int, train_fraction: float) -> str:
    u = _subseed(seed, "split", source_id, tile_index) / 2.0 ** 64
    return "train" if u < train_fraction else "test"


def build_dataset(cfg: DataConfig, out_dir) -> DatasetManifest:
    """Generate sources, tile, downsample and write pairs plus a manifest.

    Deterministic from cfg.seed: rebuilding into a fresh directory produces a
    byte-identical manifest and identical pair files.
    """
    if cfg.sources < 1:
        raise ValueError("need at least one source")
    if cfg.tile % cfg.scale != 0:
        raise ValueError(f"scale {cfg.scale} must divide tile size {cfg.tile}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries: list[ManifestEntry] = []
    normalization: dict[str, list[tuple[float, float]]] = {}
    grid_rows = cfg.source_height // cfg.tile
    grid_cols = cfg.source_width // cfg.tile

    for s in range(cfg.sources):
        source_id = f"s{s:03d}"
        channels = []
        ranges = []
        for k, (name, units) in enumerate(zip(CHANNEL_NAMES, CHANNEL_UNITS)):
            fieldgrid = synth_field(
                _subseed(cfg.seed, "field", s, k), cfg.source_height, cfg.source_width,
                cfg.spectrum, units=units,
            )
            channel, rng = normalize_field(fieldgrid)
            channels.append(channel)
            ranges.append(rng)
        normalization[source_id] = ranges
        rgb = assemble_rgb(*channels)
        tiles = tile_image(rgb, cfg.tile, cfg.tile)
        assert len(tiles) == grid_rows * grid_cols
        for i, hr in enumerate(tiles):
            lr = bicubic_downsample(hr, cfg.scale)
            pair_id = f"{source_id}_t{i:02d}"
            hr_path = f"{pair_id}_hr.vsgr"
            lr_path = f"{pair_id}_lr.vsgr"
            write_grid(out_dir / hr_path, hr)
            write_grid(out_dir / lr_path, lr)
            entries.append(ManifestEntry(
                pair_id=pair_id,
                source_id=source_id,
                tile_index=i,
                split=_split_of(cfg.seed, source_id, i, cfg.train_fraction),
                hr_path=hr_path,
                lr_path=lr_path,
            ))

    manifest = DatasetManifest(
        seed=cfg.seed,
        scale=cfg.scale,
        tile_height=cfg.tile,
        tile_width=cfg.tile,
        entries=entries,
        normalization=normalization,
        root=out_dir,
    )
    (out_dir / "manifest.json").write_text(manifest.to_json(), encoding="utf-8")
    return manifest


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    if doc.get("format") != "visir-manifest" or doc.get("version") != 1:
        raise ValueError("not a recognized dataset manifest")
    entries = [
        ManifestEntry(
            pair_id=p["id"],
            source_id=p["source"],
            tile_index=p["tile"],
            split=p["split"],
            hr_path=p["hr"],
            lr_path=p["lr"],
        )
        for p in doc["pairs"]
    ]
    normalization = {k: [tuple(r) for r in v] for k, v in doc["normalization"].items()}
    return DatasetManifest(
        seed=doc["seed"],
        scale=doc["scale"],
        tile_height=doc["tile_height"],
        tile_width=doc["tile_width"],
        entries=entries,
        normalization=normalization,
        root=path.parent,
    )


def load_pairs(manifest: DatasetManifest, split: str | None = None) -> list[SRPair]:
    if manifest.root is None:
        raise ValueError("manifest has no root directory; load it from disk or build it first")
    wanted = manifest.entries if split is None else manifest.split(split)
    if split is not None and not wanted:
        raise ValueError(f"split '{split}' is empty")
    pairs = []
    for e in wanted:
        hr, _ = read_grid(manifest.root / e.hr_path)
        lr, _ = read_grid(manifest.root / e.lr_path)
        pairs.append(SRPair(hr=hr, lr=lr, scale=manifest.scale,
                            tile_index=e.tile_index, source_id=e.source_id))
    return pairs
