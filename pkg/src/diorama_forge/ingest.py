"""Photo collection loading, EXIF GPS extraction and event-location aggregation."""

from __future__ import annotations

import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import EmptyCollection, UndecodableImage
from .model import GeoLocation

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png"}
MAX_PHOTOS = 16

EARTH_RADIUS_M = 6_371_008.8
OUTLIER_DISTANCE_M = 1000.0

GPS_IFD = 0x8825
EXIF_IFD = 0x8769
_DATETIME_ORIGINAL = 0x9003
_DATETIME = 0x0132


@dataclass(frozen=True, eq=False)
class PhotoRecord:
    id: str
    data: bytes
    pixels: np.ndarray = field(repr=False)
    capture_time: datetime | None = None
    exif_location: GeoLocation | None = None

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    def __eq__(self, other):
        if not isinstance(other, PhotoRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.data == other.data
            and self.capture_time == other.capture_time
            and self.exif_location == other.exif_location
        )


@dataclass(frozen=True)
class PhotoCollection:
    event_id: str
    photos: tuple[PhotoRecord, ...]

    def __post_init__(self):
        if not self.photos:
            raise EmptyCollection("a photo collection needs at least one photo")
        ids = [p.id for p in self.photos]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate photo ids in {ids}")

    @property
    def ids(self) -> list[str]:
        return [p.id for p in self.photos]

    def exif_locations(self) -> list[GeoLocation]:
        return [p.exif_location for p in self.photos if p.exif_location is not None]


def _ratio(value) -> float:
    if isinstance(value, tuple) and len(value) == 2:
        num, den = value
        return float(num) / float(den)
    return float(value)


def dms_to_decimal(dms, ref: str | None) -> float:
    degrees, minutes, seconds = (_ratio(v) for v in dms)
    value = degrees + minutes / 60.0 + seconds / 3600.0
    if ref and ref.strip().upper()[:1] in ("S", "W"):
        value = -value
    return value


def _as_str(value) -> str | None:
    if value is None:
        return None
    if isinstance(value, bytes):
        value = value.decode("ascii", "ignore")
    return str(value).strip("\x00 ")


def extract_exif_location(data: bytes) -> GeoLocation | None:
    """Read the GPS IFD of an image container into signed decimal degrees.

    Returns ``None`` when there is no usable GPS block. Altitude defaults to 0
    and is negated when GPSAltitudeRef marks it as below sea level.
    """
    try:
        with Image.open(io.BytesIO(data)) as im:
            gps = im.getexif().get_ifd(GPS_IFD)
    except (UnidentifiedImageError, OSError, ValueError):
        return None
    if not gps or 2 not in gps or 4 not in gps:
        return None
    try:
        lat = dms_to_decimal(gps[2], _as_str(gps.get(1)))
        lon = dms_to_decimal(gps[4], _as_str(gps.get(3)))
        alt = _ratio(gps[6]) if 6 in gps else 0.0
        ref = gps.get(5, 0)
        if isinstance(ref, bytes):
            ref = ref[0] if ref else 0
        if int(ref) == 1:
            alt = -alt
        return GeoLocation(lat, lon, alt)
    except (TypeError, ValueError, ZeroDivisionError) as exc:
        logger.warning("ignoring malformed GPS block: %s", exc)
        return None


def _capture_time(im: Image.Image) -> datetime | None:
    exif = im.getexif()
    raw = exif.get_ifd(EXIF_IFD).get(_DATETIME_ORIGINAL) or exif.get(_DATETIME)
    if not raw:
        return None
    try:
        return datetime.strptime(_as_str(raw), "%Y:%m:%d %H:%M:%S")
    except ValueError:
        return None


def decode_photo(path: Path) -> PhotoRecord:
    data = path.read_bytes()
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            pixels = np.asarray(im.convert("RGB"))
            taken = _capture_time(im)
    except (UnidentifiedImageError, OSError, ValueError, SyntaxError) as exc:
        raise UndecodableImage(path.name, str(exc)) from exc
    if pixels.shape[0] < 1 or pixels.shape[1] < 1:
        raise UndecodableImage(path.name, "empty raster")
    return PhotoRecord(
        id=path.stem,
        data=data,
        pixels=pixels,
        capture_time=taken,
        exif_location=extract_exif_location(data),
    )


def load_collection(input_dir: str | Path, event_id: str | None = None, max_workers: int = 4) -> PhotoCollection:
    """Load every JPEG/PNG in ``input_dir``, ordered by filename."""
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise EmptyCollection(f"{input_dir} is not a directory")
    files = sorted(p for p in input_dir.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise EmptyCollection(f"no images in {input_dir}")
    if len(files) > MAX_PHOTOS:
        raise ValueError(f"{len(files)} photos exceed the limit of {MAX_PHOTOS}")
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        photos = tuple(pool.map(decode_photo, files))
    return PhotoCollection(event_id=event_id or input_dir.name, photos=photos)


def haversine_m(a: GeoLocation, b: GeoLocation) -> float:
    phi1, phi2 = math.radians(a.latitude), math.radians(b.latitude)
    dphi = phi2 - phi1
    dlmb = math.radians(b.longitude - a.longitude)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def aggregate_locations(locations: Sequence[GeoLocation]) -> GeoLocation:
    """Median-anchored outlier rejection followed by a component-wise mean.

    Points farther than 1 km from the per-coordinate median are dropped. If
    that drops everything, the single point nearest the median is kept.
    """
    if not locations:
        raise ValueError("aggregate_locations needs at least one location")
    lats = sorted(p.latitude for p in locations)
    lons = sorted(p.longitude for p in locations)
    median = GeoLocation(float(np.median(lats)), float(np.median(lons)), 0.0)
    dists = [haversine_m(median, p) for p in locations]
    survivors = [p for p, d in zip(locations, dists) if d <= OUTLIER_DISTANCE_M]
    if not survivors:
        nearest = min(range(len(locations)), key=lambda i: (dists[i], locations[i].latitude, locations[i].longitude))
        survivors = [locations[nearest]]
    # sort first so float summation order does not depend on input order
    survivors = sorted(survivors, key=lambda p: (p.latitude, p.longitude, p.altitude))
    n = len(survivors)
    return GeoLocation(
        math.fsum(p.latitude for p in survivors) / n,
        math.fsum(p.longitude for p in survivors) / n,
        math.fsum(p.altitude for p in survivors) / n,
    )
