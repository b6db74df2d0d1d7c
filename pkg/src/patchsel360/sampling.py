"""Patch sampling for equirectangular 360-degree images.

Three strategies produce a :class:`SamplingPlan`:

* ``erp_grid`` -- non-overlapping pixel tiles on the ERP plane;
* ``latitude_plan``/``latitude_locations`` -- spherical bands that double
  in angular size toward the poles, denser at the equator;
* ``scanpath_locations`` -- one spherical patch per gaze fixation.

``extract_patch`` realizes a location as a fixed-size pixel patch, using
a gnomonic (rectilinear) projection with bilinear resampling for
spherical locations.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintError, InputError, ShapeError

PIXEL_RECT = "pixel-rect"
SPHERICAL = "spherical"

DEFAULT_PATCH_SIZE = 128
DEFAULT_SP_FOV = 30.0

SCANPATH_CSV_HEADER = ["image_id", "scanpath_id", "fixation_index", "t",
                       "lat_deg", "lon_deg"]


@dataclass
class ErpImage:
    """Equirectangular image: (height, width, 3) uint8 or float pixels."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 3 or p.shape[2] != 3:
            raise ShapeError(f"expected (H, W, 3) pixels, got {p.shape}")
        self.pixels = p
        if self.width != 2 * self.height:
            warnings.warn(
                f"image {self.width}x{self.height} is not 2:1; "
                "treating it as equirectangular anyway"
            )

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass(frozen=True)
class PatchLocation:
    """One patch: either a pixel rectangle or a spherical viewport."""

    kind: str
    u: int = 0  # pixel-rect top-left column
    v: int = 0  # pixel-rect top-left row
    size: int = 0  # pixel-rect side length
    lat: float = 0.0  # spherical center latitude, degrees
    lon: float = 0.0  # spherical center longitude, degrees
    extent: float = 0.0  # spherical angular width, degrees
    level: int = 0  # latitude band index (0 for ERP/SP)

    def __post_init__(self):
        if self.kind == PIXEL_RECT:
            if self.size <= 0 or self.u < 0 or self.v < 0:
                raise InputError(f"invalid pixel rectangle {self}")
        elif self.kind == SPHERICAL:
            if not -90.0 <= self.lat <= 90.0:
                raise InputError(f"latitude {self.lat} outside [-90, 90]")
            if not -180.0 <= self.lon < 180.0:
                raise InputError(f"longitude {self.lon} outside [-180, 180)")
            if not 0.0 < self.extent < 180.0:
                raise InputError(f"angular extent {self.extent} outside (0, 180)")
        else:
            raise InputError(f"unknown location kind {self.kind!r}")

    def to_dict(self):
        if self.kind == PIXEL_RECT:
            return {"kind": self.kind, "u": self.u, "v": self.v,
                    "size": self.size, "level": self.level}
        return {"kind": self.kind, "lat": self.lat, "lon": self.lon,
                "extent": self.extent, "level": self.level}

    @classmethod
    def from_dict(cls, d):
        if d.get("kind") == PIXEL_RECT:
            return cls(kind=PIXEL_RECT, u=d["u"], v=d["v"], size=d["size"],
                       level=d.get("level", 0))
        return cls(kind=SPHERICAL, lat=d["lat"], lon=d["lon"],
                   extent=d["extent"], level=d.get("level", 0))


@dataclass
class SamplingPlan:
    """Ordered patch locations plus the parameters that produced them."""

    method: str  # ERP | LAT | SP
    locations: list
    params: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "method": self.method,
            "params": dict(self.params),
            "locations": [loc.to_dict() for loc in self.locations],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            method=d["method"],
            locations=[PatchLocation.from_dict(x) for x in d["locations"]],
            params=dict(d.get("params", {})),
        )


def erp_grid(width, height, patch_size=DEFAULT_PATCH_SIZE):
    """Non-overlapping patch_size x patch_size tiling of the ERP plane.

    Remainder pixels at the right/bottom edges are discarded. An image
    smaller than one patch yields an empty plan with a warning.
    """
    if width < 1 or height < 1 or patch_size < 1:
        raise InputError("width, height and patch_size must be positive")
    cols = width // patch_size
    rows = height // patch_size
    if cols == 0 or rows == 0:
        warnings.warn(
            f"image {width}x{height} smaller than one {patch_size}px patch; "
            "empty plan"
        )
        locations = []
    else:
        locations = [
            PatchLocation(kind=PIXEL_RECT, u=i * patch_size, v=j * patch_size,
                          size=patch_size)
            for j in range(rows)
            for i in range(cols)
        ]
    return SamplingPlan(
        method="ERP",
        locations=locations,
        params={"width": width, "height": height, "patch_size": patch_size},
    )


@dataclass(frozen=True)
class LatitudeBand:
    """One band of a hemisphere: [theta_min, theta_min + extent] degrees."""

    level: int
    theta_min: float
    extent: float  # band width == patch angular size
    lon_count: int


@dataclass(frozen=True)
class LatitudePlanSpec:
    """Validated band structure for latitude-based sampling."""

    alpha0: float
    n_levels: int  # N: last doubling level before the polar cap
    polar_latitude: float  # L_P
    bands: tuple  # per-hemisphere LatitudeBand entries, equator outward


def _is_integral(x, tol=1e-9):
    return abs(x - round(x)) <= tol


def latitude_plan(alpha0):
    """Resolve the band structure implied by an initial latitude alpha0.

    Requires 360/alpha0 and 360/(alpha0 * 2^N) to be integers, and an
    N >= 0 with 2^(N+1) * alpha0 + L_P = 90 and 0 <= L_P < alpha0 * 2^N.
    Raises :class:`ConstraintError` listing every failed condition.
    """
    if alpha0 <= 0:
        raise InputError("alpha0 must be > 0")
    failures = []
    if not _is_integral(360.0 / alpha0):
        failures.append(f"360/{alpha0:g} is not an integer")

    found = None
    n = 0
    while True:
        used = (2.0 ** (n + 1)) * alpha0
        if used > 90.0 + 1e-9:
            failures.append(
                f"N={n}: bands span {used:g} degrees, overshooting 90"
            )
            break
        l_p = 90.0 - used
        cap = alpha0 * 2.0**n
        if l_p >= cap:
            failures.append(
                f"N={n}: polar region L_P={l_p:g} is not smaller than the "
                f"last band size {cap:g}"
            )
            n += 1
            continue
        if not _is_integral(360.0 / cap):
            failures.append(
                f"N={n}: 360/({alpha0:g}*2^{n}) is not an integer"
            )
            n += 1
            continue
        found = (n, l_p)
        break

    if failures and (found is None or not _is_integral(360.0 / alpha0)):
        raise ConstraintError(
            f"alpha0={alpha0:g} admits no valid latitude plan: "
            + "; ".join(failures),
            failures=failures,
        )

    n_levels, l_p = found
    extents = [alpha0] + [alpha0 * 2.0**b for b in range(n_levels + 1)]
    bands = []
    theta = 0.0
    for level, extent in enumerate(extents):
        bands.append(
            LatitudeBand(
                level=level,
                theta_min=theta,
                extent=extent,
                lon_count=int(round(360.0 / extent)),
            )
        )
        theta += extent
    return LatitudePlanSpec(
        alpha0=alpha0,
        n_levels=n_levels,
        polar_latitude=l_p,
        bands=tuple(bands),
    )


def latitude_locations(plan, include_polar_caps=True):
    """Spherical patch locations for both hemispheres of a latitude plan.

    Bands mirror across the equator; each polar cap yields one patch
    centered on the pole with angular extent 2 * L_P (switchable off).
    """
    if not isinstance(plan, LatitudePlanSpec):
        plan = latitude_plan(plan)
    locations = []
    for sign in (1.0, -1.0):
        for band in plan.bands:
            center_lat = sign * (band.theta_min + band.extent / 2.0)
            for j in range(band.lon_count):
                lon = -180.0 + (j + 0.5) * band.extent
                locations.append(
                    PatchLocation(kind=SPHERICAL, lat=center_lat, lon=lon,
                                  extent=band.extent, level=band.level)
                )
        if include_polar_caps and plan.polar_latitude > 0:
            locations.append(
                PatchLocation(kind=SPHERICAL, lat=sign * 90.0, lon=0.0,
                              extent=2.0 * plan.polar_latitude,
                              level=plan.n_levels + 2)
            )
    return SamplingPlan(
        method="LAT",
        locations=locations,
        params={
            "alpha0": plan.alpha0,
            "n_levels": plan.n_levels,
            "polar_latitude": plan.polar_latitude,
            "include_polar_caps": bool(include_polar_caps),
        },
    )


def scanpath_locations(scanpaths, fov=DEFAULT_SP_FOV):
    """One spherical patch per fixation, centered on the fixation point.

    ``scanpaths`` is a sequence of fixation sequences, each fixation a
    (lat_deg, lon_deg) pair. ``fov`` is the patch angular width.
    """
    if not 0.0 < fov <= 120.0:
        raise InputError(f"fov {fov} outside (0, 120]")
    locations = []
    for sp_idx, fixations in enumerate(scanpaths):
        for fx_idx, (lat, lon) in enumerate(fixations):
            if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon < 180.0):
                raise InputError(
                    f"scanpath {sp_idx} fixation {fx_idx}: "
                    f"({lat}, {lon}) outside coordinate ranges"
                )
            # Longitude is degenerate at the poles; pin it to 0 there so
            # identical pole fixations compare equal.
            if abs(lat) == 90.0:
                lon = 0.0
            locations.append(
                PatchLocation(kind=SPHERICAL, lat=float(lat), lon=float(lon),
                              extent=float(fov))
            )
    return SamplingPlan(
        method="SP",
        locations=locations,
        params={"fov": float(fov), "scanpath_count": len(list(scanpaths))},
    )


def read_scanpaths(path):
    """Parse the scanpath CSV into {image_id: [scanpath, ...]}.

    Each scanpath is the fixation list [(lat, lon), ...] ordered by
    fixation_index. Timestamps are parsed and ignored by sampling.
    """
    per_image = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != SCANPATH_CSV_HEADER:
            raise InputError(
                f"scanpath CSV header {reader.fieldnames} != "
                f"{SCANPATH_CSV_HEADER}"
            )
        for row in reader:
            image = row["image_id"]
            sp = row["scanpath_id"]
            entry = per_image.setdefault(image, {}).setdefault(sp, [])
            entry.append(
                (int(row["fixation_index"]), float(row["t"]),
                 float(row["lat_deg"]), float(row["lon_deg"]))
            )
    result = {}
    for image, paths in per_image.items():
        ordered = []
        for sp in sorted(paths):
            fixations = sorted(paths[sp])
            ordered.append([(lat, lon) for _, _, lat, lon in fixations])
        result[image] = ordered
    return result


def _unit_vector(lat_rad, lon_rad):
    """Sphere direction: y up, z toward (lat=0, lon=0)."""
    cl = np.cos(lat_rad)
    return np.stack(
        [cl * np.sin(lon_rad), np.sin(lat_rad), cl * np.cos(lon_rad)],
        axis=-1,
    )


def bilinear_sample(image, lat_deg, lon_deg):
    """Bilinearly sample ERP pixels at spherical coordinates (degrees).

    Longitude wraps around; latitude clamps at the poles. Returns float64
    samples of shape lat_deg.shape + (3,).
    """
    pixels = image.pixels.astype(np.float64, copy=False)
    h, w = image.height, image.width
    x = (np.asarray(lon_deg) + 180.0) / 360.0 * w - 0.5
    y = (90.0 - np.asarray(lat_deg)) / 180.0 * h - 0.5

    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0

    x0w = np.mod(x0, w)
    x1w = np.mod(x0 + 1, w)
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)

    tl = pixels[y0c, x0w]
    tr = pixels[y0c, x1w]
    bl = pixels[y1c, x0w]
    br = pixels[y1c, x1w]
    top = tl + (tr - tl) * fx[..., None]
    bot = bl + (br - bl) * fx[..., None]
    return top + (bot - top) * fy[..., None]


def gnomonic_grid(lat_deg, lon_deg, extent_deg, out_size):
    """Spherical coordinates (degrees) of an out_size^2 gnomonic grid.

    The grid is the tangent plane at the center direction, spanning
    ``extent_deg`` horizontally and vertically, rows running north to
    south and columns west to east.
    """
    lat0 = np.radians(lat_deg)
    lon0 = np.radians(lon_deg)
    center = _unit_vector(lat0, lon0)
    east = np.array([np.cos(lon0), 0.0, -np.sin(lon0)])
    north = np.array(
        [-np.sin(lat0) * np.sin(lon0), np.cos(lat0), -np.sin(lat0) * np.cos(lon0)]
    )

    half = np.tan(np.radians(extent_deg) / 2.0)
    coords = ((np.arange(out_size) + 0.5) / out_size * 2.0 - 1.0) * half
    xs = coords[None, :]  # east offset per column
    ys = -coords[:, None]  # north offset per row (row 0 = north edge)

    vec = (
        center[None, None, :]
        + xs[..., None] * east[None, None, :]
        + ys[..., None] * north[None, None, :]
    )
    vec /= np.linalg.norm(vec, axis=-1, keepdims=True)

    lat = np.degrees(np.arcsin(np.clip(vec[..., 1], -1.0, 1.0)))
    lon = np.degrees(np.arctan2(vec[..., 0], vec[..., 2]))
    return lat, lon


def extract_patch(image, loc, out_size=DEFAULT_PATCH_SIZE):
    """Realize a patch location as an (out_size, out_size, 3) array.

    Pixel rectangles are copied directly (bit-exact, then resized only if
    out_size differs from the stored size, which is rejected). Spherical
    locations are rendered by gnomonic projection with bilinear ERP
    sampling; uint8 inputs are rounded back to uint8.
    """
    if not isinstance(image, ErpImage):
        image = ErpImage(np.asarray(image))
    if loc.kind == PIXEL_RECT:
        if loc.u + loc.size > image.width or loc.v + loc.size > image.height:
            raise InputError(f"pixel rectangle {loc} exceeds image bounds")
        if loc.size != out_size:
            raise InputError(
                f"pixel-rect size {loc.size} != requested output {out_size}"
            )
        return image.pixels[loc.v:loc.v + loc.size, loc.u:loc.u + loc.size].copy()

    lat, lon = gnomonic_grid(loc.lat, loc.lon, loc.extent, out_size)
    patch = bilinear_sample(image, lat, lon)
    if image.pixels.dtype == np.uint8:
        return np.clip(np.rint(patch), 0, 255).astype(np.uint8)
    return patch
