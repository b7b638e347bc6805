"""Diffraction-limited projection of binary micromirror patterns onto the lattice.

A superpixel is a block of device pixels switched together; each on-pixel
contributes a coherent Airy-type field at the atom plane, and the projected
potential is the squared modulus of the summed field, scaled so that one
isolated superpixel of the configured size peaks at `power` recoil energies.
Blue-detuned light is repulsive (+), red-detuned attractive (-).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, replace

import numpy as np
from scipy.special import j1, jn_zeros

from .lattice import LatticeConfig, HubbardParams, BiasVector

#: First root of the Bessel function J1; sets the Airy radius nu = 2 pi r NA / lambda.
J1_FIRST_ZERO = float(jn_zeros(1, 1)[0])

COLOR_SIGNS = {"blue": +1.0, "red": -1.0}
COLOR_WAVELENGTHS = {"blue": 460e-9, "red": 940e-9}


class GridMarginError(ValueError):
    """The evaluation grid does not cover the chain plus the required margin."""


class PatternOverlapError(ValueError):
    """Two superpixels occupy overlapping device columns."""


class ExtractionError(RuntimeError):
    """Fewer potential minima than chain sites (projection destroyed a well)."""


@dataclass(frozen=True)
class OpticsConfig:
    """Projection-system parameters for one detuning color."""

    na: float = 0.68
    wavelength: float = 460e-9
    color: str = "blue"
    pixel_pitch: float = 80e-9           # effective on-pixel size at the atom plane
    grid_step: float = 532e-9 / 64
    focal_length: float = 0.02
    fresnel_number: float = 100.0
    power: float = 1.0                   # peak single-superpixel potential, in E_R

    def __post_init__(self):
        if not 0 < self.na < 0.7:
            raise ValueError("NA must lie in (0, 0.7) for the scalar Airy model")
        if self.color not in COLOR_SIGNS:
            raise ValueError(f"color must be one of {sorted(COLOR_SIGNS)}")
        if self.pixel_pitch >= 0.61 * self.wavelength / self.na:
            raise ValueError("pixel pitch must stay below the diffraction-limited spot")
        if self.grid_step <= 0:
            raise ValueError("grid step must be positive")

    @property
    def color_sign(self) -> float:
        return COLOR_SIGNS[self.color]

    @property
    def first_zero_radius(self) -> float:
        """Radius of the first intensity null, 3.8317 lambda / (2 pi NA)."""
        return J1_FIRST_ZERO * self.wavelength / (2 * math.pi * self.na)

    @classmethod
    def blue(cls, **kwargs) -> "OpticsConfig":
        return cls(wavelength=COLOR_WAVELENGTHS["blue"], color="blue", **kwargs)

    @classmethod
    def red(cls, **kwargs) -> "OpticsConfig":
        return cls(wavelength=COLOR_WAVELENGTHS["red"], color="red", **kwargs)

    def with_power(self, power: float) -> "OpticsConfig":
        return replace(self, power=power)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "OpticsConfig":
        return cls(**data)


def psf_field(optics: OpticsConfig, r) -> np.ndarray:
    """Coherent point-spread field 2 J1(nu)/nu * exp(i phi) at radius r (unit peak).

    nu = 2 pi r NA / lambda and phi = -k f + nu^2 / (4 N_F) + pi/2; the ratio
    J1(nu)/nu takes its limit 1/2 at the axis, so |field(0)|^2 = 1.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    nu = 2 * math.pi * r * optics.na / optics.wavelength
    amp = np.ones_like(nu)
    big = nu > 1e-9
    amp[big] = 2 * j1(nu[big]) / nu[big]
    k = 2 * math.pi / optics.wavelength
    phi = -k * optics.focal_length + nu ** 2 / (4 * optics.fresnel_number) + math.pi / 2
    return amp * np.exp(1j * phi)


def defocus_factor(z: float, optics: OpticsConfig) -> float:
    """On-axis intensity attenuation [sin(xi/4)/(xi/4)]^2 for defocus z.

    xi = pi z NA^2 / (2 lambda); even in z and equal to 1 in focus.  Valid
    for defocus small compared to the focal length (|z| of order lambda).
    """
    xi = math.pi * z * optics.na ** 2 / (2 * optics.wavelength)
    return float(np.sinc(xi / (4 * math.pi)) ** 2)


@dataclass(frozen=True)
class DMDPattern:
    """Binary superpixel pattern: integer center positions on the device x-axis.

    Index units are the atom-plane pixel pitch with the origin at the array
    center.  A symmetric pattern is invariant under x -> -x.
    """

    indices: tuple
    height: int = 1
    width: int = 1
    symmetric: bool = True

    def __init__(self, indices, height: int = 1, width: int = 1, symmetric: bool = True):
        idx = tuple(sorted(int(i) for i in indices))
        if len(set(idx)) != len(idx):
            raise ValueError("superpixel indices must be unique")
        if height < 1 or width < 1:
            raise ValueError("superpixel size must be at least 1x1")
        if symmetric and idx != tuple(sorted(-i for i in idx)):
            raise ValueError("pattern marked symmetric but indices are not mirror symmetric")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "height", int(height))
        object.__setattr__(self, "width", int(width))
        object.__setattr__(self, "symmetric", bool(symmetric))

    @property
    def count(self) -> int:
        return len(self.indices)

    def to_dict(self) -> dict:
        return {"width": self.width, "height": self.height, "count": self.count,
                "indices": list(self.indices), "symmetric": self.symmetric}

    @classmethod
    def from_dict(cls, data: dict) -> "DMDPattern":
        return cls(indices=data["indices"], height=data["height"],
                   width=data["width"], symmetric=data.get("symmetric", True))


def _superpixel_offsets(pattern: DMDPattern, pitch: float):
    """Pixel-center offsets of one superpixel relative to its index position."""
    xs = (np.arange(pattern.width) - (pattern.width - 1) / 2) * pitch
    ys = (np.arange(pattern.height) - (pattern.height - 1) / 2) * pitch
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return gx.ravel(), gy.ravel()


def expand_pattern(pattern: DMDPattern, pitch: float) -> np.ndarray:
    """Atom-plane (x, y) coordinates of every on-pixel, one row per pixel."""
    idx = np.asarray(pattern.indices, dtype=float)
    if len(idx) > 1 and np.min(np.diff(np.sort(idx))) < pattern.width:
        raise PatternOverlapError("superpixels closer than their width overlap")
    if len(idx) == 0:
        return np.zeros((0, 2))
    ox, oy = _superpixel_offsets(pattern, pitch)
    coords = []
    for i in idx:
        coords.append(np.column_stack([i * pitch + ox, oy]))
    return np.concatenate(coords, axis=0)


@dataclass(frozen=True)
class PotentialProfile:
    """Potential samples (units of E_R) on a uniform x grid (meters)."""

    x: np.ndarray
    values: np.ndarray
    kind: str = "projection"

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if x.shape != v.shape or x.ndim != 1:
            raise ValueError("grid and values must be matching 1-D arrays")
        if len(x) >= 3:
            steps = np.diff(x)
            if np.max(np.abs(steps - steps[0])) > 1e-9 * abs(steps[0]):
                raise ValueError("grid must be uniform")
        if not np.all(np.isfinite(v)):
            raise ValueError("potential values must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", v)

    @property
    def step(self) -> float:
        return float(self.x[1] - self.x[0])


def make_chain_grid(lattice: LatticeConfig, n_sites: int, optics: OpticsConfig,
                    margin_radii: float = 3.0) -> np.ndarray:
    """Uniform grid covering the chain wells plus a PSF-tail margin."""
    sites = lattice.site_positions(n_sites)
    half = max(abs(sites[0]), abs(sites[-1])) + lattice.spacing / 2 \
        + margin_radii * optics.first_zero_radius
    n = int(math.ceil(half / optics.grid_step))
    return np.arange(-n, n + 1) * optics.grid_step


def _coherent_intensity(coords: np.ndarray, optics: OpticsConfig,
                        x_grid: np.ndarray) -> np.ndarray:
    """|sum of per-pixel fields|^2 along the chain line y = 0, unit pixel peak."""
    if len(coords) == 0:
        return np.zeros_like(x_grid)
    dx = x_grid[None, :] - coords[:, 0][:, None]
    r = np.hypot(dx, coords[:, 1][:, None])
    field = psf_field(optics, r).sum(axis=0)
    return np.abs(field) ** 2


def single_superpixel_peak(pattern: DMDPattern, optics: OpticsConfig) -> float:
    """Unit-amplitude peak intensity of one isolated superpixel (at its center)."""
    ox, oy = _superpixel_offsets(pattern, optics.pixel_pitch)
    field = psf_field(optics, np.hypot(ox, oy)).sum()
    return float(abs(field) ** 2)


def project_intensity(pattern: DMDPattern, optics: OpticsConfig, x_grid,
                      chain_extent=None) -> PotentialProfile:
    """Projected potential of a pattern along the chain line, in units of E_R.

    The coherent field is summed pixel by pixel directly on the grid (exact
    for the Airy model, no convolution grid needed) and normalized so an
    isolated superpixel of the configured size peaks at `optics.power` E_R;
    the detuning sign turns intensity into a repulsive or attractive
    potential.  When `chain_extent = (lo, hi)` is given, the grid must cover
    it with three Airy radii to spare on both sides.
    """
    x_grid = np.asarray(x_grid, dtype=float)
    if chain_extent is not None:
        margin = 3.0 * optics.first_zero_radius
        lo, hi = chain_extent
        if x_grid[0] > lo - margin or x_grid[-1] < hi + margin:
            raise GridMarginError(
                f"grid [{x_grid[0]:.3e}, {x_grid[-1]:.3e}] lacks a {margin:.3e} m "
                f"margin around the chain [{lo:.3e}, {hi:.3e}]")
    coords = expand_pattern(pattern, optics.pixel_pitch)
    intensity = _coherent_intensity(coords, optics, x_grid)
    if len(coords):
        intensity *= optics.power / single_superpixel_peak(pattern, optics)
    values = optics.color_sign * intensity
    return PotentialProfile(x=x_grid, values=values, kind="projection")


def lattice_profile(lattice: LatticeConfig, zeta: float, x_grid) -> PotentialProfile:
    """Bare lattice zeta cos(2 k x + phase) in units of E_R."""
    x_grid = np.asarray(x_grid, dtype=float)
    values = zeta * np.cos(2 * lattice.wavenumber * x_grid + lattice.phase)
    return PotentialProfile(x=x_grid, values=values, kind="lattice")


def total_potential(lattice: LatticeConfig, zeta: float,
                    projection: PotentialProfile) -> PotentialProfile:
    """Lattice plus projected potential on the projection's grid."""
    base = lattice_profile(lattice, zeta, projection.x)
    return PotentialProfile(x=projection.x, values=base.values + projection.values,
                            kind="total")


@dataclass(frozen=True)
class ExtractionResult:
    """Per-well minima of the total potential and the biases they induce."""

    bias: BiasVector
    positions: np.ndarray       # refined minimum location per well, meters
    depths: np.ndarray          # potential at each minimum, units of E_R


def extract_biases(total: PotentialProfile, lattice: LatticeConfig, zeta: float,
                   n_sites: int, params: HubbardParams) -> ExtractionResult:
    """Locate the chain's potential minima and form normalized biases.

    Each lattice period hosting the chain is searched for the minimum of the
    total potential; a three-point parabola through the grid minimum removes
    the grid quantization.  delta_j = (depth_{j+1} - depth_j) / U.  A grid
    minimum landing on a window edge means the projection destroyed that
    well, which raises :class:`ExtractionError`.  Biases with |delta| >= 1
    are returned for diagnostics; the dynamics reject them separately.
    """
    sites = lattice.site_positions(n_sites)
    x, v = total.x, total.values
    half = lattice.spacing / 2
    positions = np.empty(n_sites)
    depths = np.empty(n_sites)
    for m, xm in enumerate(sites):
        sel = np.nonzero(np.abs(x - xm) <= half)[0]
        if len(sel) < 3:
            raise ExtractionError(f"window around site {m + 1} has too few grid points")
        local = v[sel]
        i = int(np.argmin(local))
        if i == 0 or i == len(sel) - 1:
            raise ExtractionError(
                f"no interior potential minimum in the period of site {m + 1}")
        j = sel[i]
        vm, v0, vp = v[j - 1], v[j], v[j + 1]
        curv = vm - 2 * v0 + vp
        if curv <= 0:
            raise ExtractionError(f"degenerate curvature at site {m + 1}")
        offset = 0.5 * (vm - vp) / curv * total.step
        positions[m] = x[j] + offset
        depths[m] = v0 - (vm - vp) ** 2 / (8 * curv)
    deltas = np.diff(depths) / params.U
    return ExtractionResult(bias=BiasVector(deltas), positions=positions, depths=depths)
