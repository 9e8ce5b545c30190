"""Synthetic clients whose images differ only in their amplitude spectra.

Each sample is a rectangle (label 0) or an ellipse (label 1) of matched area,
rendered in grayscale and replicated over channels with per-channel pixel
noise. A client's appearance shift is then applied purely to the amplitude
spectrum, so phase (and therefore shape) is untouched.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .fourier import decompose, dft2, idft2, is_power_of_two, recompose

MAX_ATTEMPTS = 10


@dataclass(frozen=True)
class ShiftProfile:
    """Amplitude-only appearance shift.

    ``band_gains`` holds ``(r_lo, r_hi, gain)`` triples; frequencies whose
    radius in cycles/pixel lies in ``[r_lo, r_hi)`` have their amplitude
    multiplied by ``gain``. ``brightness_offset`` is in pixel-intensity
    units, i.e. it moves every pixel's mean by that amount.
    """

    contrast_gain: float = 1.0
    brightness_offset: float = 0.0
    band_gains: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "band_gains", tuple(tuple(float(v) for v in b) for b in self.band_gains)
        )
        if self.contrast_gain <= 0:
            raise ValueError("contrast_gain must be positive")
        for lo, hi, gain in self.band_gains:
            if gain <= 0 or hi <= lo or lo < 0:
                raise ValueError(f"invalid band gain ({lo}, {hi}, {gain})")

    @property
    def is_identity(self) -> bool:
        return self.contrast_gain == 1.0 and self.brightness_offset == 0.0 and not self.band_gains


# Used when a config names no per-client profiles: one clean site, one
# washed-out and brighter, one strongly over-exposed in contrast, and one
# heavily blurred (edge frequencies kept at 3% amplitude).
DEFAULT_PROFILES = (
    ShiftProfile(),
    ShiftProfile(contrast_gain=0.3, brightness_offset=0.35),
    ShiftProfile(contrast_gain=8.0, brightness_offset=-0.15),
    ShiftProfile(band_gains=((0.06, 0.75, 0.03),)),
)


@dataclass(frozen=True)
class DatasetSpec:
    num_clients: int = 4
    samples_per_client: int = 200
    height: int = 32
    width: int = 32
    channels: int = 3
    shift_profiles: tuple[ShiftProfile, ...] = ()
    noise_std: float = 0.05
    label_rule: str = "shape"
    paired_content: bool = False
    eval_fraction: float = 0.2

    def __post_init__(self):
        if self.num_clients < 1 or self.samples_per_client < 2 or self.channels < 1:
            raise ValueError("num_clients, samples_per_client and channels must be positive")
        if not (is_power_of_two(self.height) and is_power_of_two(self.width)):
            raise ValueError("height and width must be powers of two")
        if self.label_rule != "shape":
            raise ValueError(f"unknown label_rule {self.label_rule!r}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        if not 0.0 < self.eval_fraction < 1.0:
            raise ValueError("eval_fraction must lie in (0, 1)")
        if self.shift_profiles and len(self.shift_profiles) != self.num_clients:
            raise ValueError(
                f"{len(self.shift_profiles)} shift profiles for {self.num_clients} clients"
            )

    def profiles(self) -> tuple[ShiftProfile, ...]:
        if self.shift_profiles:
            return self.shift_profiles
        return tuple(
            itertools.islice(itertools.cycle(DEFAULT_PROFILES), self.num_clients)
        )

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)


@dataclass
class ClientDataset:
    client_id: int
    images: np.ndarray  # (n, H, W, C)
    labels: np.ndarray  # (n,)
    train_idx: np.ndarray
    eval_idx: np.ndarray
    raw_images: np.ndarray | None = field(default=None, repr=False)  # pre-shift renders

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])


def radial_frequency(height: int, width: int) -> np.ndarray:
    """Radius of each DFT cell in cycles/pixel, natural (unshifted) layout."""
    fu = np.fft.fftfreq(height)[:, None]
    fv = np.fft.fftfreq(width)[None, :]
    return np.sqrt(fu**2 + fv**2)


def gain_map(profile: ShiftProfile, height: int, width: int) -> np.ndarray:
    radius = radial_frequency(height, width)
    gains = np.full((height, width), profile.contrast_gain)
    for lo, hi, g in profile.band_gains:
        gains[(radius >= lo) & (radius < hi)] *= g
    gains[0, 0] = 1.0
    return gains


def apply_shift(images: np.ndarray, profile: ShiftProfile) -> np.ndarray:
    """Rescale amplitude annuli and offset the DC term; phase is kept."""
    if profile.is_identity:
        return np.array(images, dtype=np.float64)
    h, w = images.shape[-3], images.shape[-2]
    amp, phase = decompose(dft2(images))
    amp = amp * gain_map(profile, h, w)[:, :, None]
    # DC of a real image is real, so "amplitude + offset" means shifting
    # the signed DC value; that keeps the offset a pure brightness change.
    if profile.brightness_offset:
        dc = amp[..., 0, 0, :] * np.cos(phase[..., 0, 0, :]) + profile.brightness_offset * h * w
        amp[..., 0, 0, :] = np.abs(dc)
        phase[..., 0, 0, :] = np.where(dc < 0, np.pi, 0.0)
    return idft2(recompose(amp, phase))


def render_shapes(rng: np.random.Generator, n: int, spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` labelled shape images (before any shift)."""
    h, w, c = spec.image_shape
    yy, xx = np.meshgrid(np.arange(h) + 0.5, np.arange(w) + 0.5, indexing="ij")
    labels = rng.integers(0, 2, size=n)
    images = np.empty((n, h, w, c))
    for i in range(n):
        cy = rng.uniform(0.45, 0.55) * h
        cx = rng.uniform(0.45, 0.55) * w
        # narrow size range: the class cue must survive amplitude averaging
        ry = rng.uniform(0.25, 0.3) * h
        rx = rng.uniform(0.25, 0.3) * w
        bg = rng.uniform(0.1, 0.3)
        fg = rng.uniform(0.6, 0.9)
        if labels[i] == 0:
            mask = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        else:
            # same area as the rectangle: pi*a*b == 4*ry*rx
            s = np.sqrt(4.0 / np.pi)
            mask = ((yy - cy) / (ry * s)) ** 2 + ((xx - cx) / (rx * s)) ** 2 <= 1.0
        gray = np.where(mask, fg, bg)
        images[i] = gray[:, :, None] + spec.noise_std * rng.standard_normal((h, w, c))
    return images, labels


def _split(rng: np.random.Generator, labels: np.ndarray, eval_fraction: float):
    n = labels.shape[0]
    n_eval = max(1, int(round(n * eval_fraction)))
    perm = rng.permutation(n)
    return np.sort(perm[n_eval:]), np.sort(perm[:n_eval])


def _valid(labels: np.ndarray, train_idx: np.ndarray, eval_idx: np.ndarray) -> bool:
    return all(len(np.unique(labels[idx])) == 2 for idx in (train_idx, eval_idx))


def generate_clients(spec: DatasetSpec, seed: int) -> list[ClientDataset]:
    """Build one dataset per client; deterministic in ``(spec, seed)``.

    If any client ends up with a class missing from either split, the whole
    set is regenerated under a perturbed seed, at most ``MAX_ATTEMPTS`` times.
    """
    profiles = spec.profiles()
    for attempt in range(MAX_ATTEMPTS):
        clients = []
        for cid, profile in enumerate(profiles):
            content_key = 0 if spec.paired_content else cid + 1
            rng = np.random.default_rng([seed, attempt, content_key])
            raw, labels = render_shapes(rng, spec.samples_per_client, spec)
            train_idx, eval_idx = _split(rng, labels, spec.eval_fraction)
            if not _valid(labels, train_idx, eval_idx):
                break
            clients.append(
                ClientDataset(cid, apply_shift(raw, profile), labels, train_idx, eval_idx, raw)
            )
        else:
            return clients
    raise ValueError(f"could not draw both classes in every split after {MAX_ATTEMPTS} attempts")


def mean_amplitude(images: np.ndarray) -> np.ndarray:
    return decompose(dft2(images)).amplitude.mean(axis=0)


def heterogeneity_metric(datasets: list[ClientDataset]) -> float:
    """Mean pairwise distance of client mean-amplitude grids over the grand-mean norm."""
    if len(datasets) < 2:
        raise ValueError("heterogeneity needs at least two clients")
    means = [mean_amplitude(d.images) for d in datasets]
    grand = np.mean(means, axis=0)
    dists = [np.linalg.norm(a - b) for a, b in itertools.combinations(means, 2)]
    return float(np.mean(dists) / np.linalg.norm(grand))
