"""Synthetic statistically stationary fields for tests and demos.

Both generators superpose narrow-band travelling structures whose complex
amplitudes follow independent Ornstein-Uhlenbeck processes, plus spatially
smooth broadband noise. The result is stationary, has a red spectrum and a
few energetic coherent structures, which is the regime reduced bases and
latent forecasters are meant for.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from .data import SnapshotMatrix

__all__ = ["ou_amplitudes", "make_wavepacket_field", "make_latlon_field", "uniform_latlon_grid"]


def ou_amplitudes(n_time: int, dt: float, tau: np.ndarray, rng) -> np.ndarray:
    """Unit-variance complex OU processes, one row per correlation time in ``tau``."""
    tau = np.atleast_1d(np.asarray(tau, dtype=np.float64))
    phi = np.exp(-dt / tau)[:, None]
    sig = np.sqrt(1.0 - phi**2)
    noise = (rng.standard_normal((tau.size, n_time)) + 1j * rng.standard_normal((tau.size, n_time))) / np.sqrt(2)
    a = np.empty((tau.size, n_time), dtype=np.complex128)
    a[:, 0] = noise[:, 0]
    for t in range(1, n_time):
        a[:, t] = phi[:, 0] * a[:, t - 1] + sig[:, 0] * noise[:, t]
    return a


def make_wavepacket_field(
    n_x: int = 88,
    n_r: int = 22,
    n_time: int = 1000,
    dt: float = 0.2,
    *,
    n_packets: int = 16,
    noise_level: float = 0.25,
    seed: int = 0,
) -> SnapshotMatrix:
    """Jet-like pressure surrogate on an ``n_r x n_x`` grid (rows r-major).

    Packet ``k`` oscillates at frequency ``f_k`` spread over the resolved
    band, travels downstream with wavenumber proportional to ``f_k``, has a
    Gaussian streamwise envelope and a radial profile peaking off the axis,
    and carries energy decaying like ``1 / (1 + (f_k / f_0)^2)``.
    """
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 20.0, n_x)
    r = np.linspace(0.0, 2.0, n_r)
    X, R = np.meshgrid(x, r)  # (n_r, n_x)
    t = np.arange(n_time) * dt
    f_nyq = 0.5 / dt
    freqs = np.sort(rng.uniform(0.03, 0.95, n_packets)) * f_nyq
    f0 = 0.15 * f_nyq
    amp = 1.0 / np.sqrt(1.0 + (freqs / f0) ** 2)
    taus = rng.uniform(8.0, 20.0, n_packets) / freqs  # a few periods of coherence
    A = ou_amplitudes(n_time, dt, taus, rng) * amp[:, None]
    field = np.zeros((n_r * n_x, n_time))
    for k in range(n_packets):
        alpha = 2 * np.pi * freqs[k] / rng.uniform(0.5, 0.8)  # phase speed below the jet velocity
        xc = rng.uniform(4.0, 14.0)
        width = rng.uniform(2.0, 5.0)
        rc = rng.uniform(0.3, 1.2)
        env = np.exp(-((X - xc) ** 2) / (2 * width**2)) * np.exp(-((R - rc) ** 2) / 0.3)
        shape = (env * np.exp(1j * alpha * X)).ravel()
        carrier = A[k] * np.exp(-2j * np.pi * freqs[k] * t)
        field += np.real(np.outer(shape, carrier))
    # broadband turbulence: a smooth random pattern convected downstream, so
    # that, as in a real jet, each frequency maps onto its own wavenumber
    u_c = 0.6
    dx = x[1] - x[0]
    n_xi = n_x + int(np.ceil(u_c * t[-1] / dx)) + 2
    pattern = gaussian_filter(rng.standard_normal((n_r, n_xi)), sigma=(1.5, 1.0))
    xi = np.arange(n_xi) * dx
    noise = np.empty((n_r * n_x, n_time))
    for j in range(n_time):
        shifted = x + (xi[-1] - x[-1]) - u_c * t[j]
        noise[:, j] = np.stack([np.interp(shifted, xi, row) for row in pattern]).ravel()
    noise *= np.exp(-((R - 0.8) ** 2) / 0.5).ravel()[:, None]
    noise += 0.05 * rng.standard_normal(noise.shape) * noise.std()
    noise *= noise_level * np.abs(field).std() / noise.std()
    field += noise
    grid = {"x": x.tolist(), "r": r.tolist()}
    return SnapshotMatrix(field, n_vars=1, dt=dt, grid=grid)


def uniform_latlon_grid(n_lat: int, n_lon: int) -> Tuple[np.ndarray, np.ndarray]:
    """Regular grid with poles included and longitudes covering ``[0, 360)``."""
    return np.linspace(-90.0, 90.0, n_lat), np.arange(n_lon) * (360.0 / n_lon)


def make_latlon_field(
    n_lat: int = 16,
    n_lon: int = 36,
    n_time: int = 4690,
    dt: float = 0.5,
    *,
    noise_level: float = 0.5,
    seed: int = 0,
) -> Tuple[SnapshotMatrix, np.ndarray, np.ndarray]:
    """Tropical-wave surrogate on a lat-lon grid (``dt`` in days).

    Superposes an annual cycle, an eastward intraseasonal wave (30-60 day
    periods, zonal wavenumbers 1-2) confined near the equator, faster
    westward waves, and smooth noise on the global grid of
    :func:`uniform_latlon_grid`.
    """
    rng = np.random.default_rng(seed)
    lats, lons = uniform_latlon_grid(n_lat, n_lon)
    LAT, LON = np.meshgrid(np.deg2rad(lats), np.deg2rad(lons), indexing="ij")
    t = np.arange(n_time) * dt
    eq = np.exp(-((LAT / np.deg2rad(15.0)) ** 2))
    field = np.zeros((n_lat * n_lon, n_time))
    # annual cycle, antisymmetric about the equator
    field += np.outer((np.sin(LAT) * np.cos(LON)).ravel(), np.cos(2 * np.pi * t / 365.0))
    waves = [(45.0, 1, 1.0), (35.0, 2, 0.6), (60.0, 1, 0.5), (8.0, -3, 0.3), (5.0, -4, 0.2)]
    amps = ou_amplitudes(n_time, dt, np.array([3 * p for p, _, _ in waves]), rng)
    for (period, m, a), env in zip(waves, amps):
        shape = (eq * np.exp(1j * m * LON)).ravel()
        field += a * np.real(np.outer(shape, env * np.exp(-2j * np.pi * t / period)))
    noise = gaussian_filter(rng.standard_normal((n_time, n_lat, n_lon)), sigma=(0.0, 1.0, 1.0), mode=("nearest", "nearest", "wrap"))
    field += noise_level * np.abs(field).std() / noise.std() * noise.reshape(n_time, -1).T
    return SnapshotMatrix(field, dt=dt, grid={"lat": lats.tolist(), "lon": lons.tolist()}), lats, lons
