"""Independent-spin reference model, angle spread, spectra and bounds."""

from dataclasses import dataclass

import numpy as np
from scipy import signal, stats

from .model import rng
from .observables import per_spin_azimuths, unwrap_angles


@dataclass(frozen=True)
class SpectrumEstimate:
    freqs: np.ndarray
    psd: np.ndarray
    n_segments: int
    window: str
    dt: float


@dataclass(frozen=True)
class EnsembleAngles:
    times: np.ndarray
    phis: np.ndarray  # (n_spins, n_times)
    delta_phi: np.ndarray


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    stderr: float
    intercept: float
    n_points: int


def delta_phi(phis) -> np.ndarray:
    """Cross-spin standard deviation (population convention) at every time."""
    phis = np.asarray(phis, dtype=float)
    if phis.ndim != 2 or phis.shape[0] < 2:
        raise ValueError("phis must be (n_spins >= 2, n_times)")
    # referencing to the first spin removes the common precession before
    # averaging, so identical rows give exact zeros
    return (phis - phis[0]).std(axis=0)


def simulate_independent_spins(n_spins: int, noise_strength: float, t_end: float,
                               dt: float, rng_seed: int, isotropic: bool = False,
                               stream: int = 0) -> EnsembleAngles:
    """Uncoupled spins precessing at unit rate about z under independent noise.

    With z-only noise each azimuth performs ``phi_i(t) = -t + sigma W_i(t)``,
    which is what stochastic Heun on the sphere reduces to.  ``isotropic``
    instead applies a white noise field along all three axes to spins that
    start on the x axis and integrates them with Heun steps on the sphere.
    """
    if n_spins < 1 or noise_strength < 0 or not t_end > 0 or not 0 < dt < t_end:
        raise ValueError("need n_spins >= 1, noise_strength >= 0 and 0 < dt < t_end")
    n_steps = int(round(t_end / dt))
    times = np.arange(n_steps + 1) * dt
    gen = rng(rng_seed, stream)
    if not isotropic:
        kicks = gen.normal(0.0, noise_strength * np.sqrt(dt), size=(n_spins, n_steps))
        walk = np.concatenate([np.zeros((n_spins, 1)), np.cumsum(kicks, axis=1)], axis=1)
        phis = -times[None, :] + walk
        return EnsembleAngles(times, phis, delta_phi(phis) if n_spins > 1 else np.zeros_like(times))

    s = np.tile([1.0, 0.0, 0.0], (n_spins, 1))
    b = np.array([0.0, 0.0, 1.0])
    raw = np.empty((n_spins, n_steps + 1))
    raw[:, 0] = 0.0
    for k in range(n_steps):
        xi = gen.normal(0.0, noise_strength / np.sqrt(dt), size=(n_spins, 3))
        field = b + xi
        pred = s + dt * np.cross(s, field)
        pred /= np.linalg.norm(pred, axis=1, keepdims=True)
        s = s + 0.5 * dt * (np.cross(s, field) + np.cross(pred, field))
        s /= np.linalg.norm(s, axis=1, keepdims=True)
        raw[:, k + 1] = per_spin_azimuths(s)
    phis = unwrap_angles(raw.T).T
    return EnsembleAngles(times, phis, delta_phi(phis) if n_spins > 1 else np.zeros_like(times))


def trajectory_angles(traj) -> EnsembleAngles:
    """Per-spin azimuths of a simulated needle, unwrapped in time per spin."""
    raw = per_spin_azimuths(traj.spins)  # (T, N)
    phis = unwrap_angles(raw).T
    return EnsembleAngles(traj.times.copy(), phis, delta_phi(phis))


def psd_welch(x, dt: float, segment_length=None, overlap_fraction: float = 0.5,
              window: str = "hann") -> SpectrumEstimate:
    """One-sided Welch PSD with per-segment mean removal.

    ``segment_length`` defaults to the length giving 8 segments at the
    requested overlap.  Frequencies are in cycles per unit of ``dt``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if not 0 <= overlap_fraction < 1:
        raise ValueError("overlap_fraction must be in [0, 1)")
    if segment_length is None:
        segment_length = int(n / (1 + 7 * (1 - overlap_fraction)))
    segment_length = int(segment_length)
    if segment_length > n:
        raise ValueError(f"segment_length {segment_length} exceeds signal length {n}")
    if segment_length < 2:
        raise ValueError("segment_length must be >= 2")
    noverlap = int(overlap_fraction * segment_length)
    freqs, psd = signal.welch(x, fs=1.0 / dt, window=window, nperseg=segment_length,
                              noverlap=noverlap, detrend="constant", scaling="density",
                              return_onesided=True, axis=-1)
    n_seg = 1 + (n - segment_length) // (segment_length - noverlap)
    return SpectrumEstimate(freqs, psd, n_seg, window, float(dt))


def fit_powerlaw_exponent(x, y, fit_window=None) -> PowerLawFit:
    """Least-squares slope of log y against log x inside ``fit_window``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if fit_window is not None:
        lo, hi = fit_window
        keep = (x >= lo) & (x <= hi)
        x, y = x[keep], y[keep]
    if len(x) < 8:
        raise ValueError(f"need at least 8 points in the fit window, got {len(x)}")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive x and y")
    res = stats.linregress(np.log(x), np.log(y))
    return PowerLawFit(float(res.slope), float(res.stderr), float(res.intercept), len(x))


def linear_detrend(t, y) -> np.ndarray:
    """Remove the least-squares line; ``y`` is (T,) or (T, K) with time first."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, icpt = np.polyfit(t, y, 1)
    if y.ndim == 1:
        return y - (slope * t + icpt)
    return y - (np.outer(t, slope) + icpt)


def crlb_delta_omega(snr, f_bw, t):
    """Cramer-Rao bound for a tone in white noise, ``sqrt(12 / (snr f_bw t^3))``."""
    snr, f_bw, t = (np.asarray(v, dtype=float) for v in (snr, f_bw, t))
    if np.any(snr <= 0) or np.any(f_bw <= 0) or np.any(t <= 0):
        raise ValueError("snr, f_bw and t must be positive")
    out = np.sqrt(12.0 / (snr * f_bw * t**3))
    return float(out) if out.ndim == 0 else out


def sql_delta_omega(n, t2, t):
    """Standard quantum limit ``1 / sqrt(N T2 t)``."""
    n, t2, t = (np.asarray(v, dtype=float) for v in (n, t2, t))
    if np.any(n <= 0) or np.any(t2 <= 0) or np.any(t <= 0):
        raise ValueError("n, t2 and t must be positive")
    out = 1.0 / np.sqrt(n * t2 * t)
    return float(out) if out.ndim == 0 else out


def analysis_band(t_end: float):
    """Decade ``[10/t_end, 100/t_end]`` (cycles per unit time) used for the
    PSD slope fits: ten cycles per run at the low edge keeps Welch leakage
    from the lowest bins out of the fit."""
    return 10.0 / t_end, 100.0 / t_end


@dataclass(frozen=True)
class NoiseSummary:
    """Angle spread and azimuth spectrum with their fitted exponents."""

    times: np.ndarray
    delta_phi: np.ndarray
    spectrum: SpectrumEstimate
    delta_phi_slope: PowerLawFit
    psd_slope: PowerLawFit
    band: tuple


def independent_ensemble(n_spins: int, noise_strength: float, t_end: float, dt: float,
                         n_seeds: int, seed: int, isotropic: bool = False) -> NoiseSummary:
    """Seed-averaged statistics of the independent-spin model.

    Member ``k`` draws from stream ``k`` of ``seed``.  ``delta_phi`` is the
    mean over members; the spectrum is the mean Welch PSD of the detrended
    single-spin azimuths.  The spread exponent is fitted over the last 90%
    of the run.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    dps, psds = [], []
    for k in range(n_seeds):
        ens = simulate_independent_spins(n_spins, noise_strength, t_end, dt, seed,
                                         isotropic=isotropic, stream=k)
        dps.append(ens.delta_phi)
        spec = psd_welch(linear_detrend(ens.times, ens.phis.T).T, dt)
        psds.append(spec.psd.mean(axis=0))
    dp = np.mean(dps, axis=0)
    spec = SpectrumEstimate(spec.freqs, np.mean(psds, axis=0), spec.n_segments, spec.window, dt)
    band = analysis_band(t_end)
    return NoiseSummary(ens.times, dp, spec,
                        fit_powerlaw_exponent(ens.times, dp, (t_end / 10, t_end)),
                        fit_powerlaw_exponent(spec.freqs, spec.psd, band), band)


def needle_noise(traj) -> NoiseSummary:
    """Spin-angle spread and detrended needle-azimuth spectrum of a run."""
    from .observables import needle_axes

    ang = trajectory_angles(traj)
    axes = needle_axes(traj.positions)
    azimuth = unwrap_angles(np.arctan2(axes[:, 1], axes[:, 0]))
    t = traj.times - traj.times[0]
    t_end = float(t[-1])
    spec = psd_welch(linear_detrend(t, azimuth), traj.sample_interval)
    band = analysis_band(t_end)
    return NoiseSummary(traj.times, ang.delta_phi, spec,
                        fit_powerlaw_exponent(t, ang.delta_phi, (t_end / 10, t_end)),
                        fit_powerlaw_exponent(spec.freqs, spec.psd, band), band)
