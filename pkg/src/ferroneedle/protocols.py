"""Regime classification, the two-cycle Berry protocol, nutation sensing and
the weak-field precession pipeline."""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import noise
from .dynamics import NumericalError, integrate
from .model import (DimensionlessSystem, PhysicalParams, SystemState, aligned_state,
                    build_system, critical_field, sample_initial_state, to_physical)
from .observables import needle_axes, trajectory_observables, unwrap_angles

PRECESSION = "precession"
NUTATION = "nutation"
LIBRATION = "libration"

# M_z thresholds, see classify_regime
PRECESSION_MAX = 0.2
LIBRATION_MIN = 0.8


@dataclass(frozen=True)
class SimSettings:
    """Run controls shared by the protocols.

    ``dtau=None`` uses :func:`~ferroneedle.dynamics.default_dtau`;
    ``t_end=None`` lets each protocol pick its own duration.  Snapshots are
    stored roughly every ``sample_interval`` time units.
    """

    dtau: Optional[float] = None
    t_end: Optional[float] = None
    sample_interval: float = 0.05
    lattice_temp: float = 0.0
    seed: int = 0

    def record_every(self, dtau: float) -> int:
        return max(1, int(round(self.sample_interval / dtau)))


def _dtau(system, settings):
    from .dynamics import default_dtau
    return default_dtau(system) if settings.dtau is None else float(settings.dtau)


def _initial_state(system, settings):
    if settings.lattice_temp > 0:
        return sample_initial_state(system, settings.lattice_temp, settings.seed)
    return aligned_state(system)


def wrap_angle(x):
    """Reduce to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2 * np.pi) - np.pi
    y = np.where(y == -np.pi, np.pi, y)
    return float(y) if y.ndim == 0 else y


# -- regimes -----------------------------------------------------------------

@dataclass(frozen=True)
class RegimeReport:
    field_magnitude: float
    regime: str
    mz_mean: float
    mz_excursion: float
    bloch_norm_error: float


def classify_regime(mz_mean: float, mz_excursion: float) -> str:
    """Precession keeps M_z pinned near zero; libration either lifts its mean
    above 0.8 or swings it across most of [0, 1]; anything else nutates."""
    if mz_excursion < PRECESSION_MAX and abs(mz_mean) < PRECESSION_MAX:
        return PRECESSION
    if mz_mean > LIBRATION_MIN or mz_excursion > LIBRATION_MIN:
        return LIBRATION
    return NUTATION


def run_regime(params: PhysicalParams, settings: SimSettings = SimSettings()) -> RegimeReport:
    system = build_system(params)
    t_end = 4 * np.pi if settings.t_end is None else settings.t_end
    dtau = _dtau(system, settings)
    try:
        traj = integrate(_initial_state(system, settings), system, t_end,
                         record_every=settings.record_every(dtau), dtau=dtau)
    except NumericalError as exc:
        raise NumericalError(f"at |B| = {params.field_magnitude:.3g} T: {exc}") from exc
    m = traj.spins.mean(axis=1)
    mz = m[:, 2]
    return RegimeReport(
        field_magnitude=params.field_magnitude,
        regime=classify_regime(float(mz.mean()), float(mz.max() - mz.min())),
        mz_mean=float(mz.mean()),
        mz_excursion=float(mz.max() - mz.min()),
        bloch_norm_error=float(np.abs(np.linalg.norm(m, axis=1) - 1).max()),
    )


def regime_scan(field_list: Sequence[float], base: DimensionlessSystem,
                settings: SimSettings = SimSettings()) -> list:
    """Classify the motion at each field magnitude (tesla), field along z.

    The dimensionless couplings of ``base`` are held fixed and only the
    Larmor scale changes with the field, so ``lambda_spin`` follows
    ``1/|B|``.  Spins start along the chain, perpendicular to the field.
    """
    ref = to_physical(base)
    reports = []
    for b in field_list:
        if not b > 0:
            raise ValueError(f"field magnitudes must be positive, got {b!r}")
        params = _rescaled_params(ref, base, b)
        reports.append(run_regime(params, settings))
    return reports


def _rescaled_params(ref: PhysicalParams, base: DimensionlessSystem, b: float) -> PhysicalParams:
    from dataclasses import replace
    scale = b / ref.field_magnitude
    # J ~ omega_L, C and V ~ omega_L^2 keep eps_j, eps_c, omega_ph unchanged
    return replace(ref, b_field=tuple(np.array([0.0, 0.0, 1.0]) * b),
                   exchange_j=ref.exchange_j * scale,
                   pseudo_dipolar_c=ref.pseudo_dipolar_c * scale**2,
                   lattice_v=ref.lattice_v * scale**2)


# -- Berry phase ----------------------------------------------------------------

@dataclass(frozen=True)
class BerryResult:
    theta: float
    predicted: float
    measured: float
    adiabaticity: float
    magnetization_measured: float = float("nan")


def berry_prediction(theta: float) -> float:
    """``4 pi (1 - cos theta)`` reduced to (-pi, pi]."""
    return wrap_angle(4 * np.pi * (1 - np.cos(theta)))


def berry_field(theta: float, omega_rot: float):
    """Cycle 1 turns the field once about z at polar angle ``theta``;
    cycle 2 repeats the turn with the field reversed."""
    period = 2 * np.pi / omega_rot
    st, ct = np.sin(theta), np.cos(theta)

    def schedule(tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        ph = omega_rot * tau
        b = np.stack([st * np.cos(ph), st * np.sin(ph), np.full(tau.shape, ct)], axis=-1)
        return np.where((tau < period)[:, None], b, -b)
    return schedule


def _rotation_y(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _angle_about(axis, ref, vecs):
    return np.arctan2(np.cross(ref, vecs) @ axis, vecs @ ref)


def berry_protocol(theta: float, omega_rot: float, system: DimensionlessSystem,
                   settings: SimSettings = SimSettings(), readout_periods: float = 2.0
                   ) -> BerryResult:
    """Two-cycle geometric-phase measurement on the needle.

    The chain and its spins start along ``(cos theta, 0, -sin theta)``,
    perpendicular to the initial field.  After both cycles the rotation of
    the needle axis about the initial field direction is read out, with the
    axis oriented along the magnetization.  The
    lattice carries a small fast wobble, so the unwrapped angle over the last
    ``readout_periods`` Larmor periods is fitted by a line and evaluated at
    the final time.
    """
    if not 0 <= theta <= np.pi:
        raise ValueError(f"theta must be in [0, pi], got {theta!r}")
    if not 0 < omega_rot <= 1 / 20:
        raise ValueError(f"omega_rot={omega_rot!r} breaks adiabaticity (need 0 < omega_rot <= 1/20)")
    rot = _rotation_y(theta)
    s0 = _initial_state(system, settings)
    state = SystemState(s0.spins @ rot.T, s0.positions @ rot.T, s0.momenta @ rot.T, 0.0)
    schedule = berry_field(theta, omega_rot)
    b0 = schedule(0.0)[0]
    e0 = needle_axes(state.positions[None], reference=rot[:, 0])[0]
    m0 = state.spins.mean(axis=0)

    dtau = _dtau(system, settings)
    t_end = 2 * (2 * np.pi / omega_rot)
    window = 2 * np.pi * readout_periods
    head = integrate(state, system, t_end - window, record_every=10**9,
                     field_schedule=schedule, dtau=dtau)
    tail = integrate(head.final_state, system, window, record_every=settings.record_every(dtau),
                     field_schedule=schedule, dtau=dtau)
    # the chain is a line; its arrow is the magnetization the spins lock onto
    axes = needle_axes(tail.positions, reference=tail.spins[0].mean(axis=0))
    psi = unwrap_angles(_angle_about(b0, e0, axes))
    coef = np.polyfit(tail.times - t_end, psi, 1)
    m1 = tail.final_state.spins.mean(axis=0)
    return BerryResult(
        theta=float(theta),
        predicted=berry_prediction(theta),
        measured=wrap_angle(coef[1]),
        adiabaticity=float(omega_rot),
        magnetization_measured=wrap_angle(_angle_about(b0, m0, m1)),
    )


# -- nutation sensing -----------------------------------------------------------

@dataclass(frozen=True)
class NutationReading:
    drive_freq_true: float
    drive_freq_recovered: float
    envelope_correlation: float
    depth_ratio: float
    envelope_amplitude: float = float("nan")
    nutation_period: float = float("nan")
    peak_to_floor: float = float("nan")


PEAK_FACTOR = 5.0  # spectral peak must exceed this multiple of the median floor


def modulated_field(system: DimensionlessSystem, depth: float, drive_freq: float):
    """``b(tau) = b_hat [1 + depth cos(drive_freq tau)]``."""
    b_hat = np.asarray(system.b_hat, dtype=float)

    def schedule(tau):
        tau = np.atleast_1d(np.asarray(tau, dtype=float))
        return np.outer(1 + depth * np.cos(drive_freq * tau), b_hat)
    return schedule


def nutation_period(traj) -> float:
    """Period of the M_z oscillation of an unmodulated run.

    Picks the strongest spectral line of M_z above the Larmor scale, then
    refines it with a parabolic fit to the log power around the peak.
    """
    mz = traj.spins[:, :, 2].mean(axis=1)
    n = 8 * len(mz)
    power = np.abs(np.fft.rfft((mz - mz.mean()) * np.hanning(len(mz)), n)) ** 2
    freqs = np.fft.rfftfreq(n, traj.sample_interval)
    band = np.flatnonzero(freqs > 0.3 / (2 * np.pi))
    k = int(band[np.argmax(power[band])])
    a, b, c = np.log(power[k - 1:k + 2] + 1e-300)
    shift = 0.5 * (a - c) / (a - 2 * b + c) if a - 2 * b + c != 0 else 0.0
    return float(1.0 / (freqs[k] + shift * (freqs[1] - freqs[0])))


ENVELOPE_SAMPLES = 32  # grid points per nutation period for the boxcar


def _envelope(traj, period):
    """Boxcar mean of M_z over exactly one nutation period.

    M_z is first interpolated onto a grid with ``ENVELOPE_SAMPLES`` points
    per period so that the window holds a whole period.
    """
    mz = traj.spins[:, :, 2].mean(axis=1)
    h = period / ENVELOPE_SAMPLES
    grid = np.arange(traj.times[0], traj.times[-1] + 1e-12, h)
    if len(grid) < 2 * ENVELOPE_SAMPLES:
        raise ValueError("run shorter than two nutation periods")
    if traj.sample_interval > period / 8:
        raise ValueError("M_z sampled too coarsely for the nutation period; "
                         "lower sample_interval")
    mz = np.interp(grid, traj.times, mz)
    env = np.convolve(mz, np.ones(ENVELOPE_SAMPLES) / ENVELOPE_SAMPLES, mode="valid")
    tau = grid[:len(env)] + 0.5 * (ENVELOPE_SAMPLES - 1) * h
    return tau, env


def _modulated_run(system, depth, drive_freq, t_end, settings):
    dtau = _dtau(system, settings)
    return integrate(_initial_state(system, settings), system, t_end,
                     record_every=settings.record_every(dtau),
                     field_schedule=modulated_field(system, depth, drive_freq), dtau=dtau)


def _tone_amplitude(tau, env, omega):
    design = np.column_stack([np.cos(omega * tau), np.sin(omega * tau), np.ones_like(tau)])
    coef = np.linalg.lstsq(design, env, rcond=None)[0]
    return float(np.hypot(coef[0], coef[1]))


def _envelope_spectrum(traj, period):
    tau, env = _envelope(traj, period)
    env = noise.linear_detrend(tau, env)
    spec = np.abs(np.fft.rfft(env * np.hanning(len(env)))) ** 2
    freqs = 2 * np.pi * np.fft.rfftfreq(len(env), tau[1] - tau[0])
    return tau, env, freqs, spec


def nutation_sensing(depth: float, drive_freq: float, system: DimensionlessSystem,
                     settings: SimSettings = SimSettings(), n_drive_periods: int = 6,
                     calibration: Optional[float] = None) -> NutationReading:
    """Recover a slow field modulation from the nutation envelope of M_z.

    An unmodulated reference run of the same length fixes the nutation period
    and the background envelope spectrum: the needle has weak slow lines of
    its own.  The envelope is the moving mean of M_z over one nutation
    period, which removes the fast nutation and leaves the slow response.
    The recovered frequency is the DFT line (below the Larmor rate) with the
    largest excess over the background, and it counts as detected when it
    exceeds ``PEAK_FACTOR`` times background plus median floor.
    ``depth_ratio`` is the envelope amplitude divided by that of a depth-0.5
    run at the same drive frequency; ``calibration`` may pass that amplitude
    in to skip the extra run.
    """
    if not 0 <= depth < 1:
        raise ValueError(f"depth must be in [0, 1), got {depth!r}")
    if not 0 < drive_freq < 1:
        raise ValueError(f"drive_freq must be in (0, 1), got {drive_freq!r}")
    t_end = n_drive_periods * 2 * np.pi / drive_freq if settings.t_end is None else settings.t_end
    ref = _modulated_run(system, 0.0, drive_freq, t_end, settings)
    period = nutation_period(ref)
    _, _, _, background = _envelope_spectrum(ref, period)
    traj = ref if depth == 0 else _modulated_run(system, depth, drive_freq, t_end, settings)
    tau, env, freqs, spec = _envelope_spectrum(traj, period)

    # drives are slower than Larmor; boxcar ripple sits at the nutation frequency
    band = np.flatnonzero((freqs > 0) & (freqs < min(1.0, np.pi / period)))
    k = int(band[np.argmax(spec[band] - background[band])])
    floor = background[k] + float(np.median(background[band]))
    peak_to_floor = float(spec[k] / floor) if floor > 0 else float("inf")
    amplitude = _tone_amplitude(tau, env, drive_freq)

    if peak_to_floor < PEAK_FACTOR:
        if depth > 0:
            raise ValueError(
                f"envelope line is only {peak_to_floor:.2g}x the background "
                f"(need {PEAK_FACTOR:g}x); raise the depth or lengthen the run")
        return NutationReading(float(drive_freq), float("nan"), 0.0, 0.0, amplitude, period,
                               peak_to_floor)

    corr = float(np.corrcoef(env, np.cos(drive_freq * tau))[0, 1])
    if calibration is None:
        if depth == 0.5:
            calibration = amplitude
        else:
            ctau, cenv = _envelope(_modulated_run(system, 0.5, drive_freq, t_end, settings),
                                   period)
            calibration = _tone_amplitude(ctau, noise.linear_detrend(ctau, cenv), drive_freq)
    return NutationReading(
        drive_freq_true=float(drive_freq),
        drive_freq_recovered=float(freqs[k]),
        envelope_correlation=corr,
        depth_ratio=float(amplitude / calibration),
        envelope_amplitude=amplitude,
        nutation_period=period,
        peak_to_floor=peak_to_floor,
    )


# -- weak-field precession ------------------------------------------------------

@dataclass(frozen=True)
class PrecessionSummary:
    """Headline observables of a weak-field run.

    ``frequency`` is the fitted needle precession rate in units of omega_L,
    ``frequency_hz`` the same in hertz.
    """

    frequency: float
    frequency_hz: float
    jz_drift: float
    bloch_norm_error: float
    delta_phi_slope: float
    times: np.ndarray = field(repr=False)
    delta_phi: np.ndarray = field(repr=False)
    trajectory: object = field(default=None, repr=False)


def precession_experiment(system: DimensionlessSystem, settings: SimSettings = SimSettings()
                          ) -> PrecessionSummary:
    """Integrate a weak-field needle and fit its precession.

    ``jz_drift`` is ``max |J_z(tau) - J_z(0)|`` relative to ``N S0/hbar`` and
    the angle spread slope is fitted over the last 90% of the run.
    """
    if system.scales is not None:
        params = to_physical(system)
        if params.field_magnitude >= critical_field(params) / 100:
            raise ValueError("precession_experiment needs |B| < B_c/100")
    t_end = 4 * np.pi if settings.t_end is None else settings.t_end
    dtau = _dtau(system, settings)
    traj = integrate(_initial_state(system, settings), system, t_end,
                     record_every=settings.record_every(dtau), dtau=dtau)
    obs = trajectory_observables(traj)
    slope = np.polyfit(obs["tau"], obs["needle_azimuth"], 1)[0]
    m = np.column_stack([obs["Mx"], obs["My"], obs["Mz"]])
    ang = noise.trajectory_angles(traj)
    try:
        dphi_slope = noise.fit_powerlaw_exponent(ang.times, ang.delta_phi,
                                                 (t_end / 10, t_end)).slope
    except ValueError:
        dphi_slope = float("nan")  # e.g. a cold lattice with zero spread
    omega_l = system.scales.omega_l if system.scales is not None else float("nan")
    return PrecessionSummary(
        frequency=float(abs(slope)),
        frequency_hz=float(abs(slope) * omega_l / (2 * np.pi)),
        jz_drift=float(np.abs(obs["Jz"] - obs["Jz"][0]).max()
                       / (system.spin_ratio * system.n_atoms)),
        bloch_norm_error=float(np.abs(np.linalg.norm(m, axis=1) - 1).max()),
        delta_phi_slope=float(dphi_slope),
        times=ang.times,
        delta_phi=ang.delta_phi,
        trajectory=traj,
    )
