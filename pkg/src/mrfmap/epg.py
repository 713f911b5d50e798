"""Extended-phase-graph fingerprint simulation with a Bloch isochromat oracle.

The magnetization of a voxel is tracked as configuration states (F+_k, F-_k,
Z_k): Fourier coefficients of the transverse/longitudinal magnetization over
the intra-voxel dephasing angle. Three operators evolve the states:

* RF rotation mixes (F+_k, F-_k, Z_k) at every order k with the standard
  complex rotation matrix for a pulse of flip angle alpha and phase phi.
* Relaxation scales F states by exp(-dt/T2), Z states by exp(-dt/T1) and
  feeds (1 - exp(-dt/T1)) back into Z_0.
* The spoiler gradient of each TR advances every transverse state by one
  dephasing order (F+ up, F- down, F+_0 refilled from conj(F-_1)).

For a gradient-spoiled train of N excitations the state never exceeds order
N, so tracking K = N orders is lossless and the EPG signal equals the mean
transverse magnetization of any >N uniformly dephased Bloch isochromats.
That equality (to float64 rounding) is the correctness oracle for this
module: ``isochromat_oracle`` simulates the same timeline spin-by-spin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schedule import SequenceSchedule


@dataclass(frozen=True)
class TissueParams:
    """A (T1, T2) relaxation-time pair in milliseconds."""

    t1_ms: float
    t2_ms: float

    def __post_init__(self):
        if not (self.t1_ms > 0.0 and self.t2_ms > 0.0):
            raise ValueError(f"relaxation times must be positive, got {self}")
        if self.t2_ms > self.t1_ms:
            raise ValueError(
                f"t2_ms={self.t2_ms} exceeds t1_ms={self.t1_ms}; "
                "no tissue has T2 > T1"
            )


@dataclass
class EpgState:
    """Configuration states up to order K (arrays of length K+1)."""

    f_plus: np.ndarray
    f_minus: np.ndarray
    z: np.ndarray

    @classmethod
    def equilibrium(cls, k_max: int) -> "EpgState":
        """Fully relaxed state: Z_0 = 1, everything else 0."""
        if k_max < 1:
            raise ValueError("k_max must be at least 1")
        f_plus = np.zeros(k_max + 1, dtype=np.complex128)
        f_minus = np.zeros(k_max + 1, dtype=np.complex128)
        z = np.zeros(k_max + 1, dtype=np.complex128)
        z[0] = 1.0
        return cls(f_plus, f_minus, z)

    @property
    def k_max(self) -> int:
        return self.f_plus.size - 1

    def copy(self) -> "EpgState":
        return EpgState(self.f_plus.copy(), self.f_minus.copy(), self.z.copy())


@dataclass(frozen=True)
class Fingerprint:
    """Complex signal evolution sampled at each excitation."""

    samples: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "samples",
            np.ascontiguousarray(np.asarray(self.samples, dtype=np.complex128)),
        )

    def magnitude(self) -> np.ndarray:
        return np.abs(self.samples)

    def __len__(self) -> int:
        return self.samples.size


def _rf_coefficients(alpha: float, phi: float):
    """Entries of the order-wise EPG rotation matrix for (alpha, phi)."""
    cos_half_sq = np.cos(alpha / 2.0) ** 2
    sin_half_sq = np.sin(alpha / 2.0) ** 2
    sin_a = np.sin(alpha)
    e_ip = np.exp(1j * phi)
    e_2ip = e_ip * e_ip
    return (
        cos_half_sq,                      # F+ <- F+
        e_2ip * sin_half_sq,              # F+ <- F-
        -1j * e_ip * sin_a,               # F+ <- Z
        np.conj(e_2ip) * sin_half_sq,     # F- <- F+
        1j * np.conj(e_ip) * sin_a,       # F- <- Z
        -0.5j * np.conj(e_ip) * sin_a,    # Z  <- F+
        0.5j * e_ip * sin_a,              # Z  <- F-
        np.cos(alpha),                    # Z  <- Z
    )


def _apply_rf(f_plus, f_minus, z, alpha: float, phi: float):
    """Rotate (F+, F-, Z) arrays in place-free style; works on any leading shape."""
    pp, pm, pz, mp, mz_, zp, zm, zz = _rf_coefficients(alpha, phi)
    f_plus_new = pp * f_plus + pm * f_minus + pz * z
    f_minus_new = mp * f_plus + pp * f_minus + mz_ * z
    z_new = zp * f_plus + zm * f_minus + zz * z
    return f_plus_new, f_minus_new, z_new


def _apply_relaxation(f_plus, f_minus, z, dt_ms, t1_ms, t2_ms):
    """Scale states by the decay factors and recover Z_0; no gradient shift."""
    e1 = np.exp(-dt_ms / np.asarray(t1_ms))
    e2 = np.exp(-dt_ms / np.asarray(t2_ms))
    f_plus = f_plus * e2
    f_minus = f_minus * e2
    z = z * e1
    z[..., 0] += np.reshape(1.0 - e1, np.shape(z[..., 0]))
    return f_plus, f_minus, z


def _apply_shift(f_plus, f_minus):
    """One unit of gradient dephasing: F+ up one order, F- down one order."""
    f_plus[..., 1:] = f_plus[..., :-1]
    f_minus[..., :-1] = f_minus[..., 1:]
    f_minus[..., -1] = 0.0
    f_plus[..., 0] = np.conj(f_minus[..., 0])
    return f_plus, f_minus


def rf_rotation(state: EpgState, alpha: float, phi: float) -> EpgState:
    """Apply an RF pulse of flip angle ``alpha`` and phase ``phi`` (radians)."""
    if not (np.isfinite(alpha) and np.isfinite(phi)):
        raise ValueError("alpha and phi must be finite")
    f_plus, f_minus, z = _apply_rf(state.f_plus, state.f_minus, state.z, alpha, phi)
    return EpgState(f_plus, f_minus, z)


def relax_shift(state: EpgState, dt_ms: float, params: TissueParams) -> EpgState:
    """Relax for ``dt_ms`` then apply one gradient-spoiler dephasing step."""
    if dt_ms < 0.0:
        raise ValueError("dt_ms must be nonnegative")
    f_plus, f_minus, z = _apply_relaxation(
        state.f_plus, state.f_minus, state.z, dt_ms, params.t1_ms, params.t2_ms
    )
    f_plus, f_minus = _apply_shift(f_plus, f_minus)
    return EpgState(f_plus, f_minus, z)


def simulate_fingerprints(params_list, schedule: SequenceSchedule,
                          k_max: int | None = None) -> np.ndarray:
    """Simulate a batch of tissue parameter pairs through one schedule.

    Returns a complex array of shape (len(params_list), n_excitations).
    ``k_max`` keeps the default K = N configuration orders (exact); smaller
    values trade accuracy for speed by truncating high dephasing orders.

    Batching only vectorizes the identical per-pair arithmetic, so results
    match the single-pair path bit for bit and are independent of how a
    larger batch is split.
    """
    params_list = list(params_list)
    if not params_list:
        raise ValueError("params_list must not be empty")
    n = schedule.n_excitations
    if k_max is None:
        k_max = n
    if k_max < 1:
        raise ValueError("k_max must be at least 1")

    b = len(params_list)
    t1 = np.array([p.t1_ms for p in params_list])[:, None]
    t2 = np.array([p.t2_ms for p in params_list])[:, None]

    f_plus = np.zeros((b, k_max + 1), dtype=np.complex128)
    f_minus = np.zeros((b, k_max + 1), dtype=np.complex128)
    z = np.zeros((b, k_max + 1), dtype=np.complex128)
    z[:, 0] = 1.0

    if schedule.inversion_prep:
        f_plus, f_minus, z = _apply_rf(f_plus, f_minus, z, np.pi, 0.0)
        f_plus, f_minus, z = _apply_relaxation(
            f_plus, f_minus, z, schedule.inversion_delay_ms, t1, t2
        )

    te_decay = np.exp(-schedule.te_ms / t2)[:, 0]
    samples = np.empty((b, n), dtype=np.complex128)

    # Only orders <= i+1 can be populated after excitation i; restricting the
    # operators to that active window halves the work without changing any
    # value (the excluded entries are exactly zero).
    flips = schedule.flip_angles_rad
    phases = schedule.rf_phases_rad
    trs = schedule.tr_ms
    for i in range(n):
        w = min(i + 2, k_max + 1)
        fp, fm, zw = f_plus[:, :w], f_minus[:, :w], z[:, :w]
        fp, fm, zw = _apply_rf(fp, fm, zw, flips[i], phases[i])
        samples[:, i] = fp[:, 0] * te_decay
        fp, fm, zw = _apply_relaxation(fp, fm, zw, trs[i], t1, t2)
        f_plus[:, :w], f_minus[:, :w], z[:, :w] = fp, fm, zw
        wn = min(w + 1, k_max + 1)
        _apply_shift(f_plus[:, :wn], f_minus[:, :wn])
    return samples


def simulate_fingerprint(params: TissueParams, schedule: SequenceSchedule,
                         k_max: int | None = None) -> Fingerprint:
    """Simulate one tissue's signal evolution; see ``simulate_fingerprints``."""
    samples = simulate_fingerprints([params], schedule, k_max=k_max)
    return Fingerprint(samples[0])


def isochromat_oracle(params: TissueParams, schedule: SequenceSchedule,
                      n_spins: int) -> Fingerprint:
    """Bloch-summation reference: ``n_spins`` uniformly dephased isochromats.

    Each spin accumulates a fixed dephasing angle 2*pi*j/n_spins per TR in
    place of the EPG shift operator; the returned sample is the complex mean
    transverse magnetization after each excitation. For n_spins >
    n_excitations this equals the EPG result exactly (no order aliasing),
    which is what the EPG tests assert.
    """
    n = schedule.n_excitations
    if n_spins <= n:
        raise ValueError(
            f"n_spins={n_spins} must exceed n_excitations={n} to avoid "
            "dephasing-order aliasing"
        )
    theta = 2.0 * np.pi * np.arange(n_spins) / n_spins
    dephase = np.exp(1j * theta)

    m_xy = np.zeros(n_spins, dtype=np.complex128)
    m_z = np.ones(n_spins, dtype=np.float64)
    e1_tr = np.exp(-schedule.tr_ms / params.t1_ms)
    e2_tr = np.exp(-schedule.tr_ms / params.t2_ms)
    te_decay = np.exp(-schedule.te_ms / params.t2_ms)

    def pulse(alpha, phi):
        nonlocal m_xy, m_z
        cos_half_sq = np.cos(alpha / 2.0) ** 2
        sin_half_sq = np.sin(alpha / 2.0) ** 2
        sin_a = np.sin(alpha)
        e_ip = np.exp(1j * phi)
        m_xy_new = (cos_half_sq * m_xy
                    + e_ip * e_ip * sin_half_sq * np.conj(m_xy)
                    - 1j * e_ip * sin_a * m_z)
        m_z_new = np.cos(alpha) * m_z + sin_a * np.imag(np.conj(e_ip) * m_xy)
        m_xy, m_z = m_xy_new, m_z_new

    if schedule.inversion_prep:
        pulse(np.pi, 0.0)
        e1 = np.exp(-schedule.inversion_delay_ms / params.t1_ms)
        m_xy = m_xy * np.exp(-schedule.inversion_delay_ms / params.t2_ms)
        m_z = e1 * m_z + (1.0 - e1)

    samples = np.empty(n, dtype=np.complex128)
    for i in range(n):
        pulse(schedule.flip_angles_rad[i], schedule.rf_phases_rad[i])
        samples[i] = m_xy.mean() * te_decay
        m_xy = m_xy * e2_tr[i]
        m_z = e1_tr[i] * m_z + (1.0 - e1_tr[i])
        m_xy = m_xy * dephase
    return Fingerprint(samples)
