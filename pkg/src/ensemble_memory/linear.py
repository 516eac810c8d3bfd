"""Linearized fluctuation dynamics of the cavity + ensemble system.

State vector per cavity, in this fixed order::

    X_Pr, Y_Pr, X_P2, Y_P2, X_A, Y_A

All quadratures are normalized so that the pumped steady state (every atom
in level 2, field in vacuum) has unit variance on each of them:

* ``X_Pr = (dPr + dPr^+)/sqrt(N) = 2 dJx / sqrt(N)`` and
  ``Y_Pr = 2 dJy / sqrt(N)``, so ``Var(X_Pr)`` is the spin variance in units
  of the coherent value ``|<Jz>|/2 = N/4``;
* ``X_P2, Y_P2`` likewise for the optical dipole;
* ``X_A = sqrt(tau) (dA + dA^+)``, ``Y_A = -i sqrt(tau) (dA - dA^+)``.

Input and output fields use ``X = A + A^+`` and ``Y = -i(A - A^+)`` with a
flat vacuum spectrum of 1.  The output is ``X_out = sqrt(2 kappa tau) X_A - X_in``.

The covariance obeys ``dV/dt = M V + V M^T + D`` with ``D`` the sum of the
atomic Langevin diffusion and ``B S B^T`` for the input field spectrum ``S``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import ConfigurationError, NumericalError, StepSizeError
from .model import (
    DerivedRates,
    InputFieldSpec,
    InteractionMode,
    SystemParams,
    check_mode,
    derive_rates,
    normalized_min_variance,
)

BASIS_LABELS = ("X_Pr", "Y_Pr", "X_P2", "Y_P2", "X_A", "Y_A")
CAVITY_DIM = len(BASIS_LABELS)

NORMALIZATION = {
    "spin": "X_Pr = 2 dJx/sqrt(N); coherent spin state has variance 1",
    "field": "X = A + A^+, Y = -i(A - A^+); vacuum spectrum 1",
    "intracavity": "X_A scaled by sqrt(tau) so that the vacuum variance is 1",
}

# Residual bound of the Lyapunov solve, relative to ||D||.
LYAPUNOV_RTOL = 1e-10
# RK4 accuracy bound: dt * max|eig(M)| must not exceed this.
RK4_DT_FACTOR = 0.01
PSD_TOL = 1e-9


def _complex_block(c: complex) -> np.ndarray:
    # dz = c z  ->  (x, y) with z = (x + i y)/2
    return np.array([[c.real, -c.imag], [c.imag, c.real]])


def _rotation(phi: float) -> np.ndarray:
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


@dataclass
class LinearSystem:
    """Linear Gaussian model ``dx = M x dt + B dW_in + dW_L``.

    The output quadratures are ``y = L x + F w_in``.
    """

    drift: np.ndarray
    input_map: np.ndarray
    langevin_diffusion: np.ndarray
    output_map: np.ndarray
    feedthrough: np.ndarray
    input_spectrum: np.ndarray
    labels: tuple[str, ...] = BASIS_LABELS
    rates: tuple[DerivedRates, ...] = ()
    epsilons: tuple[float, ...] = (0.0,)
    normalization: dict = field(default_factory=lambda: dict(NORMALIZATION))

    @property
    def dim(self) -> int:
        return self.drift.shape[0]

    @property
    def n_cavities(self) -> int:
        return self.dim // CAVITY_DIM

    @property
    def diffusion(self) -> np.ndarray:
        b = self.input_map
        d = self.langevin_diffusion + b @ self.input_spectrum @ b.T
        return 0.5 * (d + d.T)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.drift)

    def max_real_eigenvalue(self) -> float:
        return float(np.max(self.eigenvalues().real))

    def is_stable(self) -> bool:
        return self.max_real_eigenvalue() < 0

    def with_input_spectrum(self, spectrum: np.ndarray) -> "LinearSystem":
        return LinearSystem(self.drift, self.input_map, self.langevin_diffusion,
                            self.output_map, self.feedthrough, np.asarray(spectrum, float),
                            self.labels, self.rates, self.epsilons, dict(self.normalization))

    def spin_index(self, cavity: int = 0) -> slice:
        return slice(CAVITY_DIM * cavity, CAVITY_DIM * cavity + 2)


def _raman_compensation(params: SystemParams, delta: float) -> tuple[float, float]:
    """Cavity and two-photon detunings that cancel the dispersive shifts.

    The cavity is detuned to undo the atomic index, then the two-photon
    detuning cancels the light shift left on the ground-state coherence
    after eliminating the dipole and field at zero frequency.
    """
    gam, kap = params.gamma, params.kappa
    g2 = params.collective_coupling**2
    dcav = g2 * delta / (gam**2 + delta**2)
    if params.omega_rabi == 0.0:
        return dcav, 0.0
    big_g = params.collective_coupling
    k = np.array([[-(gam + 1j * delta), 1j * big_g], [1j * big_g, -(kap + 1j * dcav)]])
    u = np.array([1j * params.omega_rabi, 0.0])
    shift = u @ np.linalg.solve(k, u)
    return dcav, float(shift.imag)


def build_linear_system(params: SystemParams, mode: InteractionMode,
                        input_field: InputFieldSpec | None = None) -> LinearSystem:
    """Real 6x6 model of the decoupled (dPr, dP2, dA) fluctuations."""
    input_field = input_field or InputFieldSpec.vacuum()
    if input_field.kind == "epr_pair":
        raise ConfigurationError("an EPR pair drives two cavities; use build_epr_system")
    rates = derive_rates(params, mode)
    gam, g0, kap = params.gamma, params.gamma0, params.kappa
    om, big_g = params.omega_rabi, params.collective_coupling
    if mode.kind == "EIT":
        delta, dcav, dtwo = 0.0, 0.0, 0.0
    else:
        delta = mode.detuning
        dcav, dtwo = _raman_compensation(params, delta)

    mc = np.array([
        [-(g0 - 1j * dtwo), 1j * om, 0.0],
        [1j * om, -(gam + 1j * delta), 1j * big_g],
        [0.0, 1j * big_g, -(kap + 1j * dcav)],
    ])
    drift = np.zeros((CAVITY_DIM, CAVITY_DIM))
    for i in range(3):
        for j in range(3):
            drift[2 * i:2 * i + 2, 2 * j:2 * j + 2] = _complex_block(complex(mc[i, j]))

    # Einstein relations at the pumped state: vacuum noise on each damped mode.
    d_l = np.diag([2 * g0, 2 * g0, 2 * gam, 2 * gam, 0.0, 0.0])
    b_in = np.zeros((CAVITY_DIM, 2))
    b_in[4:6, :] = math.sqrt(2 * kap) * np.eye(2)
    l_out = np.zeros((2, CAVITY_DIM))
    l_out[:, 4:6] = math.sqrt(2 * kap) * np.eye(2)
    f_out = -np.eye(2)

    system = LinearSystem(drift, b_in, d_l, l_out, f_out,
                          input_field.quadrature_spectrum(), BASIS_LABELS,
                          (rates,), (mode.epsilon,))
    _check_drift(system, params.gamma0)
    return system


def _check_drift(system: LinearSystem, gamma0: float) -> None:
    lam = system.max_real_eigenvalue()
    scale = max(np.max(np.abs(system.drift)), 1.0)
    if lam > 1e-12 * scale:
        raise ConfigurationError(f"unstable drift: max Re(eig) = {lam:.3g}")
    if gamma0 > 0 and lam >= 0:
        raise ConfigurationError("drift must be strictly stable when gamma0 > 0")


def _epr_spectrum(i_f: float, epsilon: float) -> np.ndarray:
    s = -0.5 * math.log(i_f / 2.0)
    ch, sh = math.cosh(2 * s), math.sinh(2 * s)
    z = np.diag([1.0, -1.0])
    rotated = np.block([[ch * np.eye(2), sh * z], [sh * z, ch * np.eye(2)]])
    # (X_eps, Y_eps) = P (X, Y)
    p = _rotation(epsilon).T
    p2 = sla.block_diag(p, p)
    return p2.T @ rotated @ p2


def block_diag_systems(systems: Sequence[LinearSystem],
                       input_spectrum: np.ndarray | None = None) -> LinearSystem:
    """Independent cavities side by side; optionally correlated inputs."""
    drift = sla.block_diag(*[s.drift for s in systems])
    b = sla.block_diag(*[s.input_map for s in systems])
    d_l = sla.block_diag(*[s.langevin_diffusion for s in systems])
    l = sla.block_diag(*[s.output_map for s in systems])
    f = sla.block_diag(*[s.feedthrough for s in systems])
    spec = sla.block_diag(*[s.input_spectrum for s in systems]) if input_spectrum is None \
        else np.asarray(input_spectrum, float)
    labels = tuple(f"c{k + 1}:{lab}" for k, s in enumerate(systems) for lab in s.labels)
    rates = tuple(r for s in systems for r in s.rates)
    eps = tuple(e for s in systems for e in s.epsilons)
    return LinearSystem(drift, b, d_l, l, f, spec, labels, rates, eps)


def build_epr_system(params: SystemParams, mode: InteractionMode,
                     input_field: InputFieldSpec) -> LinearSystem:
    """Two identical cavities fed by an EPR pair of inseparability ``i_f``.

    The pair is two-mode squeezed in the quadratures ``(X_eps, Y_eps)``
    that the mode couples to the spins, so that ``X1 - X2`` and
    ``Y1 + Y2`` carry the correlations.
    """
    if input_field.kind != "epr_pair":
        raise ConfigurationError("build_epr_system expects an epr_pair input")
    one = build_linear_system(params, mode, InputFieldSpec.vacuum())
    return block_diag_systems([one, one], _epr_spectrum(input_field.i_f, mode.epsilon))


def cascade_systems(first: LinearSystem, second: LinearSystem,
                    link: float = 1.0) -> LinearSystem:
    """Feed the output of ``first`` into the input port of ``second``.

    No back-action and no propagation delay.  ``link`` is the amplitude
    transmission between the cavities; the missing fraction is replaced by
    vacuum so ``link = 0`` leaves ``second`` driven by plain vacuum.
    """
    if first.output_map.shape[0] != second.input_map.shape[1]:
        raise ConfigurationError("output of the first system does not match the second input")
    if not 0.0 <= link <= 1.0:
        raise ConfigurationError("link transmission must lie in [0, 1]")
    d1, d2 = first.dim, second.dim
    m2 = second.input_map.shape[1]
    leak = math.sqrt(1.0 - link**2)
    drift = np.block([[first.drift, np.zeros((d1, d2))],
                      [link * second.input_map @ first.output_map, second.drift]])
    b = np.block([[first.input_map, np.zeros((d1, m2))],
                  [link * second.input_map @ first.feedthrough, leak * second.input_map]])
    d_l = sla.block_diag(first.langevin_diffusion, second.langevin_diffusion)
    spec = sla.block_diag(first.input_spectrum, np.eye(m2))
    l = np.hstack([link * second.feedthrough @ first.output_map, second.output_map])
    f = np.hstack([link * second.feedthrough @ first.feedthrough, leak * second.feedthrough])
    labels = tuple(f"c1:{x}" for x in first.labels) + tuple(f"c2:{x}" for x in second.labels)
    return LinearSystem(drift, b, d_l, l, f, spec, labels,
                        first.rates + second.rates, first.epsilons + second.epsilons)


@dataclass
class CovarianceMatrix:
    """Symmetrized second moments of the fluctuation state."""

    matrix: np.ndarray
    time: float = 0.0
    normalization: dict = field(default_factory=lambda: dict(NORMALIZATION))

    @classmethod
    def coherent(cls, dim: int = CAVITY_DIM, time: float = 0.0) -> "CovarianceMatrix":
        return cls(np.eye(dim), time)

    @classmethod
    def squeezed_spin(cls, var_x: float, var_y: float, dim: int = CAVITY_DIM,
                      cavity: int = 0) -> "CovarianceMatrix":
        m = np.eye(dim)
        k = CAVITY_DIM * cavity
        m[k, k], m[k + 1, k + 1] = var_x, var_y
        return cls(m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def spin_block(self, cavity: int = 0) -> np.ndarray:
        k = CAVITY_DIM * cavity
        return self.matrix[k:k + 2, k:k + 2]

    def spin_variances(self, cavity: int = 0) -> tuple[float, float]:
        b = self.spin_block(cavity)
        return float(b[0, 0]), float(b[1, 1])

    def min_spin(self, cavity: int = 0) -> tuple[float, float]:
        """``(theta_min, normalized var_min)`` of the cavity's spin."""
        return normalized_min_variance(self.spin_block(cavity))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.matrix)[0])

    def is_psd(self, tol: float = PSD_TOL) -> bool:
        return self.min_eigenvalue() >= -tol * max(np.trace(self.matrix), 1.0)

    def inseparability(self, first: int = 0, second: int = 1) -> float:
        """``(2/N)[Var(Jx1 - Jx2) + Var(Jy1 + Jy2)]``, 2 for separable coherent spins."""
        i, j = CAVITY_DIM * first, CAVITY_DIM * second
        v = self.matrix
        var_dx = v[i, i] + v[j, j] - 2 * v[i, j]
        var_sy = v[i + 1, i + 1] + v[j + 1, j + 1] + 2 * v[i + 1, j + 1]
        return 0.5 * float(var_dx + var_sy)


def steady_covariance(system: LinearSystem) -> CovarianceMatrix:
    """Solve ``M V + V M^T + D = 0`` for a strictly stable drift."""
    if not system.is_stable():
        raise ConfigurationError("steady state requires a strictly stable drift")
    m, d = system.drift, system.diffusion
    v = sla.solve_continuous_lyapunov(m, -d)
    v = 0.5 * (v + v.T)
    resid = np.linalg.norm(m @ v + v @ m.T + d)
    if resid > LYAPUNOV_RTOL * max(np.linalg.norm(d), 1e-300):
        raise NumericalError(f"Lyapunov residual {resid:.3g} exceeds tolerance")
    return CovarianceMatrix(v, math.inf)


# -- spectra ---------------------------------------------------------------

@dataclass(frozen=True)
class SpinQuadrature:
    """``J_theta = cos(theta) J_x + sin(theta) J_y`` of one cavity."""

    theta: float = 0.0
    cavity: int = 0


@dataclass(frozen=True)
class OutputQuadrature:
    """Output field quadrature ``X_angle`` of one cavity."""

    angle: float = 0.0
    cavity: int = 0


@dataclass
class Spectrum:
    omega: np.ndarray
    values: np.ndarray
    observable: SpinQuadrature | OutputQuadrature
    reference_peak: float = 1.0

    def half_width(self) -> float:
        """Frequency where the spectrum first falls to half its zero-frequency value.

        Found on the grid then refined by linear interpolation; the grid must
        start at 0 and bracket the crossing.
        """
        w, s = self.omega, self.values
        if w[0] != 0:
            raise ValueError("half_width needs a grid starting at omega = 0")
        target = 0.5 * s[0]
        idx = np.nonzero(s <= target)[0]
        if idx.size == 0:
            raise ValueError("grid does not reach the half-maximum")
        k = idx[0]
        return float(w[k - 1] + (target - s[k - 1]) * (w[k] - w[k - 1]) / (s[k] - s[k - 1]))


def _responses(m: np.ndarray, omega: np.ndarray) -> np.ndarray:
    d = m.shape[0]
    a = (-1j * omega)[:, None, None] * np.eye(d) - m[None, :, :]
    return np.linalg.solve(a, np.broadcast_to(np.eye(d), a.shape))


def _spin_spectrum_raw(system: LinearSystem, obs: SpinQuadrature,
                       omega: np.ndarray, diffusion: np.ndarray) -> np.ndarray:
    h = _responses(system.drift, omega)
    c = np.zeros(system.dim)
    k = CAVITY_DIM * obs.cavity
    c[k], c[k + 1] = math.cos(obs.theta), math.sin(obs.theta)
    ch = np.einsum("i,wij->wj", c, h)
    return np.einsum("wi,ij,wj->w", ch, diffusion, ch.conj()).real


def noise_spectrum(system: LinearSystem, observable, omega_grid) -> Spectrum:
    """Stationary noise spectrum of a spin or output-field quadrature.

    Spin spectra are divided by the zero-frequency value of the same spin
    component driven by vacuum input, i.e. the coherent-state Lorentzian
    has unit peak.  Output spectra are in shot-noise units.
    """
    omega = np.asarray(omega_grid, dtype=float)
    if omega.ndim != 1 or omega.size == 0:
        raise ConfigurationError("omega_grid must be a nonempty 1-d sequence")
    if not np.all(np.isfinite(omega)):
        raise ConfigurationError("omega_grid contains non-finite values")
    if not system.is_stable():
        raise ConfigurationError("spectra require a strictly stable drift")

    if isinstance(observable, SpinQuadrature):
        s = _spin_spectrum_raw(system, observable, omega, system.diffusion)
        vac = system.with_input_spectrum(np.eye(system.input_spectrum.shape[0]))
        ref = float(_spin_spectrum_raw(vac, observable, np.zeros(1), vac.diffusion)[0])
        return Spectrum(omega, s / ref, observable, ref)

    if isinstance(observable, OutputQuadrature):
        h = _responses(system.drift, omega)
        row = 2 * observable.cavity
        c = np.array([math.cos(observable.angle), math.sin(observable.angle)])
        lc = c @ system.output_map[row:row + 2]
        fc = c @ system.feedthrough[row:row + 2]
        lh = np.einsum("i,wij->wj", lc, h)
        t = lh @ system.input_map + fc[None, :]
        s_in = np.einsum("wi,ij,wj->w", t, system.input_spectrum, t.conj()).real
        s_at = np.einsum("wi,ij,wj->w", lh, system.langevin_diffusion, lh.conj()).real
        return Spectrum(omega, s_in + s_at, observable)

    raise TypeError(f"unsupported observable {observable!r}")


# -- time evolution --------------------------------------------------------

@dataclass(frozen=True)
class Phase:
    label: str
    duration: float
    omega_rabi: float
    input: InputFieldSpec = field(default_factory=InputFieldSpec.vacuum)


@dataclass(frozen=True)
class ProtocolTimeline:
    """Piecewise-constant control schedule of write/store/read phases."""

    phases: tuple[Phase, ...]

    def __post_init__(self):
        if not self.phases:
            raise ConfigurationError("timeline needs at least one phase")
        for p in self.phases:
            if p.label not in ("write", "store", "read"):
                raise ConfigurationError(f"unknown phase label {p.label!r}")
            if not (p.duration > 0 and math.isfinite(p.duration)):
                raise ConfigurationError(f"{p.label} phase duration must be > 0")
            if p.omega_rabi < 0:
                raise ConfigurationError("omega_rabi must be >= 0")
            if p.label == "store" and p.omega_rabi != 0:
                raise ConfigurationError("store phase requires the control field off")
            if p.label == "read" and p.input.kind != "vacuum":
                raise ConfigurationError("read phase requires vacuum input")

    @property
    def total_duration(self) -> float:
        return sum(p.duration for p in self.phases)

    @classmethod
    def write_store_read(cls, omega_rabi: float, input_field: InputFieldSpec,
                         t_write: float, t_store: float, t_read: float) -> "ProtocolTimeline":
        phases = [Phase("write", t_write, omega_rabi, input_field)]
        if t_store > 0:
            phases.append(Phase("store", t_store, 0.0))
        phases.append(Phase("read", t_read, omega_rabi))
        return cls(tuple(phases))


def systems_for_timeline(params: SystemParams, mode: InteractionMode,
                         timeline: ProtocolTimeline) -> list[LinearSystem]:
    check_mode(params, mode)
    return [build_linear_system(params.with_omega(p.omega_rabi), mode, p.input)
            for p in timeline.phases]


@dataclass
class Trajectory:
    times: np.ndarray
    matrices: np.ndarray
    phase_index: np.ndarray

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, i: int) -> CovarianceMatrix:
        return CovarianceMatrix(self.matrices[i], float(self.times[i]))

    def __iter__(self) -> Iterator[CovarianceMatrix]:
        for i in range(len(self)):
            yield self[i]

    @property
    def final(self) -> CovarianceMatrix:
        return self[-1]

    def spin_series(self, cavity: int = 0) -> dict[str, np.ndarray]:
        """Columns ``var_jx, var_jy, var_min, theta_min`` over the trajectory."""
        k = CAVITY_DIM * cavity
        vx = self.matrices[:, k, k]
        vy = self.matrices[:, k + 1, k + 1]
        pairs = [normalized_min_variance(m[k:k + 2, k:k + 2]) for m in self.matrices]
        theta = np.array([p[0] for p in pairs])
        vmin = np.array([p[1] for p in pairs])
        return {"var_jx": vx.copy(), "var_jy": vy.copy(), "var_min": vmin, "theta_min": theta}


def discretize(drift: np.ndarray, diffusion: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact one-step map ``V -> Phi V Phi^T + Q`` for constant drift and diffusion.

    Van Loan's block exponential on a substep with ``|M| h_sub <= 0.5``,
    then doubled back up; the block exponential alone cancels
    catastrophically when ``|M| h`` is large.
    """
    d = drift.shape[0]
    norm = float(np.max(np.abs(np.linalg.eigvals(drift)))) if d else 0.0
    k = max(0, math.ceil(math.log2(max(norm * h, 1e-300) / 0.5)))
    sub = h / 2**k
    big = np.zeros((2 * d, 2 * d))
    big[:d, :d] = -drift
    big[:d, d:] = diffusion
    big[d:, d:] = drift.T
    e = sla.expm(big * sub)
    phi = e[d:, d:].T
    q = phi @ e[:d, d:]
    q = 0.5 * (q + q.T)
    for _ in range(k):
        q = phi @ q @ phi.T + q
        q = 0.5 * (q + q.T)
        phi = phi @ phi
    return phi, q


def _rk4_step(v, m, d, h):
    def f(x):
        return m @ x + x @ m.T + d
    k1 = f(v)
    k2 = f(v + 0.5 * h * k1)
    k3 = f(v + 0.5 * h * k2)
    k4 = f(v + h * k3)
    return v + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _check_psd(v: np.ndarray, t: float) -> None:
    lam = np.linalg.eigvalsh(v)[0]
    if lam < -PSD_TOL * max(np.trace(v), 1.0):
        raise NumericalError(f"covariance lost positivity at t = {t:.6g} (min eig {lam:.3g})")


def evolve_covariance(systems: Sequence[LinearSystem], timeline: ProtocolTimeline,
                      v0: CovarianceMatrix, dt: float, method: str = "rk4") -> Trajectory:
    """Integrate the covariance through each phase of ``timeline``.

    ``method="rk4"`` is classical fixed-step Runge-Kutta and requires
    ``dt <= 0.01 / max|eig(M)|``.  ``method="exact"`` uses the matrix
    exponential of each constant phase and accepts any ``dt`` (the step only
    sets the sampling of the returned trajectory).  Each phase is cut into
    equal steps no longer than ``dt`` so phase boundaries are hit exactly.
    """
    if len(systems) != len(timeline.phases):
        raise ConfigurationError("one LinearSystem per timeline phase is required")
    if not (dt > 0 and math.isfinite(dt)):
        raise ConfigurationError("dt must be a positive finite number")
    if method not in ("rk4", "exact"):
        raise ConfigurationError(f"unknown integration method {method!r}")
    v = np.array(v0.matrix, dtype=float)
    if v.shape != systems[0].drift.shape:
        raise ConfigurationError("initial covariance has the wrong dimension")

    t = float(v0.time) if math.isfinite(v0.time) else 0.0
    times, mats, idx = [t], [v.copy()], [0]
    for k, (sys_k, phase) in enumerate(zip(systems, timeline.phases)):
        m, d = sys_k.drift, sys_k.diffusion
        n = max(1, math.ceil(phase.duration / dt - 1e-9))
        h = phase.duration / n
        if method == "rk4":
            rate = float(np.max(np.abs(np.linalg.eigvals(m))))
            if h * rate > RK4_DT_FACTOR * (1 + 1e-12):
                raise StepSizeError(
                    f"dt = {h:.3g} exceeds the RK4 bound {RK4_DT_FACTOR / rate:.3g} "
                    f"in the {phase.label} phase")
        else:
            phi, q = discretize(m, d, h)
        t0 = t
        for i in range(n):
            if method == "rk4":
                v = _rk4_step(v, m, d, h)
            else:
                v = phi @ v @ phi.T + q
            v = 0.5 * (v + v.T)
            t = t0 + (i + 1) * h
            _check_psd(v, t)
            times.append(t)
            mats.append(v.copy())
            idx.append(k)
    return Trajectory(np.array(times), np.array(mats), np.array(idx))


# -- readout ---------------------------------------------------------------

@dataclass(frozen=True)
class ReadoutResult:
    """Matched-filter homodyne statistics of the output field.

    ``efficiency`` is ``None`` when the initial spin is not squeezed
    (``var_min(0) = 1``) and the ratio is undefined.
    """

    variance: float
    efficiency: float | None
    angle: float
    spin_var0: float
    accumulator_cov: np.ndarray

    def __iter__(self):
        yield self.variance
        yield self.efficiency


def _augmented(system: LinearSystem, weight: float) -> tuple[np.ndarray, np.ndarray]:
    d = system.dim
    k = system.output_map.shape[0]
    m = np.zeros((d + k, d + k))
    m[:d, :d] = system.drift
    m[d:, :d] = weight * system.output_map
    g = np.vstack([system.input_map, weight * system.feedthrough])
    diff = g @ system.input_spectrum @ g.T
    diff[:d, :d] += system.langevin_diffusion
    return m, 0.5 * (diff + diff.T)


def matched_filter_variance(system: LinearSystem, v0: CovarianceMatrix, filter_rate: float,
                            horizon: float, *, steps_per_unit: float = 100.0) -> ReadoutResult:
    """Variance of ``int h X_out dt / sqrt(int h^2)`` with ``h(t) = exp(-rate t)``.

    The state is augmented with one accumulator per output quadrature and
    the augmented covariance is propagated exactly between sample points,
    with ``h`` held at its midpoint value on each sub-interval.  The
    reported variance is the smallest one over the homodyne angle.
    """
    if filter_rate < 0 or not math.isfinite(filter_rate):
        raise ConfigurationError("filter_rate must be a finite non-negative number")
    if not (horizon > 0 and math.isfinite(horizon)):
        raise ConfigurationError("horizon must be positive and finite")
    gp = system.rates[0].gamma_pump if system.rates else 0.0
    if gp > 0 and horizon < 5.0 / gp * (1 - 1e-9):
        raise ConfigurationError(f"horizon must be >= 5/Gamma_eps = {5.0 / gp:.6g}")

    d = system.dim
    k = system.output_map.shape[0]
    n = max(400, math.ceil(horizon * filter_rate * steps_per_unit))
    h = horizon / n
    v = np.zeros((d + k, d + k))
    v[:d, :d] = v0.matrix
    norm = 0.0
    for i in range(n):
        w = math.exp(-filter_rate * (i + 0.5) * h)
        m, diff = _augmented(system, w)
        phi, q = discretize(m, diff, h)
        v = phi @ v @ phi.T + q
        v = 0.5 * (v + v.T)
        norm += w * w * h
    acc = v[d:d + 2, d:d + 2] / norm
    angle, var = normalized_min_variance(acc)
    _, spin0 = v0.min_spin(0)
    if abs(1.0 - spin0) < 1e-12:
        eff = None
    else:
        eff = (1.0 - var) / (1.0 - spin0)
    return ReadoutResult(float(var), eff, float(angle), float(spin0), v[d:, d:] / norm)


def output_autocorrelation(system: LinearSystem, v0: CovarianceMatrix, t_max: float,
                           n_points: int, angle: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Smooth (non-delta) part of ``<X_out(t) X_out(t')>`` on a square grid.

    For ``t >= t'`` this is ``c L Phi(t - t') [V(t') L^T + B S F^T] c^T``
    with ``c`` selecting the quadrature at ``angle``.
    """
    if n_points < 2:
        raise ConfigurationError("need at least two grid points")
    times = np.linspace(0.0, t_max, n_points)
    step = times[1] - times[0]
    phi, q = discretize(system.drift, system.diffusion, step)
    c = np.array([math.cos(angle), math.sin(angle)])
    lc = c @ system.output_map[:2]
    cross = system.input_map @ system.input_spectrum @ system.feedthrough[:2].T @ c
    v = np.array(v0.matrix, float)
    w = []
    for _ in times:
        w.append(v @ lc + cross)
        v = phi @ v @ phi.T + q
    out = np.zeros((n_points, n_points))
    for j in range(n_points):
        x = w[j]
        for i in range(j, n_points):
            out[i, j] = lc @ x
            x = phi @ x
    out = np.tril(out) + np.tril(out, -1).T
    return times, out


def fast_settling_time(system: LinearSystem, slow_rate: float) -> float:
    """Ten time constants of the slowest eigenmode faster than ``slow_rate``.

    Used to skip the switch-on transient of the optical dipole and field.
    """
    re = -np.linalg.eigvals(system.drift).real
    fast = re[re > 10 * max(slow_rate, 1e-300)]
    if fast.size == 0:
        return 0.0
    return float(10.0 / fast.min())


def propagate_on_grid(system: LinearSystem, v0: CovarianceMatrix, times) -> Trajectory:
    """Exact covariance at each of the (increasing) ``times`` for one constant system."""
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or not np.all(np.isfinite(times)):
        raise ConfigurationError("time grid must be a nonempty finite 1-d sequence")
    if np.any(np.diff(times) < 0) or times[0] < 0:
        raise ConfigurationError("time grid must be non-negative and increasing")
    m, d = system.drift, system.diffusion
    cache: dict[float, tuple[np.ndarray, np.ndarray]] = {}
    v = np.array(v0.matrix, dtype=float)
    t = 0.0
    mats = []
    for tk in times:
        h = tk - t
        if h > 0:
            key = round(h, 12)
            if key not in cache:
                cache[key] = discretize(m, d, h)
            phi, q = cache[key]
            v = phi @ v @ phi.T + q
            v = 0.5 * (v + v.T)
            _check_psd(v, tk)
        t = tk
        mats.append(v.copy())
    return Trajectory(times.copy(), np.array(mats), np.zeros(len(times), dtype=int))
