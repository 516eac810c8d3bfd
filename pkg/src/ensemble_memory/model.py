"""Physical parameters, effective rates and spin-variance helpers.

Everything here is a pure function of its arguments.  Rates are angular
frequencies; any consistent unit works, the command line uses ``gamma = 1``.

The cooperativity is ``C = g**2 N / (2 kappa gamma tau)``.  It is the value
for which eliminating the optical dipole and the intracavity field from the
three fluctuation equations produces the ``1 + 2C`` enhancement factors of
the effective spin dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .errors import ConfigurationError, UndefinedQuantityError

#: Smallest one-photon detuning (in units of gamma) accepted for Raman mode.
RAMAN_MIN_DETUNING = 10.0

#: Ratio used to decide each "much less than" relation in a regime report.
REGIME_RATIO = 10.0


@dataclass(frozen=True)
class SystemParams:
    """Constants of one cavity containing one atomic ensemble.

    ``g`` may be zero, which decouples the atoms and leaves an empty
    cavity for the field.
    """

    g: float
    n_atoms: float
    omega_rabi: float
    gamma: float
    gamma0: float
    kappa: float
    tau: float
    delta1: float = 0.0
    delta2: float = 0.0
    delta_cav: float = 0.0

    def __post_init__(self):
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        for name, value in values.items():
            if not math.isfinite(value):
                raise ConfigurationError(f"{name} must be finite, got {value!r}")
        if self.gamma <= 0:
            raise ConfigurationError("gamma must be > 0")
        if self.kappa <= 0:
            raise ConfigurationError("kappa must be > 0")
        if self.tau <= 0:
            raise ConfigurationError("tau must be > 0")
        if self.n_atoms < 1:
            raise ConfigurationError("n_atoms must be >= 1")
        if self.gamma0 < 0:
            raise ConfigurationError("gamma0 must be >= 0")
        if self.g < 0:
            raise ConfigurationError("g must be >= 0 (the coupling is taken real)")
        if self.omega_rabi < 0:
            raise ConfigurationError("omega_rabi must be >= 0")
        t = self.transmission
        if not 0 < t <= 1:
            raise ConfigurationError(f"mirror transmission 2*kappa*tau = {t:g} must lie in (0, 1]")

    @property
    def transmission(self) -> float:
        return 2.0 * self.kappa * self.tau

    @property
    def delta(self) -> float:
        """Two-photon detuning."""
        return self.delta1 - self.delta2

    @property
    def cooperativity(self) -> float:
        return self.g**2 * self.n_atoms / (2.0 * self.kappa * self.gamma * self.tau)

    @property
    def collective_coupling(self) -> float:
        """``g sqrt(N / tau)``, the atom-field coupling in normalized units."""
        return self.g * math.sqrt(self.n_atoms / self.tau)

    def with_omega(self, omega_rabi: float) -> "SystemParams":
        return replace(self, omega_rabi=omega_rabi)

    @classmethod
    def from_rates(
        cls,
        coop: float,
        gamma_pump: float,
        mode: "InteractionMode",
        *,
        kappa: float,
        gamma0: float = 0.0,
        gamma: float = 1.0,
        n_atoms: float = 1e6,
        transmission: float = 0.1,
    ) -> "SystemParams":
        """Back-solve a canonical raw parameter set from ``(C, Gamma_eps)``.

        ``n_atoms`` and ``transmission`` are free choices; physical
        predictions of the linearized model do not depend on them.
        """
        if coop < 0:
            raise ConfigurationError("cooperativity must be >= 0")
        if gamma_pump < 0:
            raise ConfigurationError("effective pumping rate must be >= 0")
        if kappa <= 0 or gamma <= 0:
            raise ConfigurationError("kappa and gamma must be > 0")
        tau = transmission / (2.0 * kappa)
        g = math.sqrt(2.0 * kappa * gamma * tau * coop / n_atoms)
        if mode.kind == "EIT":
            omega = math.sqrt(gamma_pump * gamma * (1.0 + 2.0 * coop))
            d = 0.0
        else:
            omega = math.sqrt(gamma_pump * mode.detuning**2 / ((1.0 + 2.0 * coop) * gamma))
            d = mode.detuning
        return cls(g=g, n_atoms=n_atoms, omega_rabi=omega, gamma=gamma, gamma0=gamma0,
                   kappa=kappa, tau=tau, delta1=d, delta2=d)


@dataclass(frozen=True)
class InteractionMode:
    """EIT (resonant) or Raman (far detuned, ``detuning`` on the dipole)."""

    kind: Literal["EIT", "Raman"] = "EIT"
    detuning: float = 0.0

    def __post_init__(self):
        if self.kind not in ("EIT", "Raman"):
            raise ConfigurationError(f"unknown interaction mode {self.kind!r}")
        if not math.isfinite(self.detuning):
            raise ConfigurationError("detuning must be finite")
        if self.kind == "EIT" and self.detuning != 0.0:
            raise ConfigurationError("EIT mode requires zero one-photon detuning")

    @property
    def epsilon(self) -> float:
        """Field quadrature angle coupled to ``J_x``: 0 for EIT, pi/2 for Raman."""
        return 0.0 if self.kind == "EIT" else math.pi / 2

    @classmethod
    def eit(cls) -> "InteractionMode":
        return cls("EIT")

    @classmethod
    def raman(cls, detuning: float) -> "InteractionMode":
        return cls("Raman", detuning)


def check_mode(params: SystemParams, mode: InteractionMode) -> None:
    """Raise :class:`ConfigurationError` if ``params`` and ``mode`` disagree."""
    if params.delta_cav != 0.0:
        raise ConfigurationError("nonzero cavity detuning is not supported; "
                                 "the effective cavity detuning is held at zero")
    if params.delta != 0.0:
        raise ConfigurationError("nonzero two-photon detuning is not supported")
    if mode.kind == "EIT":
        if params.delta2 != 0.0:
            raise ConfigurationError("EIT requires one- and two-photon resonance")
    else:
        if abs(mode.detuning) < RAMAN_MIN_DETUNING * params.gamma:
            raise ConfigurationError(
                f"Raman mode needs |detuning| >= {RAMAN_MIN_DETUNING:g}*gamma, "
                f"got {mode.detuning:g}")
        if params.delta2 not in (0.0, mode.detuning):
            raise ConfigurationError("params one-photon detuning disagrees with the Raman mode")


@dataclass(frozen=True)
class DerivedRates:
    coop: float
    gamma_pump: float
    gamma_eff: float
    beta: float
    transmission: float
    gamma0: float
    n_atoms: float
    epsilon: float = 0.0

    @property
    def eta(self) -> float:
        """Ideal transfer efficiency ``2C/(1+2C)`` (no ground-state decay)."""
        return 2.0 * self.coop / (1.0 + 2.0 * self.coop)

    @classmethod
    def from_values(cls, coop: float, gamma_pump: float, gamma0: float = 0.0, *,
                    n_atoms: float = 1.0, epsilon: float = 0.0,
                    transmission: float = float("nan")) -> "DerivedRates":
        """Rates from ``(C, Gamma_eps, gamma0)`` alone, with ``beta`` from the
        coupling identity."""
        if coop < 0 or gamma_pump < 0 or gamma0 < 0:
            raise ConfigurationError("rates must be non-negative")
        beta = math.sqrt(0.5 * n_atoms * gamma_pump * 2 * coop / (1 + 2 * coop))
        return cls(coop, gamma_pump, gamma0 + gamma_pump, beta, transmission, gamma0,
                   n_atoms, epsilon)


def derive_rates(params: SystemParams, mode: InteractionMode) -> DerivedRates:
    check_mode(params, mode)
    c = params.cooperativity
    om, gam, t = params.omega_rabi, params.gamma, params.transmission
    n = params.n_atoms
    if mode.kind == "EIT":
        gamma_pump = om**2 / gam / (1.0 + 2.0 * c)
        beta = params.g * n * om / (gam * (1.0 + 2.0 * c) * math.sqrt(t))
    else:
        d = mode.detuning
        gamma_pump = (1.0 + 2.0 * c) * gam * om**2 / d**2
        beta = params.g * n * om / (abs(d) * math.sqrt(t))
    return DerivedRates(
        coop=c,
        gamma_pump=gamma_pump,
        gamma_eff=params.gamma0 + gamma_pump,
        beta=beta,
        transmission=t,
        gamma0=params.gamma0,
        n_atoms=n,
        epsilon=mode.epsilon,
    )


@dataclass(frozen=True)
class RegimeCheck:
    name: str
    ratio: float
    threshold: float
    passed: bool

    @property
    def verdict(self) -> str:
        return "pass" if self.passed else "warn"


@dataclass(frozen=True)
class RegimeReport:
    checks: tuple[RegimeCheck, ...]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def warnings(self) -> list[str]:
        return [f"regime check '{c.name}' not satisfied: ratio {c.ratio:.4g} < {c.threshold:g}"
                for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> RegimeCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return math.inf if num > 0 else 0.0
    return num / den


def validate_regime(params: SystemParams, mode: InteractionMode) -> RegimeReport:
    """Report how well ``C >> 1`` and ``gamma0 << Gamma << gamma, kappa`` hold.

    Each relation passes when the ratio of the large to the small side is at
    least :data:`REGIME_RATIO`.  Never raises on a bad regime.
    """
    rates = derive_rates(params, mode)
    gp = rates.gamma_pump
    pairs = [
        ("C >> 1", rates.coop),
        ("gamma0 << Gamma_eps", _ratio(gp, params.gamma0) if gp > 0 else 0.0),
        ("Gamma_eps << gamma", _ratio(params.gamma, gp)),
        ("Gamma_eps << kappa", _ratio(params.kappa, gp)),
    ]
    if mode.kind == "Raman":
        pairs.append(("|Delta| >> (1+2C) gamma",
                      abs(mode.detuning) / ((1 + 2 * rates.coop) * params.gamma)))
    checks = tuple(RegimeCheck(n, float(r), REGIME_RATIO, bool(r >= REGIME_RATIO))
                   for n, r in pairs)
    return RegimeReport(checks)


@dataclass(frozen=True)
class InputFieldSpec:
    """Broadband input state of the cavity field.

    ``r`` and ``angle`` describe a squeezed vacuum (quadrature ``angle`` has
    flat spectrum ``exp(-2r)``).  For ``epr_pair``, ``i_f`` is the
    inseparability of the two beams measured in the mode's quadratures.
    """

    kind: Literal["vacuum", "squeezed_vacuum", "epr_pair"] = "vacuum"
    r: float = 0.0
    angle: float = 0.0
    i_f: float = 2.0

    def __post_init__(self):
        if self.kind not in ("vacuum", "squeezed_vacuum", "epr_pair"):
            raise ConfigurationError(f"unknown input kind {self.kind!r}")
        if not (math.isfinite(self.r) and math.isfinite(self.angle) and math.isfinite(self.i_f)):
            raise ConfigurationError("input field parameters must be finite")
        if self.r < 0:
            raise ConfigurationError("squeezing parameter r must be >= 0")
        if self.kind == "vacuum" and self.r != 0:
            raise ConfigurationError("vacuum input must have r = 0")
        if self.kind == "epr_pair" and not 0 < self.i_f <= 2:
            raise ConfigurationError("EPR input inseparability must lie in (0, 2]")

    @classmethod
    def vacuum(cls) -> "InputFieldSpec":
        return cls("vacuum")

    @classmethod
    def squeezed(cls, r: float, angle: float = 0.0) -> "InputFieldSpec":
        return cls("squeezed_vacuum", r=r, angle=angle)

    @classmethod
    def from_noise_reduction(cls, r_in: float, angle: float = 0.0) -> "InputFieldSpec":
        """Squeezed vacuum with noise reduction ``R_in = 1 - exp(-2r)``."""
        if not 0 <= r_in < 1:
            raise ConfigurationError("R_in must lie in [0, 1)")
        return cls.squeezed(-0.5 * math.log1p(-r_in), angle)

    @classmethod
    def epr(cls, i_f: float) -> "InputFieldSpec":
        return cls("epr_pair", i_f=i_f)

    def quadrature_spectrum(self, offset: float = 0.0) -> np.ndarray:
        """2x2 spectral matrix over ``(X, Y)`` of one beam.

        ``offset`` rotates the squeezing ellipse; for an EPR pair each beam
        alone is thermal with variance ``cosh(2s)``.
        """
        if self.kind == "epr_pair":
            return math.cosh(2 * self.epr_squeezing) * np.eye(2)
        phi = self.angle + offset
        c, s = math.cos(phi), math.sin(phi)
        rot = np.array([[c, -s], [s, c]])
        return rot @ np.diag([math.exp(-2 * self.r), math.exp(2 * self.r)]) @ rot.T

    @property
    def epr_squeezing(self) -> float:
        """Two-mode squeezing ``s`` with ``I_f = 2 exp(-2s)``."""
        return -0.5 * math.log(self.i_f / 2.0)


def min_spin_variance(cov_xy, jz_mean: float) -> tuple[float, float]:
    """Minimum normalized transverse spin variance and its angle.

    Parameters
    ----------
    cov_xy : array_like, shape (2, 2)
        Symmetrized covariance of ``(dJx, dJy)``.
    jz_mean : float
        Mean longitudinal spin; the coherent-state variance is ``|jz|/2``.

    Returns
    -------
    theta_min : float
        Angle in ``[0, pi)`` of the least noisy component ``J_theta``;
        0 when the covariance is isotropic.
    var_min : float
        ``min_theta Var(J_theta) / (|jz|/2)``.
    """
    cov = np.asarray(cov_xy, dtype=float)
    if cov.shape != (2, 2):
        raise ValueError("cov_xy must be 2x2")
    if jz_mean == 0 or not math.isfinite(jz_mean):
        raise UndefinedQuantityError("jz_mean = 0: spin-squeezing normalization undefined")
    a, b = cov[0, 0], cov[1, 1]
    c = 0.5 * (cov[0, 1] + cov[1, 0])
    half_diff = 0.5 * (a - b)
    amp = math.hypot(half_diff, c)
    var = 0.5 * (a + b) - amp
    if amp <= 1e-12 * max(abs(a) + abs(b), 1e-300):
        theta = 0.0
    else:
        # Var(theta) = (a+b)/2 + half_diff cos 2t + c sin 2t
        theta = 0.5 * math.atan2(-c, -half_diff)
        theta %= math.pi
        if theta >= math.pi:
            theta = 0.0
    return theta, var / (abs(jz_mean) / 2.0)


def normalized_min_variance(v_xy) -> tuple[float, float]:
    """:func:`min_spin_variance` for a block already normalized to shot noise 1."""
    return min_spin_variance(v_xy, 2.0)
