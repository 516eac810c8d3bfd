"""Closed-form predictions of the adiabatic (bad-cavity) theory.

These are fast predictors and serve as oracles for :mod:`ensemble_memory.linear`.
All variances are normalized to the coherent/shot-noise level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigurationError, UndefinedQuantityError
from .model import DerivedRates

FOUR_OVER_E2 = 4.0 / math.e**2


def _require_gamma_eff(rates: DerivedRates) -> None:
    if rates.gamma_eff <= 0:
        raise UndefinedQuantityError("gamma_eff = 0: normalized transfer quantities undefined")


@dataclass(frozen=True)
class WriteResult:
    var_min: float
    theta_min: float
    efficiency: float
    input_term: float
    gamma0_term: float
    spont_term: float

    @property
    def term_breakdown(self) -> dict[str, float]:
        return {"input_term": self.input_term, "gamma0_term": self.gamma0_term,
                "spont_term": self.spont_term}


def write_variance(rates: DerivedRates, r: float, angle: float = 0.0) -> WriteResult:
    """Steady spin variance after writing a squeezed vacuum of parameter ``r``."""
    _require_gamma_eff(rates)
    if r < 0:
        raise ConfigurationError("r must be >= 0")
    c, gp, ge = rates.coop, rates.gamma_pump, rates.gamma_eff
    input_term = 2 * c / (1 + 2 * c) * gp / ge * math.exp(-2 * r)
    gamma0_term = rates.gamma0 / ge
    spont_term = gp / ((1 + 2 * c) * ge)
    theta = (angle + rates.epsilon) % math.pi
    return WriteResult(
        var_min=input_term + gamma0_term + spont_term,
        theta_min=theta,
        efficiency=transfer_efficiency(rates),
        input_term=input_term,
        gamma0_term=gamma0_term,
        spont_term=spont_term,
    )


def transfer_efficiency(rates: DerivedRates) -> float:
    _require_gamma_eff(rates)
    return rates.eta * rates.gamma_pump / rates.gamma_eff


def transfer_efficiency_curve(
    c_grid: Iterable[float],
    gamma0: float,
    efficiency: Callable[[float, float], float] | None = None,
    *,
    gamma_bounds: tuple[float, float] = (1e-4, 0.1),
) -> list[tuple[float, float]]:
    """Efficiency maximized over the pumping rate, for each cooperativity.

    ``efficiency(C, Gamma_eps)`` defaults to the closed form; any other model
    (e.g. a full Lyapunov evaluation) can be plugged in.  The search is a
    bounded scalar optimization over ``log10(Gamma_eps)`` in
    ``gamma_bounds``, followed by a check of both end points.
    """
    grid = [float(c) for c in c_grid]
    if not grid:
        raise ConfigurationError("empty cooperativity grid")
    if any(c <= 0 for c in grid):
        raise ConfigurationError("cooperativities must be positive")
    if gamma0 < 0:
        raise ConfigurationError("gamma0 must be >= 0")
    lo, hi = gamma_bounds
    if not 0 < lo < hi:
        raise ConfigurationError("gamma_bounds must satisfy 0 < low < high")

    if efficiency is None:
        def efficiency(c, gp):
            return transfer_efficiency(DerivedRates.from_values(c, gp, gamma0))

    out = []
    for c in grid:
        res = minimize_scalar(lambda x: -efficiency(c, 10.0**x),
                              bounds=(math.log10(lo), math.log10(hi)), method="bounded",
                              options={"xatol": 1e-6})
        best = max(-res.fun, efficiency(c, lo), efficiency(c, hi))
        out.append((c, float(best)))
    return out


@dataclass(frozen=True)
class Correlation:
    smooth: float
    has_delta: bool


def readout_correlation(rates: DerivedRates, var0: float, t, t_prime):
    """Smooth part of the output two-time correlation during readout.

    ``-[2C/(1+2C)] 2 Gamma [1 - var0] exp(-Gamma (t + t'))``; ground-state
    decay is neglected.  Broadcasts over array ``t``, ``t_prime``; the
    ``delta(t - t')`` shot-noise term is not included.
    """
    t = np.asarray(t, float)
    tp = np.asarray(t_prime, float)
    if np.any(t < 0) or np.any(tp < 0):
        raise ConfigurationError("times must be >= 0")
    gp = rates.gamma_pump
    val = -rates.eta * 2 * gp * (1.0 - var0) * np.exp(-gp * (t + tp))
    return float(val) if val.ndim == 0 else val


def readout_correlation_point(rates: DerivedRates, var0: float, t: float,
                              t_prime: float) -> Correlation:
    """:func:`readout_correlation` at one point, flagging the delta term at ``t == t'``."""
    return Correlation(readout_correlation(rates, var0, t, t_prime), t == t_prime)


def readout_variance(rates: DerivedRates, var0: float) -> float:
    """Matched-filter output variance ``1 - eta (1 - var0)``."""
    return 1.0 - rates.eta * (1.0 - var0)


def memory_efficiency(rates: DerivedRates, t_store: float) -> float:
    """Global write-store-read efficiency ``eta^2 exp(-2 gamma0 t_s)``."""
    if t_store < 0:
        raise ConfigurationError("storage time must be >= 0")
    return rates.eta**2 * math.exp(-2 * rates.gamma0 * t_store)


def stored_variance(var0: float, gamma0: float, t_store: float) -> float:
    return 1.0 + (var0 - 1.0) * math.exp(-2 * gamma0 * t_store)


@dataclass(frozen=True)
class EprResult:
    i_at: float
    entangled: bool


def epr_transfer(rates: DerivedRates, i_f: float) -> EprResult:
    """Atomic inseparability produced by an EPR input of inseparability ``i_f``."""
    _require_gamma_eff(rates)
    if not 0 <= i_f <= 2:
        raise ConfigurationError("i_f must lie in [0, 2]")
    c, gp, ge = rates.coop, rates.gamma_pump, rates.gamma_eff
    i_at = 2 * c / (1 + 2 * c) * gp / ge * i_f + 2 * (rates.gamma0 / ge + gp / ((1 + 2 * c) * ge))
    return EprResult(i_at, i_at < 2.0)


def _transfer_factor(rates: DerivedRates, t):
    u = 2 * rates.gamma_eff * np.asarray(t, float)
    return rates.eta**4 * u**2 * np.exp(-u)


@dataclass(frozen=True)
class RepeaterResult:
    rates: DerivedRates
    r1: float
    t_opt: float
    peak_squeezing_ratio: float

    def var_x2_of_t(self, t):
        return 1.0 - _transfer_factor(self.rates, t) * (1.0 - math.exp(-2 * self.r1))

    def var_y2_of_t(self, t):
        return 1.0 + _transfer_factor(self.rates, t) * (math.exp(2 * self.r1) - 1.0)

    @property
    def peak_squeezing(self) -> float:
        """``1 - exp(-2 r2)`` reached at ``t_opt``."""
        return self.peak_squeezing_ratio * (1.0 - math.exp(-2 * self.r1))


def repeater_variances(rates: DerivedRates, r1: float) -> RepeaterResult:
    """Spin-2 variances when spin 1 (minimum uncertainty, ``r1``) is read into cavity 2.

    ``eta`` is the ideal ``2C/(1+2C)``; the peak occurs at ``t = 1/gamma_eff``
    with ``peak_squeezing_ratio = (4/e^2) eta^4``.
    """
    _require_gamma_eff(rates)
    if r1 < 0:
        raise ConfigurationError("r1 must be >= 0")
    return RepeaterResult(rates, r1, 1.0 / rates.gamma_eff, FOUR_OVER_E2 * rates.eta**4)
