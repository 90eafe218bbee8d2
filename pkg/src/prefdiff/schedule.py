"""Exponential noise schedule and every per-step quantity derived from it.

The signal-retention sequence is defined through its complement:

    1 - alpha_bar_t = eta * (1 - exp(-alpha_min/T - s_t*(alpha_max - alpha_min)/(2*T^2)))

where s_t ranges over T uniformly spaced values from 1 to 2T+1. All arrays
are computed once in float64 at construction; model arithmetic downstream
may be float32, the schedule stays float64.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Schedule:
    """Precomputed per-step noise quantities, arrays indexed by t-1 for t=1..T."""

    T: int
    eta: float
    alpha_min: float
    alpha_max: float
    one_minus_alpha_bar: np.ndarray = field(repr=False)
    alpha_bar: np.ndarray = field(repr=False)
    alpha: np.ndarray = field(repr=False)
    beta: np.ndarray = field(repr=False)
    beta_tilde: np.ndarray = field(repr=False)
    post_coef_u0: np.ndarray = field(repr=False)
    post_coef_ut: np.ndarray = field(repr=False)

    def check_step(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise IndexError(f"step t={t} outside 1..{self.T}")

    def alpha_bar_prev(self, t: int) -> float:
        """alpha_bar at t-1 with the convention alpha_bar_0 = 1."""
        self.check_step(t)
        return 1.0 if t == 1 else float(self.alpha_bar[t - 2])


def uniform_spacing(T: int) -> np.ndarray:
    """T uniformly spaced values from 1 to 2T+1 (midpoint T+1 when T == 1)."""
    if T == 1:
        return np.array([float(T + 1)])
    return 1.0 + np.arange(T, dtype=np.float64) * (2.0 * T / (T - 1))


def build_schedule(T: int, eta: float, alpha_min: float, alpha_max: float) -> Schedule:
    if T < 1:
        raise ConfigurationError(f"T must be >= 1, got {T}")
    if not 0.0 < eta <= 1.0:
        raise ConfigurationError(f"eta must be in (0, 1], got {eta}")
    if not 0.0 < alpha_min < alpha_max:
        raise ConfigurationError(
            f"need 0 < alpha_min < alpha_max, got {alpha_min=} {alpha_max=}")

    s = uniform_spacing(T)
    exponent = -alpha_min / T - s * (alpha_max - alpha_min) / (2.0 * T * T)
    one_minus_ab = eta * (1.0 - np.exp(exponent))
    alpha_bar = 1.0 - one_minus_ab
    ab_prev = np.concatenate(([1.0], alpha_bar[:-1]))
    alpha = alpha_bar / ab_prev
    beta = 1.0 - alpha
    beta_tilde = (1.0 - ab_prev) / one_minus_ab * beta
    post_coef_u0 = np.sqrt(ab_prev) * beta / one_minus_ab
    post_coef_ut = np.sqrt(alpha) * (1.0 - ab_prev) / one_minus_ab
    return Schedule(
        T=T, eta=eta, alpha_min=alpha_min, alpha_max=alpha_max,
        one_minus_alpha_bar=one_minus_ab, alpha_bar=alpha_bar, alpha=alpha,
        beta=beta, beta_tilde=beta_tilde,
        post_coef_u0=post_coef_u0, post_coef_ut=post_coef_ut,
    )


def posterior_mean_coeffs(s: Schedule, t: int) -> tuple[float, float, float]:
    """Coefficients (on the clean state, on the noised state) and variance of
    the closed-form denoising posterior at step t."""
    s.check_step(t)
    return (float(s.post_coef_u0[t - 1]),
            float(s.post_coef_ut[t - 1]),
            float(s.beta_tilde[t - 1]))


def dump_tsv(s: Schedule) -> str:
    """TSV of t, beta_t, alpha_bar_t, beta_tilde_t (for plotting)."""
    lines = ["t\tbeta\talpha_bar\tbeta_tilde"]
    for t in range(1, s.T + 1):
        lines.append(f"{t}\t{s.beta[t-1]:.12g}\t{s.alpha_bar[t-1]:.12g}\t{s.beta_tilde[t-1]:.12g}")
    return "\n".join(lines) + "\n"
