"""Setting-selection protocols: Bayes utility, Tau heuristic, Random.

All three pick the next precession time from a discrete grid. The Bayes
protocol scores every setting with an information-gain proxy per unit
lab time; Tau applies tau = h / sigma_omega with a fallback to the top
of the grid; Random draws uniformly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .particles import ParticleCloud, cloud_ratios

# Utility values within this absolute distance of the maximum count as
# ties and are broken uniformly at random.
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SettingGrid:
    """Arithmetic progression of allowed precession times (us)."""

    tau_min: float = 0.1
    tau_max: float = 20.0
    step: float = 0.05

    def __post_init__(self):
        if not (self.step > 0 and self.tau_min > 0 and self.tau_max >= self.tau_min):
            raise ValueError("grid requires 0 < tau_min <= tau_max and step > 0")

    def __len__(self) -> int:
        return int(round((self.tau_max - self.tau_min) / self.step)) + 1

    @property
    def taus(self) -> np.ndarray:
        return self.tau_min + self.step * np.arange(len(self))

    def nearest(self, tau: float) -> float:
        """Nearest grid value; exact midpoints round toward smaller tau."""
        pos = (tau - self.tau_min) / self.step
        idx = math.floor(pos)
        frac = pos - idx
        if frac > 0.5:
            idx += 1
        idx = min(max(idx, 0), len(self) - 1)
        return self.tau_min + self.step * idx


@dataclass(frozen=True)
class TauConfig:
    """Tuning of the tau = h / sigma_omega heuristic."""

    h: float = 0.5
    top_fraction: float = 0.1

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("h must be > 0")
        if not 0.0 < self.top_fraction <= 1.0:
            raise ValueError("top_fraction must lie in (0, 1]")


def utility_map(
    cloud: ParticleCloud,
    grid: SettingGrid,
    lambda_b_estimate: float,
    overhead_us: float | None = None,
) -> np.ndarray:
    """Per-setting utility U(tau), aligned with ``grid.taus``.

    For each setting the cloud predicts a distribution of per-sequence
    signal means y = R(theta, tau) * lambda_b. The utility is the
    variance-ratio information-gain proxy

        U = ln(1 + var(y) / mean(y))

    with mean(y) standing in for the Poisson measurement variance,
    divided by the per-sequence duration tau + overhead when
    ``overhead_us`` is given (lab time is the valued resource). This is
    a documented proxy, not a closed-form entropy reduction.
    """
    if lambda_b_estimate <= 0:
        raise ValueError("lambda_b_estimate must be > 0")
    taus = grid.taus
    w = cloud.weights
    a = cloud.column("a")
    c = cloud.column("c")
    omega0 = cloud.column("omega0")
    t2 = cloud.column("t2")
    if (
        np.all(a == a[0])
        and np.all(c == c[0])
        and np.all(t2 == t2[0])
    ):
        # frequency-only spread: R = base + amp(tau) * cos(omega tau),
        # so the weighted moments need only two cosine reductions
        envelope = np.exp(-np.square(taus / t2[0]))
        amp = 0.5 * a[0] * c[0] * envelope
        base = a[0] + amp
        cosm = np.cos(np.outer(omega0, taus))
        s1 = w @ cosm
        s2 = w @ np.square(cosm)
        mean_r = base + amp * s1
        var_r = np.square(amp) * np.maximum(s2 - np.square(s1), 0.0)
    else:
        r = cloud_ratios(cloud, taus)
        mean_r = w @ r
        var_r = np.maximum(w @ np.square(r) - np.square(mean_r), 0.0)
    u = np.log1p(lambda_b_estimate * var_r / mean_r)
    if overhead_us is not None:
        u = u / (taus + overhead_us)
    return u


def select_setting(
    utilities: np.ndarray,
    grid: SettingGrid,
    rng: np.random.Generator,
    selection: str = "argmax",
    softmax_scale: float = 1.0,
) -> float:
    """Pick a setting from a utility map.

    "argmax" breaks ties (within TIE_TOLERANCE of the max) uniformly at
    random; "softmax" samples with probability proportional to
    exp(U / softmax_scale).
    """
    if selection == "argmax":
        candidates = np.flatnonzero(utilities >= utilities.max() - TIE_TOLERANCE)
        idx = int(candidates[rng.integers(len(candidates))])
    elif selection == "softmax":
        if softmax_scale <= 0:
            raise ValueError("softmax_scale must be > 0")
        z = utilities / softmax_scale
        p = np.exp(z - z.max())
        p /= p.sum()
        idx = int(rng.choice(len(utilities), p=p))
    else:
        raise ValueError(f"unknown selection rule {selection!r}")
    return float(grid.taus[idx])


def bayes_design(
    cloud: ParticleCloud,
    grid: SettingGrid,
    lambda_b_estimate: float,
    overhead_us: float,
    rng: np.random.Generator,
    selection: str = "argmax",
    softmax_scale: float = 1.0,
) -> tuple[float, np.ndarray]:
    """Utility-maximizing setting and the full utility map."""
    u = utility_map(cloud, grid, lambda_b_estimate, overhead_us)
    return select_setting(u, grid, rng, selection, softmax_scale), u


def tau_design(
    sigma_omega: float,
    config: TauConfig,
    grid: SettingGrid,
    rng: np.random.Generator,
) -> float:
    """tau = h / sigma_omega snapped to the grid.

    When the target exceeds the grid (including sigma_omega == 0) the
    setting is drawn uniformly from the largest ``top_fraction`` of the
    grid.
    """
    if sigma_omega < 0:
        raise ValueError("sigma_omega must be >= 0")
    if sigma_omega > 0:
        target = config.h / sigma_omega
        if target <= grid.tau_max:
            return grid.nearest(target)
    n_top = max(1, math.ceil(config.top_fraction * len(grid)))
    idx = len(grid) - n_top + int(rng.integers(n_top))
    return float(grid.taus[idx])


def random_design(grid: SettingGrid, rng: np.random.Generator) -> float:
    """Uniform draw over the grid."""
    return float(grid.taus[rng.integers(len(grid))])
