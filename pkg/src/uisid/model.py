"""Problem container and the hyperparameter vector estimated from data."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .conditionals import NoiseModel
from .priors import PriorSpec


@dataclass
class UIModel:
    """One identification problem instance.

    Parameters
    ----------
    y : ndarray
        Output measurements, length n.
    v : ndarray or None
        Input measurements, length n; None when the input is never
        measured (the noise model must then carry an infinite input
        variance or an all-False mask).
    prior_g, prior_w : PriorSpec
        Gaussian-process priors of the impulse response and the input.
    noise : NoiseModel
        Measurement-noise variances (initial values for estimation).
    """

    y: np.ndarray
    v: Optional[np.ndarray]
    prior_g: PriorSpec
    prior_w: PriorSpec
    noise: NoiseModel

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.v is not None:
            self.v = np.asarray(self.v, dtype=float).ravel()
            if len(self.v) != len(self.y):
                raise ValueError("y and v lengths differ")
        if self.v is None and self.noise.has_v(len(self.y)):
            raise ValueError("noise model expects input measurements but v is None")

    @property
    def n(self) -> int:
        return len(self.y)

    def with_noise(self, sigma_y2: float, sigma_v2: float) -> "UIModel":
        return replace(self, noise=NoiseModel(sigma_y2, sigma_v2, self.noise.v_mask))

    def initial_hyperparameters(self) -> "Hyperparameters":
        """Hyperparameters assembled from the spec values stored on the model."""
        return Hyperparameters(
            rho=self.prior_g.params(),
            theta=self.prior_w.params(),
            sigma_y2=self.noise.sigma_y2,
            sigma_v2=self.noise.sigma_v2,
        )


@dataclass
class Hyperparameters:
    """Kernel/mean parameters of both priors plus the noise variances.

    ``rho`` parametrizes the impulse-response prior and ``theta`` the
    input prior (kernel hypers, or basis coefficients when that prior is
    a point mass).  An infinite ``sigma_v2`` is preserved by every
    update.
    """

    rho: np.ndarray
    theta: np.ndarray
    sigma_y2: float
    sigma_v2: float = np.inf

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float).ravel()
        self.theta = np.asarray(self.theta, dtype=float).ravel()
        self.sigma_y2 = float(self.sigma_y2)
        self.sigma_v2 = float(self.sigma_v2)

    def noise(self, model: UIModel) -> NoiseModel:
        """Noise model at the current variances, keeping the model's mask."""
        return NoiseModel(self.sigma_y2, self.sigma_v2, model.noise.v_mask)

    def vector(self) -> np.ndarray:
        """Finite components stacked for the stopping rule (inf excluded)."""
        parts = [self.rho, self.theta, [self.sigma_y2]]
        if np.isfinite(self.sigma_v2):
            parts.append([self.sigma_v2])
        return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])

    def rel_change(self, other: "Hyperparameters") -> float:
        """max_i |delta_i| / (|self_i| + 1e-12) against another estimate."""
        a, b = self.vector(), other.vector()
        return float(np.max(np.abs(a - b) / (np.abs(a) + 1e-12)))

    def replace(self, **kwargs) -> "Hyperparameters":
        return replace(self, **kwargs)
