"""Random system and dataset generation for the two benchmark studies.

Cascade study: two randomly sampled stable rational systems in series, a
unit-variance Gaussian white-noise input, a noisy measurement of the
intermediate signal (noise variance equal to the signal variance) and a
much cleaner output measurement (1/100 of the output variance).

Hammerstein study: a static nonlinearity built from a random Legendre
polynomial combination feeding one random stable system, uniform input
on [-1, 1], output-only measurements.

Pole/zero sets are conjugate-closed by construction: magnitudes are
drawn uniformly in the stated range, phases uniformly in (0, pi), and
each draw is mirrored.  Odd orders add one real root with a random sign.
All systems are normalized to unit static gain; the draw is rejected and
repeated when the normalization would divide by (numerically) zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .priors import legendre_basis
from .toeplitz import convolve_truncated

# Magnitude windows for random pole/zero placement.
POLE_MAG = (0.4, 0.8)
ZERO_MAG = (0.0, 0.92)
CASCADE_ORDER = 40
DEGENERATE_GAIN = 1e-8

# Linear-system / nonlinearity order windows, inclusive.
HAMMERSTEIN_ORDERS = {
    "lolo": ((3, 5), (5, 10)),
    "hilo": ((9, 20), (5, 10)),
    "lohi": ((3, 5), (15, 20)),
    "hihi": ((9, 20), (15, 20)),
}


@dataclass
class RationalSystem:
    """Discrete-time rational transfer function held as poles, zeros, gain."""

    poles: np.ndarray
    zeros: np.ndarray
    gain: float = 1.0

    def __post_init__(self):
        self.poles = np.asarray(self.poles, dtype=complex).ravel()
        self.zeros = np.asarray(self.zeros, dtype=complex).ravel()

    @property
    def stable(self) -> bool:
        return bool(np.all(np.abs(self.poles) < 1.0)) if len(self.poles) else True

    def coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        """Real (numerator, denominator) coefficients in powers of the delay."""
        num = self.gain * _real_poly(self.zeros)
        den = _real_poly(self.poles)
        return num, den

    def dc_gain(self) -> float:
        num, den = self.coefficients()
        return float(np.sum(num) / np.sum(den))


def _real_poly(roots: np.ndarray) -> np.ndarray:
    coeff = np.poly(roots) if len(roots) else np.array([1.0])
    if np.iscomplexobj(coeff):
        scale = max(1.0, float(np.max(np.abs(coeff))))
        if np.max(np.abs(coeff.imag)) > 1e-10 * scale:
            raise ValueError("root set is not conjugate-closed")
        coeff = coeff.real
    return np.asarray(coeff, dtype=float)


def _conjugate_set(order: int, mag_range, rng: np.random.Generator) -> np.ndarray:
    """``order`` roots: mirrored upper-half draws plus one real for odd orders."""
    lo, hi = mag_range
    pairs = order // 2
    mags = rng.uniform(lo, hi, size=pairs)
    phases = rng.uniform(0.0, np.pi, size=pairs)
    upper = mags * np.exp(1j * phases)
    roots = np.concatenate([upper, np.conj(upper)])
    if order % 2:
        real_mag = rng.uniform(lo, hi)
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        roots = np.concatenate([roots, [sign * real_mag]])
    return roots


def _normalized_system(order_p: int, order_z: int, rng: np.random.Generator) -> RationalSystem:
    while True:
        poles = _conjugate_set(order_p, POLE_MAG, rng)
        zeros = _conjugate_set(order_z, ZERO_MAG, rng)
        num_at_one = float(np.sum(_real_poly(zeros)))
        den_at_one = float(np.sum(_real_poly(poles)))
        if abs(num_at_one) < DEGENERATE_GAIN:
            continue
        return RationalSystem(poles, zeros, gain=den_at_one / num_at_one)


def sample_cascade_system(rng: np.random.Generator) -> RationalSystem:
    """One 40-pole, 40-zero stable system with unit static gain."""
    return _normalized_system(CASCADE_ORDER, CASCADE_ORDER, rng)


def sample_hammerstein_system(order_range, rng: np.random.Generator) -> RationalSystem:
    """Random-order stable system, order drawn uniformly in the given window."""
    lo, hi = order_range
    order = int(rng.integers(lo, hi + 1))
    return _normalized_system(order, order, rng)


def impulse_response(system: RationalSystem, n: int) -> np.ndarray:
    """First n impulse-response samples via the difference-equation recursion."""
    if not system.stable:
        raise ValueError("system has poles on or outside the unit circle")
    num, den = system.coefficients()
    h = np.zeros(n)
    na = len(den)
    for t in range(n):
        acc = num[t] if t < len(num) else 0.0
        k_max = min(t, na - 1)
        if k_max >= 1:
            acc -= den[1 : k_max + 1] @ h[t - k_max : t][::-1]
        h[t] = acc
    return h


@dataclass
class DatasetSpec:
    """Benchmark dataset description.

    ``orders`` names one of the Hammerstein order windows (or gives a
    pair of (lo, hi) pairs); the cascade kind ignores it.  Noise ratios
    are variances relative to the corresponding noiseless signal.
    """

    kind: str
    n: int = 200
    seed: int = 0
    orders: object = "lolo"
    noise_ratio_v: float = 1.0
    noise_ratio_y: float = 0.01

    def __post_init__(self):
        if self.kind not in ("cascade", "hammerstein"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("need at least one sample")

    def order_windows(self):
        if isinstance(self.orders, str):
            try:
                return HAMMERSTEIN_ORDERS[self.orders.lower()]
            except KeyError:
                raise ValueError(f"unknown order preset {self.orders!r}") from None
        system_w, nonlin_w = self.orders
        return tuple(system_w), tuple(nonlin_w)


@dataclass
class CascadeDataset:
    u: np.ndarray
    w_true: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    v: np.ndarray
    y: np.ndarray
    sigma_v2: float
    sigma_y2: float
    systems: tuple = ()
    seed: int = 0


@dataclass
class HammersteinDataset:
    u: np.ndarray
    f_coeffs: np.ndarray
    w_true: np.ndarray
    g: np.ndarray
    y: np.ndarray
    sigma_y2: float
    system: Optional[RationalSystem] = None
    seed: int = 0


def generate_cascade_dataset(spec: DatasetSpec, rng: np.random.Generator) -> CascadeDataset:
    """Simulate the two-system cascade from zero initial conditions."""
    n = spec.n
    sys1 = sample_cascade_system(rng)
    sys2 = sample_cascade_system(rng)
    g1 = impulse_response(sys1, n)
    g2 = impulse_response(sys2, n)
    u = rng.standard_normal(n)
    w_true = convolve_truncated(u, g1)
    y_clean = convolve_truncated(w_true, g2)
    sigma_v2 = spec.noise_ratio_v * float(np.var(w_true))
    sigma_y2 = spec.noise_ratio_y * float(np.var(y_clean))
    v = w_true + np.sqrt(sigma_v2) * rng.standard_normal(n)
    y = y_clean + np.sqrt(sigma_y2) * rng.standard_normal(n)
    return CascadeDataset(u, w_true, g1, g2, v, y, sigma_v2, sigma_y2, (sys1, sys2), spec.seed)


def generate_hammerstein_dataset(spec: DatasetSpec, rng: np.random.Generator) -> HammersteinDataset:
    """Simulate the static-nonlinearity-plus-linear-system composition.

    The nonlinearity is a Legendre combination with coefficients drawn
    uniformly in [-1, 1] up to the sampled order; the intermediate signal
    is never measured.
    """
    n = spec.n
    system_w, nonlin_w = spec.order_windows()
    system = sample_hammerstein_system(system_w, rng)
    g = impulse_response(system, n)
    nonlin_order = int(rng.integers(nonlin_w[0], nonlin_w[1] + 1))
    f_coeffs = rng.uniform(-1.0, 1.0, size=nonlin_order + 1)
    u = rng.uniform(-1.0, 1.0, size=n)
    w_true = legendre_basis(u, len(f_coeffs)) @ f_coeffs
    y_clean = convolve_truncated(w_true, g)
    sigma_y2 = spec.noise_ratio_y * float(np.var(y_clean))
    y = y_clean + np.sqrt(sigma_y2) * rng.standard_normal(n)
    return HammersteinDataset(u, f_coeffs, w_true, g, y, sigma_y2, system, spec.seed)


def generate_dataset(spec: DatasetSpec, rng: Optional[np.random.Generator] = None):
    """Dispatch on the dataset kind; a fresh generator is seeded from the spec."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    if spec.kind == "cascade":
        return generate_cascade_dataset(spec, rng)
    return generate_hammerstein_dataset(spec, rng)


# ---------------------------------------------------------------------------
# serialization: measurement CSV plus a JSON sidecar carrying the truth


def write_dataset(ds, csv_path, sidecar_path):
    """Write measurements as CSV (t, u, v, y) and the ground truth as JSON."""
    import csv as _csv

    with open(csv_path, "w", newline="") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["t", "u", "v", "y"])
        has_v = isinstance(ds, CascadeDataset)
        for t in range(len(ds.y)):
            v_field = repr(ds.v[t]) if has_v else ""
            writer.writerow([t + 1, repr(ds.u[t]), v_field, repr(ds.y[t])])
    with open(sidecar_path, "w") as fh:
        json.dump(_sidecar_dict(ds), fh, sort_keys=True, indent=1)


def _system_dict(system: RationalSystem) -> dict:
    return {
        "poles": [[z.real, z.imag] for z in system.poles],
        "zeros": [[z.real, z.imag] for z in system.zeros],
        "gain": system.gain,
    }


def _sidecar_dict(ds) -> dict:
    if isinstance(ds, CascadeDataset):
        return {
            "kind": "cascade",
            "seed": ds.seed,
            "sigma_v2": ds.sigma_v2,
            "sigma_y2": ds.sigma_y2,
            "w_true": list(ds.w_true),
            "g1": list(ds.g1),
            "g2": list(ds.g2),
            "systems": [_system_dict(s) for s in ds.systems],
        }
    return {
        "kind": "hammerstein",
        "seed": ds.seed,
        "sigma_y2": ds.sigma_y2,
        "f_coeffs": list(ds.f_coeffs),
        "w_true": list(ds.w_true),
        "g": list(ds.g),
        "system": _system_dict(ds.system) if ds.system is not None else None,
    }


def load_dataset(csv_path, sidecar_path):
    """Inverse of :func:`write_dataset`."""
    import csv as _csv

    with open(sidecar_path) as fh:
        meta = json.load(fh)
    t_col, u_col, v_col, y_col = [], [], [], []
    with open(csv_path, newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader)
        if header != ["t", "u", "v", "y"]:
            raise ValueError(f"unexpected dataset header {header}")
        for row in reader:
            t_col.append(int(row[0]))
            u_col.append(float(row[1]))
            v_col.append(float(row[2]) if row[2] != "" else np.nan)
            y_col.append(float(row[3]))
    u = np.array(u_col)
    y = np.array(y_col)
    if meta["kind"] == "cascade":
        systems = tuple(
            RationalSystem(
                poles=[complex(a, b) for a, b in s["poles"]],
                zeros=[complex(a, b) for a, b in s["zeros"]],
                gain=s["gain"],
            )
            for s in meta.get("systems", [])
        )
        return CascadeDataset(
            u=u,
            w_true=np.array(meta["w_true"]),
            g1=np.array(meta["g1"]),
            g2=np.array(meta["g2"]),
            v=np.array(v_col),
            y=y,
            sigma_v2=meta["sigma_v2"],
            sigma_y2=meta["sigma_y2"],
            systems=systems,
            seed=meta["seed"],
        )
    system = meta.get("system")
    return HammersteinDataset(
        u=u,
        f_coeffs=np.array(meta["f_coeffs"]),
        w_true=np.array(meta["w_true"]),
        g=np.array(meta["g"]),
        y=y,
        sigma_y2=meta["sigma_y2"],
        system=RationalSystem(
            poles=[complex(a, b) for a, b in system["poles"]],
            zeros=[complex(a, b) for a, b in system["zeros"]],
            gain=system["gain"],
        )
        if system
        else None,
        seed=meta["seed"],
    )
