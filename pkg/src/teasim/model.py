"""Domain types for pulsed two-tone electromechanics.

All frequencies and rates are stored internally in angular units (rad/s).
Configuration files use ordinary frequency (Hz); the conversion happens at
the file boundary, never inside the physics.  Quadrature variances are in
quanta with the vacuum at 1/2 per quadrature.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

#: Zero-point (vacuum) variance of a single quadrature, in quanta.
VACUUM_VARIANCE = 0.5

#: Relative tolerance on the Heisenberg bound det(cov) >= 1/4, absorbing
#: the rounding drift of long covariance integrations.
HEISENBERG_RTOL = 1e-9

#: A pump pair is treated as adiabatically eliminable when both rates stay
#: below this fraction of the cavity linewidth.
STRONG_COUPLING_FRACTION = 0.1


def _as_readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DeviceParams:
    """Physical constants of the electromechanical device.

    Rates are angular (rad/s); ``n_m`` and ``n_c`` are bath occupancies in
    quanta.
    """

    omega_c: float
    kappa: float
    kappa_ext: float
    omega_m: float
    gamma_m: float
    g0: float
    n_m: float
    n_c: float = 0.0

    def __post_init__(self) -> None:
        rates = {
            "omega_c": self.omega_c,
            "kappa": self.kappa,
            "kappa_ext": self.kappa_ext,
            "omega_m": self.omega_m,
            "gamma_m": self.gamma_m,
            "g0": self.g0,
        }
        for name, value in rates.items():
            if not math.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be finite and strictly positive, got {value!r}")
        if self.kappa_ext > self.kappa:
            raise ValueError(
                f"kappa_ext ({self.kappa_ext}) cannot exceed kappa ({self.kappa})"
            )
        if self.n_m < 0.0 or self.n_c < 0.0:
            raise ValueError("bath occupancies n_m, n_c must be non-negative")

    @property
    def kappa_0(self) -> float:
        """Internal cavity decay rate, ``kappa - kappa_ext``."""
        return self.kappa - self.kappa_ext

    def resolved_sideband(self) -> bool:
        """Whether the device sits in the resolved-sideband regime."""
        return self.kappa < self.omega_m

    def with_bath(self, n_m: float | None = None, n_c: float | None = None) -> "DeviceParams":
        """Copy with replaced bath occupancies."""
        kwargs = {}
        if n_m is not None:
            kwargs["n_m"] = n_m
        if n_c is not None:
            kwargs["n_c"] = n_c
        return replace(self, **kwargs)

    def to_dict(self) -> dict:
        """Plain-float mapping (rad/s); round-trips bit-exactly through JSON."""
        return {
            "omega_c": self.omega_c,
            "kappa": self.kappa,
            "kappa_ext": self.kappa_ext,
            "omega_m": self.omega_m,
            "gamma_m": self.gamma_m,
            "g0": self.g0,
            "n_m": self.n_m,
            "n_c": self.n_c,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, float]) -> "DeviceParams":
        return cls(**{k: float(d[k]) for k in (
            "omega_c", "kappa", "kappa_ext", "omega_m", "gamma_m", "g0", "n_m", "n_c")})


def default_device() -> DeviceParams:
    """The reference device used throughout the examples and tests."""
    return DeviceParams(
        omega_c=TWO_PI * 7.376841e9,
        kappa=TWO_PI * 3.4e6,
        kappa_ext=TWO_PI * 3.1e6,
        omega_m=TWO_PI * 9.3608e6,
        gamma_m=TWO_PI * 21.0,
        g0=TWO_PI * 287.0,
        n_m=36.0,
        n_c=0.0,
    )


def pump_rate(n_photons: float, dev: DeviceParams) -> float:
    """Electromechanical rate induced by ``n_photons`` circulating photons.

    ``Gamma = 4 g0^2 n / kappa``; the inverse of the operating-point
    convention in which the pump rates themselves are primary inputs.
    """
    if n_photons < 0:
        raise ValueError("photon number must be non-negative")
    return 4.0 * dev.g0 ** 2 * n_photons / dev.kappa


@dataclass(frozen=True)
class PumpSegment:
    """One pulse-schedule segment of simultaneous red/blue pumping.

    ``gamma_plus``/``gamma_minus`` are the blue/red induced rates (rad/s),
    ``delta_0`` a static common detuning of both pumps from their optimal
    placement, ``delta_m`` the pump-frequency offset from the mechanical
    frequency, ``phi_avg`` the mean pump phase that sets the measurement or
    squeezing axis, and ``envelope_sigma`` the Gaussian edge width of the
    square pulse.
    """

    duration: float
    gamma_plus: float = 0.0
    gamma_minus: float = 0.0
    delta_0: float = 0.0
    delta_m: float = 0.0
    phi_avg: float = 0.0
    envelope_sigma: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.duration) or self.duration < 0.0:
            raise ValueError(f"duration must be finite and >= 0, got {self.duration!r}")
        if self.gamma_plus < 0.0 or self.gamma_minus < 0.0:
            raise ValueError("pump rates gamma_plus, gamma_minus must be >= 0")
        if self.envelope_sigma < 0.0:
            raise ValueError("envelope_sigma must be >= 0")

    @property
    def gamma_em(self) -> float:
        """Net electromechanical rate ``gamma_minus - gamma_plus``."""
        return self.gamma_minus - self.gamma_plus

    def adiabatic(self, dev: DeviceParams) -> bool:
        """Whether adiabatic cavity elimination is valid for this segment."""
        return max(self.gamma_plus, self.gamma_minus) < STRONG_COUPLING_FRACTION * dev.kappa

    def to_dict(self) -> dict:
        return {
            "duration": self.duration,
            "gamma_plus": self.gamma_plus,
            "gamma_minus": self.gamma_minus,
            "delta_0": self.delta_0,
            "delta_m": self.delta_m,
            "phi_avg": self.phi_avg,
            "envelope_sigma": self.envelope_sigma,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, float]) -> "PumpSegment":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class PulseSchedule:
    """A time-ordered sequence of pump segments."""

    segments: tuple[PumpSegment, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))

    def __iter__(self) -> Iterator[PumpSegment]:
        return iter(self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def __getitem__(self, i):
        return self.segments[i]

    @property
    def duration(self) -> float:
        return sum(seg.duration for seg in self.segments)

    def start_times(self) -> list[float]:
        """Start time of each segment relative to the schedule start."""
        starts, t = [], 0.0
        for seg in self.segments:
            starts.append(t)
            t += seg.duration
        return starts

    def to_list(self) -> list[dict]:
        return [seg.to_dict() for seg in self.segments]

    @classmethod
    def from_list(cls, items: Sequence[Mapping[str, float]]) -> "PulseSchedule":
        return cls(tuple(PumpSegment.from_dict(d) for d in items))


def validate(schedule: PulseSchedule | Sequence[PumpSegment], dev: DeviceParams) -> list[str]:
    """Physics sanity warnings for a schedule; empty list means all clear.

    Flags segments that leave the weak-coupling regime required for
    adiabatic cavity elimination, and degenerate pulses whose duration does
    not dominate their envelope edges.
    """
    warnings: list[str] = []
    for i, seg in enumerate(schedule):
        limit = STRONG_COUPLING_FRACTION * dev.kappa
        if max(seg.gamma_plus, seg.gamma_minus) >= limit:
            warnings.append(
                f"segment {i}: max pump rate {max(seg.gamma_plus, seg.gamma_minus):.3e} rad/s "
                f"reaches {limit:.3e} (kappa/10); adiabatic elimination unreliable "
                f"(strong-coupling regime)"
            )
        if not seg.duration > 4.0 * seg.envelope_sigma:
            warnings.append(
                f"segment {i}: duration {seg.duration:.3e} s does not exceed four envelope "
                f"widths ({4.0 * seg.envelope_sigma:.3e} s); degenerate pulse envelope"
            )
    return warnings


@dataclass(frozen=True)
class GaussianState:
    """Mean vector and 2x2 covariance of the mechanical quadratures.

    ``mean`` is (<X1>, <X2>) in quanta^(1/2); ``cov`` is symmetric with
    det >= 1/4 (up to :data:`HEISENBERG_RTOL`), vacuum being identity/2.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = _as_readonly(np.asarray(self.mean, dtype=float).reshape(2))
        cov = _as_readonly(np.asarray(self.cov, dtype=float).reshape(2, 2))
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("state mean/cov must be finite")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(cov).max()))):
            raise ValueError("covariance matrix must be symmetric")
        eigs = np.linalg.eigvalsh(cov)
        if eigs[0] <= 0.0:
            raise ValueError(f"covariance matrix must be positive definite, eigenvalues {eigs}")
        det = float(np.linalg.det(cov))
        if det < 0.25 * (1.0 - HEISENBERG_RTOL):
            raise ValueError(
                f"unphysical covariance: det = {det:.12g} < 1/4 (Heisenberg bound)"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def vacuum(cls) -> "GaussianState":
        return cls(mean=np.zeros(2), cov=VACUUM_VARIANCE * np.eye(2))

    @classmethod
    def thermal(cls, n: float) -> "GaussianState":
        """Isotropic thermal state with occupancy ``n`` quanta."""
        if n < 0:
            raise ValueError("thermal occupancy must be >= 0")
        return cls(mean=np.zeros(2), cov=(n + VACUUM_VARIANCE) * np.eye(2))

    def variance(self, phi: float) -> float:
        """Marginal variance of the quadrature at axis angle ``phi``."""
        u = np.array([math.cos(phi), math.sin(phi)])
        return float(u @ self.cov @ u)

    def rotated(self, theta: float) -> "GaussianState":
        """State rotated by ``theta`` in quadrature phase space."""
        c, s = math.cos(theta), math.sin(theta)
        r = np.array([[c, -s], [s, c]])
        return GaussianState(mean=r @ self.mean, cov=r @ self.cov @ r.T)

    def purity(self) -> float:
        return float(0.5 / math.sqrt(np.linalg.det(self.cov)))


@dataclass(frozen=True)
class ReceiverParams:
    """Heterodyne receiver chain parameters.

    ``g_tot`` is the total power gain in V^2/quanta; ``n_hemt`` the
    receiver-added noise referred to the cavity output in quanta;
    ``phase_drift_rate`` a slow linear drift of the measurement axis.
    """

    omega_het: float = TWO_PI * 1.8e6
    sample_rate: float = 50e6
    g_tot: float = 1.0
    n_hemt: float = 20.0
    phase_drift_rate: float = 0.0

    def __post_init__(self) -> None:
        if self.sample_rate <= self.omega_het / math.pi:
            raise ValueError(
                f"sample_rate {self.sample_rate} violates Nyquist for "
                f"omega_het {self.omega_het} (need > omega_het/pi)"
            )
        if self.g_tot <= 0.0:
            raise ValueError("g_tot must be > 0")
        if self.n_hemt < 0.0:
            raise ValueError("n_hemt must be >= 0")

    def to_dict(self) -> dict:
        return {
            "omega_het": self.omega_het,
            "sample_rate": self.sample_rate,
            "g_tot": self.g_tot,
            "n_hemt": self.n_hemt,
            "phase_drift_rate": self.phase_drift_rate,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, float]) -> "ReceiverParams":
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class SqueezeParams:
    """Squeezed-thermal-state parameters: squeeze amplitude ``r``, equivalent
    thermal occupancy ``n_sq`` and squeeze angle ``phi``.

    ``phi`` is the axis of minimum variance, reduced to [0, pi).  For an
    isotropic state the angle is undefined; it is then reported as 0 with
    ``phi_degenerate`` set.
    """

    r: float
    n_sq: float
    phi: float
    phi_degenerate: bool = False

    def __post_init__(self) -> None:
        if self.r < 0.0:
            raise ValueError(f"squeeze parameter r must be >= 0, got {self.r}")
        # Estimators may return slightly negative occupancies on noisy data;
        # reject only clearly unphysical values.
        if self.n_sq < -1e-6:
            raise ValueError(f"n_sq must be >= 0 (within tolerance), got {self.n_sq}")
        if not (0.0 <= self.phi < math.pi):
            raise ValueError(f"phi must lie in [0, pi), got {self.phi}")

    def to_dict(self) -> dict:
        return {
            "r": self.r,
            "n_sq": self.n_sq,
            "phi": self.phi,
            "phi_degenerate": self.phi_degenerate,
        }
