"""Radar operating parameters, mount geometry, and scene types."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT

__all__ = [
    "GestureClass",
    "RadarConfig",
    "MountPose",
    "Scatterer",
    "RoomSpec",
    "RawRadarCube",
    "make_default_config",
    "SPEED_OF_LIGHT",
]


class GestureClass(IntEnum):
    """The five macro-gestures; codes are stable across the toolkit."""

    swipe = 0
    push = 1
    pull = 2
    clockwise = 3
    anticlockwise = 4


@dataclass
class RadarConfig:
    """FMCW operating parameters.

    ``rx_positions`` are antenna offsets in meters in the radar frame
    (x right, y boresight, z up); the default array is L-shaped with
    half-wavelength spacing at the center frequency.
    """

    f_min: float  # ramp start frequency, Hz
    f_max: float  # ramp stop frequency, Hz
    frame_rate: float  # frames/s
    nts: int  # ADC samples per chirp
    fs: float  # sampling frequency, Hz
    tc: float  # chirp duration, s
    pn: int  # chirps per frame
    n_tx: int = 1
    n_rx: int = 3
    prt: float | None = None  # chirp repetition interval, defaults to tc
    rx_positions: np.ndarray | None = None

    def __post_init__(self):
        if self.prt is None:
            self.prt = self.tc
        if self.rx_positions is None:
            d = self.wavelength / 2.0
            self.rx_positions = np.array(
                [[0.0, 0.0, 0.0], [d, 0.0, 0.0], [0.0, 0.0, d]]
            )
        else:
            self.rx_positions = np.asarray(self.rx_positions, dtype=np.float64)
        self.validate()

    def validate(self) -> None:
        if self.f_max <= self.f_min:
            raise ValueError(f"f_max {self.f_max} must exceed f_min {self.f_min}")
        if self.nts / self.fs > self.tc + 1e-15:
            raise ValueError(
                f"sampling window nts/fs = {self.nts / self.fs:.3e} s exceeds chirp time {self.tc:.3e} s"
            )
        if self.pn < 2:
            raise ValueError(f"need at least 2 chirps per frame, got {self.pn}")
        if self.prt < self.tc - 1e-15:
            raise ValueError(f"prt {self.prt:.3e} shorter than chirp time {self.tc:.3e}")
        if self.rx_positions.shape != (self.n_rx, 3):
            raise ValueError(
                f"rx_positions shape {self.rx_positions.shape} != (n_rx={self.n_rx}, 3)"
            )

    @property
    def bandwidth(self) -> float:
        return self.f_max - self.f_min

    @property
    def center_frequency(self) -> float:
        return 0.5 * (self.f_min + self.f_max)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.center_frequency

    @property
    def chirp_slope(self) -> float:
        """Frequency ramp rate, Hz/s."""
        return self.bandwidth / self.tc

    @property
    def n_range_bins(self) -> int:
        return self.nts // 2

    @property
    def range_bin_spacing(self) -> float:
        """Meters per range bin: only the first nts/fs of each ramp is
        sampled, so the effective swept bandwidth is B * (nts/fs) / tc."""
        return SPEED_OF_LIGHT * self.fs * self.tc / (2.0 * self.bandwidth * self.nts)

    @property
    def velocity_resolution(self) -> float:
        """Meters/s per Doppler bin."""
        return self.wavelength / (2.0 * self.pn * self.prt)

    @property
    def max_unambiguous_velocity(self) -> float:
        return self.wavelength / (4.0 * self.prt)

    def to_dict(self) -> dict:
        return {
            "f_min": self.f_min,
            "f_max": self.f_max,
            "frame_rate": self.frame_rate,
            "nts": self.nts,
            "fs": self.fs,
            "tc": self.tc,
            "pn": self.pn,
            "n_tx": self.n_tx,
            "n_rx": self.n_rx,
            "prt": self.prt,
            "rx_positions": self.rx_positions.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RadarConfig":
        d = dict(d)
        d["rx_positions"] = np.asarray(d["rx_positions"], dtype=np.float64)
        return cls(**d)


@dataclass
class MountPose:
    """Radar placement: tilt about the x axis plus ground-frame position."""

    theta_tilt: float = 0.0  # rad
    x_r: float = 0.0
    y_r: float = 0.0
    h: float = 1.0

    def __post_init__(self):
        if abs(self.theta_tilt) > np.pi / 2 + 1e-12:
            raise ValueError(f"|theta_tilt| must be <= pi/2, got {self.theta_tilt}")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x_r, self.y_r, self.h])

    def tilt_matrix(self) -> np.ndarray:
        """Rotation applied to radar-frame coordinates to reach ground frame."""
        ct, st = np.cos(self.theta_tilt), np.sin(self.theta_tilt)
        return np.array([[1.0, 0.0, 0.0], [0.0, ct, st], [0.0, -st, ct]])

    def to_dict(self) -> dict:
        return {"theta_tilt": self.theta_tilt, "x_r": self.x_r, "y_r": self.y_r, "h": self.h}

    @classmethod
    def from_dict(cls, d: dict) -> "MountPose":
        return cls(**d)


@dataclass
class RoomSpec:
    """Axis-aligned simulated room bounds, meters."""

    x: tuple[float, float] = (-2.5, 2.5)
    y: tuple[float, float] = (0.2, 4.0)
    z: tuple[float, float] = (0.0, 2.6)

    def contains(self, p) -> bool:
        p = np.asarray(p)
        return bool(
            self.x[0] <= p[0] <= self.x[1]
            and self.y[0] <= p[1] <= self.y[1]
            and self.z[0] <= p[2] <= self.z[1]
        )

    def to_dict(self) -> dict:
        return {"x": list(self.x), "y": list(self.y), "z": list(self.z)}

    @classmethod
    def from_dict(cls, d: dict) -> "RoomSpec":
        return cls(x=tuple(d["x"]), y=tuple(d["y"]), z=tuple(d["z"]))


@dataclass
class Scatterer:
    """Point reflector with ground-frame position/velocity and reflectivity."""

    position: np.ndarray
    velocity: np.ndarray
    rcs: float

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.velocity = np.asarray(self.velocity, dtype=np.float64)
        if self.rcs < 0:
            raise ValueError(f"rcs must be >= 0, got {self.rcs}")
        if not np.all(np.isfinite(self.position)) or not np.all(np.isfinite(self.velocity)):
            raise ValueError("scatterer position/velocity must be finite")


@dataclass
class RawRadarCube:
    """One frame of real ADC samples, shape (n_rx, pn, nts)."""

    samples: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 3:
            raise ValueError(f"cube must be (n_rx, pn, nts), got shape {self.samples.shape}")


def make_default_config() -> RadarConfig:
    """Default 60 GHz operating point: 57.5-58.5 GHz ramps, 64 samples at
    2 MHz, 128 chirps of 64 us per frame, 20 fps, 1 Tx / 3 Rx."""
    return RadarConfig(
        f_min=57.5e9,
        f_max=58.5e9,
        frame_rate=20.0,
        nts=64,
        fs=2e6,
        tc=64e-6,
        pn=128,
        n_tx=1,
        n_rx=3,
    )
