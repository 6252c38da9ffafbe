"""Hand trajectory synthesis for the five macro-gestures.

All gestures run over 30 frames at the radar frame rate (1.5 s). Paths are
defined relative to the active shoulder and stay inside the two-segment arm
reach. Per-recording jitter is a sum of two slow sinusoids per axis, drawn
deterministically from the seed, so push keeps a strictly decreasing radial
profile and pull is constructed as the exact time-reversal of push.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import GestureClass

__all__ = ["Trajectory", "synth_gesture_trajectory", "SEQ_FRAMES", "FRAME_RATE"]

SEQ_FRAMES = 30
FRAME_RATE = 20.0

SHOULDER_OFFSET_Z = 0.30
SHOULDER_OFFSET_X = 0.20
UPPER_ARM = 0.30
FOREARM = 0.27


@dataclass
class Trajectory:
    positions: np.ndarray  # (30, 3) ground frame, m
    velocities: np.ndarray  # (30, 3) m/s, forward differences x frame rate
    anchor: np.ndarray  # mid-torso reference, ground frame
    shoulder: np.ndarray  # active shoulder, ground frame
    handedness: str  # "left" | "right"
    gesture: GestureClass
    range_m: float


def _smooth_jitter(rng: np.random.Generator, amp: float, n: int) -> np.ndarray:
    """Slow 2-component sinusoidal wander per axis, bounded by 2*amp."""
    t = np.arange(n) / FRAME_RATE
    out = np.zeros((n, 3))
    for axis in range(3):
        for _ in range(2):
            a = rng.uniform(0.3, 1.0) * amp
            f = rng.uniform(0.15, 0.8)
            phase = rng.uniform(0.0, 2 * np.pi)
            out[:, axis] += a * np.sin(2 * np.pi * f * t + phase)
    return out


def _progress(n: int, linear_mix: float = 0.3) -> np.ndarray:
    """Monotone 0..1 ramp: smoothstep blended with a linear term so the
    per-frame increment never collapses at the ends."""
    s = np.linspace(0.0, 1.0, n)
    smooth = s * s * (3.0 - 2.0 * s)
    return linear_mix * s + (1.0 - linear_mix) * smooth


def _finite_diff_velocity(positions: np.ndarray) -> np.ndarray:
    v = np.empty_like(positions)
    v[:-1] = (positions[1:] - positions[:-1]) * FRAME_RATE
    v[-1] = v[-2]
    return v


def synth_gesture_trajectory(gesture: GestureClass, seed: int, range_m: float) -> Trajectory:
    """Hand path for one recording of ``gesture`` at ``range_m`` meters.

    The person stands at y = range_m facing the radar (at small y); the
    anchor (mid-torso), handedness, and jitter are derived from the seed.
    """
    if not 1.0 <= range_m <= 2.0:
        raise ValueError(f"range_m must lie in [1, 2] m (gesture zone), got {range_m}")
    gesture = GestureClass(gesture)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 0x7261]))

    anchor = np.array(
        [rng.uniform(-0.20, 0.20), float(range_m), rng.uniform(1.05, 1.20)]
    )
    handedness = "left" if rng.random() < 0.5 else "right"
    side = 1.0 if handedness == "left" else -1.0
    shoulder = anchor + np.array([side * SHOULDER_OFFSET_X, 0.0, SHOULDER_OFFSET_Z])

    base = gesture if gesture is not GestureClass.pull else GestureClass.push
    n = SEQ_FRAMES
    rel = np.zeros((n, 3))
    if base is GestureClass.swipe:
        s = _progress(n)
        rel[:, 0] = side * 0.28 - s * side * 0.56
        rel[:, 1] = -0.22
        rel[:, 2] = -0.10
        jitter_amp = 0.004
    elif base is GestureClass.push:
        s = _progress(n)
        rel[:, 0] = -side * 0.02
        rel[:, 1] = -0.12 - 0.40 * s
        rel[:, 2] = -0.15
        jitter_amp = 0.0025
    else:  # clockwise / anticlockwise circle in the x-z plane facing the radar
        theta0 = rng.uniform(0.0, 2 * np.pi)
        sweep = 2 * np.pi * _progress(n, linear_mix=0.5)
        sign = 1.0 if base is GestureClass.clockwise else -1.0
        theta = theta0 + sign * sweep
        rel[:, 0] = 0.25 * np.sin(theta)
        rel[:, 1] = -0.33
        rel[:, 2] = -0.02 + 0.25 * np.cos(theta)
        jitter_amp = 0.004

    positions = shoulder + rel + _smooth_jitter(rng, jitter_amp, n)
    if gesture is GestureClass.pull:
        positions = positions[::-1].copy()
    velocities = _finite_diff_velocity(positions)
    return Trajectory(
        positions=positions,
        velocities=velocities,
        anchor=anchor,
        shoulder=shoulder,
        handedness=handedness,
        gesture=gesture,
        range_m=float(range_m),
    )
