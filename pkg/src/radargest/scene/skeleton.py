"""Skeleton synthesis: 17-keypoint frames around a torso anchor with
two-segment inverse kinematics for the active arm."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .trajectories import FOREARM, UPPER_ARM

__all__ = ["COCO_JOINT_NAMES", "SkeletonFrame", "trajectory_to_skeleton", "arm_joint_ids"]

COCO_JOINT_NAMES = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
]

# resting offsets from the mid-torso anchor; the person faces the radar
# (toward -y), so their left side is +x
_REST_OFFSETS = np.array(
    [
        [0.00, -0.10, 0.45],  # nose
        [0.03, -0.09, 0.48],  # left eye
        [-0.03, -0.09, 0.48],  # right eye
        [0.07, -0.03, 0.46],  # left ear
        [-0.07, -0.03, 0.46],  # right ear
        [0.20, 0.00, 0.30],  # left shoulder
        [-0.20, 0.00, 0.30],  # right shoulder
        [0.23, 0.01, 0.02],  # left elbow
        [-0.23, 0.01, 0.02],  # right elbow
        [0.25, -0.03, -0.22],  # left wrist
        [-0.25, -0.03, -0.22],  # right wrist
        [0.12, 0.00, -0.25],  # left hip
        [-0.12, 0.00, -0.25],  # right hip
        [0.13, 0.02, -0.70],  # left knee
        [-0.13, 0.02, -0.70],  # right knee
        [0.14, 0.05, -1.10],  # left ankle
        [-0.14, 0.05, -1.10],  # right ankle
    ]
)

# elbow swivel hint: hang down and slightly back
_ELBOW_HINT = np.array([0.0, 0.25, -1.0]) / np.linalg.norm([0.0, 0.25, -1.0])
_FALLBACK_HINT = np.array([1.0, 0.0, 0.0])


def arm_joint_ids(handedness: str) -> tuple[int, int, int]:
    """(shoulder, elbow, wrist) joint indices for the active hand."""
    if handedness == "left":
        return 5, 7, 9
    if handedness == "right":
        return 6, 8, 10
    raise ValueError(f"handedness must be 'left' or 'right', got {handedness!r}")


@dataclass
class SkeletonFrame:
    """17 joints x 3 ground coordinates; ``clamped`` marks frames whose hand
    target exceeded arm reach and was pulled back onto the reach sphere."""

    joints: np.ndarray
    clamped: bool = False

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        if self.joints.shape != (17, 3):
            raise ValueError(f"skeleton must be 17x3, got {self.joints.shape}")
        if not np.all(np.isfinite(self.joints)):
            raise ValueError("skeleton coordinates must be finite")


def _solve_elbow(shoulder: np.ndarray, wrist: np.ndarray) -> np.ndarray:
    """Two-segment IK: elbow on the circle where the 0.30 m upper arm and
    0.27 m forearm spheres intersect, swiveled toward the hang-down hint."""
    span = wrist - shoulder
    d = np.linalg.norm(span)
    if d < 1e-12:
        return shoulder + UPPER_ARM * _ELBOW_HINT
    axis = span / d
    cos_a = (UPPER_ARM**2 + d**2 - FOREARM**2) / (2.0 * UPPER_ARM * d)
    cos_a = np.clip(cos_a, -1.0, 1.0)
    sin_a = np.sqrt(max(0.0, 1.0 - cos_a**2))
    perp = _ELBOW_HINT - (_ELBOW_HINT @ axis) * axis
    norm = np.linalg.norm(perp)
    if norm < 1e-9:
        perp = _FALLBACK_HINT - (_FALLBACK_HINT @ axis) * axis
        norm = np.linalg.norm(perp)
    perp /= norm
    return shoulder + UPPER_ARM * (cos_a * axis + sin_a * perp)


def trajectory_to_skeleton(
    hand_position,
    handedness: str,
    anchor,
    rng: np.random.Generator | None = None,
    noise_sigma: float = 0.005,
) -> SkeletonFrame:
    """One skeleton frame: the active wrist sits at ``hand_position`` (clamped
    to arm reach if necessary), elbow by two-segment IK, everything else at
    fixed offsets from ``anchor`` plus Gaussian noise of ``noise_sigma``.

    Noise is drawn for all 17 joints (independent of handedness, keeping RNG
    consumption stable) but not applied to the active shoulder/elbow/wrist.
    """
    anchor = np.asarray(anchor, dtype=np.float64)
    hand = np.asarray(hand_position, dtype=np.float64)
    joints = anchor + _REST_OFFSETS
    s_id, e_id, w_id = arm_joint_ids(handedness)

    shoulder = joints[s_id].copy()
    clamped = False
    reach = UPPER_ARM + FOREARM
    span = hand - shoulder
    dist = np.linalg.norm(span)
    if dist > reach:
        hand = shoulder + span * (reach / dist)
        clamped = True
    joints[w_id] = hand
    joints[e_id] = _solve_elbow(shoulder, hand)

    if noise_sigma > 0.0:
        if rng is None:
            raise ValueError("noise_sigma > 0 requires an rng")
        noise = rng.normal(0.0, noise_sigma, size=(17, 3))
        noise[[s_id, e_id, w_id]] = 0.0
        joints = joints + noise
    return SkeletonFrame(joints=joints, clamped=clamped)
