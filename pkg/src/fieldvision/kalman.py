"""Constant-velocity Kalman filter over bounding boxes.

State is [cx, cy, s, r, vcx, vcy, vs]: box center, scale (area), aspect
ratio w/h (modeled constant), and the velocities of the first three. The
measurement observes [cx, cy, s, r]. Updates use the Joseph form plus
explicit symmetrization so the covariance stays symmetric PSD over long
random predict/update sequences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

DIM_X = 7
DIM_Z = 4

_F = np.eye(DIM_X)
_F[0, 4] = _F[1, 5] = _F[2, 6] = 1.0
_H = np.zeros((DIM_Z, DIM_X))
_H[:4, :4] = np.eye(4)

# measurement noise: center observed tightly, scale/aspect noisier
_R = np.diag([1.0, 1.0, 10.0, 10.0])
# initial uncertainty: velocities unknown
_P0 = np.diag([10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4])
# process noise: slow velocity drift
_Q = np.diag([1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 1e-4])


def bbox_to_measurement(bbox) -> np.ndarray:
    x, y, w, h = (float(v) for v in bbox)
    if not all(np.isfinite([x, y, w, h])):
        raise DataError(f"non-finite bbox {bbox}")
    if w <= 0 or h <= 0:
        raise DataError(f"bbox with non-positive size {bbox}")
    return np.array([x + w / 2.0, y + h / 2.0, w * h, w / h])


def measurement_to_bbox(z: np.ndarray) -> tuple[float, float, float, float]:
    cx, cy, s, r = (float(v) for v in z[:4])
    s = max(s, 1e-9)
    r = max(r, 1e-9)
    w = float(np.sqrt(s * r))
    h = float(np.sqrt(s / r))
    return (cx - w / 2.0, cy - h / 2.0, w, h)


@dataclass
class KalmanBoxState:
    x: np.ndarray  # (7,)
    p: np.ndarray  # (7, 7)

    def bbox(self) -> tuple[float, float, float, float]:
        return measurement_to_bbox(self.x)

    def center(self) -> tuple[float, float]:
        return (float(self.x[0]), float(self.x[1]))


def kalman_init(bbox) -> KalmanBoxState:
    z = bbox_to_measurement(bbox)
    x = np.zeros(DIM_X)
    x[:4] = z
    return KalmanBoxState(x=x, p=_P0.copy())


def kalman_predict(state: KalmanBoxState) -> KalmanBoxState:
    x = _F @ state.x
    # a shrinking box must not predict through zero area
    if x[2] + x[6] <= 1e-9:
        x = x.copy()
        x[6] = 0.0
        x[2] = max(x[2], 1e-9)
    p = _F @ state.p @ _F.T + _Q
    p = (p + p.T) / 2.0
    return KalmanBoxState(x=x, p=p)


def kalman_update(
    state: KalmanBoxState,
    bbox,
    confidence: float = 1.0,
    nsa_kappa: float = 1.0,
) -> KalmanBoxState:
    """Measurement update; noise inflated for low-confidence detections.

    The effective measurement covariance is R * (1 + kappa * (1 - conf)),
    so a confidence-1 detection uses the nominal noise and lower
    confidences pull the state less.
    """
    z = bbox_to_measurement(bbox)
    if not (0.0 <= confidence <= 1.0):
        raise DataError(f"confidence {confidence} outside [0, 1]")
    r = _R * (1.0 + nsa_kappa * (1.0 - confidence))
    innovation = z - _H @ state.x
    s = _H @ state.p @ _H.T + r
    k = state.p @ _H.T @ np.linalg.inv(s)
    x = state.x + k @ innovation
    i_kh = np.eye(DIM_X) - k @ _H
    p = i_kh @ state.p @ i_kh.T + k @ r @ k.T
    p = (p + p.T) / 2.0
    x = x.copy()
    x[2] = max(x[2], 1e-9)
    x[3] = max(x[3], 1e-9)
    return KalmanBoxState(x=x, p=p)
