"""Orbit pinhole camera: yaw/pitch about the scene origin at fixed radius.

Camera frame matches the normal-map convention: +x right, +y up,
+z toward the viewer (the camera looks along -z). Pixel centers sit at
integer coordinates; row index increases downward, against +y.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

DEFAULT_FOV_Y = math.radians(12.0)
DEFAULT_RADIUS = 2.7


class CameraError(ValueError):
    pass


@dataclass(frozen=True)
class CameraPose:
    yaw: float = 0.0
    pitch: float = 0.0
    radius: float = DEFAULT_RADIUS
    fov_y: float = DEFAULT_FOV_Y
    width: int = 512
    height: int = 512
    cx: float | None = None  # principal point; defaults to the image center
    cy: float | None = None

    def __post_init__(self):
        if not abs(self.pitch) < math.pi / 2:
            raise CameraError("|pitch| must be < pi/2")
        if self.radius <= 0:
            raise CameraError("radius must be positive")
        if not (0 < self.fov_y < math.pi):
            raise CameraError("fov_y must lie in (0, pi)")
        if self.width <= 0 or self.height <= 0:
            raise CameraError("image size must be positive")

    @property
    def principal(self) -> tuple[float, float]:
        cx = (self.width - 1) / 2.0 if self.cx is None else self.cx
        cy = (self.height - 1) / 2.0 if self.cy is None else self.cy
        return cx, cy

    @property
    def focal(self) -> float:
        return (self.height / 2.0) / math.tan(self.fov_y / 2.0)

    def rotation(self) -> np.ndarray:
        """World-to-camera rotation; rows are the camera basis in world coords."""
        sy, cy_ = math.sin(self.yaw), math.cos(self.yaw)
        sp, cp = math.sin(self.pitch), math.cos(self.pitch)
        z_axis = np.array([sy * cp, sp, cy_ * cp])  # unit vector scene -> camera
        up = np.array([0.0, 1.0, 0.0])
        x_axis = np.cross(up, z_axis)
        x_axis = x_axis / np.linalg.norm(x_axis)
        y_axis = np.cross(z_axis, x_axis)
        return np.stack([x_axis, y_axis, z_axis])

    def position(self) -> np.ndarray:
        return self.radius * self.rotation()[2]

    def world_to_camera(self, pts: np.ndarray) -> np.ndarray:
        return (pts - self.position()) @ self.rotation().T

    def camera_to_world(self, pts: np.ndarray) -> np.ndarray:
        return pts @ self.rotation() + self.position()

    def project(self, pts_cam: np.ndarray):
        """Camera-frame points -> (u, v, depth); depth is distance along -z."""
        depth = -pts_cam[..., 2]
        cx, cy_ = self.principal
        f = self.focal
        safe = np.where(depth > 0, depth, 1.0)
        u = cx + f * pts_cam[..., 0] / safe
        v = cy_ - f * pts_cam[..., 1] / safe
        return u, v, depth

    def unproject(self, u: np.ndarray, v: np.ndarray, depth: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`project` back to camera-frame points."""
        cx, cy_ = self.principal
        f = self.focal
        x = (u - cx) * depth / f
        y = (cy_ - v) * depth / f
        return np.stack([x, y, -depth], axis=-1)

    def to_json(self) -> str:
        return json.dumps(
            {
                "yaw": self.yaw,
                "pitch": self.pitch,
                "radius": self.radius,
                "fov_y": self.fov_y,
                "width": self.width,
                "height": self.height,
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "CameraPose":
        d = json.loads(text)
        return CameraPose(
            yaw=float(d.get("yaw", 0.0)),
            pitch=float(d.get("pitch", 0.0)),
            radius=float(d.get("radius", DEFAULT_RADIUS)),
            fov_y=float(d.get("fov_y", DEFAULT_FOV_Y)),
            width=int(d["width"]),
            height=int(d["height"]),
        )


def relative_rotation(ref: CameraPose, new: CameraPose) -> np.ndarray:
    """Rotation taking ref-camera-frame vectors to new-camera-frame vectors."""
    return new.rotation() @ ref.rotation().T
