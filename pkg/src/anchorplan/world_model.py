"""Rollout oracles: render a predicted observation for any camera pose.

Two oracles share one scene description. ``GeometricOracle`` returns ground
truth positions with no pixel work; ``PixelOracle`` draws a pinhole image in
which every visible target is a filled disc and the gripper is a fixed disc
in front of the lens. Both carry a reference latent that is blended toward
each real observation after a physical step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .se3 import Pose

DEFAULT_ALPHA = 0.7
# Fills the slots of targets that are not visible, keeping latents fixed-size.
SENTINEL = 1.0e6


@dataclass(frozen=True)
class Target:
    target_id: str
    position: tuple[float, float, float]
    radius: float = 0.05

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError(f"target {self.target_id!r}: radius must be positive")
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))


@dataclass(frozen=True)
class Scene:
    """Targets plus the intrinsics of the simulated camera.

    The camera looks along its local +z with x right and y down. When
    ``fov_culling`` is off, visibility is decided by the task script alone.
    """

    targets: tuple[Target, ...]
    focal: float = 48.0
    width: int = 64
    height: int = 64
    principal: tuple[float, float] | None = None
    near: float = 0.02
    far: float = 5.0
    fov_culling: bool = True

    def __post_init__(self) -> None:
        ids = [t.target_id for t in self.targets]
        if len(set(ids)) != len(ids):
            raise ValueError("target ids must be distinct")
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.principal is None:
            object.__setattr__(self, "principal", (self.width / 2.0, self.height / 2.0))

    def target(self, target_id: str) -> Target:
        for t in self.targets:
            if t.target_id == target_id:
                return t
        raise KeyError(target_id)

    def project(self, c2w: Pose, point: Iterable[float]) -> tuple[float, float, float]:
        """Pixel coordinates (u, v) and camera depth of a world point."""
        pc = c2w.rotation.T @ (np.asarray(point, dtype=float) - c2w.translation)
        z = float(pc[2])
        if z <= 0:
            return float("nan"), float("nan"), z
        cx, cy = self.principal
        return self.focal * pc[0] / z + cx, self.focal * pc[1] / z + cy, z

    def in_view(self, c2w: Pose, point: Iterable[float]) -> bool:
        u, v, z = self.project(c2w, point)
        if not self.near <= z <= self.far:
            return False
        return 0.0 <= u < self.width and 0.0 <= v < self.height


@dataclass(frozen=True)
class GeometricFrame:
    ee_position: tuple[float, float, float]
    visible_targets: tuple[tuple[str, tuple[float, float, float]], ...]

    def position_of(self, target_id: str) -> tuple[float, float, float] | None:
        for tid, pos in self.visible_targets:
            if tid == target_id:
                return pos
        return None


@dataclass(frozen=True, eq=False)
class PixelFrame:
    """Row-major intensity grid in [0, 1] plus the analytic discs that were drawn.

    ``discs`` holds ``(target_id, u, v, radius_px)`` for each visible target and
    ``ee_disc`` the gripper marker as ``(u, v, radius_px)``.
    """

    width: int
    height: int
    intensities: np.ndarray
    discs: tuple[tuple[str, float, float, float], ...] = ()
    ee_disc: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        img = np.asarray(self.intensities, dtype=float)
        if img.shape != (self.height, self.width):
            raise ValueError("intensity grid does not match width/height")
        if img.size and (img.min() < 0.0 or img.max() > 1.0):
            raise ValueError("pixel intensities must lie in [0, 1]")
        img.flags.writeable = False
        object.__setattr__(self, "intensities", img)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PixelFrame):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.discs == other.discs
            and self.ee_disc == other.ee_disc
            and self.intensities.tobytes() == other.intensities.tobytes()
        )

    __hash__ = None  # type: ignore[assignment]

    def disc_of(self, target_id: str) -> tuple[float, float, float] | None:
        for tid, u, v, r in self.discs:
            if tid == target_id:
                return u, v, r
        return None


Frame = Union[GeometricFrame, PixelFrame]


def write_pgm(frame: PixelFrame, path: str | Path) -> None:
    """Dump a pixel frame as an 8-bit binary PGM for inspection."""
    data = np.round(frame.intensities * 255.0).astype(np.uint8)
    header = f"P5\n{frame.width} {frame.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def blend_reference(z_ref: np.ndarray, encoded_real: np.ndarray, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Pull the reference latent toward a fresh encoding: ``alpha*enc + (1-alpha)*z_ref``."""
    z = np.asarray(z_ref, dtype=float)
    e = np.asarray(encoded_real, dtype=float)
    if z.shape != e.shape:
        raise ValueError(f"latent dimension mismatch: {z.shape} vs {e.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if alpha == 1.0:
        return e.copy()
    # Written as a step from z toward e so equal inputs come back unchanged;
    # the clip keeps round-off from leaving the segment between them.
    out = z + alpha * (e - z)
    return np.clip(out, np.minimum(z, e), np.maximum(z, e))


class WorldModel:
    """Common state for the desk oracles: scene, reference latent, blend weight."""

    name = "base"

    def __init__(self, scene: Scene):
        self.scene = scene
        self.alpha = DEFAULT_ALPHA
        self.z_ref: np.ndarray | None = None

    def render(self, c2w: Pose, hidden: Iterable[str] = ()) -> Frame:
        raise NotImplementedError

    def encode(self, frame: Frame) -> np.ndarray:
        raise NotImplementedError

    def set_alpha(self, alpha: float) -> None:
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
        self.alpha = float(alpha)

    def update_reference(self, real_frame: Frame) -> np.ndarray:
        """Blend a real observation into the reference latent (the first one seeds it)."""
        enc = self.encode(real_frame)
        self.z_ref = enc.copy() if self.z_ref is None else blend_reference(self.z_ref, enc, self.alpha)
        return self.z_ref

    def _visible(self, c2w: Pose, hidden: frozenset[str]) -> list[Target]:
        out = []
        for t in self.scene.targets:
            if t.target_id in hidden:
                continue
            if self.scene.fov_culling and not self.scene.in_view(c2w, t.position):
                continue
            out.append(t)
        return out


class GeometricOracle(WorldModel):
    name = "geometric"

    def render(self, c2w: Pose, hidden: Iterable[str] = ()) -> GeometricFrame:
        visible = self._visible(c2w, frozenset(hidden))
        ee = tuple(float(v) for v in c2w.translation)
        return GeometricFrame(ee, tuple((t.target_id, t.position) for t in visible))

    def encode(self, frame: Frame) -> np.ndarray:
        if not isinstance(frame, GeometricFrame):
            raise TypeError("geometric oracle can only encode geometric frames")
        out = list(frame.ee_position)
        seen = dict(frame.visible_targets)
        for t in self.scene.targets:
            out.extend(seen.get(t.target_id, (SENTINEL, SENTINEL, SENTINEL)))
        return np.array(out, dtype=float)


@dataclass
class PixelStyle:
    background: float = 0.0
    target: float = 1.0
    ee_value: float = 0.5
    # Gripper marker radius in pixels; 0 disables it.
    ee_radius_px: float = 6.0
    downsample: int = 8


class PixelOracle(WorldModel):
    name = "pixel"

    def __init__(self, scene: Scene, style: PixelStyle | None = None):
        super().__init__(scene)
        self.style = style or PixelStyle()
        if scene.width % self.style.downsample or scene.height % self.style.downsample:
            raise ValueError("frame size must be divisible by the downsample factor")
        vv, uu = np.mgrid[0 : scene.height, 0 : scene.width]
        self._u = uu + 0.5
        self._v = vv + 0.5

    @property
    def latent_dim(self) -> int:
        d = self.style.downsample
        return (self.scene.width // d) * (self.scene.height // d)

    def render(self, c2w: Pose, hidden: Iterable[str] = ()) -> PixelFrame:
        sc, st = self.scene, self.style
        img = np.full((sc.height, sc.width), st.background)
        hidden = frozenset(hidden)
        drawn = []
        for t in self.scene.targets:
            if t.target_id in hidden:
                continue
            u, v, z = sc.project(c2w, t.position)
            if not sc.near <= z <= sc.far:
                continue
            r = sc.focal * t.radius / z
            # Discs wholly outside the image are culled; partial ones are drawn.
            if u + r < 0 or u - r > sc.width or v + r < 0 or v - r > sc.height:
                continue
            drawn.append((z, t.target_id, u, v, r))
        discs = []
        for z, tid, u, v, r in sorted(drawn, key=lambda d: (-d[0], d[1])):
            img[(self._u - u) ** 2 + (self._v - v) ** 2 <= r * r] = st.target
            discs.append((tid, float(u), float(v), float(r)))
        ee = None
        if st.ee_radius_px > 0:
            cx, cy = sc.principal
            ee = (float(cx), float(cy), float(st.ee_radius_px))
            img[(self._u - cx) ** 2 + (self._v - cy) ** 2 <= st.ee_radius_px**2] = st.ee_value
        return PixelFrame(sc.width, sc.height, img, tuple(sorted(discs)), ee)

    def encode(self, frame: Frame) -> np.ndarray:
        if not isinstance(frame, PixelFrame):
            raise TypeError("pixel oracle can only encode pixel frames")
        if (frame.width, frame.height) != (self.scene.width, self.scene.height):
            raise ValueError("frame size does not match this oracle")
        d = self.style.downsample
        blocks = frame.intensities.reshape(frame.height // d, d, frame.width // d, d)
        return blocks.mean(axis=(1, 3)).ravel()


def make_oracle(name: str, scene: Scene) -> WorldModel:
    if name == "geometric":
        return GeometricOracle(scene)
    if name == "pixel":
        return PixelOracle(scene)
    raise ValueError(f"unknown oracle {name!r}")
