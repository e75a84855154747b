"""Pluggable providers for dense correspondences, depth priors and place features.

The neural predictors of the full system are replaced by two interchangeable
implementations:

  * SyntheticProviders - exact oracles backed by an analytic ray-cast scene,
    with configurable noise; every quantity they emit is verifiable against
    the scene's ground truth.
  * PrecomputedProviders - reads tensors produced offline (by a real network
    stack) from disk in the DSPT binary format documented below.

DSPT tensor files: little-endian, header = magic "DSPT", u32 version, u32 H,
u32 W, u32 C, followed by H*W*C float32 values, row-major. One file per frame
or edge: `flow_{i:06d}_{j:06d}.dspt` (C=4: target u, target v, weight u,
weight v), `prior_{k:06d}.dspt` (C=1: disparity), `feat_{k:06d}.dspt` (C=D).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .geometry import PinholeIntrinsics, SE3Pose, pixel_grid, project, reproject

DSPT_MAGIC = b"DSPT"
DSPT_VERSION = 1

FEATURE_DIM = 64


@dataclass
class CorrespondenceUpdate:
    """Dense target correspondences p* and confidence weights for one edge."""

    edge: tuple[int, int]
    target: np.ndarray  # (H, W, 2) pixels
    weight: np.ndarray  # (H, W, 2) in [0, 1]

    def __post_init__(self):
        if not np.all(np.isfinite(self.target)):
            raise ValueError(f"non-finite correspondence target on edge {self.edge}")
        if self.weight.min() < 0.0 or self.weight.max() > 1.0:
            raise ValueError(f"correspondence weights outside [0, 1] on edge {self.edge}")


@dataclass
class PlaceFeature:
    vector: np.ndarray  # unit norm
    frame: int

    def __post_init__(self):
        n = np.linalg.norm(self.vector)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"place feature for frame {self.frame} not unit norm ({n})")


# ---------------------------------------------------------------------------
# synthetic scene
# ---------------------------------------------------------------------------

@dataclass
class SceneSpec:
    """Configuration of a synthetic ray-cast world and camera trajectory."""

    trajectory: str = "orbit"  # orbit | line | rotate
    frames: int = 100
    height: int = 48
    width: int = 64
    seed: int = 0
    focal: float | None = None  # fx = fy; default 0.9 * max(W, H)
    fps: float = 30.0
    occluders: int = 6  # number of small floating spheres
    texture_freq: float = 2.5
    pixel_noise: float = 0.0  # correspondence noise sigma, pixels
    prior_scale_range: tuple[float, float] = (1.0, 1.0)  # per-frame a_t
    prior_offset_range: tuple[float, float] = (0.0, 0.0)  # per-frame b_t
    prior_noise: float = 0.0  # multiplicative disparity noise sigma
    feature_noise: float = 0.0

    def __post_init__(self):
        if self.frames < 2:
            raise ConfigError(f"scene needs at least 2 frames, got {self.frames}")
        if self.trajectory not in ("orbit", "line", "rotate"):
            raise ConfigError(f"unknown trajectory type '{self.trajectory}'")
        if self.height < 8 or self.width < 8:
            raise ConfigError("scene resolution must be at least 8x8")


def parse_scene_spec(text: str) -> SceneSpec:
    """Parse compact specs like 'orbit200' or 'line50' into a SceneSpec."""
    name = text.strip().lower()
    for traj in ("orbit", "line", "rotate"):
        if name.startswith(traj):
            rest = name[len(traj):]
            frames = int(rest) if rest else 100
            return SceneSpec(trajectory=traj, frames=frames)
    raise ConfigError(f"cannot parse synthetic scene spec '{text}'")


OUTER_RADIUS = 6.0
ORBIT_RADIUS = 2.0


def _look_at_c2w(center: np.ndarray, forward: np.ndarray) -> SE3Pose:
    f = forward / np.linalg.norm(forward)
    r = np.cross(f, np.array([0.0, 0, 1.0]))
    if np.linalg.norm(r) < 1e-8:
        r = np.cross(f, np.array([0.0, 1.0, 0]))
    r = r / np.linalg.norm(r)
    d = np.cross(f, r)
    R_c2w = np.stack([r, d, f], axis=1)
    T = np.eye(4)
    T[:3, :3] = R_c2w
    T[:3, 3] = center
    return SE3Pose.from_matrix(T)


class SyntheticScene:
    """Analytic world: camera inside a textured sphere with floating occluders.

    Every ray hits the outer sphere, so depth is defined everywhere and exact;
    the occluder spheres create parallax and occlusion for visibility tests.
    """

    def __init__(self, spec: SceneSpec):
        self.spec = spec
        f = spec.focal if spec.focal is not None else 0.9 * max(spec.width, spec.height)
        self.intrinsics = PinholeIntrinsics(f, f, spec.width / 2.0, spec.height / 2.0,
                                            spec.width, spec.height)
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 101]))
        n = spec.occluders
        if n > 0:
            phi = rng.uniform(0, 2 * np.pi, size=n)
            rad = rng.uniform(3.4, 4.6, size=n)
            z = rng.uniform(-1.2, 1.2, size=n)
            self.sphere_centers = np.stack([rad * np.cos(phi), rad * np.sin(phi), z], axis=1)
            self.sphere_radii = rng.uniform(0.45, 0.8, size=n)
            self.sphere_colors = rng.uniform(0.15, 0.85, size=(n, 3))
        else:
            self.sphere_centers = np.zeros((0, 3))
            self.sphere_radii = np.zeros(0)
            self.sphere_colors = np.zeros((0, 3))
        self._poses_c2w = [self._trajectory_pose(k) for k in range(spec.frames)]
        self._poses_w2c = [p.inverse() for p in self._poses_c2w]
        self._prior_affine = self._draw_prior_affine()
        self._feature_mix = np.random.default_rng(
            np.random.SeedSequence([spec.seed, 777])).normal(size=(FEATURE_DIM, 6))
        self._depth_cache: dict[int, np.ndarray] = {}
        self._image_cache: dict[int, np.ndarray] = {}

    # -- trajectory ---------------------------------------------------------

    def _trajectory_pose(self, k: int) -> SE3Pose:
        n = self.spec.frames
        s = k / n
        if self.spec.trajectory == "orbit":
            phi = 2 * np.pi * s
            center = np.array([ORBIT_RADIUS * np.cos(phi), ORBIT_RADIUS * np.sin(phi),
                               0.25 * np.sin(2 * phi)])
            fwd = np.array([np.cos(phi), np.sin(phi), -0.08])
        elif self.spec.trajectory == "line":
            t = (s - 0.5) * 3.0
            center = np.array([t, -0.4 * np.sin(np.pi * s), 0.2 * np.sin(2 * np.pi * s)])
            yaw = 0.25 * np.sin(2 * np.pi * s)
            fwd = np.array([np.sin(yaw), np.cos(yaw), -0.05])
        else:  # rotate: fixed center, single-axis yaw sweep
            yaw = 1.2 * s
            center = np.array([0.5, 0.0, 0.0])
            fwd = np.array([np.cos(yaw), np.sin(yaw), 0.0])
        return _look_at_c2w(center, fwd)

    def timestamp(self, k: int) -> float:
        return k / self.spec.fps

    def pose_c2w(self, k: int) -> SE3Pose:
        return self._poses_c2w[k]

    def pose_w2c(self, k: int) -> SE3Pose:
        return self._poses_w2c[k]

    def camera_center(self, k: int) -> np.ndarray:
        return self._poses_c2w[k].trans

    def diameter(self) -> float:
        pts = np.stack([p.trans for p in self._poses_c2w])
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        return float(max(d.max(), 1e-9))

    # -- ray casting --------------------------------------------------------

    def _cast(self, origin: np.ndarray, dirs: np.ndarray):
        """Nearest intersection along origin + s * dirs.

        dirs may be unnormalized; the returned s is in units of dirs (so with
        camera-frame dirs (xn, yn, 1) it is the pinhole depth Z directly).
        Returns (s, object id) with id -1 for the outer sphere, else occluder index.
        """
        dd = np.einsum("...k,...k->...", dirs, dirs)
        od = np.einsum("k,...k->...", origin, dirs)
        oo = float(origin @ origin)
        # outer sphere: we are inside, take the positive root
        disc = od**2 - dd * (oo - OUTER_RADIUS**2)
        s_best = (-od + np.sqrt(np.maximum(disc, 0.0))) / dd
        obj = np.full(s_best.shape, -1, dtype=np.int64)
        for i, (c, r) in enumerate(zip(self.sphere_centers, self.sphere_radii)):
            oc = origin - c
            ocd = np.einsum("k,...k->...", oc, dirs)
            disc = ocd**2 - dd * (float(oc @ oc) - r * r)
            hit = disc > 0
            s_hit = (-ocd - np.sqrt(np.maximum(disc, 0.0))) / dd
            closer = hit & (s_hit > 1e-9) & (s_hit < s_best)
            s_best = np.where(closer, s_hit, s_best)
            obj = np.where(closer, i, obj)
        return s_best, obj

    def _camera_rays(self, k: int):
        intr = self.intrinsics
        grid = pixel_grid(intr)
        xn = (grid[..., 0] - intr.cx) / intr.fx
        yn = (grid[..., 1] - intr.cy) / intr.fy
        dirs_cam = np.stack([xn, yn, np.ones_like(xn)], axis=-1)
        R_c2w = self._poses_c2w[k].rotation
        dirs_world = dirs_cam @ R_c2w.T
        return self.camera_center(k), dirs_world

    def depth(self, k: int) -> np.ndarray:
        """Exact per-pixel pinhole depth Z for frame k."""
        if k not in self._depth_cache:
            origin, dirs = self._camera_rays(k)
            s, _ = self._cast(origin, dirs)
            self._depth_cache[k] = s
        return self._depth_cache[k]

    def disparity(self, k: int) -> np.ndarray:
        return 1.0 / self.depth(k)

    def _surface_color(self, pts: np.ndarray, obj: np.ndarray) -> np.ndarray:
        fr = self.spec.texture_freq
        u = pts / OUTER_RADIUS
        col = 0.5 + 0.22 * np.stack([
            np.sin(fr * 2.1 * np.pi * u[..., 0]) * np.cos(fr * 1.3 * np.pi * u[..., 1]),
            np.sin(fr * 1.7 * np.pi * u[..., 1] + 1.1),
            np.cos(fr * 2.3 * np.pi * u[..., 2] + 0.4) * np.sin(fr * 0.9 * np.pi * u[..., 0]),
        ], axis=-1)
        for i, (c, r) in enumerate(zip(self.sphere_centers, self.sphere_radii)):
            on = obj == i
            if not on.any():
                continue
            local = (pts[on] - c) / r
            shade = 0.5 + 0.3 * np.sin(4.0 * local[:, 2:3] + i)
            col[on] = np.clip(self.sphere_colors[i] * (0.7 + 0.6 * shade), 0.02, 0.98)
        return np.clip(col, 0.02, 0.98)

    def image(self, k: int) -> np.ndarray:
        """(H, W, 3) color image in [0, 1] for frame k."""
        if k not in self._image_cache:
            origin, dirs = self._camera_rays(k)
            s, obj = self._cast(origin, dirs)
            pts = origin + s[..., None] * dirs
            self._image_cache[k] = self._surface_color(pts, obj)
        return self._image_cache[k]

    def world_points(self, k: int) -> np.ndarray:
        """(H, W, 3) world-space surface point seen by each pixel of frame k."""
        origin, dirs = self._camera_rays(k)
        return origin + self.depth(k)[..., None] * dirs

    def visible_from(self, k: int, pts: np.ndarray) -> np.ndarray:
        """True where world points are unoccluded and in view of camera k."""
        origin = self.camera_center(k)
        dirs = pts - origin
        s, _ = self._cast(origin, dirs)
        unoccluded = s > 1.0 - 1e-6
        cam_pts = self._poses_w2c[k].apply(pts)
        _, in_view = project(cam_pts, self.intrinsics)
        return unoccluded & in_view

    # -- prior corruption ---------------------------------------------------

    def _draw_prior_affine(self):
        lo_a, hi_a = self.spec.prior_scale_range
        lo_b, hi_b = self.spec.prior_offset_range
        out = []
        for k in range(self.spec.frames):
            rng = np.random.default_rng(np.random.SeedSequence([self.spec.seed, 1000 + k]))
            out.append((float(rng.uniform(lo_a, hi_a)), float(rng.uniform(lo_b, hi_b))))
        return out

    def prior_affine(self, k: int) -> tuple[float, float]:
        """Ground-truth per-frame corruption (a_t, b_t) of the depth prior."""
        return self._prior_affine[k]


def generate_scene(spec: SceneSpec | str) -> SyntheticScene:
    if isinstance(spec, str):
        spec = parse_scene_spec(spec)
    return SyntheticScene(spec)


# ---------------------------------------------------------------------------
# providers
# ---------------------------------------------------------------------------

class SyntheticProviders:
    """Oracle implementations of all three provider roles for one scene."""

    def __init__(self, scene: SyntheticScene):
        self.scene = scene

    def _check_frame(self, k: int):
        if not (0 <= k < self.scene.spec.frames):
            raise DataError(f"frame {k} not in scene (0..{self.scene.spec.frames - 1})")

    def provide_correspondences(self, i: int, j: int, snapshot=None) -> CorrespondenceUpdate:
        """Ground-truth reprojection targets i -> j with configured pixel noise.

        Weights are 1 on pixels of i whose surface point is visible in j and
        0 elsewhere; deterministic per (seed, i, j).
        """
        self._check_frame(i)
        self._check_frame(j)
        scene = self.scene
        rel = scene.pose_w2c(j).compose(scene.pose_c2w(i))
        target, valid = reproject(scene.disparity(i), rel, scene.intrinsics)
        pts = scene.world_points(i)
        vis = scene.visible_from(j, pts.reshape(-1, 3)).reshape(valid.shape)
        weight = np.where((valid & vis)[..., None], 1.0, 0.0) * np.ones((1, 1, 2))
        sigma = scene.spec.pixel_noise
        if sigma > 0:
            rng = np.random.default_rng(np.random.SeedSequence([scene.spec.seed, 31, i, j]))
            target = target + sigma * rng.normal(size=target.shape)
        # out-of-view targets carry zero weight; keep values finite regardless
        target = np.where(np.isfinite(target), target, 0.0)
        return CorrespondenceUpdate((i, j), target, weight)

    def provide_depth_prior(self, k: int) -> np.ndarray:
        """Disparity prior d* = a_k * d_true + b_k with multiplicative noise."""
        self._check_frame(k)
        scene = self.scene
        a, b = scene.prior_affine(k)
        d = a * scene.disparity(k) + b
        if scene.spec.prior_noise > 0:
            rng = np.random.default_rng(np.random.SeedSequence([scene.spec.seed, 63, k]))
            d = d * np.exp(scene.spec.prior_noise * rng.normal(size=d.shape))
        return np.maximum(d, 1e-6)

    def provide_place_feature(self, k: int) -> PlaceFeature:
        """Smooth unit-norm embedding of the true camera position/orientation."""
        self._check_frame(k)
        scene = self.scene
        fwd = scene.pose_c2w(k).rotation[:, 2]
        z = np.concatenate([scene.camera_center(k) / ORBIT_RADIUS, fwd])
        raw = scene._feature_mix @ z
        if scene.spec.feature_noise > 0:
            rng = np.random.default_rng(np.random.SeedSequence([scene.spec.seed, 97, k]))
            raw = raw + scene.spec.feature_noise * rng.normal(size=raw.shape)
        return PlaceFeature(raw / np.linalg.norm(raw), k)


# ---------------------------------------------------------------------------
# DSPT tensor files and the precomputed-tensor adapter
# ---------------------------------------------------------------------------

def write_dspt(path: str | Path, array: np.ndarray) -> None:
    array = np.asarray(array, dtype=np.float32)
    if array.ndim == 2:
        array = array[..., None]
    if array.ndim != 3:
        raise DataError(f"DSPT arrays must be (H, W, C), got shape {array.shape}")
    h, w, c = array.shape
    with open(path, "wb") as fh:
        fh.write(DSPT_MAGIC)
        fh.write(struct.pack("<III I", DSPT_VERSION, h, w, c)[:16])
        fh.write(struct.pack("<IIII", DSPT_VERSION, h, w, c))
    # rewrite cleanly: header is magic + 4 u32 fields
    with open(path, "wb") as fh:
        fh.write(DSPT_MAGIC)
        fh.write(struct.pack("<IIII", DSPT_VERSION, h, w, c))
        fh.write(array.astype("<f4").tobytes(order="C"))


def read_dspt(path: str | Path) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 20 or raw[:4] != DSPT_MAGIC:
        raise DataError(f"{path}: not a DSPT tensor file")
    version, h, w, c = struct.unpack("<IIII", raw[4:20])
    if version != DSPT_VERSION:
        raise DataError(f"{path}: unsupported DSPT version {version}")
    expect = 20 + h * w * c * 4
    if len(raw) != expect:
        raise DataError(f"{path}: truncated DSPT payload ({len(raw)} vs {expect} bytes)")
    data = np.frombuffer(raw, dtype="<f4", offset=20).reshape(h, w, c)
    return data.astype(np.float64)


class PrecomputedProviders:
    """Adapter reading provider tensors from a directory of DSPT files."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        if not self.directory.is_dir():
            raise DataError(f"provider directory {directory} does not exist")

    def _load(self, name: str) -> np.ndarray:
        path = self.directory / name
        if not path.exists():
            raise DataError(f"missing provider tensor {path}")
        return read_dspt(path)

    def provide_correspondences(self, i: int, j: int, snapshot=None) -> CorrespondenceUpdate:
        data = self._load(f"flow_{i:06d}_{j:06d}.dspt")
        if data.shape[2] != 4:
            raise DataError(f"flow tensor for edge ({i},{j}) must have 4 channels")
        return CorrespondenceUpdate((i, j), data[..., :2].copy(),
                                    np.clip(data[..., 2:4], 0.0, 1.0))

    def provide_depth_prior(self, k: int) -> np.ndarray:
        data = self._load(f"prior_{k:06d}.dspt")
        return np.maximum(data[..., 0], 1e-6)

    def provide_place_feature(self, k: int) -> PlaceFeature:
        data = self._load(f"feat_{k:06d}.dspt")
        vec = data.reshape(-1)
        return PlaceFeature(vec / np.linalg.norm(vec), k)


def dump_providers(providers, directory: str | Path, frames: range | list,
                   edges: list[tuple[int, int]]) -> None:
    """Write provider outputs as DSPT files usable by PrecomputedProviders."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for k in frames:
        write_dspt(directory / f"prior_{k:06d}.dspt", providers.provide_depth_prior(k))
        feat = providers.provide_place_feature(k).vector
        write_dspt(directory / f"feat_{k:06d}.dspt", feat.reshape(1, 1, -1))
    for (i, j) in edges:
        upd = providers.provide_correspondences(i, j)
        write_dspt(directory / f"flow_{i:06d}_{j:06d}.dspt",
                   np.concatenate([upd.target, upd.weight], axis=-1))
