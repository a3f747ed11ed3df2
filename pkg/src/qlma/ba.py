"""Toy bundle adjustment: scene generation, pinhole projection, residuals,
jet-based Jacobians, and Schur reduction of the damped normal equations.

Parameter vector layout (theta), for c cameras and n points:

    [cam 0: rotation increment w (3), position (3)] ... [cam c-1: ...]
    [point 0: xyz] ... [point n-1: xyz]

The rotation increment composes onto the camera's stored quaternion
(R(w) * R(q)); quaternions themselves are state, not free parameters, so
the camera block stays at 6 parameters per camera.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import jets
from .jets import Jet

SMALL_ANGLE_SQ = 1e-8


# ---------------------------------------------------------------------------
# Quaternion helpers, generic over floats and jets.
# ---------------------------------------------------------------------------

def quat_mul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def quat_from_rotvec(w):
    """Unit quaternion of an axis-angle vector; series form near zero."""
    wx, wy, wz = w
    angle_sq = wx * wx + wy * wy + wz * wz
    if angle_sq < SMALL_ANGLE_SQ:
        qw = 1.0 - angle_sq / 8.0 + angle_sq * angle_sq / 384.0
        half = 0.5 - angle_sq / 48.0 + angle_sq * angle_sq / 3840.0
    else:
        angle = jets.sqrt(angle_sq)
        qw = jets.cos(angle * 0.5)
        half = jets.sin(angle * 0.5) / angle
    return (qw, wx * half, wy * half, wz * half)


def quat_normalize(q):
    qw, qx, qy, qz = q
    inv = 1.0 / jets.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
    return (qw * inv, qx * inv, qy * inv, qz * inv)


def quat_rotate(q, v):
    """Rotate vector v by unit quaternion q (two cross products)."""
    qw, qx, qy, qz = q
    vx, vy, vz = v
    tx = 2.0 * (qy * vz - qz * vy)
    ty = 2.0 * (qz * vx - qx * vz)
    tz = 2.0 * (qx * vy - qy * vx)
    return (
        vx + qw * tx + (qy * tz - qz * ty),
        vy + qw * ty + (qz * tx - qx * tz),
        vz + qw * tz + (qx * ty - qy * tx),
    )


def quat_angle(q) -> float:
    """Rotation angle of a unit quaternion, in [0, pi]."""
    vec = math.sqrt(q[1] ** 2 + q[2] ** 2 + q[3] ** 2)
    return 2.0 * math.atan2(vec, abs(q[0]))


def _rotation_to_quat(r: np.ndarray) -> np.ndarray:
    w = math.sqrt(max(0.0, 1.0 + r[0, 0] + r[1, 1] + r[2, 2])) / 2.0
    if w > 1e-6:
        q = np.array(
            [w, (r[2, 1] - r[1, 2]) / (4 * w), (r[0, 2] - r[2, 0]) / (4 * w), (r[1, 0] - r[0, 1]) / (4 * w)]
        )
    else:
        i = int(np.argmax(np.diag(r)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = math.sqrt(max(1e-12, 1.0 + r[i, i] - r[j, j] - r[k, k])) * 2.0
        q = np.empty(4)
        q[0] = (r[k, j] - r[j, k]) / s
        q[1 + i] = s / 4.0
        q[1 + j] = (r[j, i] + r[i, j]) / s
        q[1 + k] = (r[k, i] + r[i, k]) / s
    return q / np.linalg.norm(q)


# ---------------------------------------------------------------------------
# Scene model.
# ---------------------------------------------------------------------------

class ProjectionError(ValueError):
    """Point at or behind the camera plane."""


@dataclass
class Camera:
    """World-to-camera rotation (unit quaternion), camera center, intrinsics."""

    quaternion: np.ndarray
    position: np.ndarray
    focal: float = 1.0
    principal_point: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.quaternion = np.asarray(self.quaternion, dtype=float)
        self.position = np.asarray(self.position, dtype=float)
        self.principal_point = np.asarray(self.principal_point, dtype=float)
        if abs(np.linalg.norm(self.quaternion) - 1.0) > 1e-9:
            raise ValueError("camera quaternion must be unit norm")


@dataclass
class Scene:
    """Points, cameras, and the observed keypoints (i = point, j = camera)."""

    points: np.ndarray
    cameras: list[Camera]
    observations: dict[tuple[int, int], np.ndarray]

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        for (i, j) in self.observations:
            if not (0 <= i < len(self.points) and 0 <= j < len(self.cameras)):
                raise ValueError(f"observation ({i}, {j}) references a missing point or camera")

    @property
    def n_camera_params(self) -> int:
        return 6 * len(self.cameras)

    @property
    def n_params(self) -> int:
        return self.n_camera_params + 3 * len(self.points)

    def observation_keys(self) -> list[tuple[int, int]]:
        return sorted(self.observations.keys())

    def initial_params(self) -> np.ndarray:
        theta = np.zeros(self.n_params)
        for j, cam in enumerate(self.cameras):
            theta[6 * j + 3 : 6 * j + 6] = cam.position
        theta[self.n_camera_params :] = self.points.ravel()
        return theta


def _project_generic(quaternion, position, focal, principal_point, point):
    """Pinhole projection, generic over floats and jets."""
    d = (point[0] - position[0], point[1] - position[1], point[2] - position[2])
    xc, yc, zc = quat_rotate(quaternion, d)
    if zc <= 0.0:
        raise ProjectionError("point is on or behind the camera plane")
    return (focal * xc / zc + principal_point[0], focal * yc / zc + principal_point[1])


def project(camera: Camera, point) -> np.ndarray:
    """Project a world point through the camera; raises behind the camera."""
    uv = _project_generic(
        tuple(camera.quaternion), tuple(camera.position), camera.focal, tuple(camera.principal_point), tuple(point)
    )
    return np.array(uv)


def _camera_pose(scene: Scene, theta, j: int):
    """Effective (quaternion, position) of camera j at parameters theta."""
    base = scene.cameras[j]
    w = (theta[6 * j], theta[6 * j + 1], theta[6 * j + 2])
    pos = (theta[6 * j + 3], theta[6 * j + 4], theta[6 * j + 5])
    if not isinstance(w[0], Jet) and w[0] == 0.0 and w[1] == 0.0 and w[2] == 0.0:
        quat = tuple(base.quaternion)  # exact: keeps a zero-noise cost at exactly 0
    else:
        quat = quat_normalize(quat_mul(quat_from_rotvec(w), tuple(base.quaternion)))
    return quat, pos


def total_cost(scene: Scene, theta: np.ndarray | None = None) -> float:
    """Sum over observations of the Euclidean reprojection distance."""
    if theta is None:
        theta = scene.initial_params()
    nc = scene.n_camera_params
    cost = 0.0
    poses = [_camera_pose(scene, theta, j) for j in range(len(scene.cameras))]
    for (i, j), u in scene.observations.items():
        base = scene.cameras[j]
        pt = (theta[nc + 3 * i], theta[nc + 3 * i + 1], theta[nc + 3 * i + 2])
        quat, pos = poses[j]
        du, dv = _project_generic(quat, pos, base.focal, tuple(base.principal_point), pt)
        cost += math.sqrt((u[0] - du) ** 2 + (u[1] - dv) ** 2)
    return cost


def residuals_and_jacobian(scene: Scene, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stacked 2-vector residuals (predicted - observed) and their Jacobian.

    Each observation only touches 6 camera + 3 point parameters, so the
    jets carry 9 partials which are scattered into the full Jacobian.
    """
    keys = scene.observation_keys()
    nc = scene.n_camera_params
    n_res = 2 * len(keys)
    r = np.zeros(n_res)
    jac = np.zeros((n_res, scene.n_params))
    for row, (i, j) in enumerate(keys):
        base = scene.cameras[j]
        local = jets.variables(
            [
                theta[6 * j],
                theta[6 * j + 1],
                theta[6 * j + 2],
                theta[6 * j + 3],
                theta[6 * j + 4],
                theta[6 * j + 5],
                theta[nc + 3 * i],
                theta[nc + 3 * i + 1],
                theta[nc + 3 * i + 2],
            ]
        )
        w, pos, pt = local[0:3], local[3:6], local[6:9]
        quat = quat_normalize(quat_mul(quat_from_rotvec(w), tuple(base.quaternion)))
        du, dv = _project_generic(quat, pos, base.focal, tuple(base.principal_point), pt)
        u = scene.observations[(i, j)]
        cols = list(range(6 * j, 6 * j + 6)) + list(range(nc + 3 * i, nc + 3 * i + 3))
        for comp, val in enumerate((du, dv)):
            res = val - u[comp]
            r[2 * row + comp] = res.value
            jac[2 * row + comp, cols] = res.partials
    return r, jac


# ---------------------------------------------------------------------------
# Normal equations and Schur reduction.
# ---------------------------------------------------------------------------

@dataclass
class NormalEquations:
    """Damped normal equations in camera/point block form."""

    camera_block: np.ndarray
    point_blocks: np.ndarray  # (n_points, 3, 3)
    coupling: np.ndarray  # (m_c, 3 * n_points)
    grad_cam: np.ndarray
    grad_pts: np.ndarray
    m_c: int

    def full_matrix(self) -> np.ndarray:
        n = self.m_c + 3 * len(self.point_blocks)
        out = np.zeros((n, n))
        out[: self.m_c, : self.m_c] = self.camera_block
        out[: self.m_c, self.m_c :] = self.coupling
        out[self.m_c :, : self.m_c] = self.coupling.T
        for i, blk in enumerate(self.point_blocks):
            s = self.m_c + 3 * i
            out[s : s + 3, s : s + 3] = blk
        return out

    def full_gradient(self) -> np.ndarray:
        return np.concatenate([self.grad_cam, self.grad_pts])


def build_normal_equations(
    residuals: np.ndarray,
    jacobian: np.ndarray,
    lam1: float,
    lam2: float,
    d_diag: np.ndarray | None = None,
    m_c: int | None = None,
) -> NormalEquations:
    """Assemble J^T J + lam1 D^T D + lam2 I and the gradient J^T r.

    D defaults to the column norms of J (so D^T D is the diagonal of J^T J),
    floored at 1e-12.  m_c splits parameters into the camera block and the
    3x3-block point part; None treats everything as the camera block.
    """
    if lam1 < 0 or lam2 < 0:
        raise ValueError("damping parameters must be nonnegative")
    jtj = jacobian.T @ jacobian
    n = jtj.shape[0]
    if d_diag is None:
        dtd = np.maximum(np.diag(jtj), 1e-12)
    else:
        dtd = np.maximum(np.asarray(d_diag, dtype=float) ** 2, 1e-12)
    h = jtj + lam1 * np.diag(dtd) + lam2 * np.eye(n)
    g = jacobian.T @ residuals
    if m_c is None:
        m_c = n
    n_pts, rem = divmod(n - m_c, 3)
    if rem:
        raise ValueError("point parameter count is not a multiple of three")
    off_block = h[m_c:, m_c:].copy()
    blocks = np.zeros((n_pts, 3, 3))
    for i in range(n_pts):
        blocks[i] = off_block[3 * i : 3 * i + 3, 3 * i : 3 * i + 3]
        off_block[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] = 0.0
    if n_pts and np.max(np.abs(off_block)) > 1e-10:
        raise ValueError("point block of the normal equations is not 3x3 block diagonal")
    return NormalEquations(
        camera_block=h[:m_c, :m_c],
        point_blocks=blocks,
        coupling=h[:m_c, m_c:],
        grad_cam=g[:m_c],
        grad_pts=g[m_c:],
        m_c=m_c,
    )


def schur_reduce(ne: NormalEquations) -> tuple[np.ndarray, np.ndarray]:
    """Eliminate the point blocks: returns (S, rhs) with S dtheta_cam = -rhs."""
    s = ne.camera_block.copy()
    rhs = ne.grad_cam.copy()
    for i, blk in enumerate(ne.point_blocks):
        e_i = ne.coupling[:, 3 * i : 3 * i + 3]
        try:
            inv = np.linalg.inv(blk)
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"singular 3x3 point block {i}") from exc
        s -= e_i @ inv @ e_i.T
        rhs -= e_i @ inv @ ne.grad_pts[3 * i : 3 * i + 3]
    return s, rhs


def back_substitute(ne: NormalEquations, delta_cam: np.ndarray) -> np.ndarray:
    """Point steps from a camera step: dp_i = -C_i^{-1} (g_i + E_i^T dc)."""
    out = np.zeros(3 * len(ne.point_blocks))
    for i, blk in enumerate(ne.point_blocks):
        e_i = ne.coupling[:, 3 * i : 3 * i + 3]
        out[3 * i : 3 * i + 3] = -np.linalg.solve(blk, ne.grad_pts[3 * i : 3 * i + 3] + e_i.T @ delta_cam)
    return out


# ---------------------------------------------------------------------------
# Problem generation.
# ---------------------------------------------------------------------------

@dataclass
class BaProblem:
    """A generated reconstruction problem.

    `truth` holds the exact scene; `initial` shares the points but carries
    the noisy camera guesses the optimization starts from.  Both reference
    the same observation map.  `observation_points` are the jittered 3D
    positions the keypoints were projected from.
    """

    truth: Scene
    initial: Scene
    observation_points: np.ndarray
    seed: int


def _look_at(position: np.ndarray, target: np.ndarray) -> np.ndarray:
    forward = target - position
    forward = forward / np.linalg.norm(forward)
    up = np.array([0.0, 0.0, 1.0])
    right = np.cross(up, forward)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    return _rotation_to_quat(np.vstack([right, down, forward]))


def generate_problem(
    seed: int,
    n_points: int = 10,
    point_noise: float = 0.5,
    camera_position_noise: float = 0.5,
    camera_rotation_noise: float = 0.5,
    noise_on: str = "points3d",
    camera_radius: float = 2.8,
    camera_separation_deg: float = 8.0,
) -> BaProblem:
    """Deterministic two-camera problem.

    Points are uniform in [-2, 2]^3; the cameras sit on a circle of radius
    `camera_radius` around the origin, `camera_separation_deg` apart, both
    aimed at the point centroid.  Keypoints are exact projections of the
    points jittered by +-point_noise (noise_on="keypoints" jitters the
    image keypoints directly instead).  The initial guess perturbs each
    camera position by a +-camera_position_noise relative factor per axis
    and its orientation by a random-axis rotation of up to
    +-camera_rotation_noise times the nominal view angle.
    """
    if noise_on not in ("points3d", "keypoints"):
        raise ValueError("noise_on must be 'points3d' or 'keypoints'")
    rng = np.random.default_rng(seed)
    points = rng.uniform(-2.0, 2.0, size=(n_points, 3))
    centroid = points.mean(axis=0)

    half = math.radians(camera_separation_deg) / 2.0
    true_cams = []
    for angle in (math.pi / 2.0 - half, math.pi / 2.0 + half):
        pos = np.array([camera_radius * math.cos(angle), camera_radius * math.sin(angle), 0.0])
        true_cams.append(Camera(_look_at(pos, centroid), pos))

    jitter = rng.uniform(-point_noise, point_noise, size=(n_points, 3)) if point_noise else np.zeros((n_points, 3))
    if noise_on == "points3d":
        obs_points = points + jitter
        observations = {
            (i, j): project(cam, obs_points[i]) for i in range(n_points) for j, cam in enumerate(true_cams)
        }
    else:
        obs_points = points.copy()
        observations = {}
        for i in range(n_points):
            for j, cam in enumerate(true_cams):
                observations[(i, j)] = project(cam, points[i]) + jitter[i, :2]

    noisy_cams = []
    for cam in true_cams:
        while True:  # redraw until every point projects; deterministic per seed
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            dangle = rng.uniform(-camera_rotation_noise, camera_rotation_noise) * quat_angle(cam.quaternion)
            dq = quat_from_rotvec(tuple(axis * dangle))
            quat = np.array(quat_normalize(quat_mul(dq, tuple(cam.quaternion))))
            pos = cam.position * (1.0 + rng.uniform(-camera_position_noise, camera_position_noise, size=3))
            candidate = Camera(quat, pos, cam.focal, cam.principal_point.copy())
            try:
                for p in points:
                    project(candidate, p)
            except ProjectionError:
                continue
            noisy_cams.append(candidate)
            break

    truth = Scene(points, true_cams, observations)
    initial = Scene(points.copy(), noisy_cams, observations)
    return BaProblem(truth, initial, obs_points, seed)


# ---------------------------------------------------------------------------
# Line-oriented text serialization.
# ---------------------------------------------------------------------------

_HEADER = "# qlma problem v1"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_problem(problem: BaProblem, path) -> None:
    """One record per line: points, cameras, observations, initial guesses."""
    lines = [_HEADER, f"seed {problem.seed}"]
    for i, p in enumerate(problem.truth.points):
        lines.append(f"point {i} {' '.join(_fmt(v) for v in p)}")
    for j, c in enumerate(problem.truth.cameras):
        vals = [*c.quaternion, *c.position, c.focal, *c.principal_point]
        lines.append(f"camera {j} {' '.join(_fmt(v) for v in vals)}")
    for (i, j), uv in sorted(problem.truth.observations.items()):
        lines.append(f"obs {i} {j} {_fmt(uv[0])} {_fmt(uv[1])}")
    for i, p in enumerate(problem.observation_points):
        lines.append(f"obs_point {i} {' '.join(_fmt(v) for v in p)}")
    for i, p in enumerate(problem.initial.points):
        lines.append(f"init_point {i} {' '.join(_fmt(v) for v in p)}")
    for j, c in enumerate(problem.initial.cameras):
        vals = [*c.quaternion, *c.position, c.focal, *c.principal_point]
        lines.append(f"init_camera {j} {' '.join(_fmt(v) for v in vals)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_problem(path) -> BaProblem:
    records: dict[str, dict] = {
        "point": {}, "camera": {}, "obs": {}, "obs_point": {}, "init_point": {}, "init_camera": {},
    }
    seed = 0
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "seed":
                seed = int(parts[1])
            elif tag == "obs":
                records["obs"][(int(parts[1]), int(parts[2]))] = np.array([float(parts[3]), float(parts[4])])
            elif tag in records:
                records[tag][int(parts[1])] = np.array([float(v) for v in parts[2:]])
            else:
                raise ValueError(f"unknown record {tag!r}")

    def camera_from(vals: np.ndarray) -> Camera:
        return Camera(vals[0:4], vals[4:7], float(vals[7]), vals[8:10])

    n_pts = len(records["point"])
    points = np.vstack([records["point"][i] for i in range(n_pts)])
    cams = [camera_from(records["camera"][j]) for j in range(len(records["camera"]))]
    init_points = np.vstack([records["init_point"][i] for i in range(n_pts)])
    init_cams = [camera_from(records["init_camera"][j]) for j in range(len(records["init_camera"]))]
    obs_points = np.vstack([records["obs_point"][i] for i in range(n_pts)])
    observations = records["obs"]
    truth = Scene(points, cams, observations)
    initial = Scene(init_points, init_cams, observations)
    return BaProblem(truth, initial, obs_points, seed)
