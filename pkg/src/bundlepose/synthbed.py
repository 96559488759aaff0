"""Synthetic multi-view scene generator with exact ground truth.

Desk-scale scenes built from parametric meshes (boxes, spheres, prisms)
rendered with the package rasterizer. Ground-truth poses are scene
consistent by construction, which makes the refinement and benchmark
claims testable without any external dataset. "Textured" objects carry
dense random vertex colors; "textureless" ones are flat shaded.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import raster
from .errors import DegenerateSpec
from .geometry import CameraIntrinsics, RigidPose, exp
from .raster import ObjectModel

# mean of a chi(3) variable with unit per-axis sigma; used so the requested
# perturbation magnitude equals the expected deviation norm
_CHI3_MEAN = float(np.sqrt(2.0) * 2.0 / np.sqrt(np.pi))


def make_box(size=(0.1, 0.1, 0.1), subdiv: int = 1, name: str = "box") -> ObjectModel:
    """Axis-aligned box centered at the origin, each face a subdiv^2 grid.

    Faces do not share vertices, so per-vertex colors create sharp seams,
    which is exactly what the textured variants want.
    """
    sx, sy, sz = (float(s) / 2.0 for s in size)
    verts: list[np.ndarray] = []
    tris: list[list[int]] = []

    def add_face(origin, du, dv):
        base = len(verts)
        n = subdiv + 1
        for i in range(n):
            for j in range(n):
                verts.append(origin + du * (i / subdiv) + dv * (j / subdiv))
        for i in range(subdiv):
            for j in range(subdiv):
                a = base + i * n + j
                b = a + 1
                c = a + n
                d = c + 1
                tris.append([a, b, d])
                tris.append([a, d, c])

    ex = np.array([2 * sx, 0, 0])
    ey = np.array([0, 2 * sy, 0])
    ez = np.array([0, 0, 2 * sz])
    o = np.array([-sx, -sy, -sz])
    add_face(o, ey, ex)                      # bottom (z = -sz)
    add_face(o + ez, ex, ey)                 # top
    add_face(o, ex, ez)                      # y = -sy
    add_face(o + ey, ez, ex)                 # y = +sy
    add_face(o, ez, ey)                      # x = -sx
    add_face(o + ex, ey, ez)                 # x = +sx
    return ObjectModel(vertices=np.asarray(verts), triangles=np.asarray(tris), name=name)


def make_icosphere(radius: float = 0.05, subdiv: int = 2, name: str = "sphere") -> ObjectModel:
    """Icosahedron subdivided onto the sphere of the given radius."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=float,
    )
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    tris = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [v for v in verts]
    cache: dict[tuple[int, int], int] = {}

    def midpoint(a: int, b: int) -> int:
        key = (min(a, b), max(a, b))
        if key in cache:
            return cache[key]
        m = verts[a] + verts[b]
        m = m / np.linalg.norm(m)
        verts.append(m)
        cache[key] = len(verts) - 1
        return cache[key]

    for _ in range(subdiv):
        nxt = []
        for a, b, c in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            nxt += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        tris = nxt
    return ObjectModel(
        vertices=np.asarray(verts) * radius, triangles=np.asarray(tris), name=name
    )


def make_prism(radius: float = 0.05, height: float = 0.12, sides: int = 6, name: str = "prism") -> ObjectModel:
    """Regular n-gonal prism centered at the origin, axis along z."""
    angles = np.arange(sides) * 2 * np.pi / sides
    ring = np.stack([radius * np.cos(angles), radius * np.sin(angles)], axis=1)
    bot = np.concatenate([ring, np.full((sides, 1), -height / 2)], axis=1)
    top = np.concatenate([ring, np.full((sides, 1), height / 2)], axis=1)
    verts = np.concatenate([bot, top, [[0, 0, -height / 2]], [[0, 0, height / 2]]])
    cb, ct = 2 * sides, 2 * sides + 1
    tris = []
    for i in range(sides):
        j = (i + 1) % sides
        tris += [[i, j, sides + j], [i, sides + j, sides + i]]   # wall
        tris += [[cb, j, i], [ct, sides + i, sides + j]]          # caps
    return ObjectModel(vertices=verts, triangles=np.asarray(tris), name=name)


def colorize(model: ObjectModel, rng: np.random.Generator, lo: float = 0.1, hi: float = 0.95) -> ObjectModel:
    """Attach dense random vertex luminance, the stand-in for texture."""
    colors = rng.uniform(lo, hi, size=len(model.vertices))
    return ObjectModel(
        vertices=model.vertices,
        triangles=model.triangles,
        surface_samples=model.surface_samples,
        symmetric=model.symmetric,
        vertex_colors=colors,
        name=model.name,
    )


@dataclass
class SceneSpec:
    """Generation knobs for one synthetic scene."""

    n_objects: int = 3
    textured_fraction: float = 2.0 / 3.0
    n_views: int = 6
    arc_degrees: float = 25.0
    seed: int = 0
    width: int = 640
    height: int = 480
    focal: float = 500.0
    camera_distance: float = 0.9
    camera_elevation_deg: float = 35.0
    object_ring_radius: float = 0.16
    pixel_noise: float = 0.01
    surface_sample_count: int = 2048


@dataclass
class SyntheticScene:
    """A generated scene: models, poses, intrinsics, rendered images."""

    spec: SceneSpec
    models: list[ObjectModel]
    true_model_poses: list[RigidPose]    # model -> world (world = view-1 camera)
    true_camera_poses: list[RigidPose]   # world -> camera i
    intrinsics: CameraIntrinsics
    images: list[np.ndarray]
    visibility: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=bool))

    @property
    def n_views(self) -> int:
        return len(self.true_camera_poses)

    @property
    def n_objects(self) -> int:
        return len(self.models)

    def gt_pose(self, view: int, obj: int) -> RigidPose:
        """Composed ground-truth object pose in the camera frame of a view."""
        return self.true_camera_poses[view].compose(self.true_model_poses[obj])


def _look_at(eye: np.ndarray, target: np.ndarray, up: np.ndarray) -> RigidPose:
    """World-to-camera pose for a camera at `eye` looking at `target`."""
    fwd = target - eye
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, up)
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd], axis=0)
    return RigidPose(R, -R @ eye)


def render_views(
    models: list[ObjectModel],
    model_poses: list[RigidPose],
    camera_poses: list[RigidPose],
    K: CameraIntrinsics,
    rng: np.random.Generator,
    pixel_noise: float,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Composite all objects per view over a low-texture noise background."""
    images = []
    visibility = np.zeros((len(camera_poses), len(models)), dtype=bool)
    background = ndimage.gaussian_filter(rng.random((K.height, K.width)), 6.0)
    background = 0.35 + 0.25 * (background - background.mean())
    for i, cam in enumerate(camera_poses):
        renders = {}
        for j, model in enumerate(models):
            try:
                renders[j] = raster.rasterize(model, cam.compose(model_poses[j]), K)
            except raster.EmptyRender:
                continue
        scene = raster.composite(renders, (K.height, K.width))
        for j in renders:
            visibility[i, j] = bool((scene.owner == j).any())
        img = np.where(scene.owner >= 0, scene.intensity, background.astype(np.float32))
        if pixel_noise > 0:
            img = img + rng.normal(0.0, pixel_noise, img.shape)
        images.append(np.clip(img, 0.0, 1.0).astype(np.float32))
    return images, visibility


def make_scene(spec: SceneSpec) -> SyntheticScene:
    """Deterministic scene generation; same spec, same bytes out."""
    if spec.n_objects < 1 or spec.n_views < 2:
        raise DegenerateSpec("need at least one object and two views")
    rng = np.random.default_rng(spec.seed)
    K = CameraIntrinsics(
        fx=spec.focal, fy=spec.focal,
        cx=spec.width / 2.0, cy=spec.height / 2.0,
        width=spec.width, height=spec.height,
    )

    n_textured = int(round(spec.textured_fraction * spec.n_objects))
    models = []
    for j in range(spec.n_objects):
        kind = j % 3
        scale = rng.uniform(0.9, 1.1)
        if kind == 0:
            m = make_box(size=np.array([0.11, 0.09, 0.12]) * scale, subdiv=6, name=f"obj{j}_box")
        elif kind == 1:
            m = make_icosphere(radius=0.055 * scale, subdiv=2, name=f"obj{j}_sphere")
        else:
            m = make_prism(radius=0.05 * scale, height=0.13 * scale, sides=6, name=f"obj{j}_prism")
        if j < n_textured:
            m = colorize(m, rng)
        models.append(m.with_samples(spec.surface_sample_count, seed=spec.seed + j))

    # object placement on a ring in the desk frame, random yaw each
    desk_obj_poses = []
    for j in range(spec.n_objects):
        ang = 2 * np.pi * j / spec.n_objects + rng.uniform(-0.2, 0.2)
        pos = np.array(
            [
                spec.object_ring_radius * np.cos(ang),
                spec.object_ring_radius * np.sin(ang),
                rng.uniform(-0.02, 0.02),
            ]
        )
        yaw = rng.uniform(0, 2 * np.pi)
        tilt = exp(np.concatenate([rng.normal(0, 0.1, size=2), [0.0, 0, 0, 0]]))
        Q = tilt.compose(exp(np.array([0.0, 0.0, yaw, 0.0, 0.0, 0.0])))
        desk_obj_poses.append(RigidPose(Q.R, pos))

    # cameras on an arc looking at the desk center
    elev = np.deg2rad(spec.camera_elevation_deg)
    arc = np.deg2rad(spec.arc_degrees)
    azimuths = -arc / 2 + arc * np.arange(spec.n_views) / max(spec.n_views - 1, 1)
    extrinsics = []
    for az in azimuths:
        eye = spec.camera_distance * np.array(
            [np.sin(az) * np.cos(elev), -np.cos(az) * np.cos(elev), np.sin(elev)]
        )
        extrinsics.append(_look_at(eye, np.zeros(3), up=np.array([0.0, 0.0, 1.0])))

    # re-express in the view-1 camera frame so the first camera is identity
    E1_inv = extrinsics[0].inverse()
    model_poses = [extrinsics[0].compose(Q) for Q in desk_obj_poses]
    camera_poses = [E.compose(E1_inv) for E in extrinsics]
    camera_poses[0] = RigidPose.identity()

    images, visibility = render_views(models, model_poses, camera_poses, K, rng, spec.pixel_noise)
    return SyntheticScene(
        spec=spec,
        models=models,
        true_model_poses=model_poses,
        true_camera_poses=camera_poses,
        intrinsics=K,
        images=images,
        visibility=visibility,
    )


def perturb(
    scene: SyntheticScene, trans_sigma: float, rot_sigma_deg: float, seed: int = 0
) -> list[list[RigidPose | None]]:
    """Per-(view, object) noisy composed poses.

    Tangent noise is Gaussian per axis, scaled so the expected deviation
    norm equals the requested sigma (translation in meters, rotation
    angle in degrees). The result is deliberately scene inconsistent.
    """
    if trans_sigma < 0 or rot_sigma_deg < 0:
        raise ValueError("perturbation sigmas must be non-negative")
    rng = np.random.default_rng(seed)
    rot_sigma = np.deg2rad(rot_sigma_deg) / _CHI3_MEAN
    trs_sigma = trans_sigma / _CHI3_MEAN
    noisy: list[list[RigidPose | None]] = []
    for i in range(scene.n_views):
        row: list[RigidPose | None] = []
        for j in range(scene.n_objects):
            if not scene.visibility[i, j]:
                row.append(None)
                continue
            d = np.concatenate([rng.normal(0, rot_sigma, 3), rng.normal(0, trs_sigma, 3)])
            row.append(exp(d).compose(scene.gt_pose(i, j)))
        noisy.append(row)
    return noisy


def write_scene_dir(
    scene: SyntheticScene,
    out_dir: str | Path,
    init_poses: list[list[RigidPose | None]] | None = None,
) -> Path:
    """Write images, models, and a refine-ready scene manifest.

    Returns the manifest path. When init_poses is omitted the manifest
    carries ground truth (useful for smoke tests); a separate
    ``ground_truth.json`` is always written for scoring.
    """
    from .imagefeat import save_image  # local import to avoid a cycle at import time

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if init_poses is None:
        init_poses = [
            [scene.gt_pose(i, j) if scene.visibility[i, j] else None for j in range(scene.n_objects)]
            for i in range(scene.n_views)
        ]

    model_entries = []
    for model in scene.models:
        path = out / f"{model.name}.obj"
        model.save_obj(path)
        model_entries.append(
            {"name": model.name, "path": path.name, "symmetric": model.symmetric}
        )

    views = []
    for i, img in enumerate(scene.images):
        img_path = out / f"view_{i:03d}.png"
        save_image(img, img_path)
        init = {}
        for j, model in enumerate(scene.models):
            pose = init_poses[i][j]
            init[model.name] = pose.to_json_dict() if pose is not None else None
        views.append(
            {
                "image": img_path.name,
                "intrinsics": scene.intrinsics.to_json_dict(),
                "init": init,
            }
        )

    manifest = {"models": model_entries, "views": views, "seed": scene.spec.seed}
    manifest_path = out / "scene.json"
    import json

    manifest_path.write_text(json.dumps(manifest, indent=1), encoding="utf-8")

    gt = {
        "camera_poses": [p.to_json_dict() for p in scene.true_camera_poses],
        "model_poses": {
            scene.models[j].name: scene.true_model_poses[j].to_json_dict()
            for j in range(scene.n_objects)
        },
    }
    (out / "ground_truth.json").write_text(json.dumps(gt, indent=1), encoding="utf-8")
    return manifest_path
