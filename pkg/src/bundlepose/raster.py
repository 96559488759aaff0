"""Software z-buffer rasterizer producing object template images.

A template render holds the mask, per-pixel depth, and a shaded intensity
channel for an object at a hypothesized camera-frame pose. Depth is
interpolated perspective-correctly (1/z is affine in screen space over a
planar triangle), so lifting a template pixel back to 3D is exact up to
the planarity of the covering triangle. Intensity is flat headlight
Lambertian shading unless the model carries per-vertex colors, in which
case interpolated vertex luminance replaces the shading.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from scipy import ndimage

from .errors import EmptyRender
from .geometry import CameraIntrinsics, RigidPose

NEAR_PLANE = 1e-6

# Canny thresholds for template interior edges, on the [0,1] intensity
# gradient scale; 1020 is the Sobel response of a full-range step edge.
CANNY_LOW = 0.1
CANNY_HIGH = 0.3
_CANNY_SCALE = 1020.0

_PLUS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class ObjectModel:
    """Triangle mesh with cached surface-point samples.

    vertices are meters in the model frame; triangles index into them.
    ``vertex_colors`` is optional per-vertex luminance in [0,1] used as a
    stand-in for texture. ``symmetric`` marks objects scored with the
    nearest-point metric variant.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    surface_samples: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    symmetric: bool = False
    vertex_colors: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.surface_samples = np.asarray(self.surface_samples, dtype=float).reshape(-1, 3)
        if self.vertex_colors is not None:
            self.vertex_colors = np.asarray(self.vertex_colors, dtype=float).reshape(-1)
            if self.vertex_colors.shape[0] != self.vertices.shape[0]:
                raise ValueError("vertex_colors length must match vertices")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise ValueError("triangle index out of range")
        if self.surface_samples.size:
            lo = self.vertices.min(axis=0) - 1e-9
            hi = self.vertices.max(axis=0) + 1e-9
            if np.any(self.surface_samples < lo) or np.any(self.surface_samples > hi):
                raise ValueError("surface samples outside the mesh bounding box")

    @property
    def textured(self) -> bool:
        return self.vertex_colors is not None

    def sample_surface(self, count: int, seed: int = 0) -> np.ndarray:
        """Draw area-weighted random points on the mesh surface."""
        rng = np.random.default_rng(seed)
        a = self.vertices[self.triangles[:, 0]]
        b = self.vertices[self.triangles[:, 1]]
        c = self.vertices[self.triangles[:, 2]]
        areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
        probs = areas / areas.sum()
        idx = rng.choice(len(areas), size=count, p=probs)
        u = rng.random(count)
        v = rng.random(count)
        flip = u + v > 1.0
        u[flip] = 1.0 - u[flip]
        v[flip] = 1.0 - v[flip]
        pts = a[idx] + u[:, None] * (b[idx] - a[idx]) + v[:, None] * (c[idx] - a[idx])
        return pts

    def with_samples(self, count: int = 2048, seed: int = 0) -> "ObjectModel":
        return ObjectModel(
            vertices=self.vertices,
            triangles=self.triangles,
            surface_samples=self.sample_surface(count, seed),
            symmetric=self.symmetric,
            vertex_colors=self.vertex_colors,
            name=self.name,
        )

    @staticmethod
    def from_obj(path: str | Path, sample_count: int = 2048, seed: int = 0) -> "ObjectModel":
        """Load an ASCII OBJ; `v x y z r g b` lines carry vertex colors."""
        verts: list[list[float]] = []
        colors: list[float] = []
        tris: list[list[int]] = []
        has_color = False
        for line in Path(path).read_text().splitlines():
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                vals = [float(p) for p in parts[1:]]
                verts.append(vals[:3])
                if len(vals) >= 6:
                    has_color = True
                    r, g, b = vals[3:6]
                    colors.append(0.299 * r + 0.587 * g + 0.114 * b)
                else:
                    colors.append(1.0)
            elif parts[0] == "f":
                idx = [int(p.split("/")[0]) - 1 for p in parts[1:]]
                for k in range(1, len(idx) - 1):  # fan-triangulate polygons
                    tris.append([idx[0], idx[k], idx[k + 1]])
        model = ObjectModel(
            vertices=np.asarray(verts),
            triangles=np.asarray(tris, dtype=np.int64),
            vertex_colors=np.asarray(colors) if has_color else None,
            name=Path(path).stem,
        )
        return model.with_samples(sample_count, seed)

    def save_obj(self, path: str | Path) -> None:
        lines = []
        for i, v in enumerate(self.vertices):
            if self.vertex_colors is not None:
                c = float(self.vertex_colors[i])
                lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g} {c:.6g} {c:.6g} {c:.6g}")
            else:
                lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
        for t in self.triangles:
            lines.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass
class TemplateRender:
    """Immutable render output: mask, metric depth (0 where empty), and
    a shaded intensity channel in [0,1]."""

    mask: np.ndarray
    depth: np.ndarray
    intensity: np.ndarray
    pose_used: RigidPose

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape


def _project_vertices(verts_cam: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    uv = np.empty((len(verts_cam), 2))
    z = np.where(verts_cam[:, 2] > NEAR_PLANE, verts_cam[:, 2], 1.0)
    uv[:, 0] = K.fx * verts_cam[:, 0] / z + K.cx
    uv[:, 1] = K.fy * verts_cam[:, 1] / z + K.cy
    return uv


def _raster_buffers(model: ObjectModel, pose: RigidPose, K: CameraIntrinsics):
    """Z-buffer fill; returns (zbuf with +inf empty, shade)."""
    H, W = K.height, K.width
    zbuf = np.full((H, W), np.inf)
    shade = np.zeros((H, W), dtype=np.float32)

    verts_cam = pose.apply(model.vertices)
    uv = _project_vertices(verts_cam, K)
    view_dirs = -verts_cam / np.maximum(np.linalg.norm(verts_cam, axis=1, keepdims=True), 1e-12)

    for tri in model.triangles:
        zc = verts_cam[tri, 2]
        if zc.min() <= NEAR_PLANE:
            continue  # no near-plane clipping; drop grazing triangles
        p = uv[tri]
        x0 = max(int(np.ceil(p[:, 0].min())), 0)
        x1 = min(int(np.floor(p[:, 0].max())), W - 1)
        y0 = max(int(np.ceil(p[:, 1].min())), 0)
        y1 = min(int(np.floor(p[:, 1].max())), H - 1)
        if x0 > x1 or y0 > y1:
            continue
        ax, ay = p[0]
        bx, by = p[1]
        cx_, cy_ = p[2]
        area = (bx - ax) * (cy_ - ay) - (by - ay) * (cx_ - ax)
        if abs(area) < 1e-12:
            continue
        xs = np.arange(x0, x1 + 1)
        ys = np.arange(y0, y1 + 1)
        gx, gy = np.meshgrid(xs, ys)
        w0 = (cx_ - bx) * (gy - by) - (cy_ - by) * (gx - bx)
        w1 = (ax - cx_) * (gy - cy_) - (ay - cy_) * (gx - cx_)
        w2 = (bx - ax) * (gy - ay) - (by - ay) * (gx - ax)
        if area < 0:
            w0, w1, w2, a = -w0, -w1, -w2, -area
        else:
            a = area
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        l0 = w0 / a
        l1 = w1 / a
        l2 = w2 / a
        inv_z = l0 / zc[0] + l1 / zc[1] + l2 / zc[2]
        z_pix = 1.0 / np.maximum(inv_z, 1e-12)

        if model.vertex_colors is not None:
            col = model.vertex_colors[tri]
            value = l0 * col[0] + l1 * col[1] + l2 * col[2]
        else:
            n = np.cross(verts_cam[tri[1]] - verts_cam[tri[0]], verts_cam[tri[2]] - verts_cam[tri[0]])
            nn = np.linalg.norm(n)
            if nn < 1e-15:
                continue
            n = n / nn
            v = view_dirs[tri].mean(axis=0)
            v = v / max(np.linalg.norm(v), 1e-12)
            cos = float(n @ v)
            value = max(cos, -cos)  # normal oriented toward the camera

        tile = zbuf[y0 : y1 + 1, x0 : x1 + 1]
        closer = inside & (z_pix < tile)
        if not closer.any():
            continue
        tile[closer] = z_pix[closer]
        stile = shade[y0 : y1 + 1, x0 : x1 + 1]
        if np.isscalar(value):
            stile[closer] = value
        else:
            stile[closer] = value[closer]
    return zbuf, shade


def rasterize(model: ObjectModel, pose: RigidPose, K: CameraIntrinsics) -> TemplateRender:
    """Render the object at a camera-frame pose.

    Raises EmptyRender when no pixel is covered (object out of view);
    callers skip the corresponding (view, object) pair.
    """
    zbuf, shade = _raster_buffers(model, pose, K)
    mask = np.isfinite(zbuf)
    if not mask.any():
        raise EmptyRender(f"object {model.name or '<unnamed>'} covers no pixel")
    depth = np.where(mask, zbuf, 0.0)
    return TemplateRender(mask=mask, depth=depth, intensity=np.clip(shade, 0.0, 1.0), pose_used=pose)


@dataclass
class SceneRender:
    """Multi-object composite: shared z-buffer with per-pixel owner ids."""

    depth: np.ndarray
    owner: np.ndarray  # object index, -1 where empty
    intensity: np.ndarray


def composite(renders: dict[int, TemplateRender], shape: tuple[int, int]) -> SceneRender:
    """Merge per-object renders into one occlusion-aware scene render."""
    depth = np.full(shape, np.inf)
    owner = np.full(shape, -1, dtype=np.int32)
    intensity = np.zeros(shape, dtype=np.float32)
    for j, render in renders.items():
        d = np.where(render.mask, render.depth, np.inf)
        closer = d < depth
        depth[closer] = d[closer]
        owner[closer] = j
        intensity[closer] = render.intensity[closer]
    depth[owner < 0] = 0.0
    return SceneRender(depth=depth, owner=owner, intensity=intensity)


def exterior_contour(render: TemplateRender) -> tuple[np.ndarray, np.ndarray]:
    """Mask-boundary pixels (mask on, some 4-neighbor off or image edge).

    Returns (points, depths): points are float (x, y) pixel coordinates in
    row-major scan order, each with the depth of its own pixel.
    """
    if not render.mask.any():
        raise EmptyRender("contour of an empty render")
    eroded = ndimage.binary_erosion(render.mask, structure=_PLUS, border_value=0)
    boundary = render.mask & ~eroded
    rows, cols = np.nonzero(boundary)
    points = np.stack([cols.astype(float), rows.astype(float)], axis=1)
    return points, render.depth[rows, cols]


def interior_edges(render: TemplateRender) -> tuple[np.ndarray, np.ndarray]:
    """Canny edges of the shaded channel inside the mask interior.

    A 2 px boundary band is excluded so the set stays disjoint from the
    exterior contour. Each point carries the depth of its own pixel.
    """
    if not render.mask.any():
        raise EmptyRender("interior edges of an empty render")
    u8 = np.round(np.clip(render.intensity, 0.0, 1.0) * 255.0).astype(np.uint8)
    edges = cv2.Canny(u8, CANNY_LOW * _CANNY_SCALE, CANNY_HIGH * _CANNY_SCALE, L2gradient=True)
    interior = ndimage.binary_erosion(render.mask, structure=_PLUS, border_value=0, iterations=2)
    keep = (edges > 0) & interior
    rows, cols = np.nonzero(keep)
    points = np.stack([cols.astype(float), rows.astype(float)], axis=1)
    return points, render.depth[rows, cols]


def save_pgm(image: np.ndarray, path: str | Path) -> None:
    """Write a [0,1] float or uint8 image as binary PGM (debug export)."""
    arr = image
    if arr.dtype != np.uint8:
        arr = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode())
        f.write(arr.tobytes())


def save_ppm(rgb: np.ndarray, path: str | Path) -> None:
    """Write an (H, W, 3) [0,1] float or uint8 image as binary PPM."""
    arr = rgb
    if arr.dtype != np.uint8:
        arr = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w, _ = arr.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(arr.tobytes())
