"""On-disk session store orchestrating the pipeline stages.

Layout: ``<root>/<id>/{manifest.json, assets/, derived/, cache/}``. The
manifest is written atomically (temp + rename); cache keys are content
hashes of the canonicalized render parameters plus every input hash, so
responses are byte-stable across restarts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import threading
import time
from pathlib import Path

import numpy as np
import scipy.ndimage as ndi

from . import fileio
from .blend import BlendRequest, blend, face_region
from .camera import CameraPose, relative_rotation
from .flow import warp_image
from .integrate import DepthPrior, IntegrationConfig, discontinuity_pixels, integrate
from .mesh import FaceMesh, build_mesh, export_obj
from .raster import Mask, NormalMap, RgbImage, linear_to_srgb, srgb_to_linear
from .rasterize import RenderOutput, render, render_with_flow
from .relight import (
    EnvironmentLight,
    RelitComposition,
    diffuse_map,
    relight_view,
)
from .stylize import hatch

MANIFEST_VERSION = 1
OUTPUT_KINDS = ("fused", "relit", "hatch", "normal", "mesh-only", "neural-only")

YAW_LIMIT_DEG = 90.0
PITCH_LIMIT_DEG = 45.0

# directional presets in the reference camera frame: (dx, dy, dz, r, g, b)
LIGHT_PRESETS = {
    "loop": ((0.45, 0.35, 0.82, 1.0, 0.98, 0.92),
             (-0.6, 0.05, 0.8, 0.18, 0.19, 0.22)),
    "split": ((0.95, 0.05, 0.31, 1.0, 0.97, 0.9),
              (-0.9, 0.0, 0.44, 0.06, 0.06, 0.08)),
    "rembrandt": ((0.55, 0.62, 0.56, 1.05, 0.98, 0.88),
                  (-0.5, -0.05, 0.87, 0.15, 0.16, 0.2)),
}


class ServiceError(Exception):
    def __init__(self, code: str, message: str, detail=None, status: int = 400):
        super().__init__(message)
        self.code = code
        self.message = message
        self.detail = detail
        self.status = status

    def payload(self) -> dict:
        return {"code": self.code, "message": self.message,
                "detail": self.detail}


@dataclasses.dataclass(frozen=True)
class RenderParams:
    yaw_deg: float = 0.0
    pitch_deg: float = 0.0
    light: str = "loop"  # preset name, uploaded light id, or "dir:..." spec
    kd: float = 1.0
    ks: tuple = (0.25, 0.25, 0.25, 0.25)
    output: str = "fused"

    def __post_init__(self):
        if abs(self.yaw_deg) > YAW_LIMIT_DEG:
            raise ServiceError("pose_out_of_range",
                               f"yaw must lie in [-{YAW_LIMIT_DEG}, {YAW_LIMIT_DEG}] deg",
                               {"yaw": self.yaw_deg}, status=422)
        if abs(self.pitch_deg) > PITCH_LIMIT_DEG:
            raise ServiceError("pose_out_of_range",
                               f"pitch must lie in [-{PITCH_LIMIT_DEG}, {PITCH_LIMIT_DEG}] deg",
                               {"pitch": self.pitch_deg}, status=422)
        if self.kd < 0 or any(k < 0 for k in self.ks):
            raise ServiceError("bad_gains", "gains must be nonnegative",
                               status=422)
        if self.output not in OUTPUT_KINDS:
            raise ServiceError("bad_output",
                               f"output must be one of {OUTPUT_KINDS}",
                               {"output": self.output}, status=422)

    def canonical(self) -> dict:
        """Cache-key form; parameters an output ignores are dropped."""
        out = {
            "yaw_deg": round(float(self.yaw_deg), 6),
            "pitch_deg": round(float(self.pitch_deg), 6),
            "output": self.output,
        }
        if self.output in ("relit", "hatch"):
            out["light"] = self.light
        if self.output == "relit":
            out["kd"] = round(float(self.kd), 6)
            out["ks"] = [round(float(k), 6) for k in self.ks]
        return out


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def pull_push_fill(pixels: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """Fill invalid pixels by pull-push: average down to a coarse level,
    then push coarse values back into the holes."""
    if valid.all():
        return pixels.copy()
    p = np.where(valid[..., None], pixels, 0.0)
    w = valid.astype(np.float64)
    stack = []
    while p.shape[0] > 2 and p.shape[1] > 2 and not (w > 0).all():
        stack.append((p, w))
        h2 = (p.shape[0] + 1) // 2
        w2 = (p.shape[1] + 1) // 2
        pp = np.zeros((h2, w2, 3))
        ww = np.zeros((h2, w2))
        for dy in (0, 1):
            for dx in (0, 1):
                sub_p = p[dy::2, dx::2]
                sub_w = w[dy::2, dx::2]
                pp[: sub_p.shape[0], : sub_p.shape[1]] += sub_p * sub_w[..., None]
                ww[: sub_w.shape[0], : sub_w.shape[1]] += sub_w
        p = np.where(ww[..., None] > 0, pp / np.maximum(ww[..., None], 1e-12), 0.0)
        w = np.minimum(ww / 4.0, 1.0)
        w = np.where(ww > 0, np.maximum(w, 1e-3), 0.0)
    if not (w > 0).all():
        total = w.sum()
        mean = (p * w[..., None]).reshape(-1, 3).sum(axis=0) / max(total, 1e-12)
        p = np.where(w[..., None] > 0, p, mean)
        w = np.ones_like(w)
    while stack:
        fine_p, fine_w = stack.pop()
        zoom = (fine_p.shape[0] / p.shape[0], fine_p.shape[1] / p.shape[1], 1.0)
        up = ndi.zoom(p, zoom, order=1, mode="nearest", grid_mode=True)
        hole = fine_w <= 0
        fine = np.where(fine_w[..., None] > 0, fine_p, up)
        p = fine
        w = np.where(hole, 1.0, fine_w)
    return p


def parse_directional_spec(spec: str) -> EnvironmentLight:
    """Parse "dir:x,y,z,r,g,b[;x,y,z,r,g,b...]" into a directional light."""
    body = spec[len("dir:"):]
    entries = []
    for chunk in body.split(";"):
        vals = [float(t) for t in chunk.split(",")]
        if len(vals) != 6:
            raise ServiceError("bad_light",
                               "directional spec needs x,y,z,r,g,b per light",
                               {"chunk": chunk}, status=422)
        entries.append(vals)
    return EnvironmentLight.from_directional(entries)


class SessionStore:
    """Thread-safe session manager; stage runs hold a per-session lock."""

    def __init__(self, root: str | os.PathLike, max_dim: int = 4096,
                 cache_limit: int = 512):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.max_dim = max_dim
        self.cache_limit = cache_limit
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        # in-memory caches keyed by content hashes; values are immutable
        self._mem_guard = threading.Lock()
        self._asset_mem: dict[str, tuple[str, dict]] = {}
        self._mesh_mem: dict[str, tuple[str, FaceMesh]] = {}

    # ------------------------------------------------------------------
    # manifest plumbing

    def _lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def _dir(self, session_id: str) -> Path:
        return self.root / session_id

    def _manifest_path(self, session_id: str) -> Path:
        return self._dir(session_id) / "manifest.json"

    def manifest(self, session_id: str) -> dict:
        path = self._manifest_path(session_id)
        if not path.exists():
            raise ServiceError("not_found", f"unknown session {session_id}",
                               status=404)
        return json.loads(path.read_text())

    def _write_manifest(self, session_id: str, manifest: dict) -> None:
        data = json.dumps(manifest, indent=1, sort_keys=True).encode()
        _atomic_write(self._manifest_path(session_id), data)

    # ------------------------------------------------------------------
    # session creation

    def create_session(self, files: dict[str, bytes]) -> dict:
        required = ("portrait", "normal", "mask")
        for name in required:
            if name not in files:
                raise ServiceError("missing_asset",
                                   f"required asset {name!r} missing",
                                   {"required": list(required)}, status=422)
        allowed = {"portrait", "normal", "mask", "albedo", "coarse_depth",
                   "ref_cam"}
        unknown = set(files) - allowed
        if unknown:
            raise ServiceError("unknown_asset",
                               f"unknown asset names {sorted(unknown)}",
                               status=422)

        session_id = _sha(b"".join(
            name.encode() + b"\0" + files[name] + b"\0"
            for name in sorted(files)))[:16]
        sdir = self._dir(session_id)
        assets_dir = sdir / "assets"
        with self._lock(session_id):
            assets_dir.mkdir(parents=True, exist_ok=True)
            (sdir / "derived").mkdir(exist_ok=True)
            (sdir / "cache").mkdir(exist_ok=True)
            names = {
                "portrait": "portrait.png",
                "normal": "normal.png",
                "mask": "mask.png",
                "albedo": "albedo.png",
                "coarse_depth": "coarse_depth.pfm",
                "ref_cam": "ref_cam.json",
            }
            for name, blob in files.items():
                _atomic_write(assets_dir / names[name], blob)
            try:
                assets = self._load_assets(session_id)
            except ServiceError:
                raise
            self._validate_assets(assets)

            now = time.time()
            old = None
            if self._manifest_path(session_id).exists():
                old = self.manifest(session_id)
            manifest = {
                "version": MANIFEST_VERSION,
                "id": session_id,
                "created": old["created"] if old else now,
                "updated": now,
                "assets": {
                    name: {"file": f"assets/{names[name]}",
                           "sha256": _sha(files[name])}
                    for name in files
                },
                "stages": old["stages"] if old else {},
                "lights": old.get("lights", {}) if old else {},
                "neural": old.get("neural", {}) if old else {},
            }
            self._write_manifest(session_id, manifest)
        return manifest

    def _load_assets_cached(self, session_id: str, manifest: dict) -> dict:
        key = json.dumps({n: manifest["assets"][n]["sha256"]
                          for n in manifest["assets"]}, sort_keys=True)
        with self._mem_guard:
            hit = self._asset_mem.get(session_id)
            if hit and hit[0] == key:
                return hit[1]
        assets = self._load_assets(session_id)
        with self._mem_guard:
            self._asset_mem[session_id] = (key, assets)
        return assets

    def _load_assets(self, session_id: str) -> dict:
        sdir = self._dir(session_id) / "assets"
        out: dict = {}
        try:
            out["portrait"] = fileio.read_image_png(str(sdir / "portrait.png"))
            out["normal"] = fileio.read_normal_png(str(sdir / "normal.png"))
            out["mask"] = fileio.read_mask_png(str(sdir / "mask.png"))
        except (fileio.FormatError, FileNotFoundError) as e:
            raise ServiceError("bad_asset", "could not decode required asset",
                               {"error": str(e)}, status=422) from e
        albedo = sdir / "albedo.png"
        if albedo.exists():
            out["albedo"] = fileio.read_image_png(str(albedo))
        depth = sdir / "coarse_depth.pfm"
        if depth.exists():
            hf = fileio.read_pfm(str(depth))
            if isinstance(hf, RgbImage):
                raise ServiceError("bad_asset",
                                   "coarse_depth must be a 1-channel PFM",
                                   status=422)
            out["coarse_depth"] = hf
        cam = sdir / "ref_cam.json"
        if cam.exists():
            out["ref_cam"] = CameraPose.from_json(cam.read_text())
        return out

    def _validate_assets(self, assets: dict) -> None:
        portrait = assets["portrait"]
        if max(portrait.width, portrait.height) > self.max_dim:
            raise ServiceError("oversize",
                               f"assets exceed the {self.max_dim} px limit",
                               status=413)
        dims = {"portrait": (portrait.width, portrait.height)}
        for name in ("normal", "mask", "albedo", "coarse_depth"):
            if name in assets:
                a = assets[name]
                dims[name] = (a.width, a.height)
        mismatched = {n: d for n, d in dims.items() if d != dims["portrait"]}
        if mismatched:
            pair = next(iter(mismatched))
            raise ServiceError(
                "dimension_mismatch",
                f"asset {pair!r} is {mismatched[pair][0]}x{mismatched[pair][1]} "
                f"but 'portrait' is {dims['portrait'][0]}x{dims['portrait'][1]}",
                {"dimensions": {k: list(v) for k, v in dims.items()}},
                status=422,
            )
        if "ref_cam" in assets:
            cam = assets["ref_cam"]
            if (cam.width, cam.height) != dims["portrait"]:
                raise ServiceError(
                    "dimension_mismatch",
                    "asset 'ref_cam' image size does not match 'portrait'",
                    status=422,
                )

    # ------------------------------------------------------------------
    # stages

    def _ref_cam(self, assets: dict) -> CameraPose:
        if "ref_cam" in assets:
            return assets["ref_cam"]
        portrait = assets["portrait"]
        return CameraPose(width=portrait.width, height=portrait.height)

    def _integration_mask(self, assets: dict) -> NormalMap:
        normal = assets["normal"]
        mask = assets["mask"].bits & normal.mask
        if not mask.any():
            raise ServiceError("empty_mask",
                               "mask/normal intersection is empty", status=422)
        vec = np.where(mask[..., None], normal.normals, 0.0)
        return NormalMap(vec, mask)

    def run_stage(self, session_id: str, stage: str) -> dict:
        if stage not in ("integrate", "mesh"):
            raise ServiceError("bad_stage",
                               "stage must be 'integrate' or 'mesh'",
                               {"stage": stage}, status=422)
        with self._lock(session_id):
            manifest = self.manifest(session_id)
            assets = self._load_assets(session_id)
            inputs_hash = _sha(json.dumps(
                {n: manifest["assets"][n]["sha256"] for n in manifest["assets"]},
                sort_keys=True).encode())

            if stage == "integrate":
                cfg = IntegrationConfig()
                config = {"prior_weight": cfg.prior_weight,
                          "nz_threshold": cfg.nz_threshold,
                          "solver": cfg.solver, "cg_tol": cfg.cg_tol}
            else:
                if "integrate" not in manifest["stages"]:
                    raise ServiceError(
                        "missing_prerequisite",
                        "stage 'mesh' requires stage 'integrate' first",
                        status=409)
                config = {"edge_jump": 3.0}
                inputs_hash = _sha(
                    (inputs_hash
                     + manifest["stages"]["integrate"]["config_hash"]).encode())

            config_hash = _sha(json.dumps(config, sort_keys=True).encode())
            record = manifest["stages"].get(stage)
            if record and record["config_hash"] == config_hash \
                    and record["inputs_hash"] == inputs_hash:
                return manifest  # cache hit: nothing recomputed

            derived = self._dir(session_id) / "derived"
            if stage == "integrate":
                nm = self._integration_mask(assets)
                cfg = IntegrationConfig()
                prior = DepthPrior.empty()
                if "coarse_depth" in assets:
                    spots = discontinuity_pixels(nm, cfg.nz_threshold).bits
                    ys, xs = np.nonzero(spots)
                    prior = DepthPrior(xs, ys,
                                       assets["coarse_depth"].z[ys, xs],
                                       np.ones(xs.size))
                try:
                    height = integrate(nm, prior, cfg)
                except ValueError as e:
                    raise ServiceError("stage_failed",
                                       f"integrate stage failed: {e}",
                                       status=500) from e
                fileio.write_pfm(height, str(derived / "height.pfm"))
                fileio.write_mask_png(Mask(height.mask),
                                      str(derived / "height_mask.png"))
                outputs = {"height": "derived/height.pfm",
                           "height_mask": "derived/height_mask.png"}
            else:
                height, nm = self._load_height(session_id)
                ref_cam = self._ref_cam(assets)
                try:
                    mesh = build_mesh(height, nm, ref_cam,
                                      edge_jump=config["edge_jump"])
                except ValueError as e:
                    raise ServiceError("stage_failed",
                                       f"mesh stage failed: {e}",
                                       status=500) from e
                np.savez_compressed(
                    derived / "mesh.npz",
                    vertices=mesh.vertices, triangles=mesh.triangles,
                    texcoords=mesh.texcoords,
                    vertex_normals=mesh.vertex_normals,
                    ref_size=np.array([mesh.ref_width, mesh.ref_height]),
                )
                export_obj(mesh, str(derived / "mesh.obj"))
                self._build_plate(session_id, assets, mesh, ref_cam)
                outputs = {"mesh": "derived/mesh.npz",
                           "mesh_obj": "derived/mesh.obj",
                           "plate": "derived/plate.png"}

            manifest["stages"][stage] = {
                "config": config,
                "config_hash": config_hash,
                "inputs_hash": inputs_hash,
                "outputs": outputs,
                "completed_at": time.time(),
            }
            manifest["updated"] = time.time()
            self._write_manifest(session_id, manifest)
            return manifest

    def _load_height(self, session_id: str):
        derived = self._dir(session_id) / "derived"
        if not (derived / "height.pfm").exists():
            raise ServiceError("missing_prerequisite",
                               "stage 'integrate' has not produced a height field",
                               status=409)
        hf = fileio.read_pfm(str(derived / "height.pfm"))
        mask = fileio.read_mask_png(str(derived / "height_mask.png")).bits
        nm = self._integration_mask(self._load_assets(session_id))
        vec = np.where(mask[..., None], nm.normals, 0.0)
        from .raster import HeightField

        return HeightField(np.asarray(hf.z), mask), NormalMap(vec, mask)

    def _load_mesh(self, session_id: str, manifest: dict | None = None) -> FaceMesh:
        path = self._dir(session_id) / "derived" / "mesh.npz"
        if not path.exists():
            raise ServiceError("missing_prerequisite",
                               "stage 'mesh' has not been run", status=409)
        key = ""
        if manifest is not None and "mesh" in manifest.get("stages", {}):
            rec = manifest["stages"]["mesh"]
            key = rec["inputs_hash"] + rec["config_hash"]
            with self._mem_guard:
                hit = self._mesh_mem.get(session_id)
                if hit and hit[0] == key:
                    return hit[1]
        data = np.load(path)
        mesh = FaceMesh(data["vertices"], data["triangles"], data["texcoords"],
                        data["vertex_normals"], int(data["ref_size"][0]),
                        int(data["ref_size"][1]))
        if key:
            with self._mem_guard:
                self._mesh_mem[session_id] = (key, mesh)
        return mesh

    def _build_plate(self, session_id: str, assets: dict, mesh: FaceMesh,
                     ref_cam: CameraPose) -> None:
        """Faceless background plate: the portrait with the reference-pose
        face coverage removed and pull-push inpainted."""
        portrait = assets["portrait"]
        ref_view = render(mesh, portrait, ref_cam, ref_cam)
        face = ndi.binary_dilation(ref_view.coverage.bits,
                                   np.ones((5, 5), bool))
        filled = pull_push_fill(portrait.pixels, ~face)
        plate = RgbImage(np.clip(filled, 0.0, 1.0), portrait.color_space)
        fileio.write_image_png(plate,
                               str(self._dir(session_id) / "derived" / "plate.png"))

    # ------------------------------------------------------------------
    # lights

    def add_light(self, session_id: str, pfm_bytes: bytes) -> str:
        with self._lock(session_id):
            manifest = self.manifest(session_id)
            light_id = "env-" + _sha(pfm_bytes)[:12]
            path = self._dir(session_id) / "derived" / f"{light_id}.pfm"
            _atomic_write(path, pfm_bytes)
            try:
                env = fileio.read_pfm(str(path))
                if not isinstance(env, RgbImage):
                    raise ServiceError("bad_light",
                                       "environment must be a 3-channel PFM",
                                       status=422)
                EnvironmentLight(latlong=env)
            except (fileio.FormatError, ValueError) as e:
                path.unlink(missing_ok=True)
                if isinstance(e, ServiceError):
                    raise
                raise ServiceError("bad_light", f"bad environment map: {e}",
                                   status=422) from e
            manifest["lights"][light_id] = f"derived/{light_id}.pfm"
            manifest["updated"] = time.time()
            self._write_manifest(session_id, manifest)
            return light_id

    def add_neural_render(self, session_id: str, yaw_deg: float,
                          pitch_deg: float, png_bytes: bytes) -> str:
        """Optional per-pose neural render; used as the fusion destination
        when the requested pose matches."""
        with self._lock(session_id):
            manifest = self.manifest(session_id)
            key = f"{round(yaw_deg, 6):g},{round(pitch_deg, 6):g}"
            name = "neural-" + _sha(png_bytes)[:12] + ".png"
            path = self._dir(session_id) / "derived" / name
            _atomic_write(path, png_bytes)
            try:
                img = fileio.read_image_png(str(path))
                assets = self._load_assets(session_id)
                if (img.width, img.height) != (assets["portrait"].width,
                                               assets["portrait"].height):
                    raise ServiceError("dimension_mismatch",
                                       "neural render size differs from portrait",
                                       status=422)
            except fileio.FormatError as e:
                path.unlink(missing_ok=True)
                raise ServiceError("bad_asset", f"bad neural render: {e}",
                                   status=422) from e
            manifest["neural"][key] = f"derived/{name}"
            manifest["updated"] = time.time()
            self._write_manifest(session_id, manifest)
            return key

    def _resolve_light(self, session_id: str, manifest: dict,
                       spec: str) -> EnvironmentLight:
        if spec.startswith("dir:"):
            return parse_directional_spec(spec)
        if spec in LIGHT_PRESETS:
            return EnvironmentLight.from_directional(LIGHT_PRESETS[spec])
        if spec in manifest.get("lights", {}):
            env = fileio.read_pfm(
                str(self._dir(session_id) / manifest["lights"][spec]))
            return EnvironmentLight(latlong=env)
        raise ServiceError(
            "unknown_light",
            f"light {spec!r} is neither a preset, an uploaded id, nor a dir: spec",
            {"presets": sorted(LIGHT_PRESETS)}, status=422)

    # ------------------------------------------------------------------
    # rendering

    def render_view(self, session_id: str, params: RenderParams) -> bytes:
        manifest = self.manifest(session_id)
        for needed in ("integrate", "mesh"):
            if needed not in manifest["stages"]:
                raise ServiceError("missing_prerequisite",
                                   f"stage {needed!r} must run before rendering",
                                   status=409)
        stage_hashes = {s: manifest["stages"][s]["config_hash"]
                        for s in manifest["stages"]}
        asset_hashes = {n: manifest["assets"][n]["sha256"]
                        for n in manifest["assets"]}
        light_blob = None
        if params.light in manifest.get("lights", {}):
            light_blob = _sha((self._dir(session_id)
                               / manifest["lights"][params.light]).read_bytes())
        key_payload = json.dumps(
            {"params": params.canonical(), "assets": asset_hashes,
             "stages": stage_hashes, "light_blob": light_blob,
             "neural": manifest.get("neural", {})},
            sort_keys=True).encode()
        cache_key = _sha(key_payload)
        cache_path = self._dir(session_id) / "cache" / f"{cache_key}.png"
        if cache_path.exists():
            return cache_path.read_bytes()

        png = self._render_uncached(session_id, manifest, params)
        _atomic_write(cache_path, png)
        self._prune_cache(session_id)
        return png

    def _prune_cache(self, session_id: str) -> None:
        cache_dir = self._dir(session_id) / "cache"
        entries = sorted(cache_dir.glob("*.png"),
                         key=lambda p: p.stat().st_mtime)
        while len(entries) > self.cache_limit:
            entries.pop(0).unlink(missing_ok=True)

    def _render_uncached(self, session_id: str, manifest: dict,
                         params: RenderParams) -> bytes:
        assets = self._load_assets_cached(session_id, manifest)
        portrait = assets["portrait"]
        ref_cam = self._ref_cam(assets)
        at_reference = params.yaw_deg == 0.0 and params.pitch_deg == 0.0
        pose_key = f"{round(params.yaw_deg, 6):g},{round(params.pitch_deg, 6):g}"

        if params.output == "neural-only" and at_reference \
                and pose_key not in manifest.get("neural", {}):
            # byte-identical to the uploaded portrait
            return (self._dir(session_id) / "assets" / "portrait.png").read_bytes()

        mesh = self._load_mesh(session_id, manifest)
        new_cam = dataclasses.replace(
            ref_cam,
            yaw=ref_cam.yaw + math.radians(params.yaw_deg),
            pitch=ref_cam.pitch + math.radians(params.pitch_deg),
        )
        view, flow = render_with_flow(mesh, portrait, ref_cam, new_cam)

        if params.output == "mesh-only":
            return _png_bytes(view.color)
        if params.output == "normal":
            return fileio.encode_png_bytes(fileio.encode_normals(view.normal))

        destination = self._destination(session_id, manifest, assets, params,
                                        at_reference, pose_key)
        if params.output == "neural-only":
            return _png_bytes(destination)

        fused = self._fuse(destination, view)
        if params.output == "fused":
            return _png_bytes(fused)

        rot = relative_rotation(ref_cam, new_cam)
        light = self._resolve_light(session_id, manifest, params.light).rotated(rot)

        if params.output == "hatch":
            return self._hatch_view(view, light)

        # relit: light maps from the warped (fused) normal, never re-estimated
        albedo_src = assets.get("albedo", portrait)
        albedo_lin = srgb_to_linear(albedo_src)
        albedo_view, _ = warp_image(albedo_lin, flow)
        fused_lin = RenderOutput(srgb_to_linear(fused), view.normal,
                                 view.depth, view.coverage)
        comp = RelitComposition(params.kd, tuple(params.ks))
        relit = relight_view(fused_lin, albedo_view, light, comp)
        return _png_bytes(relit)

    def _destination(self, session_id: str, manifest: dict, assets: dict,
                     params: RenderParams, at_reference: bool,
                     pose_key: str) -> RgbImage:
        neural = manifest.get("neural", {})
        if pose_key in neural:
            return fileio.read_image_png(
                str(self._dir(session_id) / neural[pose_key]))
        if at_reference:
            return assets["portrait"]
        plate = self._dir(session_id) / "derived" / "plate.png"
        return fileio.read_image_png(str(plate))

    def _fuse(self, destination: RgbImage, view: RenderOutput) -> RgbImage:
        try:
            region = face_region(view.coverage, erode_r=2)
        except ValueError:
            return destination
        out = blend(BlendRequest(destination, view.color, region))
        return out

    def _hatch_view(self, view: RenderOutput, light: EnvironmentLight) -> bytes:
        from .raster import HeightField

        cov = view.coverage.bits
        height = HeightField(np.where(cov, -view.depth.z, 0.0), cov)
        shading = diffuse_map(view.normal, light)
        img = hatch(height, shading)
        return _png_bytes(img)

    def mesh_obj(self, session_id: str) -> bytes:
        path = self._dir(session_id) / "derived" / "mesh.obj"
        if not path.exists():
            raise ServiceError("missing_prerequisite",
                               "stage 'mesh' has not been run", status=409)
        return path.read_bytes()


def _png_bytes(img: RgbImage) -> bytes:
    if img.color_space != "srgb8":
        img = linear_to_srgb(img)
    arr = np.round(np.clip(img.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)
    return fileio.encode_png_bytes(arr)
