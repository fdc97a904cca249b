"""Portrait geometry, fusion, relighting, and stylization toolkit."""

from .blend import BlendRequest, blend, face_region
from .camera import CameraPose, relative_rotation
from .fileio import (
    read_image_png,
    read_mask_png,
    read_normal_png,
    read_pfm,
    write_image_png,
    write_mask_png,
    write_normal_png,
    write_pfm,
)
from .flow import MotionField, compose_flow, identity_flow, warp_image
from .integrate import (
    DepthPrior,
    IntegrationConfig,
    discontinuity_pixels,
    gradients_from_normals,
    integrate,
)
from .mesh import FaceMesh, build_mesh, export_obj
from .metrics import AngularErrorReport, ImageQualityReport, angular_error, image_quality
from .raster import (
    HeightField,
    Mask,
    NormalMap,
    RgbImage,
    linear_to_srgb,
    srgb_to_linear,
)
from .rasterize import RenderOutput, mesh_flow, render
from .relight import (
    EnvironmentLight,
    LightMaps,
    RelitComposition,
    compose_relit,
    diffuse_map,
    light_maps,
    relight_view,
    specular_maps,
)
from .stylize import (
    HatchParams,
    PrincipalField,
    ShadingMap,
    apply_shading,
    hatch,
    principal_directions,
    shading_map,
    trace_hatch_strokes,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
