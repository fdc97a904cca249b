"""Umbrella command line: one subcommand per pipeline stage plus `serve`."""

from __future__ import annotations

import json

import click
import numpy as np

from . import fileio
from .blend import BlendRequest, blend as blend_op
from .camera import CameraPose
from .integrate import DepthPrior, IntegrationConfig, discontinuity_pixels, integrate
from .mesh import build_mesh, export_obj
from .metrics import angular_error, image_quality
from .raster import HeightField, Mask, NormalMap, RgbImage, srgb_to_linear
from .rasterize import mesh_flow, render
from .relight import (
    DEFAULT_EXPONENTS,
    EnvironmentLight,
    RelitComposition,
    compose_relit,
    light_maps,
)
from .stylize import HatchParams, apply_shading, hatch as hatch_op, shading_map


@click.group()
def main():
    """Portrait geometry, fusion, relighting, and stylization toolkit."""


def _load_masked_normals(normal_path: str, mask_path: str | None) -> NormalMap:
    nm = fileio.read_normal_png(normal_path)
    if mask_path:
        mask = fileio.read_mask_png(mask_path).bits & nm.mask
        return NormalMap(np.where(mask[..., None], nm.normals, 0.0), mask)
    return nm


@main.command(name="integrate")
@click.option("--normal", "normal_path", required=True, type=click.Path(exists=True))
@click.option("--mask", "mask_path", type=click.Path(exists=True))
@click.option("--coarse-depth", "depth_path", type=click.Path(exists=True))
@click.option("--lambda", "lam", default=1.0, show_default=True)
@click.option("--tau", default=0.1, show_default=True)
@click.option("--solver", type=click.Choice(["cg", "direct"]), default="cg")
@click.option("-o", "--output", required=True, type=click.Path())
def integrate_cmd(normal_path, mask_path, depth_path, lam, tau, solver, output):
    """Reconstruct a height field from a normal map."""
    nm = _load_masked_normals(normal_path, mask_path)
    cfg = IntegrationConfig(prior_weight=lam, nz_threshold=tau, solver=solver)
    prior = DepthPrior.empty()
    if depth_path:
        coarse = fileio.read_pfm(depth_path)
        if isinstance(coarse, RgbImage):
            raise click.ClickException("coarse depth must be a 1-channel PFM")
        spots = discontinuity_pixels(nm, tau).bits
        ys, xs = np.nonzero(spots)
        prior = DepthPrior(xs, ys, coarse.z[ys, xs], np.ones(xs.size))
    height = integrate(nm, prior, cfg)
    fileio.write_pfm(height, output)
    fileio.write_mask_png(Mask(height.mask), output + ".mask.png")
    click.echo(f"wrote {output}")


@main.command(name="render")
@click.option("--height", "height_path", required=True, type=click.Path(exists=True))
@click.option("--normal", "normal_path", required=True, type=click.Path(exists=True))
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--ref-cam", "ref_cam_path", type=click.Path(exists=True))
@click.option("--new-cam", "new_cam_path", type=click.Path(exists=True))
@click.option("--sampling", type=click.Choice(["nearest", "bilinear"]),
              default="bilinear")
@click.option("--export-obj", "obj_path", type=click.Path())
@click.option("-o", "--outdir", required=True, type=click.Path())
def render_cmd(height_path, normal_path, image_path, ref_cam_path, new_cam_path,
               sampling, obj_path, outdir):
    """Build the textured mesh and rasterize it at a camera pose."""
    import os

    os.makedirs(outdir, exist_ok=True)
    hf = fileio.read_pfm(height_path)
    mask_file = height_path + ".mask.png"
    nm = fileio.read_normal_png(normal_path)
    if os.path.exists(mask_file):
        mask = fileio.read_mask_png(mask_file).bits
    else:
        mask = nm.mask
    hf = HeightField(np.asarray(hf.z), mask)
    nm = NormalMap(np.where(mask[..., None], nm.normals, 0.0), mask)
    image = fileio.read_image_png(image_path)
    ref_cam = (CameraPose.from_json(open(ref_cam_path).read()) if ref_cam_path
               else CameraPose(width=image.width, height=image.height))
    new_cam = (CameraPose.from_json(open(new_cam_path).read()) if new_cam_path
               else ref_cam)
    mesh = build_mesh(hf, nm, ref_cam)
    out = render(mesh, image, ref_cam, new_cam, sampling=sampling)
    fileio.write_image_png(out.color, os.path.join(outdir, "color.png"))
    fileio.write_normal_png(out.normal, os.path.join(outdir, "normal.png"))
    fileio.write_pfm(out.depth, os.path.join(outdir, "depth.pfm"))
    fileio.write_mask_png(out.coverage, os.path.join(outdir, "coverage.png"))
    flow = mesh_flow(mesh, ref_cam, new_cam)
    flow_img = RgbImage(
        np.concatenate([flow.map, flow.valid[..., None].astype(float)], axis=2),
        "linear")
    fileio.write_pfm(flow_img, os.path.join(outdir, "flow.pfm"))
    if obj_path:
        export_obj(mesh, obj_path)
    click.echo(f"wrote {outdir}/color.png,normal.png,depth.pfm,coverage.png,flow.pfm")


@main.command(name="blend")
@click.option("--dest", "dest_path", required=True, type=click.Path(exists=True))
@click.option("--src", "src_path", required=True, type=click.Path(exists=True))
@click.option("--region", "region_path", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["source", "mixed"]), default="source")
@click.option("--kind", type=click.Choice(["image", "normal"]), default="image")
@click.option("--tol", default=1e-8, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path())
def blend_cmd(dest_path, src_path, region_path, mode, kind, tol, output):
    """Poisson-blend a source region into a destination."""
    region = fileio.read_mask_png(region_path)
    if kind == "normal":
        dest = fileio.read_normal_png(dest_path)
        src = fileio.read_normal_png(src_path)
        out = blend_op(BlendRequest(dest, src, region, mode), tol)
        fileio.write_normal_png(out, output)
    else:
        dest = fileio.read_image_png(dest_path)
        src = fileio.read_image_png(src_path)
        out = blend_op(BlendRequest(dest, src, region, mode), tol)
        fileio.write_image_png(out, output)
    click.echo(f"wrote {output}")


@main.command(name="relight")
@click.option("--normal", "normal_path", required=True, type=click.Path(exists=True))
@click.option("--albedo", "albedo_path", required=True, type=click.Path(exists=True))
@click.option("--env", "env_path", type=click.Path(exists=True))
@click.option("--dir", "directions", multiple=True,
              help="x,y,z,r,g,b directional light (repeatable)")
@click.option("--kd", default=1.0, show_default=True)
@click.option("--ks", default="0.25,0.25,0.25,0.25", show_default=True)
@click.option("-o", "--output", required=True, type=click.Path())
def relight_cmd(normal_path, albedo_path, env_path, directions, kd, ks, output):
    """Compose a relit image from light maps over a shared normal map."""
    nm = fileio.read_normal_png(normal_path)
    albedo = srgb_to_linear(fileio.read_image_png(albedo_path))
    if env_path:
        env_img = fileio.read_pfm(env_path)
        if not isinstance(env_img, RgbImage):
            raise click.ClickException("environment must be a 3-channel PFM")
        light = EnvironmentLight(latlong=env_img)
    elif directions:
        entries = []
        for spec in directions:
            vals = [float(t) for t in spec.split(",")]
            if len(vals) != 6:
                raise click.ClickException("--dir needs x,y,z,r,g,b")
            entries.append(vals)
        light = EnvironmentLight.from_directional(entries)
    else:
        raise click.ClickException("provide --env or at least one --dir")
    gains = tuple(float(t) for t in ks.split(","))
    maps = light_maps(nm, light, DEFAULT_EXPONENTS[: len(gains)])
    relit = compose_relit(maps, albedo, RelitComposition(kd, gains))
    from .raster import linear_to_srgb

    fileio.write_image_png(linear_to_srgb(relit), output)
    click.echo(f"wrote {output}")


@main.command(name="shade")
@click.option("--orig", "orig_path", required=True, type=click.Path(exists=True))
@click.option("--relit", "relit_path", required=True, type=click.Path(exists=True))
@click.option("--eps", default=1e-3, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path())
def shade_cmd(orig_path, relit_path, eps, output):
    """Compute the relit/original shading-ratio map (3-channel PFM).

    Invalid (too-dark) pixels are stored as the neutral ratio 1.0.
    """
    orig = srgb_to_linear(fileio.read_image_png(orig_path))
    relit = srgb_to_linear(fileio.read_image_png(relit_path))
    s = shading_map(orig, relit, eps)
    values = np.where(s.valid[..., None], s.values, 1.0)
    fileio.write_pfm(RgbImage(values, "linear"), output)
    click.echo(f"wrote {output}")


@main.command(name="apply-shade")
@click.option("--shading", "shading_path", required=True, type=click.Path(exists=True))
@click.option("--styled", "styled_path", required=True, type=click.Path(exists=True))
@click.option("-o", "--output", required=True, type=click.Path())
def apply_shade_cmd(shading_path, styled_path, output):
    """Multiply a styled image by a shading map."""
    from .raster import linear_to_srgb
    from .stylize import ShadingMap

    ratios = fileio.read_pfm(shading_path)
    if not isinstance(ratios, RgbImage):
        raise click.ClickException("shading map must be a 3-channel PFM")
    styled = srgb_to_linear(fileio.read_image_png(styled_path))
    s = ShadingMap(ratios.pixels, np.ones(ratios.pixels.shape[:2], bool))
    out = apply_shading(s, styled)
    fileio.write_image_png(linear_to_srgb(out), output)
    click.echo(f"wrote {output}")


@main.command(name="hatch")
@click.option("--height", "height_path", required=True, type=click.Path(exists=True))
@click.option("--shading", "shading_path", required=True, type=click.Path(exists=True))
@click.option("--levels", default=6, show_default=True)
@click.option("--spacing", default=3.0, show_default=True)
@click.option("--length", default=12.0, show_default=True)
@click.option("-o", "--output", required=True, type=click.Path())
def hatch_cmd(height_path, shading_path, levels, spacing, length, output):
    """Principal-direction hatching shaded by a light map."""
    hf = fileio.read_pfm(height_path)
    if isinstance(hf, RgbImage):
        raise click.ClickException("height must be a 1-channel PFM")
    shading = fileio.read_pfm(shading_path)
    if isinstance(shading, HeightField):
        shading = RgbImage(np.repeat(shading.z[..., None], 3, axis=2), "linear")
    params = HatchParams(tone_levels=levels, stroke_spacing=spacing,
                         stroke_length=length)
    out = hatch_op(hf, shading, params)
    fileio.write_image_png(out, output)
    click.echo(f"wrote {output}")


@main.group(name="eval")
def eval_group():
    """Evaluation metrics."""


@eval_group.command(name="normals")
@click.option("--a", "a_path", required=True, type=click.Path(exists=True))
@click.option("--b", "b_path", required=True, type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path())
def eval_normals(a_path, b_path, output):
    report = angular_error(fileio.read_normal_png(a_path),
                           fileio.read_normal_png(b_path))
    text = report.to_json()
    if output:
        with open(output, "w") as f:
            f.write(text + "\n")
    click.echo(text)


@eval_group.command(name="images")
@click.option("--a", "a_path", required=True, type=click.Path(exists=True))
@click.option("--b", "b_path", required=True, type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path())
def eval_images(a_path, b_path, output):
    report = image_quality(fileio.read_image_png(a_path),
                           fileio.read_image_png(b_path))
    text = report.to_json()
    if output:
        with open(output, "w") as f:
            f.write(text + "\n")
    click.echo(text)


@main.command(name="demo-assets")
@click.option("--size", default=256, show_default=True)
@click.option("-o", "--outdir", required=True, type=click.Path())
def demo_assets_cmd(size, outdir):
    """Write a deterministic synthetic portrait session (PNG/PFM assets)."""
    import os

    from .fixtures import portrait_fixture

    os.makedirs(outdir, exist_ok=True)
    image, normals, height, mask = portrait_fixture(size)
    fileio.write_image_png(image, os.path.join(outdir, "portrait.png"))
    fileio.write_normal_png(normals, os.path.join(outdir, "normal.png"))
    fileio.write_mask_png(Mask(mask), os.path.join(outdir, "mask.png"))
    fileio.write_pfm(height, os.path.join(outdir, "coarse_depth.pfm"))
    click.echo(f"wrote portrait.png normal.png mask.png coarse_depth.pfm to {outdir}")


@main.command(name="serve")
@click.option("--port", default=8008, show_default=True, envvar="NARRATE_PORT")
@click.option("--root", default="./sessions", show_default=True,
              envvar="NARRATE_ROOT")
@click.option("--max-dim", default=4096, show_default=True,
              envvar="NARRATE_MAX_DIM")
@click.option("--cache-size", default=512, show_default=True,
              envvar="NARRATE_CACHE_SIZE")
@click.option("--host", default="127.0.0.1", show_default=True,
              envvar="NARRATE_HOST")
def serve_cmd(port, root, max_dim, cache_size, host):
    """Run the HTTP pipeline service."""
    import uvicorn

    from .service import create_app
    from .session import SessionStore

    store = SessionStore(root, max_dim=max_dim, cache_limit=cache_size)
    uvicorn.run(create_app(store), host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
