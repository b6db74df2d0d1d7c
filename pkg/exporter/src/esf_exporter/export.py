"""Export jobs: manifest + plan JSON -> one ESF embedding file per image.

Patch pixels are obtained by re-invoking the selection toolchain's
``sample`` command with the plan's own parameters and the target image,
then reading back the patch archive it writes. That keeps the geometry
authoritative on one side only.
"""

import json
import os
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field

from . import formats
from .backbone import FEATURE_DIM, embed_patches, load_backbone

PRIMARY_CLI = [sys.executable, "-m", "patchsel360.cli"]


class ExportError(Exception):
    """Hard export failure (plan mismatch, unsupported method)."""


@dataclass
class ExportJob:
    manifest_path: str
    plan_path: str
    out_dir: str
    backbone: str = "resnet50"
    device: str = "cpu"
    seed: int = 0
    batch_size: int = 16


@dataclass
class ExportResult:
    written: list = field(default_factory=list)  # (image_id, esf_path, n)
    errors: list = field(default_factory=list)  # (image_id, message)


def _sample_args(plan, image_path, out_plan, out_patches):
    """CLI arguments reproducing ``plan`` for one image."""
    method = plan["method"]
    params = plan.get("params", {})
    args = PRIMARY_CLI + ["sample"]
    if method == "ERP":
        args += ["--erp", "--patch-size", str(params["patch_size"])]
    elif method == "LAT":
        args += ["--lat", "--alpha0", str(params["alpha0"])]
        if not params.get("include_polar_caps", True):
            args += ["--no-polar-caps"]
        args += ["--patch-size", "128"]
    else:
        raise ExportError(
            f"plan method {method!r} is not exportable (scanpath plans need "
            "the original fixation CSV)"
        )
    args += ["--image", image_path, "--out-plan", out_plan,
             "--out-patches", out_patches]
    return args


def export(job):
    """Run the export job; per-image failures are recorded, the job continues."""
    with open(job.plan_path) as fh:
        plan = json.load(fh)
    expected = len(plan.get("locations", []))
    entries = formats.read_manifest(job.manifest_path)
    os.makedirs(job.out_dir, exist_ok=True)

    trunk = load_backbone(job.backbone, seed=job.seed, device=job.device)
    result = ExportResult()
    for image_id, image_path in entries:
        try:
            patches = _extract(plan, image_path)
            if patches.shape[0] != expected:
                raise ExportError(
                    f"patch count {patches.shape[0]} does not match plan "
                    f"location count {expected}"
                )
            embeddings = embed_patches(trunk, patches, job.batch_size,
                                       job.device)
            if embeddings.shape[1] != FEATURE_DIM:
                raise ExportError(
                    f"backbone produced {embeddings.shape[1]} channels, "
                    f"expected {FEATURE_DIM}"
                )
            out_path = os.path.join(job.out_dir, f"{image_id}.esf")
            formats.write_esf_f32(out_path, embeddings,
                                  patch_ids=range(embeddings.shape[0]))
            result.written.append((image_id, out_path, embeddings.shape[0]))
        except (ExportError, formats.ExportFormatError, OSError,
                subprocess.CalledProcessError) as exc:
            print(f"error: image {image_id}: {exc}", file=sys.stderr)
            result.errors.append((image_id, str(exc)))
    return result


def _extract(plan, image_path):
    """Patch pixels for one image, via the sampling CLI's patch archive."""
    with tempfile.TemporaryDirectory() as tmp:
        out_plan = os.path.join(tmp, "plan.json")
        out_patches = os.path.join(tmp, "patches.par")
        args = _sample_args(plan, image_path, out_plan, out_patches)
        proc = subprocess.run(args, capture_output=True, text=True)
        if proc.returncode != 0:
            raise ExportError(f"sampling failed: {proc.stderr.strip()}")
        with open(out_plan) as fh:
            regenerated = json.load(fh)
        if regenerated["locations"] != plan["locations"]:
            raise ExportError(
                "regenerated plan locations differ from the input plan; "
                "plan params do not match the image"
            )
        return formats.read_patch_archive(out_patches)
