"""Patch-embedding exporter: images + sampling plan -> ESF files.

Bridges real images to the selection toolchain: patches are extracted
per a sampling-plan JSON (by re-invoking the toolchain's own sampler),
embedded with a ResNet-50 backbone through global average pooling, and
written as f32 ESF files with patch-id tables.
"""

from .backbone import FEATURE_DIM, embed_patches, load_backbone
from .export import ExportError, ExportJob, ExportResult, export
from .formats import ExportFormatError, read_patch_archive, write_esf_f32

__version__ = "0.1.0"
