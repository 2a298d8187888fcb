"""Attribute-preserving face anonymization through text-guided inpainting.

Faces are detected, their age, gender, ethnicity and emotion are read and
rendered into a prompt, and each face region is regenerated by an
inpainting backend conditioned on that prompt.
"""

from .attributes import AttributeExtractor, StubExtractor, crop_face, normalize_attributes
from .config import PipelineConfig, RunConfig, SeedPolicy, derive_seed, load_config
from .detection import (
    BinaryMask,
    DegenerateBoxError,
    FaceDetector,
    StubDetector,
    clamp_box,
    mask_union,
    pad_box,
    rasterize_mask,
)
from .evaluation import EvalReport, StubEmbedder, evaluate_pairs, identity_distance
from .inpainting import (
    BlendMode,
    IdentityBackend,
    InpaintBackend,
    InpaintParams,
    SeededNoiseBackend,
    composite,
    resolution_gate,
)
from .pipeline import BatchReport, anonymize_batch, anonymize_image
from .prompting import DEFAULT_EMOTION_NOUNS, DEFAULT_TEMPLATE, PromptTemplate, build_prompt
from .types import (
    AnonymizationResult,
    BoundingBox,
    ContractError,
    FaceAttributes,
    FaceDetection,
    FaceRecord,
    FaceStatus,
    ImageRecord,
    RawAttributeScores,
)

__version__ = "0.1.0"
