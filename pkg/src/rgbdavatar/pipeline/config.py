"""Pipeline configuration: every tunable constant lives here, nowhere else.

A run is fully described by a :class:`PipelineConfig`; the stage functions in
:mod:`rgbdavatar.pipeline.run` take their knobs from it rather than from
hard-coded call sites, so a saved config file reproduces a run exactly.
"""

import dataclasses
import json
from dataclasses import dataclass, field

from ..errors import InvalidSpec

#: Stages in the order they run; each consumes artifacts of earlier ones.
STAGES = ("fit", "pairwise", "global", "fuse", "texture", "avatar")


@dataclass
class PipelineConfig:
    """All knobs for one reconstruction run.

    ``dataset`` points at a directory containing ``manifest.json`` (see
    :mod:`rgbdavatar.pipeline.synthetic`); ``output`` is where stage artifacts
    and the final report are written.  ``frames`` optionally restricts the run
    to a subset of the dataset's frames (indices into the manifest order).
    """

    dataset: str = "dataset"
    output: str = "output"
    frames: list = None
    reference: int = 0
    seed: int = 0
    stages: list = field(default_factory=lambda: list(STAGES))

    # Template fitting.
    alpha_r: float = 7.5
    alpha_j: float = 2.0
    sigma: float = 0.2
    fit_max_outer: int = 50
    fit_tol: float = 1e-5
    lockin_iters: int = 5
    surface_samples: int = 4000
    bundle_max_outer: int = 50
    bundle_surface_samples: int = 3000

    # Deformation graphs (pairwise and global alignment).
    node_count: int = 500
    bind_k: int = 4
    edge_k: int = 6
    alpha_reg: float = 0.2
    alpha_smooth: float = 0.5
    alpha_corr: float = 1.0
    align_max_iter: int = 100
    align_tol: float = 1e-6
    anchor_weight: float = 1e3

    # Correspondence selection.
    tau_corr: float = 0.03
    s_min: float = 0.3
    use_flow: bool = True

    # Fusion.
    voxel_size: float = 0.005
    trunc_factor: float = 3.0

    # Texturing.
    lambda_s: float = 0.8
    lambda_b: float = 1.0
    atlas_resolution: int = 1024

    # Avatar personalisation.
    displacement_mode: str = "local"

    def __post_init__(self):
        self.validate()

    def validate(self):
        """Raise :class:`InvalidSpec` on out-of-range or inconsistent fields."""
        for name in ("alpha_r", "alpha_j", "alpha_reg", "alpha_smooth",
                     "alpha_corr", "lambda_s", "lambda_b", "anchor_weight"):
            if getattr(self, name) < 0:
                raise InvalidSpec(f"{name} must be non-negative")
        for name in ("sigma", "tau_corr", "voxel_size", "trunc_factor"):
            if getattr(self, name) <= 0:
                raise InvalidSpec(f"{name} must be positive")
        if not 0 <= self.s_min <= 1:
            raise InvalidSpec("s_min must lie in [0, 1]")
        if self.node_count < self.bind_k:
            raise InvalidSpec("node_count must be at least bind_k")
        if self.bind_k < 1 or self.edge_k < 1:
            raise InvalidSpec("bind_k and edge_k must be at least 1")
        if self.atlas_resolution < 16:
            raise InvalidSpec("atlas_resolution must be at least 16")
        if self.displacement_mode not in ("local", "world"):
            raise InvalidSpec("displacement_mode must be 'local' or 'world'")
        unknown = set(self.stages) - set(STAGES)
        if unknown:
            raise InvalidSpec(f"unknown stages: {sorted(unknown)}")
        if self.frames is not None:
            if len(self.frames) == 0:
                raise InvalidSpec("frames subset must not be empty")
            if len(set(self.frames)) != len(self.frames):
                raise InvalidSpec("frames subset has duplicates")
        return self

    def replace(self, **kwargs):
        """Return a validated copy with the given fields overridden."""
        return dataclasses.replace(self, **kwargs)

    def enabled(self, stage):
        """True when ``stage`` is part of this run."""
        return stage in self.stages


def save_config(path, config):
    """Write ``config`` to ``path`` as pretty-printed JSON."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(config), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path):
    """Read a :class:`PipelineConfig` from JSON, rejecting unknown keys."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(data) - known
    if unknown:
        raise InvalidSpec(f"unknown config keys: {sorted(unknown)}")
    return PipelineConfig(**data)
