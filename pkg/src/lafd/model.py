"""Full detector assembly: backbone taps -> lateral projections -> pyramid
fusion -> context modules -> prediction heads, plus weight
initialization/validation and a one-call image detection helper."""

from __future__ import annotations

import numpy as np

from . import backbone as bb
from . import neck
from .anchors import (
    Detection,
    PostprocConfig,
    generate_priors,
    postprocess,
    preprocess,
    priors_to_array,
)
from .errors import InputError
from .neck import PyramidLevels, RawPredictions
from .tensor import Tensor, as_nchw
from .weights import WeightSpec, WeightStore, init_store


def detector_architecture(
    spec: bb.BackboneSpec | None = None,
    neck_c: int = neck.NECK_CHANNELS,
    anchors_per_pos: int = neck.ANCHORS_PER_POSITION,
) -> list[WeightSpec]:
    """Every tensor of the full detector, in forward order."""
    spec = spec or bb.default_spec()
    taps = spec.tap_channels()
    tap_channels = tuple(taps[t] for t in bb.STAGE_TAPS)
    return bb.architecture(spec) + neck.architecture(
        tap_channels, neck_c, anchors_per_pos
    )


def init_detector(seed: int, spec: bb.BackboneSpec | None = None) -> WeightStore:
    """Random full-model weights, deterministic per seed. Offset convs start
    at zero so an untrained model behaves as its plain-conv counterpart."""
    return init_store(detector_architecture(spec), seed)


def validate_store(w: WeightStore, spec: bb.BackboneSpec | None = None) -> None:
    w.validate_matches(detector_architecture(spec))


def detector_forward(
    image: Tensor, w: WeightStore, spec: bb.BackboneSpec | None = None
) -> RawPredictions:
    """Run the whole network on a preprocessed single-image tensor."""
    image = as_nchw(image)
    if image.shape[0] != 1:
        raise InputError(f"expected a single-image batch, got N={image.shape[0]}")
    if image.shape[1] != 3:
        raise InputError(f"expected 3 input channels, got {image.shape[1]}")
    spec = spec or bb.default_spec()
    c1, c2, c3 = bb.backbone_forward(image, spec, w)
    c1p = neck.lateral_project(c1, w, "fpn.lateral1")
    c2p = neck.lateral_project(c2, w, "fpn.lateral2")
    c3p = neck.lateral_project(c3, w, "fpn.lateral3")
    k = neck.fpn_fuse(c1p, c2p, c3p, w)
    p = PyramidLevels(
        neck.ssh_context(k.p1, w, "ssh1"),
        neck.ssh_context(k.p2, w, "ssh2"),
        neck.ssh_context(k.p3, w, "ssh3"),
    )
    return neck.predict_heads(p, w)


def detect_image(
    image: np.ndarray,
    w: WeightStore,
    cfg: PostprocConfig | None = None,
    resize: bool = True,
    spec: bb.BackboneSpec | None = None,
) -> list[Detection]:
    """8-bit RGB image -> detections in original-image pixels."""
    cfg = cfg or PostprocConfig()
    x, scale = preprocess(image, cfg, resize=resize)
    raw = detector_forward(x, w, spec)
    net_h, net_w = x.shape[2:]
    priors = priors_to_array(generate_priors(net_h, net_w))
    return postprocess(raw, priors, cfg, scale, image.shape[:2])
