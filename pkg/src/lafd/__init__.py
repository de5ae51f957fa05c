"""Lightweight anchor-based face detection: a from-scratch inference stack
with a MobileNetV3-style backbone, deformable-conv context modules, focal
and smooth-L1 losses, and a desk-scale evaluation harness."""

from .anchors import (
    Detection,
    PostprocConfig,
    PriorBox,
    decode_boxes,
    decode_landmarks,
    encode_boxes,
    generate_priors,
    iou,
    nms,
    postprocess,
    preprocess,
)
from .backbone import BackboneSpec, BottleneckSpec, backbone_forward, default_spec
from .dcn import dcn_layer, dcn_offsets, deform_conv2d
from .errors import DimensionError, InputError, MissingWeightError, WeightFormatError
from .evaluate import (
    APResult,
    GroundTruthScene,
    average_precision,
    match_detections,
    synth_scene,
)
from .losses import (
    LossParams,
    MatchResult,
    cross_entropy,
    focal_loss,
    loss_gradients,
    loss_schedule,
    match_priors,
    p_t,
    smooth_l1,
)
from .model import detect_image, detector_forward, init_detector
from .neck import PyramidLevels, RawPredictions, fpn_fuse, lateral_project, predict_heads, ssh_context
from .ops import (
    batch_norm_infer,
    bilinear_sample,
    bilinear_upsample,
    conv2d,
    global_avg_pool,
    h_sigmoid,
    h_swish,
)
from .tensor import ConvParams, Tensor
from .weights import WeightStore
from .weights_io import load_weights, save_weights

__version__ = "0.1.0"
