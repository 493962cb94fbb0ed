"""Depth, ego-motion and intrinsics networks (transformer and convolutional)."""
from .common import depth_to_disp, disp_to_depth, stack_pair, to_nchw
from .config import NetConfig
from .conv import DepthCNN, EgoCNN, ResEncoder
from .dpt import DepthTransformer, Fusion, Head, Reassemble
from .layers import Module
from .model import ARCHES, SfMModel, build_depth_net, build_ego_net, parse_arch
from .pose import EgoTransformer, PoseDecoder
from .transformer import PatchEmbed, TransformerEncoder


def patch_embed(embed: PatchEmbed, image):
    return embed(to_nchw(image))


def transformer_encode(encoder: TransformerEncoder, tokens):
    return encoder.encode(tokens)


def depth_forward(net, image) -> list:
    """Disparity pyramid (scale 0 = full resolution) for an (H, W, 3) image."""
    return net(to_nchw(image))


def ego_forward(net, first, second, predict_intrinsics: bool = None):
    return net(stack_pair(first, second), predict_intrinsics)


def conv_baseline_forward(net, x):
    if isinstance(net, DepthCNN):
        return net(to_nchw(x))
    return net(x)


__all__ = [
    "ARCHES",
    "DepthCNN",
    "DepthTransformer",
    "EgoCNN",
    "EgoTransformer",
    "Fusion",
    "Head",
    "Module",
    "NetConfig",
    "PatchEmbed",
    "PoseDecoder",
    "Reassemble",
    "ResEncoder",
    "SfMModel",
    "TransformerEncoder",
    "build_depth_net",
    "build_ego_net",
    "conv_baseline_forward",
    "depth_forward",
    "depth_to_disp",
    "disp_to_depth",
    "ego_forward",
    "parse_arch",
    "patch_embed",
    "stack_pair",
    "to_nchw",
    "transformer_encode",
]
