"""
Weight files: a YAML manifest plus a binary blob.

The blob holds, per layer in manifest order, the int8 weights row-major
(out_dim x in_dim) followed by the little-endian int32 biases. The manifest
records the blob's sha256 so a stale or truncated blob is rejected on load.
"""

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

import config
from error_handler import DimensionMismatchError, ModelConfigError, WeightFileError
from layers import QuantizedLinear
from logger import get_logger

logger = get_logger(__name__)

CONV_NAMES = ("conv1", "conv2", "conv3", "conv4", "conv5")
HEAD_NAME = "head"

# rough rms of each layer's inputs, used to size the requantisation scale
_LAYER0_INPUT_RMS = 2.0
_HIDDEN_INPUT_RMS = 64.0
_TARGET_OUTPUT_STD = 48.0


def layer_shapes(variant: str, num_classes: int = config.DEFAULT_NUM_CLASSES) -> List[Tuple[str, int, int]]:
    """(name, in_dim, out_dim) for Conv1..Conv5 and the head"""
    if variant not in config.MODEL_VARIANTS:
        raise ModelConfigError(f"unknown variant '{variant}' (known: {', '.join(config.MODEL_VARIANTS)})")
    if num_classes < 1:
        raise ModelConfigError(f"class count must be positive, got {num_classes}")
    dims = config.MODEL_VARIANTS[variant]
    shapes = []
    prev = config.INPUT_ATTRIBUTE_DIM
    for name, dim in zip(CONV_NAMES, dims):
        shapes.append((name, prev + config.POSITION_DIM, dim))
        prev = dim
    shapes.append((HEAD_NAME, config.POOLOUT_GRID ** 2 * dims[-1], num_classes))
    return shapes


def parameter_count(variant: str, num_classes: int = config.DEFAULT_NUM_CLASSES) -> int:
    """Weights plus biases over all layers, e.g. 5202 / 10578 / 20178 for S / B / L with two classes"""
    return sum(in_dim * out_dim + out_dim for _, in_dim, out_dim in layer_shapes(variant, num_classes))


@dataclass
class ModelWeights:
    variant: str
    convs: List[QuantizedLinear]
    head: QuantizedLinear

    @property
    def num_classes(self) -> int:
        return self.head.out_dim

    @property
    def layers(self) -> List[QuantizedLinear]:
        return self.convs + [self.head]

    @property
    def parameter_count(self) -> int:
        return sum(layer.parameter_count for layer in self.layers)

    def check_variant(self, variant: str) -> None:
        """
        Raises:
            DimensionMismatchError: layer shapes differ from the variant table
        """
        expected = layer_shapes(variant, self.num_classes)
        for layer, (name, in_dim, out_dim) in zip(self.layers, expected):
            if (layer.in_dim, layer.out_dim) != (in_dim, out_dim):
                raise DimensionMismatchError(
                    f"{name}: weights are {layer.in_dim}->{layer.out_dim}, variant {variant} needs {in_dim}->{out_dim}"
                )
        if len(self.layers) != len(expected):
            raise DimensionMismatchError(f"expected {len(expected)} layers, got {len(self.layers)}")


def _requant_multiplier(in_dim: int, input_rms: float, shift: int) -> int:
    weight_std = (config.WEIGHT_MAX_VALUE - config.WEIGHT_MIN_VALUE + 1) / math.sqrt(12)
    acc_std = weight_std * math.sqrt(in_dim) * input_rms
    return max(1, int(round(_TARGET_OUTPUT_STD / acc_std * (1 << shift))))


def generate_weights(variant: str, num_classes: int = config.DEFAULT_NUM_CLASSES, seed: int = 0,
                     zero_point: int = config.DEFAULT_ZERO_POINT,
                     shift: int = config.DEFAULT_REQUANT_SHIFT) -> ModelWeights:
    """
    Random quantised weights for a variant; a pure function of the arguments.

    Conv layers use activation_min = zero_point, i.e. ReLU at the zero point.
    """
    rng = np.random.default_rng(seed)
    layers = []
    for index, (name, in_dim, out_dim) in enumerate(layer_shapes(variant, num_classes)):
        w = rng.integers(config.WEIGHT_MIN_VALUE, config.WEIGHT_MAX_VALUE + 1, size=(out_dim, in_dim))
        if name == HEAD_NAME:
            b = rng.integers(-(1 << 12), 1 << 12, size=out_dim)
            layers.append(QuantizedLinear(w, b, name=name))
            continue
        rms = _LAYER0_INPUT_RMS if index == 0 else _HIDDEN_INPUT_RMS
        b = rng.integers(-(1 << 10), 1 << 10, size=out_dim)
        layers.append(QuantizedLinear(w, b, requant_multiplier=_requant_multiplier(in_dim, rms, shift),
                                      requant_shift=shift, zero_point=zero_point,
                                      activation_min=zero_point, name=name))
    weights = ModelWeights(variant, layers[:-1], layers[-1])
    logger.info(f"Generated {variant} weights: {weights.parameter_count} parameters (seed={seed})")
    return weights


def _blob_bytes(weights: ModelWeights) -> bytes:
    chunks = []
    for layer in weights.layers:
        if layer.bias.size and (layer.bias.min() < config.BIAS_MIN_VALUE or layer.bias.max() > config.BIAS_MAX_VALUE):
            raise ModelConfigError(f"{layer.name}: bias outside int32 range")
        if layer.weights.size and (layer.weights.min() < config.WEIGHT_MIN_VALUE
                                   or layer.weights.max() > config.WEIGHT_MAX_VALUE):
            raise ModelConfigError(f"{layer.name}: weights outside int8 range")
        chunks.append(layer.weights.astype(np.int8).tobytes(order='C'))
        chunks.append(layer.bias.astype('<i4').tobytes())
    return b"".join(chunks)


def save_weights(weights: ModelWeights, manifest_path: Union[str, Path]) -> Tuple[Path, Path]:
    """
    Write the manifest and its blob (same stem, .bin suffix).

    Returns:
        (manifest path, blob path)
    """
    manifest_path = Path(manifest_path)
    blob_path = manifest_path.with_suffix(config.WEIGHT_BLOB_SUFFIX)
    blob = _blob_bytes(weights)
    manifest: Dict = {
        'format': config.WEIGHT_FORMAT_VERSION,
        'variant': weights.variant,
        'num_classes': weights.num_classes,
        'rounding': config.ROUNDING_MODE,
        'blob': blob_path.name,
        'blob_size': len(blob),
        'sha256': hashlib.sha256(blob).hexdigest(),
        'layers': [
            {
                'name': layer.name,
                'in_dim': layer.in_dim,
                'out_dim': layer.out_dim,
                'requant_multiplier': int(layer.requant_multiplier),
                'requant_shift': int(layer.requant_shift),
                'zero_point': int(layer.zero_point),
                'activation_min': int(layer.activation_min),
            }
            for layer in weights.layers
        ],
    }
    blob_path.write_bytes(blob)
    with open(manifest_path, 'w') as f:
        yaml.safe_dump(manifest, f, sort_keys=False)
    logger.info(f"Saved weights to {manifest_path} ({len(blob)} byte blob)")
    return manifest_path, blob_path


def load_weights(manifest_path: Union[str, Path], variant: Optional[str] = None) -> ModelWeights:
    """
    Load and verify a weight file.

    Args:
        manifest_path: YAML manifest; the blob is resolved relative to it
        variant: when given, layer shapes are checked against this variant

    Raises:
        WeightFileError: unreadable manifest, bad checksum or size
        DimensionMismatchError: shapes disagree with the variant
    """
    manifest_path = Path(manifest_path)
    try:
        with open(manifest_path, 'r') as f:
            manifest = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise WeightFileError(f"cannot read weight manifest {manifest_path}: {e}") from e
    if not isinstance(manifest, dict) or manifest.get('format') != config.WEIGHT_FORMAT_VERSION:
        raise WeightFileError(f"{manifest_path} is not a {config.WEIGHT_FORMAT_VERSION} manifest")

    missing = [key for key in ('blob', 'sha256', 'variant', 'layers') if key not in manifest]
    if missing:
        raise WeightFileError(f"{manifest_path} lacks {', '.join(missing)}")

    blob_path = manifest_path.parent / str(manifest['blob'])
    try:
        blob = blob_path.read_bytes()
    except OSError as e:
        raise WeightFileError(f"cannot read weight blob {blob_path}: {e}") from e
    if hashlib.sha256(blob).hexdigest() != manifest['sha256']:
        raise WeightFileError(f"checksum mismatch for {blob_path}")

    layers = []
    offset = 0
    try:
        for entry in manifest['layers']:
            in_dim, out_dim = int(entry['in_dim']), int(entry['out_dim'])
            w = np.frombuffer(blob, dtype=np.int8, count=in_dim * out_dim, offset=offset).reshape(out_dim, in_dim)
            offset += in_dim * out_dim
            b = np.frombuffer(blob, dtype='<i4', count=out_dim, offset=offset)
            offset += 4 * out_dim
            layers.append(QuantizedLinear(w, b, int(entry['requant_multiplier']), int(entry['requant_shift']),
                                          int(entry['zero_point']), int(entry['activation_min']), entry['name']))
    except (KeyError, ValueError, TypeError) as e:
        raise WeightFileError(f"malformed layer table in {manifest_path}: {e}") from e
    if offset != len(blob):
        raise WeightFileError(f"blob has {len(blob) - offset} unused bytes")
    if len(layers) != len(CONV_NAMES) + 1:
        raise DimensionMismatchError(f"expected {len(CONV_NAMES) + 1} layers, got {len(layers)}")

    weights = ModelWeights(manifest['variant'], layers[:-1], layers[-1])
    weights.check_variant(variant or weights.variant)
    logger.info(f"Loaded {weights.variant} weights from {manifest_path} ({weights.parameter_count} parameters)")
    return weights
