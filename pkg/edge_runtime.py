#!/usr/bin/env python3
"""
Edge deployment of a trained detector.

A detector is packed into a self-contained GWAE image (layer headers, scaler,
float32 weights, threshold, CRC32; layout in EDGE_FORMAT.md) and run by a
small inference engine that works inside two fixed activation buffers.
"""

import logging
import struct
import time
import zlib
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from autoencoder import ACTIVATION_TAGS, Activation
from errors import BadCrc, BadMagic, BadVersion, DimensionMismatch, InconsistentDimensions
from features import FEATURE_COUNT

logger = logging.getLogger(__name__)

MAGIC = b"GWAE"
FORMAT_VERSION = 1
MAX_WIDTH = 64

_HEADER = struct.Struct("<4sHH")
_LAYER = struct.Struct("<HHBB")
_CRC = struct.Struct("<I")
_F32 = np.dtype("<f4")

TAG_ACTIVATIONS = {tag: act for act, tag in ACTIVATION_TAGS.items()}
HEALTHY, DAMAGED = "Healthy", "Damaged"


@dataclass(frozen=True, eq=False)
class EdgeLayer:
    in_width: int
    out_width: int
    trainable: bool
    activation_tag: int
    weights: Optional[np.ndarray]  # (out, in), float32 values held as float64
    bias: Optional[np.ndarray]

    @property
    def relu(self) -> bool:
        return TAG_ACTIVATIONS[self.activation_tag] is Activation.RELU

    @property
    def parameter_count(self) -> int:
        return self.in_width * self.out_width + self.out_width if self.trainable else 0


def _frozen(values) -> np.ndarray:
    arr = np.ascontiguousarray(np.asarray(values, dtype=_F32).astype(np.float64))
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EdgeModel:
    """Loaded image; read-only and shareable across threads."""

    layers: Tuple[EdgeLayer, ...]
    scaler_min: np.ndarray
    scaler_max: np.ndarray
    threshold: float
    version: int = FORMAT_VERSION

    def __post_init__(self):
        span = self.scaler_max - self.scaler_min
        center = (self.scaler_min + self.scaler_max) / 2
        scale = np.divide(2.0, span, out=np.zeros_like(span), where=span > 0)
        center.setflags(write=False)
        scale.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "scale", scale)

    @property
    def parameter_count(self) -> int:
        return sum(layer.parameter_count for layer in self.layers)

    @property
    def max_width(self) -> int:
        return max([FEATURE_COUNT] + [layer.out_width for layer in self.layers])

    @classmethod
    def from_detector(cls, detector) -> "EdgeModel":
        model = detector.model
        layers = []
        width = model.input_width
        for spec, w, b in zip(model.layers, model.weights, model.biases):
            layers.append(EdgeLayer(
                in_width=width,
                out_width=spec.output_width,
                trainable=spec.trainable,
                activation_tag=ACTIVATION_TAGS[spec.activation],
                weights=_frozen(w) if spec.trainable else None,
                bias=_frozen(b) if spec.trainable else None,
            ))
            width = spec.output_width
        return cls(
            layers=tuple(layers),
            scaler_min=_frozen(detector.scaler.minimum),
            scaler_max=_frozen(detector.scaler.maximum),
            threshold=float(np.float32(detector.threshold)),
        )


class InferenceScratch:
    """Two activation buffers of MAX_WIDTH float64 values (1 KiB in total)."""

    def __init__(self, width: int = MAX_WIDTH):
        self.width = width
        self.front = np.zeros(width, dtype=np.float64)
        self.back = np.zeros(width, dtype=np.float64)

    @property
    def nbytes(self) -> int:
        return self.front.nbytes + self.back.nbytes


def _check_model(model: EdgeModel) -> None:
    if not model.layers:
        raise InconsistentDimensions("image declares no layers")
    width = FEATURE_COUNT
    for i, layer in enumerate(model.layers):
        if layer.in_width != width:
            raise InconsistentDimensions(f"layer {i} expects {layer.in_width} inputs, previous layer gives {width}")
        if not 0 < layer.out_width <= MAX_WIDTH:
            raise InconsistentDimensions(f"layer {i} width {layer.out_width} outside 1..{MAX_WIDTH}")
        if not layer.trainable and layer.in_width != layer.out_width:
            raise InconsistentDimensions(f"pass-through layer {i} changes width")
        if layer.activation_tag not in TAG_ACTIVATIONS:
            raise InconsistentDimensions(f"layer {i} has unknown activation tag {layer.activation_tag}")
        width = layer.out_width
    if width != FEATURE_COUNT:
        raise InconsistentDimensions(f"model reconstructs {width} values, expected {FEATURE_COUNT}")


def serialize_model(model: EdgeModel) -> bytes:
    """Image bytes of a loaded or freshly built EdgeModel."""
    _check_model(model)
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, len(model.layers))]
    for layer in model.layers:
        parts.append(_LAYER.pack(layer.in_width, layer.out_width, int(layer.trainable), layer.activation_tag))
    parts.append(np.asarray(model.scaler_min, dtype=_F32).tobytes())
    parts.append(np.asarray(model.scaler_max, dtype=_F32).tobytes())
    for layer in model.layers:
        if layer.trainable:
            parts.append(np.asarray(layer.weights, dtype=_F32).tobytes(order="C"))
            parts.append(np.asarray(layer.bias, dtype=_F32).tobytes())
    parts.append(np.asarray([model.threshold], dtype=_F32).tobytes())
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


def serialize(detector) -> bytes:
    """GWAE image of a trained AnomalyDetector."""
    image = serialize_model(EdgeModel.from_detector(detector))
    logger.info("[EDGE] serialized detector: %d bytes", len(image))
    return image


def load(image: bytes) -> EdgeModel:
    """
    Parse and validate a GWAE image.

    Raises:
        BadMagic, BadCrc, BadVersion, InconsistentDimensions
    """
    image = bytes(image)
    if len(image) < _HEADER.size + _CRC.size:
        raise InconsistentDimensions(f"image too short ({len(image)} bytes)")
    magic, version, layer_count = _HEADER.unpack_from(image, 0)
    if magic != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, got {magic!r}")

    body, (stored_crc,) = image[:-_CRC.size], _CRC.unpack_from(image, len(image) - _CRC.size)
    if zlib.crc32(body) != stored_crc:
        raise BadCrc(f"crc mismatch: stored {stored_crc:08x}, computed {zlib.crc32(body):08x}")
    if version != FORMAT_VERSION:
        raise BadVersion(f"unsupported format version {version}")

    offset = _HEADER.size
    if len(body) < offset + layer_count * _LAYER.size:
        raise InconsistentDimensions(f"image too short for {layer_count} layer headers")
    headers = []
    for _ in range(layer_count):
        headers.append(_LAYER.unpack_from(body, offset))
        offset += _LAYER.size

    trainable_floats = sum(i * o + o for i, o, t, _ in headers if t)
    expected = offset + (2 * FEATURE_COUNT + trainable_floats + 1) * _F32.itemsize
    if len(body) != expected:
        raise InconsistentDimensions(f"payload is {len(body)} bytes, layer headers imply {expected}")
    if any(t not in (0, 1) for _, _, t, _ in headers):
        raise InconsistentDimensions("trainable flag must be 0 or 1")

    floats = np.frombuffer(body, dtype=_F32, offset=offset)
    scaler_min, scaler_max = floats[:FEATURE_COUNT], floats[FEATURE_COUNT:2 * FEATURE_COUNT]
    cursor = 2 * FEATURE_COUNT
    layers = []
    for in_width, out_width, trainable, tag in headers:
        weights = bias = None
        if trainable:
            weights = _frozen(floats[cursor:cursor + in_width * out_width].reshape(out_width, in_width))
            cursor += in_width * out_width
            bias = _frozen(floats[cursor:cursor + out_width])
            cursor += out_width
        layers.append(EdgeLayer(in_width, out_width, bool(trainable), tag, weights, bias))

    model = EdgeModel(tuple(layers), _frozen(scaler_min), _frozen(scaler_max), float(floats[cursor]), version)
    _check_model(model)
    logger.debug("[EDGE] loaded image: %d layers, %d parameters", len(layers), model.parameter_count)
    return model


def _scale_into(model: EdgeModel, raw: np.ndarray, buf: np.ndarray) -> np.ndarray:
    np.subtract(raw, model.center, out=buf)
    np.multiply(buf, model.scale, out=buf)
    return buf


def edge_infer(model: EdgeModel, raw_features, scratch: InferenceScratch) -> Tuple[float, str]:
    """
    Scale, reconstruct and score one raw feature vector inside the scratch buffers.

    Args:
        model: loaded EdgeModel
        raw_features: 16 unscaled feature values
        scratch: buffers owned by the calling thread

    Returns:
        (reconstruction error, "Healthy" | "Damaged")
    """
    raw = np.asarray(raw_features, dtype=np.float64)
    if raw.shape != (FEATURE_COUNT,):
        raise DimensionMismatch(f"expected {FEATURE_COUNT} raw features, got shape {raw.shape}")
    if scratch.width < model.max_width:
        raise DimensionMismatch(f"scratch width {scratch.width} < model width {model.max_width}")

    cur, nxt = scratch.front, scratch.back
    x = _scale_into(model, raw, cur[:FEATURE_COUNT])
    for layer in model.layers:
        if layer.trainable:
            y = nxt[:layer.out_width]
            np.dot(layer.weights, x, out=y)
            np.add(y, layer.bias, out=y)
            cur, nxt = nxt, cur
            x = y
        if layer.relu:
            np.maximum(x, 0.0, out=x)

    # the spare buffer holds the scaled input again for the MSE
    diff = _scale_into(model, raw, nxt[:FEATURE_COUNT])
    np.subtract(diff, x, out=diff)
    error = float(np.dot(diff, diff)) / FEATURE_COUNT
    return error, DAMAGED if error > model.threshold else HEALTHY


@dataclass(frozen=True)
class LatencyStats:
    count: int
    mean_seconds: float
    max_seconds: float


def benchmark_latency(model: EdgeModel, vectors: Sequence, repeats: int = 1) -> LatencyStats:
    """Wall-clock time per edge_infer call over vectors x repeats."""
    scratch = InferenceScratch()
    timings: List[float] = []
    for _ in range(max(1, repeats)):
        for vector in vectors:
            start = time.perf_counter()
            edge_infer(model, vector, scratch)
            timings.append(time.perf_counter() - start)
    if not timings:
        return LatencyStats(0, 0.0, 0.0)
    stats = LatencyStats(len(timings), float(np.mean(timings)), float(np.max(timings)))
    logger.info("[EDGE] %d inferences: mean %.1f us, max %.1f us",
                stats.count, stats.mean_seconds * 1e6, stats.max_seconds * 1e6)
    return stats
