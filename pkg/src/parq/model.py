"""Multi-view 3-D detector built on pixel-aligned recurrent queries.

The network sees a snippet of N posed RGB views. A strided conv stack encodes
each view, a ray position encoding ties every feature cell to the 3-D points
along its camera ray, and K query points gather appearance by projecting into
every view and bilinearly sampling the encoded features. One weight-shared
transformer decoder layer plus a four-branch box head then move the points
toward object centers over L iterations; every iteration re-samples features
at the updated points, so the recurrent state is the points themselves and
the same layer refines them repeatedly.

All 3-D quantities live in the snippet frame. Boxes decode around the query
points: center = point + offset, size = per-class mean * exp(residual),
rotation from the continuous 6-D parameterization.
"""

import dataclasses
import itertools

import numpy as np

from .geometry import (
    CameraView,
    FourierConfig,
    OrientedBox3D,
    RayEncodingConfig,
    fourier_encode,
    project,
    ray_points,
    rot6d_to_matrix,
)
from .numerics import (
    MLP,
    Conv2d,
    LayerNorm,
    MultiHeadAttention,
    ParameterStore,
    Tensor,
    concat,
    dropout,
    no_grad,
    gather_rows,
    relu,
    reshape,
)


@dataclasses.dataclass(frozen=True)
class BoundingVolume:
    """Axis-aligned region of the snippet frame that query points sample.

    The volume is aligned with the snippet axes; its pose is therefore the
    translation `center` alone. `extents` are full side lengths in meters.
    The defaults cover where synthetic-orbit object centers actually land in
    the snippet frame, with margin.
    """

    center: tuple = (0.0, 0.0, 3.4)
    extents: tuple = (4.0, 2.4, 4.4)

    def __post_init__(self):
        center = tuple(float(v) for v in self.center)
        extents = tuple(float(v) for v in self.extents)
        if len(center) != 3 or len(extents) != 3:
            raise ValueError("BoundingVolume needs 3-vector center and extents")
        if not all(np.isfinite(center)) or not all(np.isfinite(extents)):
            raise ValueError("BoundingVolume center and extents must be finite")
        if min(extents) <= 0.0:
            raise ValueError(f"BoundingVolume extents must be positive, got {extents}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "extents", extents)

    def contains(self, points, tol=1e-9):
        """Per-point bool: inside the closed volume (with slack tol)."""
        local = np.abs(np.asarray(points, dtype=np.float64) - self.center)
        return (local <= np.asarray(self.extents) / 2.0 + tol).all(axis=-1)


def sample_reference_points(volume, count, rng):
    """Uniform i.i.d. points in the volume, [count, 3]; deterministic per rng."""
    if count < 1:
        raise ValueError(f"need at least one reference point, got {count}")
    offsets = rng.uniform(-0.5, 0.5, size=(count, 3))
    return np.asarray(volume.center) + offsets * np.asarray(volume.extents)


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    """Architecture and query-volume settings.

    `mean_sizes[c]` is the (w, h, l) prior for class c; the size head predicts
    log residuals against it. `encoder_channels` lists the conv stage widths,
    each stage strides by 2, and the last width must equal `channels` so
    features, ray encodings, and queries share one dimension.
    """

    num_classes: int
    mean_sizes: tuple
    channels: int = 64
    heads: int = 4
    feedforward: int = 128
    iterations: int = 4
    queries: int = 64
    views: int = 3
    image_width: int = 64
    image_height: int = 48
    encoder_channels: tuple = (32, 64)
    dropout: float = 0.0
    ray: RayEncodingConfig = RayEncodingConfig()
    fourier: FourierConfig = FourierConfig()
    volume: BoundingVolume = BoundingVolume()

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        sizes = tuple(tuple(float(v) for v in row) for row in self.mean_sizes)
        if len(sizes) != self.num_classes:
            raise ValueError(
                f"mean_sizes has {len(sizes)} rows for {self.num_classes} classes"
            )
        for row in sizes:
            if len(row) != 3 or min(row) <= 0.0 or not all(np.isfinite(row)):
                raise ValueError(f"mean size rows must be positive 3-vectors, got {row}")
        object.__setattr__(self, "mean_sizes", sizes)
        stages = tuple(int(v) for v in self.encoder_channels)
        if not stages or min(stages) < 1:
            raise ValueError("encoder_channels must list positive widths")
        if stages[-1] != self.channels:
            raise ValueError(
                f"last encoder width {stages[-1]} must equal channels {self.channels}"
            )
        object.__setattr__(self, "encoder_channels", stages)
        for name in ("channels", "heads", "feedforward", "iterations", "queries", "views"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.channels % self.heads != 0:
            raise ValueError(f"heads ({self.heads}) must divide channels ({self.channels})")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        stride = self.stride
        for name, pixels in (("image_width", self.image_width), ("image_height", self.image_height)):
            if pixels < stride or pixels % stride != 0:
                raise ValueError(f"{name} ({pixels}) must be a positive multiple of stride {stride}")

    @property
    def stride(self):
        return 2 ** len(self.encoder_channels)

    @property
    def grid_width(self):
        return self.image_width // self.stride

    @property
    def grid_height(self):
        return self.image_height // self.stride


def config_to_dict(config):
    """ModelConfig as plain JSON-serializable types (checkpoint metadata)."""
    return {
        "num_classes": config.num_classes,
        "mean_sizes": [list(row) for row in config.mean_sizes],
        "channels": config.channels,
        "heads": config.heads,
        "feedforward": config.feedforward,
        "iterations": config.iterations,
        "queries": config.queries,
        "views": config.views,
        "image_width": config.image_width,
        "image_height": config.image_height,
        "encoder_channels": list(config.encoder_channels),
        "dropout": config.dropout,
        "ray": {
            "points_per_ray": config.ray.points_per_ray,
            "d_min": config.ray.d_min,
            "d_max": config.ray.d_max,
        },
        "fourier": {
            "num_frequencies": config.fourier.num_frequencies,
            "include_input": config.fourier.include_input,
        },
        "volume": {
            "center": list(config.volume.center),
            "extents": list(config.volume.extents),
        },
    }


def config_from_dict(obj):
    """Inverse of config_to_dict; validation runs in the constructors."""
    try:
        return ModelConfig(
            num_classes=int(obj["num_classes"]),
            mean_sizes=tuple(tuple(row) for row in obj["mean_sizes"]),
            channels=int(obj["channels"]),
            heads=int(obj["heads"]),
            feedforward=int(obj["feedforward"]),
            iterations=int(obj["iterations"]),
            queries=int(obj["queries"]),
            views=int(obj["views"]),
            image_width=int(obj["image_width"]),
            image_height=int(obj["image_height"]),
            encoder_channels=tuple(obj["encoder_channels"]),
            dropout=float(obj["dropout"]),
            ray=RayEncodingConfig(
                points_per_ray=int(obj["ray"]["points_per_ray"]),
                d_min=float(obj["ray"]["d_min"]),
                d_max=float(obj["ray"]["d_max"]),
            ),
            fourier=FourierConfig(
                num_frequencies=int(obj["fourier"]["num_frequencies"]),
                include_input=bool(obj["fourier"]["include_input"]),
            ),
            volume=BoundingVolume(
                center=tuple(obj["volume"]["center"]),
                extents=tuple(obj["volume"]["extents"]),
            ),
        )
    except (KeyError, TypeError) as err:
        raise ValueError(f"malformed model config record: {err}") from err


def full_scale_config(num_classes, mean_sizes):
    """Documented full-scale preset; far beyond what this package trains.

    Kept as a reference point for how the desk defaults were scaled down:
    1024-dim features, 4 decoder heads, feedforward 768, 8 iterations,
    256 queries, 3-view snippets, a 6 x 2.5 x 5 m query volume.
    """
    return ModelConfig(
        num_classes=num_classes,
        mean_sizes=mean_sizes,
        channels=1024,
        heads=4,
        feedforward=768,
        iterations=8,
        queries=256,
        views=3,
        image_width=256,
        image_height=192,
        encoder_channels=(256, 1024),
        dropout=0.1,
        volume=BoundingVolume(center=(0.0, 0.0, 2.5), extents=(6.0, 2.5, 5.0)),
    )


@dataclasses.dataclass(frozen=True, eq=False)
class FeatureMaps:
    """Per-view feature grids with the cameras they were computed from."""

    views: tuple
    cameras: tuple

    def __post_init__(self):
        views = tuple(self.views)
        cameras = tuple(self.cameras)
        if not views or len(views) != len(cameras):
            raise ValueError("FeatureMaps needs one camera per non-empty view list")
        shape = views[0].shape
        if len(shape) != 3:
            raise ValueError(f"feature maps must be [H', W', C], got {shape}")
        for view in views[1:]:
            if view.shape != shape:
                raise ValueError(f"feature shapes differ: {view.shape} vs {shape}")
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "cameras", cameras)

    @property
    def grid_height(self):
        return self.views[0].shape[0]

    @property
    def grid_width(self):
        return self.views[0].shape[1]

    @property
    def channels(self):
        return self.views[0].shape[2]


@dataclasses.dataclass(frozen=True, eq=False)
class QuerySet:
    """K query points with their appearance and positional embeddings.

    `appearance` is the view-pooled bilinear sample of the posed features;
    `position` is the MLP of the Fourier-encoded point. Their sum is the
    query embedding; the decoder keeps them separate because the positional
    term is re-added at every attention step.
    """

    points: np.ndarray
    appearance: Tensor
    position: Tensor

    @property
    def embeddings(self):
        return self.appearance + self.position


@dataclasses.dataclass(frozen=True, eq=False)
class BoxPrediction:
    """Raw per-query head outputs; decode_boxes turns rows into boxes."""

    center_offset: Tensor
    rotation6d: Tensor
    size_residual: Tensor
    class_logits: Tensor


@dataclasses.dataclass(frozen=True, eq=False)
class IterationOutput:
    """One recurrent step: the points it read and what it predicted.

    `points` are the reference points fed INTO the step, so absolute centers
    are points + prediction.center_offset. `attention` holds the cross
    attention weights [heads, K, S] over the flattened view features.
    """

    points: np.ndarray
    prediction: BoxPrediction
    attention: Tensor


def _softmax_rows(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    num = np.exp(shifted)
    return num / num.sum(axis=-1, keepdims=True)


def decode_boxes(prediction, points, mean_sizes):
    """Per-query boxes; None where the argmax class is no-object.

    center = point + offset; size = mean_sizes[class] * exp(residual);
    rotation from the 6-D head; score = softmax probability of the argmax
    class. Degenerate 6-D rotations propagate as errors.
    """
    logits = prediction.class_logits.data
    num_classes = logits.shape[1] - 1
    probs = _softmax_rows(logits)
    labels = np.argmax(logits, axis=1)
    offsets = prediction.center_offset.data
    residuals = prediction.size_residual.data
    rot6d = prediction.rotation6d.data
    means = np.asarray(mean_sizes, dtype=np.float64)
    boxes = []
    for k, label in enumerate(labels):
        if label == num_classes:
            boxes.append(None)
            continue
        boxes.append(
            OrientedBox3D(
                center=points[k] + offsets[k],
                size=means[label] * np.exp(residuals[k]),
                rotation=rot6d_to_matrix(rot6d[k]),
                class_id=int(label),
                score=float(probs[k, label]),
            )
        )
    return boxes


class Detector:
    """The full network; parameters live in a flat named store.

    Construction draws every initial weight from the given rng, so a seed
    pins the model exactly. All methods are pure given the parameters.
    """

    def __init__(self, config, rng):
        self.config = config
        stages = []
        width_in = 3
        for width in config.encoder_channels:
            stages.append(Conv2d(width_in, width, rng, kernel=3, stride=2, padding=1))
            width_in = width
        self._encoder = stages
        c = config.channels
        self._ray_mlp = MLP((config.ray.points_per_ray * 3, c, c), rng)
        self._query_mlp = MLP((config.fourier.encoded_size, c, c), rng)
        self._self_attention = MultiHeadAttention(c, config.heads, rng)
        self._cross_attention = MultiHeadAttention(c, config.heads, rng)
        self._feedforward = MLP((c, config.feedforward, c), rng)
        self._norm_self = LayerNorm(c)
        self._norm_cross = LayerNorm(c)
        self._norm_ff = LayerNorm(c)
        self._norm_out = LayerNorm(c)
        # Zero-initialized output layers: the first forward pass predicts
        # zero offsets, zero residuals, identity rotations, equal logits.
        self._offset_head = MLP((c, c, 3), rng, zero_init_last=True)
        self._rotation_head = MLP(
            (c, c, 6), rng, zero_init_last=True, last_bias=(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)
        )
        self._size_head = MLP((c, c, 3), rng, zero_init_last=True)
        self._class_head = MLP((c, c, config.num_classes + 1), rng, zero_init_last=True)
        self.parameters = ParameterStore()
        named = itertools.chain(
            *(stage.named_parameters(f"encoder.{i}") for i, stage in enumerate(self._encoder)),
            self._ray_mlp.named_parameters("ray_pe"),
            self._query_mlp.named_parameters("query_pos"),
            self._self_attention.named_parameters("decoder.self_attention"),
            self._cross_attention.named_parameters("decoder.cross_attention"),
            self._feedforward.named_parameters("decoder.feedforward"),
            self._norm_self.named_parameters("decoder.norm_self"),
            self._norm_cross.named_parameters("decoder.norm_cross"),
            self._norm_ff.named_parameters("decoder.norm_ff"),
            self._norm_out.named_parameters("decoder.norm_out"),
            self._offset_head.named_parameters("head.offset"),
            self._rotation_head.named_parameters("head.rotation"),
            self._size_head.named_parameters("head.size"),
            self._class_head.named_parameters("head.classes"),
        )
        for name, tensor in named:
            self.parameters.add(name, tensor)

    # ---------------------------------------------------------------- encoder

    def encode_images(self, images, cameras):
        """Conv features per view, [H/stride, W/stride, C], before ray PE."""
        if len(images) == 0 or len(images) != len(cameras):
            raise ValueError(
                f"need one camera per image, got {len(images)} images / {len(cameras)} cameras"
            )
        arrays = [np.asarray(img, dtype=np.float64) for img in images]
        shape = arrays[0].shape
        for arr, cam in zip(arrays, cameras):
            if arr.shape != shape:
                raise ValueError(f"image dimensions differ across views: {arr.shape} vs {shape}")
            if arr.ndim != 3 or arr.shape[2] != 3:
                raise ValueError(f"images must be [H, W, 3], got {arr.shape}")
            if arr.shape[0] != cam.height or arr.shape[1] != cam.width:
                raise ValueError(
                    f"image {arr.shape[1]}x{arr.shape[0]} does not match its "
                    f"camera {cam.width}x{cam.height}"
                )
            if not np.isfinite(arr).all():
                raise ValueError("images must be finite")
        stride = self.config.stride
        if shape[0] % stride or shape[1] % stride:
            raise ValueError(f"image dims {shape[1]}x{shape[0]} must be multiples of stride {stride}")
        views = []
        for arr in arrays:
            x = Tensor(arr)
            for i, stage in enumerate(self._encoder):
                x = stage(x)
                if i < len(self._encoder) - 1:
                    x = relu(x)
            views.append(x)
        return FeatureMaps(views=tuple(views), cameras=tuple(cameras))

    def add_ray_pe(self, feats):
        """F + P per view: P encodes the D points along each cell's camera ray."""
        gh, gw = feats.grid_height, feats.grid_width
        posed = []
        for view, cam in zip(feats.views, feats.cameras):
            points = ray_points(cam, gw, gh, self.config.ray)
            flat = Tensor(points.reshape(gh * gw, -1))
            encoding = self._ray_mlp(flat)
            posed.append(view + reshape(encoding, (gh, gw, feats.channels)))
        return FeatureMaps(views=tuple(posed), cameras=feats.cameras)

    # ---------------------------------------------------------------- queries

    def _bilinear_sample(self, view, cam, points):
        """Sample one view's features at the projections of the points.

        Returns (samples [K, C], inside [K]); rows with inside False are
        meaningless and must be masked by the caller. Fractional coordinates
        follow the align-corners-false convention (feature cell i covers
        pixels [i*stride, (i+1)*stride)), with border clamping.
        """
        gh, gw, c = view.shape
        uv, _ = project(points, cam)
        inside = (
            np.isfinite(uv).all(axis=1)
            & (uv[:, 0] >= 0.0)
            & (uv[:, 0] < cam.width)
            & (uv[:, 1] >= 0.0)
            & (uv[:, 1] < cam.height)
        )
        u = np.where(inside, uv[:, 0], 0.0)
        v = np.where(inside, uv[:, 1], 0.0)
        gx = u * (gw / cam.width) - 0.5
        gy = v * (gh / cam.height) - 0.5
        x0 = np.floor(gx)
        y0 = np.floor(gy)
        fx = (gx - x0)[:, None]
        fy = (gy - y0)[:, None]
        x0 = x0.astype(np.int64)
        y0 = y0.astype(np.int64)
        x0c = np.clip(x0, 0, gw - 1)
        x1c = np.clip(x0 + 1, 0, gw - 1)
        y0c = np.clip(y0, 0, gh - 1)
        y1c = np.clip(y0 + 1, 0, gh - 1)
        flat = reshape(view, (gh * gw, c))
        sample = (
            gather_rows(flat, y0c * gw + x0c) * Tensor((1.0 - fy) * (1.0 - fx))
            + gather_rows(flat, y0c * gw + x1c) * Tensor((1.0 - fy) * fx)
            + gather_rows(flat, y1c * gw + x0c) * Tensor(fy * (1.0 - fx))
            + gather_rows(flat, y1c * gw + x1c) * Tensor(fy * fx)
        )
        return sample, inside

    def build_queries(self, points, feats):
        """Pixel-aligned queries for the given reference points.

        appearance = mean of the bilinear samples over the views where the
        point projects inside the image in front of the camera; the zero
        vector when no view sees it. position = MLP(fourier(point)).
        """
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise ValueError(f"reference points must be [K, 3], got {points.shape}")
        if not np.isfinite(points).all():
            raise ValueError("reference points must be finite")
        total = None
        count = np.zeros(len(points))
        for view, cam in zip(feats.views, feats.cameras):
            sample, inside = self._bilinear_sample(view, cam, points)
            masked = sample * Tensor(inside[:, None].astype(np.float64))
            total = masked if total is None else total + masked
            count += inside
        pooled = total * Tensor(1.0 / np.maximum(count, 1.0)[:, None])
        position = self._query_mlp(Tensor(fourier_encode(points, self.config.fourier)))
        return QuerySet(points=points, appearance=pooled, position=position)

    def pixel_aligned_query(self, point, feats):
        """Eq.-style single-point embedding: position + pooled appearance, [C]."""
        queries = self.build_queries(np.asarray(point, dtype=np.float64)[None, :], feats)
        return reshape(queries.embeddings, (feats.channels,))

    # ---------------------------------------------------------------- decoder

    def _memory(self, feats):
        """All views' features flattened to one [N*H'*W', C] sequence."""
        gh, gw, c = feats.views[0].shape
        return concat([reshape(view, (gh * gw, c)) for view in feats.views], axis=0)

    def parq_layer(self, queries, feats=None, kv=None, dropout_rng=None):
        """One decoder layer plus box head over the current queries.

        Pre-norm residual sublayers: self-attention among queries, cross
        attention into the flattened view features, feedforward. The
        residual stream starts from the full query embedding (appearance
        plus position), so the heads can read where each query sits; the
        positional term additionally rides on the attention inputs
        (query_pos). Pass kv (from project_kv of the memory) to reuse
        projections across iterations; otherwise feats is required.
        """
        if kv is None:
            if feats is None:
                raise ValueError("parq_layer needs feats or a projected kv cache")
            kv = self._cross_attention.project_kv(self._memory(feats))
        rate = self.config.dropout if dropout_rng is not None else 0.0
        qp = queries.position
        tgt = queries.embeddings
        normed = self._norm_self(tgt)
        attended, _ = self._self_attention(normed + qp, normed + qp, normed)
        tgt = tgt + dropout(attended, rate, dropout_rng)
        normed = self._norm_cross(tgt)
        attended, weights = self._cross_attention(normed + qp, kv=kv)
        tgt = tgt + dropout(attended, rate, dropout_rng)
        normed = self._norm_ff(tgt)
        tgt = tgt + dropout(self._feedforward(normed), rate, dropout_rng)
        decoded = self._norm_out(tgt)
        prediction = BoxPrediction(
            center_offset=self._offset_head(decoded),
            rotation6d=self._rotation_head(decoded),
            size_residual=self._size_head(decoded),
            class_logits=self._class_head(decoded),
        )
        return prediction, weights

    def recurrent_decode(self, feats, init_points, iterations=None, dropout_rng=None):
        """Run L weight-shared refinement steps from the initial points.

        Each step rebuilds queries at the current points, predicts, then
        moves the points by the predicted center offset. The update uses the
        offset's raw values, so gradients never flow between iterations
        through the points; each step's loss trains that step's forward pass
        alone, while the shared parameters accumulate across steps.
        """
        steps = self.config.iterations if iterations is None else iterations
        if steps < 1:
            raise ValueError(f"need at least one iteration, got {steps}")
        kv = self._cross_attention.project_kv(self._memory(feats))
        points = np.array(init_points, dtype=np.float64)
        outputs = []
        for _ in range(steps):
            queries = self.build_queries(points, feats)
            prediction, weights = self.parq_layer(queries, kv=kv, dropout_rng=dropout_rng)
            outputs.append(IterationOutput(points=points, prediction=prediction, attention=weights))
            points = points + prediction.center_offset.data
        return outputs

    # -------------------------------------------------------------- inference

    def detect(self, images, cameras, rng, iterations=None, num_queries=None):
        """End-to-end inference: boxes from the last refinement iteration.

        rng seeds the reference points; pass num_queries or iterations to
        override the configured K or L without retraining.
        """
        count = self.config.queries if num_queries is None else num_queries
        with no_grad():
            feats = self.add_ray_pe(self.encode_images(images, cameras))
            points = sample_reference_points(self.config.volume, count, rng)
            outputs = self.recurrent_decode(feats, points, iterations=iterations)
            last = outputs[-1]
            boxes = decode_boxes(last.prediction, last.points, self.config.mean_sizes)
        return [box for box in boxes if box is not None]


__all__ = [
    "BoundingVolume",
    "ModelConfig",
    "config_to_dict",
    "config_from_dict",
    "full_scale_config",
    "FeatureMaps",
    "QuerySet",
    "BoxPrediction",
    "IterationOutput",
    "sample_reference_points",
    "decode_boxes",
    "Detector",
]
