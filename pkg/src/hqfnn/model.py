"""HQFNN / FDNN / CNN / DNN assemblies, the training loop and checkpoints.

The fuzzy models run two branches on the same input: a membership + product-rule
branch followed by a linear map to ``hidden`` units, and a neural branch (CNN for
images, three dense layers for feature vectors). Their outputs are added and fed
to a linear classifier. ``cnn`` and ``dnn`` keep only the neural branch.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .data import BatchPlan, Dataset, batches, split
from .errors import InvalidArgument, NumericFailure, ParseError, UnsupportedVersion
from .fuzzy import GaussianFuzzyLayer, QuantumFuzzyLayer, fuzzy_backward, fuzzy_forward
from .metrics import ConfusionMatrix, MetricBundle, macro_metrics

log = logging.getLogger(__name__)

KINDS = ("hqfnn", "fdnn", "cnn", "dnn")
IMAGE_SHAPE = (1, 28, 28)


@dataclass
class ModelSpec:
    kind: str = "hqfnn"
    input_kind: str = "image"     # "image" (1x28x28) or "feature"
    input_dim: int = 784
    classes: int = 10
    hidden: int | None = None     # 128 for images, 256 for features
    fuzzy_sets: int | None = None  # defaults to classes
    qnn_layers: int = 2
    qnn_qubits: int = 1
    dropout_p: float = 0.4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.input_kind not in ("image", "feature"):
            raise InvalidArgument(f"unknown input kind {self.input_kind!r}")
        if self.input_kind == "image":
            self.input_dim = int(np.prod(IMAGE_SHAPE))
        if self.hidden is None:
            self.hidden = 128 if self.input_kind == "image" else 256
        if self.fuzzy_sets is None:
            self.fuzzy_sets = self.classes
        if self.classes < 2 or self.input_dim < 1 or self.hidden < 1:
            raise InvalidArgument("classes must be >= 2 and dims positive")

    @property
    def fuzzy(self) -> bool:
        return self.kind in ("hqfnn", "fdnn")


@dataclass
class TrainConfig:
    epochs: int = 200
    batch: int = 128
    lr: float = 0.01
    decay: float = 0.1
    milestone_fraction: float = 0.58
    seed: int = 0
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 1 or self.batch < 1 or self.lr <= 0:
            raise InvalidArgument("epochs, batch and lr must be positive")

    @property
    def milestones(self) -> list[int]:
        m = nn.milestone_for(self.epochs, self.milestone_fraction)
        return [m] if 0 < m < self.epochs else []


class Model:
    def __init__(self, spec: ModelSpec, seed: int = 0):
        self.spec = spec
        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {}
        self.fuzzy_layer = None
        self._build_neural(rng)
        if spec.fuzzy:
            if spec.kind == "hqfnn":
                self.fuzzy_layer = QuantumFuzzyLayer(spec.fuzzy_sets, spec.input_dim,
                                                     layers=spec.qnn_layers,
                                                     qubits=spec.qnn_qubits, rng=rng)
            else:
                self.fuzzy_layer = GaussianFuzzyLayer(spec.fuzzy_sets, spec.input_dim, rng=rng)
            for name, arr in self.fuzzy_layer.params().items():
                self.params[f"fuzzy.{name}"] = arr
            self._dense("fusion", spec.fuzzy_sets, spec.hidden, rng, nn.init_uniform_inverse_sqrt)
        self._dense("classifier", spec.hidden, spec.classes, rng, nn.init_uniform_inverse_sqrt)

    # -- construction

    def _dense(self, name, fan_in, fan_out, rng, init):
        self.params[f"{name}.w"] = init(fan_in).sample(rng, (fan_out, fan_in))
        self.params[f"{name}.b"] = np.zeros(fan_out)

    def _build_neural(self, rng):
        s = self.spec
        if s.input_kind == "image":
            for name, cin, cout in (("conv1", 1, 10), ("conv2", 10, 20)):
                fan = cin * 25
                self.params[f"{name}.w"] = nn.init_kaiming_uniform(fan).sample(rng, (cout, cin, 5, 5))
                self.params[f"{name}.b"] = np.zeros(cout)
            self._dense("fc", 320, s.hidden, rng, nn.init_kaiming_uniform)
        else:
            dims = [s.input_dim, s.hidden, s.hidden, s.hidden]
            for i in range(3):
                self._dense(f"dense{i + 1}", dims[i], dims[i + 1], rng, nn.init_kaiming_uniform)

    def sync_fuzzy(self):
        """Point the fuzzy layer at the arrays in ``params`` (after a reload)."""
        if self.fuzzy_layer is None:
            return
        if isinstance(self.fuzzy_layer, QuantumFuzzyLayer):
            self.fuzzy_layer.thetas = self.params["fuzzy.thetas"]
        else:
            self.fuzzy_layer.means = self.params["fuzzy.means"]
            self.fuzzy_layer.sigmas = self.params["fuzzy.sigmas"]

    # -- forward / backward

    def _check_input(self, x):
        x = np.asarray(x, dtype=float)
        want = IMAGE_SHAPE if self.spec.input_kind == "image" else (self.spec.input_dim,)
        if x.ndim == 2 and self.spec.input_kind == "image" and x.shape[1] == 784:
            x = x.reshape(-1, *IMAGE_SHAPE)
        if x.shape[1:] != want:
            raise InvalidArgument(f"expected inputs of shape (batch, {want}), got {x.shape}")
        return x

    def _neural_forward(self, x, cache, training, rng):
        p = self.params
        drop = nn.DropoutSpec(self.spec.dropout_p, training)
        if self.spec.input_kind == "image":
            h = x
            for name in ("conv1", "conv2"):
                cache[f"{name}.in"] = h
                z = nn.conv2d_forward(p[f"{name}.w"], h, p[f"{name}.b"])
                cache[f"{name}.z"] = z
                h, cache[f"{name}.arg"] = nn.maxpool2(nn.relu(z))
            cache["flat.shape"] = h.shape
            layers = ["fc"]
            h = h.reshape(len(h), -1)
        else:
            layers = ["dense1", "dense2", "dense3"]
            h = x
        for name in layers:
            cache[f"{name}.in"] = h
            z = nn.dense_forward(p[f"{name}.w"], p[f"{name}.b"], h)
            cache[f"{name}.z"] = z
            h, cache[f"{name}.mask"] = nn.dropout(nn.relu(z), drop, rng)
        cache["neural.layers"] = layers
        return h

    def _neural_backward(self, cache, dh, grads):
        p = self.params
        for name in reversed(cache["neural.layers"]):
            dz = nn.relu_backward(cache[f"{name}.z"], nn.dropout_backward(cache[f"{name}.mask"], dh))
            grads[f"{name}.w"], grads[f"{name}.b"], dh = nn.dense_backward(
                p[f"{name}.w"], cache[f"{name}.in"], dz)
        if self.spec.input_kind == "image":
            dh = dh.reshape(cache["flat.shape"])
            for name in ("conv2", "conv1"):
                dz = nn.relu_backward(cache[f"{name}.z"], nn.maxpool2_backward(cache[f"{name}.arg"], dh))
                grads[f"{name}.w"], grads[f"{name}.b"], dh = nn.conv2d_backward(
                    p[f"{name}.w"], cache[f"{name}.in"], dz)

    def forward(self, x, training=False, rng=None, cache=None):
        """Logits for a batch. Pass a dict as ``cache`` to keep what backward needs."""
        x = self._check_input(x)
        cache = {} if cache is None else cache
        feat = self._neural_forward(x, cache, training, rng)
        if self.fuzzy_layer is not None:
            acts = fuzzy_forward(self.fuzzy_layer, x.reshape(len(x), -1))
            cache["fuzzy"] = acts
            feat = feat + nn.dense_forward(self.params["fusion.w"], self.params["fusion.b"], acts.rule)
        cache["fused"] = feat
        return nn.dense_forward(self.params["classifier.w"], self.params["classifier.b"], feat)

    def predict(self, x, batch=256) -> np.ndarray:
        x = np.asarray(x)
        out = [np.argmax(self.forward(x[i:i + batch]), axis=1) for i in range(0, len(x), batch)]
        return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)

    def backward(self, cache, dlogits) -> dict[str, np.ndarray]:
        p = self.params
        grads = {}
        grads["classifier.w"], grads["classifier.b"], dfused = nn.dense_backward(
            p["classifier.w"], cache["fused"], dlogits)
        if self.fuzzy_layer is not None:
            acts = cache["fuzzy"]
            grads["fusion.w"], grads["fusion.b"], drule = nn.dense_backward(
                p["fusion.w"], acts.rule, dfused)
            for name, g in fuzzy_backward(acts, drule).items():
                grads[f"fuzzy.{name}"] = g
        self._neural_backward(cache, dfused, grads)
        return grads

    def loss_and_grads(self, x, onehot, training=False, rng=None):
        cache = {}
        logits = self.forward(x, training=training, rng=rng, cache=cache)
        loss, dlogits = nn.softmax_cross_entropy(logits, onehot)
        return loss, self.backward(cache, dlogits), logits


def forward(model: Model, x):
    """Logits and predicted labels."""
    logits = model.forward(x)
    return logits, np.argmax(logits, axis=1)


# ---------------------------------------------------------------- checkpoints

MAGIC = b"HQFN"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    spec: ModelSpec
    params: dict
    epoch: int = 0
    rng_state: dict | None = None
    lr_state: dict | None = None

    @classmethod
    def from_model(cls, model, epoch=0, rng=None, sgd=None):
        return cls(
            spec=model.spec,
            params={k: v.copy() for k, v in model.params.items()},
            epoch=epoch,
            rng_state=rng.bit_generator.state if rng is not None else None,
            lr_state=asdict(sgd) if sgd is not None else None,
        )

    def to_model(self) -> Model:
        model = Model(self.spec)
        if set(model.params) != set(self.params):
            raise InvalidArgument("checkpoint parameters do not match its model spec")
        for k, v in self.params.items():
            if model.params[k].shape != v.shape:
                raise InvalidArgument(f"checkpoint tensor {k} has shape {v.shape}")
            model.params[k] = np.array(v, dtype=float)
        model.sync_fuzzy()
        return model


def _encode(ckpt: Checkpoint) -> bytes:
    meta = {"spec": asdict(ckpt.spec), "epoch": ckpt.epoch,
            "rng_state": ckpt.rng_state, "lr_state": ckpt.lr_state}
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    out = [MAGIC, struct.pack("<I", FORMAT_VERSION),
           struct.pack("<I", len(meta_bytes)), meta_bytes,
           struct.pack("<I", len(ckpt.params))]
    for name in sorted(ckpt.params):
        arr = np.ascontiguousarray(ckpt.params[name], dtype="<f8")
        key = name.encode()
        out.append(struct.pack("<I", len(key)) + key)
        out.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(_encode(ckpt))


class _Reader:
    def __init__(self, raw):
        self.raw, self.pos = raw, 0

    def take(self, n, what):
        if self.pos + n > len(self.raw):
            raise ParseError(f"truncated checkpoint while reading {what}", self.pos)
        chunk = self.raw[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]


def load_checkpoint(path) -> Checkpoint:
    r = _Reader(Path(path).read_bytes())
    if r.take(4, "magic") != MAGIC:
        raise ParseError("not a checkpoint file (bad magic)", 0)
    version = r.u32("version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"unsupported checkpoint version {version}", 4)
    meta_at = r.pos
    try:
        meta = json.loads(r.take(r.u32("metadata length"), "metadata"))
        spec = ModelSpec(**meta["spec"])
    except (ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"corrupt checkpoint metadata ({exc})", meta_at) from None
    params = {}
    for _ in range(r.u32("record count")):
        at = r.pos
        try:
            name = r.take(r.u32("name length"), "name").decode()
        except UnicodeDecodeError:
            raise ParseError("corrupt tensor name", at) from None
        ndim = r.u32("rank")
        shape = struct.unpack(f"<{ndim}Q", r.take(8 * ndim, "shape"))
        count = int(np.prod(shape)) if ndim else 1
        values = np.frombuffer(r.take(8 * count, f"tensor {name}"), dtype="<f8")
        params[name] = values.astype(float).reshape(shape)
    if r.pos != len(r.raw):
        raise ParseError("trailing bytes after last record", r.pos)
    return Checkpoint(spec, params, meta["epoch"], meta["rng_state"], meta["lr_state"])


# ---------------------------------------------------------------- training

@dataclass
class TrainResult:
    trace: list = field(default_factory=list)  # dicts: epoch, loss, train_acc, val_acc
    checkpoint: Checkpoint | None = None
    val: Dataset | None = None


def evaluate(model: Model, ds: Dataset) -> tuple[ConfusionMatrix, MetricBundle]:
    if len(ds) == 0:
        raise InvalidArgument("cannot evaluate on an empty dataset")
    k = model.spec.classes
    if ds.labels.min() < 0 or ds.labels.max() >= k:
        raise InvalidArgument(f"dataset labels fall outside [0, {k})")
    cm = ConfusionMatrix.from_predictions(ds.labels, model.predict(ds.inputs), k)
    return cm, macro_metrics(cm)


def train(model: Model, dataset: Dataset, cfg: TrainConfig, progress=None) -> TrainResult:
    """Mini-batch SGD on the printed loss; returns per-epoch trace and final checkpoint.

    ``cfg.val_fraction`` of the data (seeded) is held out for the validation trace.
    """
    if len(dataset) == 0:
        raise InvalidArgument("training dataset is empty")
    k = model.spec.classes
    if dataset.labels.min() < 0 or dataset.labels.max() >= k:
        raise InvalidArgument(f"labels must lie in [0, {k})")
    dataset = Dataset(dataset.inputs, dataset.labels, dataset.kind, k)
    if cfg.val_fraction and len(dataset) >= 2:
        train_ds, val_ds = split(dataset, 1 - cfg.val_fraction, seed=cfg.seed)
    else:
        train_ds, val_ds = dataset, None
    plan = BatchPlan(cfg.seed, cfg.batch)
    sgd = nn.SgdState(initial_lr=cfg.lr, decay_factor=cfg.decay, milestones=cfg.milestones)
    rng = np.random.default_rng([cfg.seed, 1])
    names = list(model.params)
    result = TrainResult(val=val_ds)
    for epoch in range(1, cfg.epochs + 1):
        total_loss, correct = 0.0, 0
        for x, y in batches(train_ds, plan, epoch):
            loss, grads, logits = model.loss_and_grads(x, y, training=True, rng=rng)
            if not np.isfinite(loss):
                raise NumericFailure("non-finite loss", epoch)
            nn.sgd_step([model.params[n] for n in names], [grads[n] for n in names], sgd, epoch)
            total_loss += loss * len(x)
            correct += int(np.sum(np.argmax(logits, 1) == np.argmax(y, 1)))
        row = {"epoch": epoch, "loss": total_loss / len(train_ds),
               "train_acc": correct / len(train_ds),
               "val_acc": evaluate(model, val_ds)[1].accuracy if val_ds is not None and len(val_ds) else float("nan")}
        result.trace.append(row)
        log.info("epoch %d loss %.6f train_acc %.4f val_acc %.4f lr %g",
                 epoch, row["loss"], row["train_acc"], row["val_acc"], sgd.lr)
        if progress:
            progress(row)
    result.checkpoint = Checkpoint.from_model(model, cfg.epochs, rng, sgd)
    return result
