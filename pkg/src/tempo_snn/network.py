"""Layered adLIF spiking networks: inference, BPTT training and adaptation.

A model is kept as plain numpy arrays (:class:`NetworkModel`) so it can be
serialized and rewritten exactly.  Training and inference run in torch float64
through :class:`TorchNetwork`, which is built from a model and converted back.

Each layer normalizes its input with stored statistics, projects it with
``W`` and integrates it with one neuron per output.  Neurons are either in
adLIF form (``alpha, beta, a, b, theta`` per neuron) or, after adaptation by
a matrix method, in general form (``Hv, Hf, Hi, Hr, theta``).  The readout
is a linear map of the last layer's spikes, averaged over time.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import torch

from tempo_snn.adapt import AdaptMethod, ResolutionRatio, adapt_neuron
from tempo_snn.errors import DataError, NumericalError
from tempo_snn.neuron import AdLifParams, GeneralNeuron
from tempo_snn.normstats import NormStats, StatAdaptRule, adapt_model_norms, transform_factor
from tempo_snn.rng import Xoshiro256pp

DTYPE = torch.float64

#: Initialization ranges of the neuron parameters.
ALPHA_INIT = (math.exp(-1 / 5), math.exp(-1 / 25))
BETA_INIT = (math.exp(-1 / 30), math.exp(-1 / 120))
A_INIT = (0.0, 1.0)
B_INIT = (0.0, 2.0)
#: Open ends of the clipping ranges are kept this far inside the boundary.
CLIP_MARGIN = 1e-6


# --------------------------------------------------------------------------
# model containers


@dataclass
class AdLifBank:
    """adLIF parameters of the neurons in one layer, one entry per neuron."""

    alpha: np.ndarray
    beta: np.ndarray
    a: np.ndarray
    b: np.ndarray
    theta: np.ndarray

    form = "adlif"

    def __post_init__(self):
        arrs = [np.array(getattr(self, k), dtype=np.float64).reshape(-1) for k in ("alpha", "beta", "a", "b", "theta")]
        n = arrs[0].shape[0]
        if any(x.shape != (n,) for x in arrs):
            raise DataError("adLIF parameter arrays must have equal length")
        self.alpha, self.beta, self.a, self.b, self.theta = arrs
        for i in range(n):
            try:
                self.neuron(i)
            except ValueError as exc:
                raise DataError(f"neuron {i}: {exc}") from exc

    @classmethod
    def from_params(cls, params) -> "AdLifBank":
        ps = list(params)
        return cls(*([getattr(p, k) for p in ps] for k in ("alpha", "beta", "a", "b", "theta")))

    @property
    def size(self) -> int:
        return self.alpha.shape[0]

    def neuron(self, i: int) -> AdLifParams:
        return AdLifParams(
            float(self.alpha[i]), float(self.beta[i]), float(self.a[i]), float(self.b[i]), float(self.theta[i])
        )

    def neurons(self) -> list[AdLifParams]:
        return [self.neuron(i) for i in range(self.size)]


@dataclass
class GeneralBank:
    """General-form neurons of one layer; ``Hv`` has shape ``(size, n, n)``."""

    Hv: np.ndarray
    Hf: np.ndarray
    Hi: np.ndarray
    Hr: np.ndarray
    theta: np.ndarray

    form = "general"

    def __post_init__(self):
        self.Hv = np.array(self.Hv, dtype=np.float64)
        if self.Hv.ndim != 3 or self.Hv.shape[1] != self.Hv.shape[2]:
            raise DataError(f"Hv must have shape (size, n, n), got {self.Hv.shape}")
        size, n, _ = self.Hv.shape
        for k in ("Hf", "Hi", "Hr"):
            arr = np.array(getattr(self, k), dtype=np.float64)
            if arr.shape != (size, n):
                raise DataError(f"{k} must have shape ({size}, {n}), got {arr.shape}")
            setattr(self, k, arr)
        self.theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        if self.theta.shape != (size,):
            raise DataError("theta must have one entry per neuron")
        for k in ("Hv", "Hf", "Hi", "Hr"):
            if not np.all(np.isfinite(getattr(self, k))):
                raise DataError(f"{k} has non-finite entries")

    @classmethod
    def from_neurons(cls, neurons) -> "GeneralBank":
        ns = list(neurons)
        return cls(
            np.stack([g.Hv for g in ns]),
            np.stack([g.Hf for g in ns]),
            np.stack([g.Hi for g in ns]),
            np.stack([g.Hr for g in ns]),
            np.array([g.theta for g in ns]),
        )

    @property
    def size(self) -> int:
        return self.Hv.shape[0]

    @property
    def state_dim(self) -> int:
        return self.Hv.shape[1]

    def neuron(self, i: int) -> GeneralNeuron:
        return GeneralNeuron(self.Hv[i], self.Hf[i], self.Hi[i], self.Hr[i], float(self.theta[i]))

    def neurons(self) -> list[GeneralNeuron]:
        return [self.neuron(i) for i in range(self.size)]


@dataclass
class SpikingLayer:
    W: np.ndarray
    neurons: AdLifBank | GeneralBank
    V: np.ndarray | None = None
    norm: NormStats | None = None

    def __post_init__(self):
        self.W = np.array(self.W, dtype=np.float64)
        if self.W.ndim != 2:
            raise DataError(f"W must be a matrix, got shape {self.W.shape}")
        out, inp = self.W.shape
        if self.neurons.size != out:
            raise DataError(f"layer has {out} outputs but {self.neurons.size} neurons")
        if self.V is not None:
            self.V = np.array(self.V, dtype=np.float64)
            if self.V.shape != (out, out):
                raise DataError(f"V must have shape ({out}, {out}), got {self.V.shape}")
            if np.any(np.diag(self.V) != 0.0):
                raise DataError("recurrent weights must have a zero diagonal")
        if self.norm is not None and self.norm.channels != inp:
            raise DataError(f"norm has {self.norm.channels} channels, layer input is {inp}")

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]


@dataclass
class NetworkModel:
    layers: list[SpikingLayer]
    readout_W: np.ndarray
    readout_b: np.ndarray
    meta: dict = field(default_factory=lambda: {"dt": 1.0, "bin_size": 1, "seed": 0})

    def __post_init__(self):
        if not self.layers:
            raise DataError("a model needs at least one layer")
        for i in range(1, len(self.layers)):
            if self.layers[i].in_dim != self.layers[i - 1].out_dim:
                raise DataError(
                    f"layer {i} expects {self.layers[i].in_dim} inputs, layer {i - 1} has "
                    f"{self.layers[i - 1].out_dim} outputs"
                )
        self.readout_W = np.array(self.readout_W, dtype=np.float64)
        self.readout_b = np.array(self.readout_b, dtype=np.float64).reshape(-1)
        if self.readout_W.ndim != 2 or self.readout_W.shape[1] != self.layers[-1].out_dim:
            raise DataError("readout input size must equal the last layer size")
        if self.readout_b.shape != (self.readout_W.shape[0],):
            raise DataError("readout bias must have one entry per class")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def classes(self) -> int:
        return self.readout_W.shape[0]

    def copy(self) -> "NetworkModel":
        return copy.deepcopy(self)


def init_model(
    channels: int,
    hidden=(64, 64),
    classes: int = 2,
    recurrent: bool = False,
    seed: int = 0,
    weight_scale: float = 1.0,
) -> NetworkModel:
    """Random model with uniform weights ``±weight_scale*sqrt(3/fan_in)``."""
    rng = Xoshiro256pp(seed)

    def uniform_matrix(rows, cols, bound):
        return rng.uniform_array(-bound, bound, rows * cols).reshape(rows, cols)

    layers = []
    fan_in = channels
    for width in hidden:
        bound = weight_scale * math.sqrt(3.0 / fan_in)
        W = uniform_matrix(width, fan_in, bound)
        V = None
        if recurrent:
            V = uniform_matrix(width, width, weight_scale * math.sqrt(3.0 / width))
            np.fill_diagonal(V, 0.0)
        bank = AdLifBank(
            rng.uniform_array(*ALPHA_INIT, width),
            rng.uniform_array(*BETA_INIT, width),
            rng.uniform_array(*A_INIT, width),
            rng.uniform_array(*B_INIT, width),
            np.ones(width),
        )
        layers.append(SpikingLayer(W, bank, V, NormStats(np.zeros(fan_in), np.ones(fan_in))))
        fan_in = width
    bound = 1.0 / math.sqrt(fan_in)
    readout_W = uniform_matrix(classes, fan_in, bound)
    readout_b = rng.uniform_array(-bound, bound, classes)
    return NetworkModel(layers, readout_W, readout_b, {"dt": 1.0, "bin_size": 1, "seed": int(seed)})


# --------------------------------------------------------------------------
# torch execution


class BoxSpike(torch.autograd.Function):
    """Heaviside step whose derivative is 1 inside ``|x| < width`` and 0 elsewhere."""

    @staticmethod
    def forward(ctx, x, width):
        ctx.save_for_backward(x)
        ctx.width = width
        return (x >= 0).to(x.dtype)

    @staticmethod
    def backward(ctx, grad):
        (x,) = ctx.saved_tensors
        return grad * (x.abs() < ctx.width).to(grad.dtype), None


def _t(a) -> torch.Tensor:
    # Copy, so that training never writes through to the numpy model.
    return torch.tensor(np.asarray(a, dtype=np.float64), dtype=DTYPE)


class _Layer(torch.nn.Module):
    def __init__(self, layer: SpikingLayer, bn_momentum: float):
        super().__init__()
        self.form = layer.neurons.form
        self.W = torch.nn.Parameter(_t(layer.W))
        self.V = None if layer.V is None else torch.nn.Parameter(_t(layer.V))
        if self.V is not None:
            self.register_buffer("v_mask", 1.0 - torch.eye(layer.out_dim, dtype=DTYPE))
        self.bn = None
        if layer.norm is not None:
            ns = layer.norm
            self.bn = torch.nn.BatchNorm1d(ns.channels, eps=ns.eps, momentum=bn_momentum, dtype=DTYPE)
            with torch.no_grad():
                self.bn.running_mean.copy_(_t(ns.mu))
                self.bn.running_var.copy_(_t(ns.var))
                self.bn.weight.copy_(_t(ns.gain))
                self.bn.bias.copy_(_t(ns.bias))
        nb = layer.neurons
        if self.form == "adlif":
            for k in ("alpha", "beta", "a", "b"):
                setattr(self, k, torch.nn.Parameter(_t(getattr(nb, k))))
            self.register_buffer("theta", _t(nb.theta))
        else:
            for k in ("Hv", "Hf", "Hi", "Hr", "theta"):
                self.register_buffer(k, _t(getattr(nb, k)))

    def clip_(self):
        if self.form != "adlif":
            return
        with torch.no_grad():
            self.alpha.clamp_(CLIP_MARGIN, 1.0 - CLIP_MARGIN)
            self.beta.clamp_(CLIP_MARGIN, 1.0 - CLIP_MARGIN)
            self.a.clamp_(0.0, 1.0 - CLIP_MARGIN)
            self.b.clamp_(0.0, 2.0)
            if self.V is not None:
                self.V.mul_(self.v_mask)

    def forward(self, x, spiking: bool, width: float):
        B, T, C = x.shape
        if self.bn is not None:
            x = self.bn(x.reshape(B * T, C)).reshape(B, T, C)
        drive = x @ self.W.T
        V = None if self.V is None else self.V * self.v_mask
        if self.form == "adlif":
            return self._run_adlif(drive, V, spiking, width)
        return self._run_general(drive, V, spiking, width)

    def _run_adlif(self, drive, V, spiking, width):
        B, T, N = drive.shape
        alpha, beta, a, b, theta = self.alpha, self.beta, self.a, self.b, self.theta
        reset = torch.where(torch.isinf(theta), torch.zeros_like(theta), theta)  # no reset for theta = inf
        u = drive.new_zeros(B, N)
        w = drive.new_zeros(B, N)
        out = []
        for t in range(T):
            cur = drive[:, t]
            if spiking:
                s = BoxSpike.apply(u - theta, width)
                if V is not None:
                    cur = cur + s @ V.T
                u_next = alpha * (u - reset * s) + (1 - alpha) * cur - (1 - alpha) * w
                w = a * u + beta * w + b * s
                out.append(s)
            else:
                u_next = alpha * u + (1 - alpha) * cur - (1 - alpha) * w
                w = a * u + beta * w
                out.append(u)
            u = u_next
        return torch.stack(out, dim=1)

    def _run_general(self, drive, V, spiking, width):
        B, T, N = drive.shape
        Hv, Hf, Hi, Hr, theta = self.Hv, self.Hf, self.Hi, self.Hr, self.theta
        v = drive.new_zeros(B, N, Hv.shape[1])
        out = []
        for t in range(T):
            nxt = torch.einsum("nij,bnj->bni", Hv, v) + Hi * drive[:, t, :, None]
            if spiking:
                s = BoxSpike.apply(v[..., 0] - theta, width)
                nxt = nxt + Hf * s[..., None]
                if V is not None:
                    nxt = nxt + Hr * (s @ V.T)[..., None]
                out.append(s)
            else:
                out.append(v[..., 0])
            v = nxt
        return torch.stack(out, dim=1)

    def to_layer(self) -> SpikingLayer:
        W = self.W.detach().numpy().copy()
        V = None if self.V is None else (self.V * self.v_mask).detach().numpy().copy()
        norm = None
        if self.bn is not None:
            norm = NormStats(
                self.bn.running_mean.detach().numpy().copy(),
                self.bn.running_var.detach().numpy().copy(),
                self.bn.eps,
                self.bn.weight.detach().numpy().copy(),
                self.bn.bias.detach().numpy().copy(),
            )
        if self.form == "adlif":
            bank = AdLifBank(*(getattr(self, k).detach().numpy().copy() for k in ("alpha", "beta", "a", "b", "theta")))
        else:
            bank = GeneralBank(*(getattr(self, k).detach().numpy().copy() for k in ("Hv", "Hf", "Hi", "Hr", "theta")))
        return SpikingLayer(W, bank, V, norm)


class TorchNetwork(torch.nn.Module):
    """Differentiable twin of a :class:`NetworkModel`."""

    def __init__(self, model: NetworkModel, bn_momentum: float = 0.1, surrogate_width: float = 0.5):
        super().__init__()
        self.layers = torch.nn.ModuleList([_Layer(ly, bn_momentum) for ly in model.layers])
        self.readout = torch.nn.Linear(model.readout_W.shape[1], model.classes, dtype=DTYPE)
        with torch.no_grad():
            self.readout.weight.copy_(_t(model.readout_W))
            self.readout.bias.copy_(_t(model.readout_b))
        self.meta = dict(model.meta)
        self.surrogate_width = surrogate_width

    def forward(self, x: torch.Tensor, spiking: bool = True, record: bool = False):
        """``x`` has shape ``(batch, time, channels)``; returns class scores."""
        records = []
        h = x
        for layer in self.layers:
            h = layer(h, spiking, self.surrogate_width)
            if record:
                records.append(h)
        scores = self.readout(h.mean(dim=1))
        return (scores, records) if record else scores

    def clip_(self):
        for layer in self.layers:
            layer.clip_()

    def to_model(self) -> NetworkModel:
        return NetworkModel(
            [ly.to_layer() for ly in self.layers],
            self.readout.weight.detach().numpy().copy(),
            self.readout.bias.detach().numpy().copy(),
            dict(self.meta),
        )


def _stack(dataset, channels: int):
    items = list(dataset)
    if not items:
        raise DataError("empty dataset")
    lengths = {x.timesteps for x, _ in items}
    if len(lengths) != 1:
        raise DataError(f"samples must share one length, got {sorted(lengths)}")
    for x, _ in items:
        if x.channels != channels:
            raise DataError(f"sample has {x.channels} channels, model expects {channels}")
    xs = torch.as_tensor(np.stack([x.counts.T for x, _ in items]).astype(np.float64), dtype=DTYPE)
    ys = torch.as_tensor(np.array([int(y) for _, y in items], dtype=np.int64))
    return xs, ys


def forward(model: NetworkModel, x, spiking: bool = True):
    """Run one sample; returns ``(scores, per-layer records)`` as numpy arrays.

    Records have shape ``(time, neurons)``: spikes, or pre-update membrane
    potentials when ``spiking`` is false.
    """
    if x.channels != model.in_dim:
        raise DataError(f"input has {x.channels} channels, model expects {model.in_dim}")
    net = TorchNetwork(model).eval()
    xt = torch.as_tensor(x.counts.T[None].astype(np.float64), dtype=DTYPE)
    with torch.no_grad():
        scores, recs = net(xt, spiking=spiking, record=True)
    return scores[0].numpy(), [r[0].numpy() for r in recs]


def predict_scores(model: NetworkModel, dataset, batch_size: int = 256) -> np.ndarray:
    xs, _ = _stack(dataset, model.in_dim)
    net = TorchNetwork(model).eval()
    out = []
    with torch.no_grad():
        for i in range(0, xs.shape[0], batch_size):
            out.append(net(xs[i : i + batch_size]))
    return torch.cat(out).numpy()


def evaluate(model: NetworkModel, dataset) -> float:
    """Top-1 accuracy; ties go to the lowest class index."""
    items = list(dataset)
    scores = predict_scores(model, items)
    labels = np.array([int(y) for _, y in items])
    return float(np.mean(np.argmax(scores, axis=1) == labels))


# --------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    lr: float = 0.01
    lr_step: int = 10
    lr_gamma: float = 0.1
    weight_decay: float = 1e-4
    batch_size: int = 32
    surrogate_width: float = 0.5
    bn_momentum: float = 0.1
    patience: int = 10
    min_delta: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        for k in ("epochs", "batch_size", "lr_step", "patience"):
            if getattr(self, k) < 1:
                raise ValueError(f"{k} must be at least 1")
        for k in ("lr_gamma", "surrogate_width", "min_delta"):
            if not getattr(self, k) > 0:
                raise ValueError(f"{k} must be positive")
        if self.lr < 0 or self.weight_decay < 0:
            raise ValueError("lr and weight_decay must be nonnegative")


def train(model: NetworkModel, dataset, cfg: TrainConfig = TrainConfig(), validation=None):
    """Train with BPTT through the box surrogate; returns ``(model, history)``.

    ``history`` holds one dict per epoch with the mean training loss and,
    when ``validation`` is given, the validation loss used for early stopping
    (stop once the loss has not improved by ``min_delta`` for ``patience``
    consecutive epochs).
    """
    if any(ly.neurons.form != "adlif" for ly in model.layers):
        raise DataError("training requires adLIF-form layers")
    xs, ys = _stack(dataset, model.in_dim)
    val = _stack(validation, model.in_dim) if validation is not None else None
    net = TorchNetwork(model, cfg.bn_momentum, cfg.surrogate_width)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=cfg.lr_step, gamma=cfg.lr_gamma)
    loss_fn = torch.nn.CrossEntropyLoss()
    rng = Xoshiro256pp(cfg.seed)
    history = []
    best, stale = math.inf, 0
    n = xs.shape[0]
    for epoch in range(cfg.epochs):
        net.train()
        order = list(range(n))
        rng.shuffle(order)
        total = 0.0
        for i in range(0, n, cfg.batch_size):
            # Sorting inside the batch keeps reduction order independent of the shuffle.
            idx = torch.as_tensor(sorted(order[i : i + cfg.batch_size]))
            opt.zero_grad()
            loss = loss_fn(net(xs[idx]), ys[idx])
            if not torch.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {i // cfg.batch_size}")
            loss.backward()
            opt.step()
            net.clip_()
            total += loss.item() * idx.shape[0]
        sched.step()
        entry = {"epoch": epoch, "train_loss": total / n}
        if val is not None:
            net.eval()
            with torch.no_grad():
                vloss = loss_fn(net(val[0]), val[1]).item()
            entry["val_loss"] = vloss
            if vloss < best - cfg.min_delta:
                best, stale = vloss, 0
            else:
                stale += 1
        history.append(entry)
        if val is not None and stale >= cfg.patience:
            break
    out = net.to_model()
    out.meta = dict(model.meta)
    return out, history


# --------------------------------------------------------------------------
# adaptation


def adapt_model(
    model: NetworkModel,
    method: AdaptMethod,
    r: ResolutionRatio,
    rule: StatAdaptRule | None = StatAdaptRule(),
) -> NetworkModel:
    """Rewrite every neuron for ratio ``r`` and adapt the first normalization.

    The matrix methods leave the layers in general form.  Weights and the
    readout are copied unchanged.  ``rule=None`` skips the statistics.
    """
    out = model.copy()
    if not r.is_identity():
        for li, layer in enumerate(out.layers):
            if method is AdaptMethod.NONE:
                continue
            bank = layer.neurons
            if method is AdaptMethod.TIME_CONSTANT:
                if bank.form != "adlif":
                    raise DataError(
                        f"layer {li}: time-constant requires explicit Δ-dependence, "
                        "but the neurons are in general form"
                    )
                layer.neurons = AdLifBank.from_params(adapt_neuron(p, method, r) for p in bank.neurons())
            else:
                layer.neurons = GeneralBank.from_neurons(adapt_neuron(p, method, r) for p in bank.neurons())
        if rule is not None:
            out = adapt_model_norms(out, rule, transform_factor(rule, r.rho))
    out.meta["dt"] = float(model.meta.get("dt", 1.0)) * r.rho
    if "bin_size" in model.meta:
        b = Fraction(model.meta["bin_size"]) * r.value
        out.meta["bin_size"] = b.numerator if b.denominator == 1 else float(b)
    return out
