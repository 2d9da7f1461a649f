"""Experiment generators and runners.

* The single-neuron study drives random adLIF neurons with a sum of
  sinusoids. It compares the membrane trace at one resolution against an
  adapted neuron run at the other resolution.
* A synthetic classification task encodes the class in the temporal order
  of bursts on groups of input channels.
* The end-to-end study trains at one bin size and deploys at another.

Every random draw comes from :class:`~tempo_snn.rng.Xoshiro256pp` with a
per-task seed derived from the master seed, so results do not depend on how
tasks are spread over worker processes.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import permutations

import numpy as np

from tempo_snn.adapt import AdaptMethod, ResolutionRatio, adapt_neuron
from tempo_snn.errors import NumericalError
from tempo_snn.metrics import q_metrics, subsample
from tempo_snn.network import TrainConfig, adapt_model, evaluate, init_model, train
from tempo_snn.neuron import AdLifParams, adlif_to_general, simulate
from tempo_snn.normstats import StatAdaptRule
from tempo_snn.resample import ResampleKind, SpikeTensor, resample_dataset, sum_bin
from tempo_snn.rng import Xoshiro256pp, derive_seed

FINE_TO_COARSE = "fine2coarse"
COARSE_TO_FINE = "coarse2fine"
_DIRECTION_ALIASES = {
    "fine2coarse": FINE_TO_COARSE,
    "fine-to-coarse": FINE_TO_COARSE,
    "b1->b2": FINE_TO_COARSE,
    "coarse2fine": COARSE_TO_FINE,
    "coarse-to-fine": COARSE_TO_FINE,
    "b2->b1": COARSE_TO_FINE,
}
ALL_METHODS = (
    AdaptMethod.NONE,
    AdaptMethod.INTEGRAL,
    AdaptMethod.EULER,
    AdaptMethod.EXPECTATION,
    AdaptMethod.TIME_CONSTANT,
)


def parse_direction(text: str) -> str:
    try:
        return _DIRECTION_ALIASES[text.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown direction {text!r}; use fine2coarse or coarse2fine") from None


def resolve_jobs(jobs: int | None = None) -> int:
    """``jobs`` if given, else ``$TEMPO_SNN_JOBS``, else 1."""
    if jobs is None:
        env = os.environ.get("TEMPO_SNN_JOBS", "").strip()
        jobs = int(env) if env else 1
    if jobs < 1:
        raise ValueError(f"jobs must be at least 1, got {jobs}")
    return jobs


def _init_worker():
    import torch

    torch.set_num_threads(1)


def _map(fn, tasks: list, jobs: int) -> list:
    """Ordered map, optionally over a process pool."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks)), initializer=_init_worker) as pool:
        return list(pool.map(fn, tasks))


# --------------------------------------------------------------------------
# single-neuron study


@dataclass(frozen=True)
class SinExcitation:
    K: int = 3
    amplitude: tuple[float, float] = (0.1, 0.2)
    frequency: tuple[float, float] = (1.0, 10.0)
    phase_divisor: tuple[float, float] = (1.0, 20.0)
    T: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.T < 0:
            raise ValueError("K must be positive and T nonnegative")
        for name in ("amplitude", "frequency", "phase_divisor"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is empty")
        if self.phase_divisor[0] <= 0:
            raise ValueError("phase divisors must be positive")


def gen_sin_input(cfg: SinExcitation) -> np.ndarray:
    """``i[t] = sum_k A_k sin(w_k t + pi/phi)`` on ``t = 0..T`` (``T+1`` samples).

    Draw order: the K amplitudes, the K frequencies, then the phase divisor
    shared by all components.
    """
    rng = Xoshiro256pp(cfg.seed)
    amp = np.array([rng.uniform(*cfg.amplitude) for _ in range(cfg.K)])
    freq = np.array([rng.uniform(*cfg.frequency) for _ in range(cfg.K)])
    phi = rng.uniform(*cfg.phase_divisor)
    t = np.arange(cfg.T + 1, dtype=np.float64)
    return (amp[:, None] * np.sin(freq[:, None] * t + math.pi / phi)).sum(axis=0)


DECAY_RANGE = (0.6, 0.98)
COUPLING_RANGE = (0.2, 0.5)


def random_adlif(seed: int, decay_sampling: str = "time_constant", theta: float = 1.0) -> AdLifParams:
    """Random neuron with decays in [0.6, 0.98] and a, b in [0.2, 0.5].

    With ``decay_sampling="time_constant"`` the time constant ``tau`` of each
    decay is drawn uniformly, over the interval whose decays ``exp(-1/tau)``
    span the decay range.  ``"uniform"`` draws the decays themselves
    uniformly.
    """
    rng = Xoshiro256pp(seed)
    lo, hi = DECAY_RANGE
    if decay_sampling == "time_constant":
        tlo, thi = -1.0 / math.log(lo), -1.0 / math.log(hi)
        alpha = math.exp(-1.0 / rng.uniform(tlo, thi))
        beta = math.exp(-1.0 / rng.uniform(tlo, thi))
    elif decay_sampling == "uniform":
        alpha = rng.uniform(lo, hi)
        beta = rng.uniform(lo, hi)
    else:
        raise ValueError(f"unknown decay sampling {decay_sampling!r}")
    a = rng.uniform(*COUPLING_RANGE)
    b = rng.uniform(*COUPLING_RANGE)
    return AdLifParams(alpha, beta, a, b, theta)


@dataclass(frozen=True)
class StudyConfig:
    """Settings of the single-neuron study besides pair count, direction and seed.

    ``coarse_input="mean"`` feeds the coarse neuron the window mean of the
    excitation (the amplitude-preserving choice, analogous to adapting the
    input normalization); ``"sum"`` feeds the raw window sum.
    """

    coarse_input: str = "mean"
    decay_sampling: str = "time_constant"
    theta: float = 1.0
    T: int = 100

    def __post_init__(self):
        if self.coarse_input not in ("mean", "sum"):
            raise ValueError("coarse_input must be 'mean' or 'sum'")


def _adapted(p: AdLifParams, method: AdaptMethod, r: ResolutionRatio):
    out = adapt_neuron(p, method, r)
    return adlif_to_general(out) if isinstance(out, AdLifParams) else out


def pair_traces(seed: int, direction: str, methods=ALL_METHODS, cfg: StudyConfig = StudyConfig()):
    """Reference and candidate membrane traces for one (input, neuron) pair.

    Returns ``(reference, {method: candidate or exception}, scale)`` where all
    traces live on the coarse grid; ``scale`` normalizes Q1 and is
    the subsampled fine-resolution trace of the same run.
    """
    direction = parse_direction(direction)
    excitation = gen_sin_input(SinExcitation(T=cfg.T, seed=derive_seed(seed, 0)))
    p = random_adlif(derive_seed(seed, 1), cfg.decay_sampling, cfg.theta)
    n = (excitation.shape[0] // 2) * 2
    fine = excitation[:n]
    coarse = sum_bin(fine, 2)
    if cfg.coarse_input == "mean":
        coarse = coarse / 2.0
    source = adlif_to_general(p)
    candidates = {}
    if direction == FINE_TO_COARSE:
        r = ResolutionRatio.parse(2)
        reference = subsample(simulate(source, fine, record="post")[0][:, 0], 2)
        scales = {}
        for m in methods:
            try:
                candidates[m] = simulate(_adapted(p, m, r), coarse, record="post")[0][:, 0]
            except NumericalError as exc:
                candidates[m] = exc
            scales[m] = reference
    else:
        r = ResolutionRatio.parse("1/2")
        reference = simulate(source, coarse, record="post")[0][:, 0]
        scales = {}
        for m in methods:
            try:
                candidates[m] = subsample(simulate(_adapted(p, m, r), fine, record="post")[0][:, 0], 2)
                scales[m] = candidates[m]
            except NumericalError as exc:
                candidates[m] = exc
    return reference, candidates, scales


def _pair_task(args):
    seed, direction, methods, cfg = args
    reference, candidates, scales = pair_traces(seed, direction, methods, cfg)
    out = {}
    for m in methods:
        c = candidates[m]
        if isinstance(c, Exception):
            out[m.value] = None
            continue
        try:
            out[m.value] = q_metrics(reference, c, scale=scales[m])
        except ValueError:
            out[m.value] = None
    return out


@dataclass
class MethodStats:
    q1_mean: float
    q1_std: float
    q2_mean: float
    q2_std: float
    n_ok: int
    n_failed: int


@dataclass
class ExperimentReport:
    direction: str
    seed: int
    n: int
    methods: dict[str, MethodStats] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "direction": self.direction,
            "seed": self.seed,
            "n": self.n,
            "config": self.config,
            "methods": {k: asdict(v) for k, v in self.methods.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        title = "fine-to-coarse (b=1 -> b=2)" if self.direction == FINE_TO_COARSE else "coarse-to-fine (b=2 -> b=1)"
        rows = [f"{title}, n={self.n}, seed={self.seed}", f"{'Method':<15}{'Q1':>15}{'Q2':>15}"]
        for name, st in self.methods.items():
            q1 = f"{st.q1_mean:.2f} ± {st.q1_std:.2f}"
            q2 = f"{st.q2_mean:.2f} ± {st.q2_std:.2f}"
            fail = f"  ({st.n_failed} failed)" if st.n_failed else ""
            rows.append(f"{name:<15}{q1:>15}{q2:>15}{fail}")
        return "\n".join(rows) + "\n"


def _std(x: np.ndarray) -> float:
    return float(np.std(x, ddof=1)) if x.shape[0] > 1 else 0.0


def single_neuron_experiment(
    n_pairs: int,
    direction: str,
    methods=ALL_METHODS,
    seed: int = 0,
    cfg: StudyConfig = StudyConfig(),
    jobs: int | None = None,
) -> ExperimentReport:
    """Mean and standard deviation of Q1/Q2 per method over ``n_pairs`` pairs.

    Pairs whose adaptation fails numerically are skipped and counted.
    Standard deviations use the sample (``n-1``) convention.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be at least 1")
    direction = parse_direction(direction)
    methods = tuple(methods)
    tasks = [(derive_seed(seed, k), direction, methods, cfg) for k in range(n_pairs)]
    jobs = resolve_jobs(jobs)
    if jobs > 1:
        chunk = math.ceil(n_pairs / jobs)
        parts = _map(_pair_chunk, [tasks[i : i + chunk] for i in range(0, n_pairs, chunk)], jobs)
        results = [r for part in parts for r in part]
    else:
        results = [_pair_task(t) for t in tasks]
    report = ExperimentReport(direction, int(seed), n_pairs, config=asdict(cfg))
    for m in methods:
        vals = [r[m.value] for r in results if r[m.value] is not None]
        failed = n_pairs - len(vals)
        arr = np.array(vals, dtype=np.float64).reshape(-1, 2)
        if arr.shape[0] == 0:
            report.methods[m.value] = MethodStats(math.nan, math.nan, math.nan, math.nan, 0, failed)
            continue
        report.methods[m.value] = MethodStats(
            float(arr[:, 0].mean()), _std(arr[:, 0]), float(arr[:, 1].mean()), _std(arr[:, 1]), len(vals), failed
        )
    return report


def _pair_chunk(tasks):
    return [_pair_task(t) for t in tasks]


# --------------------------------------------------------------------------
# synthetic classification data


def class_orders(classes: int, groups: int) -> list[tuple[int, ...]]:
    """Distinct burst orders of the channel groups, one per class."""
    perms = list(permutations(range(groups)))
    if classes > len(perms):
        raise ValueError(f"{groups} groups allow at most {len(perms)} classes")
    return [perms[(k * len(perms)) // classes] for k in range(classes)]


def gen_synthetic_dataset(
    classes: int,
    samples_per_class: int,
    channels: int,
    timesteps: int,
    seed: int,
    groups: int = 4,
    burst_rate: float = 0.6,
    background_rate: float = 0.02,
    jitter: int = 2,
):
    """Balanced list of ``(SpikeTensor, label)`` pairs at ``dt = 1``.

    Channels are split into ``groups`` contiguous groups and the sequence
    into ``groups`` slots.  In class ``c`` group ``order_c[k]`` emits a
    Poisson burst of half a slot in slot ``k`` (onset jittered by up to
    ``jitter`` steps), on top of a weak background.  All classes use every
    group exactly once, so only the timing tells them apart.  Samples are
    shuffled.
    """
    if min(classes, samples_per_class, channels, timesteps, groups) < 1:
        raise ValueError("all counts must be at least 1")
    if groups > channels or groups > timesteps:
        raise ValueError("need at least one channel and one timestep per group")
    rng = Xoshiro256pp(seed)
    orders = class_orders(classes, groups)
    bounds = [(g * channels) // groups for g in range(groups + 1)]
    slot = timesteps // groups
    width = max(1, slot // 2)
    data = []
    for c in range(classes):
        for _ in range(samples_per_class):
            lam = np.full((channels, timesteps), background_rate)
            for k, g in enumerate(orders[c]):
                onset = k * slot + rng.integers(2 * jitter + 1) - jitter
                onset = min(max(onset, 0), timesteps - width)
                lam[bounds[g] : bounds[g + 1], onset : onset + width] = burst_rate
            counts = np.array([[rng.poisson(x) for x in row] for row in lam], dtype=np.int64)
            data.append((SpikeTensor(counts, 1.0), c))
    rng.shuffle(data)
    return data


# --------------------------------------------------------------------------
# end-to-end adaptation


@dataclass(frozen=True)
class E2EConfig:
    classes: int = 4
    train_per_class: int = 200
    test_per_class: int = 50
    channels: int = 16
    timesteps: int = 64
    hidden: tuple[int, ...] = (64, 64)
    recurrent: bool = False
    epochs: int = 15
    batch_size: int = 32


def _e2e_task(args):
    import torch

    torch.set_num_threads(1)
    seed, methods, bin_source, bin_target, cfg = args
    full_train = gen_synthetic_dataset(cfg.classes, cfg.train_per_class, cfg.channels, cfg.timesteps, derive_seed(seed, 0))
    full_test = gen_synthetic_dataset(cfg.classes, cfg.test_per_class, cfg.channels, cfg.timesteps, derive_seed(seed, 1))

    def at(data, b):
        return resample_dataset(data, ResampleKind.SUM_BIN, b) if b > 1 else data

    tcfg = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, seed=derive_seed(seed, 2))

    def fit(b):
        model = init_model(cfg.channels, cfg.hidden, cfg.classes, cfg.recurrent, seed=derive_seed(seed, 3))
        model.meta.update(dt=float(b), bin_size=b)
        return train(model, at(full_train, b), tcfg)[0]

    test_t = at(full_test, bin_target)
    source = fit(bin_source)
    r = ResolutionRatio.parse(f"{bin_target}/{bin_source}")
    row = {"seed": seed, "source": evaluate(source, at(full_test, bin_source)), "none": evaluate(source, test_t)}
    for m in methods:
        if m is AdaptMethod.NONE:
            continue
        try:
            row[m.value] = evaluate(adapt_model(source, m, r, StatAdaptRule(ResampleKind.SUM_BIN)), test_t)
        except NumericalError:
            row[m.value] = None
    row["baseline"] = row["source"] if bin_source == bin_target else evaluate(fit(bin_target), test_t)
    return row


def e2e_experiment(
    direction: str,
    method,
    bin_source: int,
    bin_target: int,
    seeds,
    cfg: E2EConfig = E2EConfig(),
    jobs: int | None = None,
) -> dict:
    """Train at ``bin_source``, deploy at ``bin_target``, per seed.

    ``method`` is one method or a list.  Each row has the accuracy of the
    source model on source-resolution test data (``source``), on target data
    without adaptation (``none``), after each adaptation, and of a model
    retrained at the target bin (``baseline``).
    """
    direction = parse_direction(direction)
    if (direction == COARSE_TO_FINE) != (bin_target < bin_source) and bin_source != bin_target:
        raise ValueError(f"bins {bin_source}->{bin_target} do not match direction {direction}")
    if max(bin_source, bin_target) % min(bin_source, bin_target):
        raise ValueError("bin sizes must divide one another")
    methods = (method,) if isinstance(method, AdaptMethod) else tuple(method)
    seeds = [int(s) for s in seeds]
    rows = _map(_e2e_task, [(s, methods, bin_source, bin_target, cfg) for s in seeds], resolve_jobs(jobs))
    keys = ["source", "none", *[m.value for m in methods if m is not AdaptMethod.NONE], "baseline"]
    mean = {}
    for k in keys:
        vals = [row[k] for row in rows if row[k] is not None]
        mean[k] = float(np.mean(vals)) if vals else math.nan
    return {
        "direction": direction,
        "bin_source": bin_source,
        "bin_target": bin_target,
        "config": asdict(cfg),
        "per_seed": rows,
        "mean": mean,
    }
