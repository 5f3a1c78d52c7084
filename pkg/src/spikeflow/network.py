"""Network assembly, layer-by-layer training, inference replay, and weights I/O.

A network is an ordered stack of layer configurations driven by a 1 ms
(default) simulation clock.  Plastic layers are trained one at a time on a
pool of event sequences presented in random order by a seeded generator,
with earlier layers frozen; training stops when the moving average of the
convergence metric drops below threshold or the presentation budget runs
out.  Inference replays a stream through the trained stack, recording
spikes per layer and an exponentially decaying postsynaptic trace of the
final layer as readout.
"""

from __future__ import annotations

import configparser
import io
import math
import os
import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, WeightsFormatError
from .events import EventStream, augment, read_events
from .layers import LayerConfig, LayerKind, event_frames, make_layer
from .neuron import NeuronParams
from .plasticity import RuleKind, StdpParams

WEIGHTS_MAGIC = b"SPKWTS01"
WEIGHTS_VERSION = 1

_KIND_TAGS = {
    LayerKind.SS_CONV: 1,
    LayerKind.MERGE: 2,
    LayerKind.MS_CONV: 3,
    LayerKind.POOLING: 4,
    LayerKind.DENSE: 5,
}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


@dataclass(frozen=True)
class NetworkConfig:
    """Full architecture description: input resolution, clock, seed, and the
    ordered layer list (the event-binning input stage is implicit)."""

    width: int
    height: int
    layers: Sequence[LayerConfig]
    dt_ms: float = 1.0
    seed: int = 0


@dataclass
class TrainSchedule:
    """Sequence pool and stop rule for training one layer.

    ``pool`` may hold file paths or in-memory streams.  ``l_th`` and
    ``window`` default to the layer's own plasticity parameters.
    """

    pool: Sequence[Union[str, os.PathLike, EventStream]]
    max_presentations: int = 100
    seed: int = 0
    augment: bool = True
    l_th: Optional[float] = None
    window: Optional[int] = None


@dataclass
class TrainResult:
    """Convergence log for one layer: (presentation, L) per update."""

    l_values: list
    converged: bool
    presentations: int

    @property
    def final_moving_average(self):
        if not self.l_values:
            return math.inf
        tail = [l for _, l in self.l_values]
        return float(np.mean(tail[-min(len(tail), 200):]))


@dataclass
class PostsynapticTrace:
    """Per-neuron exponentially decaying record of emitted spikes."""

    y: np.ndarray
    lambda_y_ms: float

    @classmethod
    def zeros(cls, n, lambda_y_ms):
        return cls(np.zeros(n, dtype=np.float64), float(lambda_y_ms))

    def step(self, spikes, dt_ms):
        self.y *= math.exp(-dt_ms / self.lambda_y_ms)
        self.y += spikes.reshape(-1).astype(np.float64) / self.lambda_y_ms
        return self.y


@dataclass
class LayerRecord:
    """Spike record of one layer over a replay: sparse events as rows of
    (step, map, y, x) plus a per-neuron total count grid."""

    spikes: np.ndarray
    counts: np.ndarray

    def map_rates(self, duration_ms):
        """Spikes per millisecond per map."""
        per_map = self.counts.reshape(self.counts.shape[0], -1).sum(axis=1)
        return per_map / duration_ms


@dataclass
class InferenceResult:
    records: list
    trace: np.ndarray
    trace_history: np.ndarray
    n_steps: int
    dt_ms: float


class Network:
    """An assembled layer stack. Build with :func:`build`."""

    def __init__(self, config: NetworkConfig, layers):
        self.config = config
        self.layers = layers

    @property
    def dt_ms(self):
        return self.config.dt_ms

    def reset(self):
        for layer in self.layers:
            layer.reset()

    def layer_index(self, ref):
        """Resolve a layer reference: index, name, or kind value."""
        if isinstance(ref, int):
            if not 0 <= ref < len(self.layers):
                raise ConfigError(f"layer index {ref} out of range")
            return ref
        for i, layer in enumerate(self.layers):
            if layer.cfg.name == ref or layer.cfg.kind.value.lower() == str(ref).lower():
                return i
        raise ConfigError(f"no layer named {ref!r}")

    def set_rule(self, rule: RuleKind):
        for layer in self.layers:
            layer.rule = rule

    def steps_for(self, stream):
        return int(stream.duration_us // (self.dt_ms * 1000.0)) + 1

    def run_stream(self, stream, upto=None, learn_layer=None, record=False,
                   lambda_y_ms=100.0, reset=True):
        """Replay one stream through layers [0..upto]; returns an
        :class:`InferenceResult` when ``record`` is set, else None."""
        if (stream.width, stream.height) != (self.config.width, self.config.height):
            raise ConfigError(
                f"stream resolution {stream.width}x{stream.height} does not "
                f"match network input {self.config.width}x{self.config.height}"
            )
        if reset:
            self.reset()
        upto = len(self.layers) - 1 if upto is None else upto
        active = self.layers[: upto + 1]
        n_steps = self.steps_for(stream)

        sparse = [[] for _ in active] if record else None
        counts = [np.zeros(l.out_shape, dtype=np.int64) for l in active] if record else None
        trace = PostsynapticTrace.zeros(int(np.prod(active[-1].out_shape)), lambda_y_ms)
        history = np.zeros((n_steps, trace.y.size)) if record else None

        for step, frame in enumerate(event_frames(stream, self.dt_ms, n_steps)):
            x = frame
            for li, layer in enumerate(active):
                x = layer.step(x, step, learn=(li == learn_layer))
                if record:
                    hits = np.argwhere(layer.state.s)
                    if hits.size:
                        sparse[li].append(np.column_stack(
                            [np.full(len(hits), step, dtype=np.int64), hits]))
                    counts[li] += layer.state.s
            trace.step(active[-1].state.s, self.dt_ms)
            if record:
                history[step] = trace.y

        if not record:
            return None
        records = []
        for li, layer in enumerate(active):
            if sparse[li]:
                spk = np.concatenate(sparse[li]).astype(np.int64)
            else:
                spk = np.zeros((0, 4), dtype=np.int64)
            records.append(LayerRecord(spikes=spk, counts=counts[li]))
        return InferenceResult(records=records, trace=trace.y.copy(),
                               trace_history=history, n_steps=n_steps,
                               dt_ms=self.dt_ms)


def build(config: NetworkConfig) -> Network:
    """Validate a configuration and assemble the network with freshly
    initialized weights (plastic excitatory at w_init, inhibitory at zero,
    merge/pooling unitary)."""
    _validate(config)
    layers = []
    shape = (2, config.height, config.width)
    for cfg in config.layers:
        layer = make_layer(cfg, shape, config.dt_ms)
        layers.append(layer)
        shape = layer.out_shape
    return Network(config, layers)


def _fail(layer_name, fld, msg):
    raise ConfigError(f"layer {layer_name}: {fld}: {msg}")


def _validate(config: NetworkConfig):
    if config.width <= 0 or config.height <= 0:
        raise ConfigError("network: width/height must be positive")
    if config.dt_ms <= 0:
        raise ConfigError("network: dt_ms must be positive")
    if not config.layers:
        raise ConfigError("network: layers: empty layer list")
    c, h, w = 2, config.height, config.width
    for cfg in config.layers:
        name = cfg.name or cfg.kind.value
        if cfg.f < 1:
            _fail(name, "f", "at least one map required")
        if cfg.kind in (LayerKind.SS_CONV, LayerKind.MS_CONV, LayerKind.MERGE,
                        LayerKind.POOLING):
            if cfg.r < 1 or cfg.s < 1:
                _fail(name, "r/s", "receptive field and stride must be positive")
            if cfg.r > min(h, w):
                _fail(name, "r", f"receptive field {cfg.r} exceeds input {h}x{w}")
        if cfg.kind is LayerKind.MERGE:
            if cfg.plastic:
                _fail(name, "plastic", "merge layers are not plastic")
            if cfg.r != 1 or cfg.s != 1 or cfg.f != 1 or cfg.m != 1:
                _fail(name, "r/s/f/m", "merge is a unitary 1x1 single-map layer")
        elif cfg.kind is LayerKind.POOLING:
            if cfg.plastic:
                _fail(name, "plastic", "pooling layers are not plastic")
            if cfg.s != cfg.r:
                _fail(name, "s", "pooling receptive fields must not overlap (s = r)")
            if cfg.f != c:
                _fail(name, "f", f"pooling map count must equal input maps ({c})")
            if cfg.m != 1:
                _fail(name, "m", "pooling is single-synaptic")
        elif cfg.kind is LayerKind.MS_CONV:
            if cfg.m < 2:
                _fail(name, "m", "multisynaptic layer needs m > 1")
            if not 0.0 <= cfg.beta <= 1.0:
                _fail(name, "beta", "inhibition scale must lie in [0, 1]")
        elif cfg.kind in (LayerKind.SS_CONV, LayerKind.DENSE):
            if cfg.m != 1:
                _fail(name, "m", "single-synaptic layer needs m = 1")
        elif cfg.kind is LayerKind.INPUT:
            _fail(name, "kind", "the input stage is implicit; do not list it")
        if cfg.plastic and cfg.stdp is None:
            _fail(name, "stdp", "plastic layer needs plasticity parameters")
        if not config.dt_ms < cfg.neuron.lambda_v_ms:
            _fail(name, "lambda_v_ms", "explicit Euler requires dt < lambda_v")
        if cfg.tau_max_ms < cfg.tau_min_ms:
            _fail(name, "tau_max_ms", "delay range reversed")
        # advance the shape chain
        if cfg.kind in (LayerKind.SS_CONV, LayerKind.MS_CONV):
            c, h, w = cfg.f, (h - cfg.r) // cfg.s + 1, (w - cfg.r) // cfg.s + 1
        elif cfg.kind is LayerKind.MERGE:
            c = 1
        elif cfg.kind is LayerKind.POOLING:
            c, h, w = cfg.f, (h - cfg.r) // cfg.r + 1, (w - cfg.r) // cfg.r + 1
        elif cfg.kind is LayerKind.DENSE:
            c, h, w = cfg.f, 1, 1
        if h < 1 or w < 1:
            _fail(name, "r", "layer output collapses to zero size")


def train_layer(network: Network, layer_ref, schedule: TrainSchedule,
                on_presentation=None):
    """Train one plastic layer on the schedule's sequence pool.

    Sequences are drawn uniformly (then augmented) by a generator seeded
    with ``schedule.seed``; earlier layers run frozen with neuron-specific
    competition only.  ``on_presentation(index, layer)`` is invoked after
    each presentation.  Returns a :class:`TrainResult`.
    """
    index = network.layer_index(layer_ref)
    layer = network.layers[index]
    if not layer.plastic:
        raise ConfigError(
            f"layer {layer.cfg.name or layer.cfg.kind.value} is not plastic")
    stdp = layer.cfg.stdp
    l_th = stdp.l_th if schedule.l_th is None else schedule.l_th
    window = stdp.window if schedule.window is None else schedule.window

    rng = np.random.default_rng(schedule.seed)
    cache = {}

    def fetch(item):
        if isinstance(item, EventStream):
            return item
        key = os.fspath(item)
        if key not in cache:
            cache[key] = read_events(key)
        return cache[key]

    if not schedule.pool:
        raise ConfigError("training schedule has an empty sequence pool")

    log = []
    recent = deque(maxlen=window)
    running = 0.0
    converged = False
    presentations = 0
    active = network.layers[: index + 1]

    for pres in range(schedule.max_presentations):
        presentations += 1
        stream = fetch(schedule.pool[int(rng.integers(len(schedule.pool)))])
        if schedule.augment:
            stream = augment(stream, int(rng.integers(2 ** 31)))
        network.reset()
        n_steps = network.steps_for(stream)
        for step, frame in enumerate(event_frames(stream, network.dt_ms, n_steps)):
            x = frame
            for li, lay in enumerate(active):
                x = lay.step(x, step, learn=(li == index))
            for l_val in layer.pop_l_events():
                if len(recent) == window:
                    running -= recent[0]
                recent.append(l_val)
                running += l_val
                log.append((pres, l_val))
                if len(recent) == window and running / window < l_th:
                    converged = True
                    break
            if converged:
                break
        if on_presentation is not None:
            on_presentation(pres, layer)
        if converged:
            break
    return TrainResult(l_values=log, converged=converged,
                       presentations=presentations)


def stdp_compare(network: Network, layer_ref, schedule: TrainSchedule,
                 rule: RuleKind, n_rows=100):
    """Train one layer under the chosen plasticity rule for the full
    presentation budget (no convergence stop), photographing the excitatory
    weights at every 1/n_rows slice of the budget.

    Returns a list of (percent_of_budget, flattened weights) pairs.
    """
    index = network.layer_index(layer_ref)
    layer = network.layers[index]
    layer.rule = rule
    budget = schedule.max_presentations
    every = max(1, budget // n_rows)
    snaps = []

    def snap(pres, lay):
        if (pres + 1) % every == 0 or pres + 1 == budget:
            exc, _ = lay.get_weights()
            snaps.append((100.0 * (pres + 1) / budget, exc.ravel().copy()))

    no_stop = TrainSchedule(pool=schedule.pool,
                            max_presentations=budget,
                            seed=schedule.seed,
                            augment=schedule.augment,
                            l_th=-1.0, window=schedule.window)
    train_layer(network, index, no_stop, on_presentation=snap)
    return snaps


def weight_histogram_rows(snaps, bins=50):
    """Histogram each snapshot over the range observed across the whole
    run; returns (lo, hi, rows) with rows of (pct, counts[bins])."""
    lo = min(float(w.min()) for _, w in snaps)
    hi = max(float(w.max()) for _, w in snaps)
    if hi <= lo:
        hi = lo + 1e-12
    rows = []
    for pct, w in snaps:
        counts, _ = np.histogram(w, bins=bins, range=(lo, hi))
        rows.append((pct, counts))
    return lo, hi, rows


def infer(network: Network, stream, lambda_y_ms=100.0):
    """Replay a stream through the whole network, recording every layer's
    spikes and the final layer's postsynaptic trace."""
    return network.run_stream(stream, record=True, lambda_y_ms=lambda_y_ms)


# ---------------------------------------------------------------------------
# weights file


@dataclass
class LayerWeights:
    """Raw weight payload of one layer as stored on disk."""

    kind: LayerKind
    tau_ms: np.ndarray
    exc: Optional[np.ndarray]
    inh: Optional[np.ndarray]


def _layer_weights(layer):
    exc, inh = layer.get_weights()
    return LayerWeights(kind=layer.cfg.kind, tau_ms=np.asarray(layer.tau_ms),
                        exc=exc, inh=inh)


def save_weights(network: Network, path):
    """Write every layer's kernels to ``path`` (atomic)."""
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as f:
            f.write(WEIGHTS_MAGIC)
            f.write(struct.pack("<II", WEIGHTS_VERSION, len(network.layers)))
            for layer in network.layers:
                lw = _layer_weights(layer)
                f.write(struct.pack("<I", _KIND_TAGS[lw.kind]))
                dims = () if lw.exc is None else lw.exc.shape
                f.write(struct.pack("<I", len(dims)))
                for d in dims:
                    f.write(struct.pack("<I", d))
                f.write(struct.pack("<I", lw.tau_ms.size))
                f.write(lw.tau_ms.astype("<f8").tobytes())
                if lw.exc is not None:
                    f.write(lw.exc.astype("<f8").tobytes())
                f.write(struct.pack("<B", 0 if lw.inh is None else 1))
                if lw.inh is not None:
                    f.write(lw.inh.astype("<f8").tobytes())
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise WeightsFormatError("truncated weights file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def u8(self):
        return struct.unpack("<B", self.take(1))[0]

    def f64(self, count):
        return np.frombuffer(self.take(8 * count), dtype="<f8").copy()


def read_weights(path):
    """Parse a weights file into a list of :class:`LayerWeights`."""
    with open(path, "rb") as f:
        data = f.read()
    if data[: len(WEIGHTS_MAGIC)] != WEIGHTS_MAGIC:
        raise WeightsFormatError("bad magic: not a weights file")
    r = _Reader(data)
    r.take(len(WEIGHTS_MAGIC))
    version = r.u32()
    if version != WEIGHTS_VERSION:
        raise WeightsFormatError(f"unsupported weights version {version}")
    n_layers = r.u32()
    out = []
    for _ in range(n_layers):
        tag = r.u32()
        if tag not in _TAG_KINDS:
            raise WeightsFormatError(f"unknown layer kind tag {tag}")
        ndim = r.u32()
        dims = tuple(r.u32() for _ in range(ndim))
        n_tau = r.u32()
        tau = r.f64(n_tau)
        exc = r.f64(int(np.prod(dims))).reshape(dims) if ndim else None
        inh = None
        if r.u8():
            inh = r.f64(int(np.prod(dims))).reshape(dims)
        out.append(LayerWeights(kind=_TAG_KINDS[tag], tau_ms=tau, exc=exc, inh=inh))
    if r.pos != len(data):
        raise WeightsFormatError("trailing bytes after last layer")
    return out


def load_weights(network: Network, path):
    """Install weights from ``path`` into a built network, checking that
    layer kinds, shapes, and delays all match."""
    stored = read_weights(path)
    if len(stored) != len(network.layers):
        raise WeightsFormatError(
            f"file has {len(stored)} layers, network has {len(network.layers)}")
    for i, (lw, layer) in enumerate(zip(stored, network.layers)):
        if lw.kind is not layer.cfg.kind:
            raise WeightsFormatError(
                f"layer {i}: file kind {lw.kind.value}, network {layer.cfg.kind.value}")
        if not np.allclose(lw.tau_ms, layer.tau_ms):
            raise WeightsFormatError(f"layer {i}: delay vector mismatch")
        exc, inh = layer.get_weights()
        if (exc is None) != (lw.exc is None) or (inh is None) != (lw.inh is None):
            raise WeightsFormatError(f"layer {i}: weight structure mismatch")
        if exc is not None:
            if lw.exc.shape != exc.shape:
                raise WeightsFormatError(
                    f"layer {i}: kernel shape {lw.exc.shape} != {exc.shape}")
            layer.set_weights(lw.exc, lw.inh)
    return network


# ---------------------------------------------------------------------------
# config file

_GLOBAL_KEYS = {"dt_ms", "seed", "width", "height", "eta", "a", "w_init", "l_th"}
_LAYER_KEYS = {"kind", "r", "s", "f", "m", "tau_min_ms", "tau_max_ms", "beta",
               "v_th", "lambda_v_ms", "lambda_x_ms", "alpha", "refr_ms", "plastic"}
_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def parse_config(text: str) -> NetworkConfig:
    """Parse the sectioned plain-text network description.

    One ``[layer.<name>]`` section per layer in order, plus a ``[global]``
    section carrying the clock, seed, input resolution, and plasticity
    defaults shared by all layers.
    """
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    if "global" not in cp:
        raise ConfigError("config: missing [global] section")
    g = cp["global"]
    for key in g:
        if key not in _GLOBAL_KEYS:
            raise ConfigError(f"config: global: unknown key {key!r}")

    def gf(key, default):
        return float(g.get(key, default))

    dt_ms = gf("dt_ms", 1.0)
    seed = int(g.get("seed", 0))
    width = int(g.get("width", 0))
    height = int(g.get("height", 0))
    stdp = StdpParams(eta=gf("eta", 1e-4), a=gf("a", 0.0),
                      w_init=gf("w_init", 0.5), l_th=gf("l_th", 5e-2))

    layers = []
    for section in cp.sections():
        if section == "global":
            continue
        if not section.startswith("layer."):
            raise ConfigError(f"config: unknown section [{section}]")
        name = section[len("layer."):]
        sec = cp[section]
        for key in sec:
            if key not in _LAYER_KEYS:
                raise ConfigError(f"config: layer {name}: unknown key {key!r}")
        if "kind" not in sec:
            raise ConfigError(f"config: layer {name}: missing kind")
        kind_text = sec["kind"]
        try:
            kind = LayerKind(kind_text)
        except ValueError:
            raise ConfigError(f"config: layer {name}: unknown kind {kind_text!r}")
        plastic_text = sec.get("plastic", "false").lower()
        if plastic_text not in _BOOL:
            raise ConfigError(f"config: layer {name}: plastic: not a boolean")

        def sf(key, default):
            return float(sec.get(key, default))

        neuron = NeuronParams(
            v_th=sf("v_th", 0.5),
            lambda_v_ms=sf("lambda_v_ms", 5.0),
            refr_ms=sf("refr_ms", 3.0),
            lambda_x_ms=sf("lambda_x_ms", 5.0),
            alpha=sf("alpha", 0.4),
        )
        layers.append(LayerConfig(
            kind=kind, name=name,
            r=int(sec.get("r", 1)), s=int(sec.get("s", 1)),
            f=int(sec.get("f", 1)), m=int(sec.get("m", 1)),
            tau_min_ms=sf("tau_min_ms", 1.0), tau_max_ms=sf("tau_max_ms", 1.0),
            beta=sf("beta", 0.0),
            plastic=_BOOL[plastic_text],
            neuron=neuron,
            stdp=stdp if _BOOL[plastic_text] else None,
        ))
    return NetworkConfig(width=width, height=height, layers=layers,
                         dt_ms=dt_ms, seed=seed)


def read_config(path) -> NetworkConfig:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def format_config(config: NetworkConfig) -> str:
    """Render a NetworkConfig back to the sectioned text format."""
    first = next((l.stdp for l in config.layers if l.stdp is not None), StdpParams())
    out = io.StringIO()
    out.write("[global]\n")
    out.write(f"dt_ms = {config.dt_ms}\n")
    out.write(f"seed = {config.seed}\n")
    out.write(f"width = {config.width}\n")
    out.write(f"height = {config.height}\n")
    out.write(f"eta = {first.eta}\n")
    out.write(f"a = {first.a}\n")
    out.write(f"w_init = {first.w_init}\n")
    out.write(f"l_th = {first.l_th}\n")
    for i, cfg in enumerate(config.layers):
        name = cfg.name or f"l{i}"
        out.write(f"\n[layer.{name}]\n")
        out.write(f"kind = {cfg.kind.value}\n")
        out.write(f"r = {cfg.r}\ns = {cfg.s}\nf = {cfg.f}\nm = {cfg.m}\n")
        out.write(f"tau_min_ms = {cfg.tau_min_ms}\ntau_max_ms = {cfg.tau_max_ms}\n")
        out.write(f"beta = {cfg.beta}\n")
        out.write(f"v_th = {cfg.neuron.v_th}\n")
        out.write(f"lambda_v_ms = {cfg.neuron.lambda_v_ms}\n")
        out.write(f"lambda_x_ms = {cfg.neuron.lambda_x_ms}\n")
        out.write(f"alpha = {cfg.neuron.alpha}\n")
        out.write(f"refr_ms = {cfg.neuron.refr_ms}\n")
        out.write(f"plastic = {'true' if cfg.plastic else 'false'}\n")
    return out.getvalue()
