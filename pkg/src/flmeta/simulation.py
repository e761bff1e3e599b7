"""The split federated round and the experiment driver.

One round, clients holding W_G(t-1), runs these phases in order:

  1. every client extracts activation maps at the split level from the
     lower part of W_G(t-1) and, in "select" mode, keeps the clustered
     medoid subset (in "select_all" mode every map is kept)
  2. every client runs its local SGD epochs starting from W_G(t-1)
  3. the server unions the shipped maps in ascending client id order
  4. the server trains a fresh copy of the round-0 upper part W_G^u(0) on
     that union
  5. the composed model, lower part of W_G(t-1) plus the newly trained
     upper part, is evaluated on the test set; it is never sent back
  6. the client results are averaged uniformly into W_G(t), which is also
     evaluated and becomes the weights every client receives next round

"fedavg_only" mode skips 1 and 3-5 entirely; its record carries the
averaged model's accuracy in both accuracy columns and zero metadata
counts.

All per-phase shuffle and selection seeds are derived from the base seeds
with `mix_seed`, so a full experiment is bitwise reproducible and the
derivation is reproducible by outside oracles as well.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from .activations import extract_activations
from .data import partition_noniid, synthetic_train_test, load_cifar10
from .engine import Hyperparams, forward, run_sgd
from .exceptions import AggregationError, ConfigError, ShapeError
from .model import (ArchSpec, LayerParams, ModelWeights, build_model, compose_weights,
                    copy_layers, split_weights)
from .selection import MetadataSelector

MODES = ("select", "select_all", "fedavg_only")

# stream tags for derived seeds, so local, meta, and selection draws never collide
_TAG_LOCAL, _TAG_META, _TAG_SELECT = 1, 2, 3

_WIRE_FLOAT_BYTES = 4
_WIRE_LABEL_BYTES = 4


def mix_seed(base, *parts):
    """Collapse (base, *parts) into one deterministic 32-bit seed."""
    ss = np.random.SeedSequence([int(base), *[int(p) for p in parts]])
    return int(ss.generate_state(1)[0])


@dataclass
class ClientState:
    """One participant: an id (the canonical ordering key) and its shard."""

    id: int
    data: object


@dataclass
class MetadataSet:
    """Union of the maps shipped in one round, in ascending client id order."""

    maps: np.ndarray
    labels: np.ndarray
    level: str
    per_client_counts: list

    @property
    def count(self):
        return int(len(self.labels))

    @property
    def wire_bytes(self):
        """Bytes on the wire: float32 payload plus one uint32 label per item."""
        per_map = int(np.prod(self.maps.shape[1:])) * _WIRE_FLOAT_BYTES
        return self.count * (per_map + _WIRE_LABEL_BYTES)


@dataclass
class RoundRecord:
    round: int
    acc_composed: float
    acc_avg_global: float
    metadata_count: int
    metadata_bytes: int
    selection_fraction: float


@dataclass
class RoundTrace:
    """Instrumentation snapshot of one round, for wiring assertions."""

    distributed: ModelWeights
    lower: list
    trained_upper: list
    composed: ModelWeights
    metadata: MetadataSet


def local_update(model, data, hyper):
    """Client-side SGD from `model` on the client's shard. Input untouched."""
    layers, _ = run_sgd(model.layers, data.images, data.labels, hyper)
    return ModelWeights(model.arch, layers, model.group_boundaries)


def fed_average(models):
    """Uniform 1/m elementwise average of the clients' models.

    Callers pass the list in canonical (ascending client id) order; the sum
    happens in that order, which is what makes reruns bitwise identical.
    """
    if not models:
        raise AggregationError("no models to average")
    first = models[0]
    for m in models[1:]:
        if m.arch != first.arch:
            raise AggregationError("cannot average models with different architectures")
    layers = []
    for i, ref in enumerate(first.layers):
        for m in models[1:]:
            if m.layers[i].kind != ref.kind or m.layers[i].weights.shape != ref.weights.shape:
                raise AggregationError(
                    f"layer {i} mismatch: {ref.kind}{ref.weights.shape} vs "
                    f"{m.layers[i].kind}{m.layers[i].weights.shape}"
                )
        w = np.mean([m.layers[i].weights for m in models], axis=0)
        b = np.mean([m.layers[i].bias for m in models], axis=0)
        layers.append(LayerParams(ref.kind, w, b))
    return ModelWeights(first.arch, layers, first.group_boundaries)


def metadata_training(upper_init, metadata, hyper):
    """Train a copy of the frozen round-0 upper part on the metadata union."""
    if metadata.count == 0:
        raise ShapeError("metadata set is empty; selection produced no items")
    layers, _ = run_sgd(upper_init, metadata.maps, metadata.labels, hyper)
    return layers


def compose_global(split_prev, trained_upper):
    """W_G^l(t-1) below, the metadata-trained upper part above."""
    return compose_weights(split_prev.arch, split_prev.level, split_prev.lower, trained_upper)


def evaluate(model, data, batch_size=512):
    """Top-1 accuracy; argmax ties resolve to the smallest class index."""
    n = len(data)
    if n == 0:
        raise ShapeError("cannot evaluate on an empty dataset")
    correct = 0
    for s in range(0, n, batch_size):
        logits = forward(model, data.images[s:s + batch_size])
        correct += int((logits.argmax(axis=1) == data.labels[s:s + batch_size]).sum())
    return correct / n


class Simulation:
    """Holds the protocol state and advances it one round at a time.

    The upper part of the initial model is copied and frozen at
    construction; every round's metadata training restarts from it. The
    composed model is stored on the trace (when tracing) and reflected in
    the records, but only fed-averaged weights are ever handed to clients.
    """

    def __init__(self, model, level, clients, test_data, hyper_local, hyper_meta,
                 mode="select", selector=None, trace=False):
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        if not clients:
            raise ConfigError("at least one client is required")
        ids = [c.id for c in clients]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"client ids must be unique, got {ids}")
        if mode == "select" and selector is None:
            raise ConfigError("mode 'select' needs a MetadataSelector")
        self.level = level
        self.clients = sorted(clients, key=lambda c: c.id)
        self.test_data = test_data
        self.hyper_local = hyper_local
        self.hyper_meta = hyper_meta
        self.mode = mode
        self.selector = selector
        self.trace = trace
        self.w_global = model
        self.upper_init = copy_layers(split_weights(model, level).upper)
        self.total_samples = int(sum(len(c.data) for c in self.clients))
        self.t = 0
        self.records = []
        self.last_trace = None

    def _client_metadata(self, split_prev, client, t):
        acts = extract_activations(split_prev.lower, self.level, client.data)
        if self.mode == "select_all":
            return acts.maps, acts.labels
        params = self.selector.get_params()
        params["random_state"] = mix_seed(self.selector.random_state, _TAG_SELECT, t, client.id)
        maps, labels, _ = MetadataSelector(**params).select(acts.maps, acts.labels)
        return maps, labels

    def run_round(self):
        t = self.t + 1
        w_prev = self.w_global
        split_prev = split_weights(w_prev, self.level)

        updated = []
        maps_parts, label_parts, counts = [], [], []
        for client in self.clients:  # ascending id
            if self.mode != "fedavg_only":
                m, l = self._client_metadata(split_prev, client, t)
                maps_parts.append(m)
                label_parts.append(l)
                counts.append(int(len(l)))
            hk = dataclasses.replace(
                self.hyper_local,
                shuffle_seed=mix_seed(self.hyper_local.shuffle_seed, _TAG_LOCAL, t, client.id),
            )
            updated.append(local_update(w_prev, client.data, hk))

        metadata = None
        composed = None
        trained_upper = None
        if self.mode != "fedavg_only":
            metadata = MetadataSet(
                np.concatenate(maps_parts, axis=0),
                np.concatenate(label_parts, axis=0),
                self.level,
                counts,
            )
            hm = dataclasses.replace(
                self.hyper_meta,
                shuffle_seed=mix_seed(self.hyper_meta.shuffle_seed, _TAG_META, t),
            )
            trained_upper = metadata_training(self.upper_init, metadata, hm)
            composed = compose_global(split_prev, trained_upper)
            acc_composed = evaluate(composed, self.test_data)

        new_global = fed_average(updated)
        acc_avg = evaluate(new_global, self.test_data)

        if self.mode == "fedavg_only":
            acc_composed = acc_avg
            md_count, md_bytes, fraction = 0, 0, 0.0
        else:
            md_count = metadata.count
            md_bytes = metadata.wire_bytes
            fraction = md_count / self.total_samples

        self.w_global = new_global
        self.t = t
        record = RoundRecord(t, acc_composed, acc_avg, md_count, md_bytes, fraction)
        self.records.append(record)
        if self.trace:
            self.last_trace = RoundTrace(w_prev, split_prev.lower, trained_upper,
                                         composed, metadata)
        return record

    def run(self, rounds):
        if rounds < 0:
            raise ConfigError(f"rounds must be >= 0, got {rounds}")
        return [self.run_round() for _ in range(rounds)]


def _build_datasets(cfg):
    dtype = np.dtype(cfg.dtype)
    if cfg.dataset_kind == "cifar10":
        return load_cifar10(cfg.cifar_dir, dtype=dtype)
    s = cfg.synthetic
    return synthetic_train_test(s.num_classes, s.train_per_class, s.test_per_class,
                                tuple(s.shape), s.noise_sigma, s.seed, dtype=dtype)


def run_experiment(cfg, progress=None):
    """Build everything from a parsed config and run the full schedule.

    Returns the list of RoundRecord; rounds=0 builds the world and returns
    an empty list without touching the model.
    """
    train, test = _build_datasets(cfg)
    plan = partition_noniid(train, cfg.num_clients, cfg.classes_per_client,
                            cfg.samples_per_client, cfg.seeds.partition)
    clients = [ClientState(k, train.subset(plan.client_indices[k]))
               for k in range(cfg.num_clients)]
    arch = ArchSpec(
        input_shape=tuple(train.images.shape[1:]),
        group_widths=tuple(cfg.group_widths),
        blocks_per_group=cfg.blocks_per_group,
        num_classes=train.num_classes,
    )
    model = build_model(arch, seed=cfg.seeds.model, dtype=np.dtype(cfg.dtype))
    selector = None
    if cfg.mode == "select":
        selector = MetadataSelector(
            n_components=cfg.selection.n_components,
            clusters_per_class=cfg.selection.clusters_per_class,
            random_state=cfg.seeds.selection,
            max_iter=cfg.selection.max_iter,
            tol=cfg.selection.tol,
        )
    hyper_local = dataclasses.replace(cfg.hyper_local, shuffle_seed=cfg.seeds.shuffle)
    hyper_meta = dataclasses.replace(cfg.hyper_meta, shuffle_seed=cfg.seeds.shuffle)
    sim = Simulation(model, cfg.level, clients, test, hyper_local, hyper_meta,
                     mode=cfg.mode, selector=selector)
    for _ in range(cfg.rounds):
        record = sim.run_round()
        if progress is not None:
            progress(record)
    return sim.records
