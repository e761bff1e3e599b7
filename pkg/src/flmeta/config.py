"""Experiment configuration: the TOML schema, parsing, and validation.

Layout (section.key, * marks required; everything else shows its default):

    dtype = "float64"                  "float32" or "float64"

    [dataset]
    kind*                              "cifar10" or "synthetic"
    dir*                               cifar10 only: batch file directory
    num_classes*, shape*,              synthetic only; shape is [c, h, w]
    train_per_class*, test_per_class*
    noise_sigma = 0.05, seed = 0

    [arch]
    group_widths = [16, 32, 64]
    blocks_per_group = 1

    [federation]
    num_clients*, classes_per_client*, samples_per_client*, rounds*
    level = "G1"                       "G1", "G2", or "G3"
    mode = "select"                    "select", "select_all", "fedavg_only"

    [hyper_local] and [hyper_meta]
    learning_rate*, batch_size*, epochs*
    weight_decay = 0.0

    [selection]                        required when mode = "select"
    n_components*, clusters_per_class*
    max_iter = 300, tol = 1e-6

    [seeds]
    model = 0, partition = 1, selection = 2, shuffle = 3

Unknown sections or keys are rejected, never ignored.
"""

import dataclasses
import os
from dataclasses import dataclass

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .engine import Hyperparams
from .exceptions import ConfigError
from .model import LEVELS
from .simulation import MODES


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int
    shape: tuple
    train_per_class: int
    test_per_class: int
    noise_sigma: float = 0.05
    seed: int = 0


@dataclass(frozen=True)
class SelectionSpec:
    n_components: int
    clusters_per_class: int
    max_iter: int = 300
    tol: float = 1e-6


@dataclass(frozen=True)
class Seeds:
    model: int = 0
    partition: int = 1
    selection: int = 2
    shuffle: int = 3


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_kind: str
    cifar_dir: str
    synthetic: SyntheticSpec
    group_widths: tuple
    blocks_per_group: int
    level: str
    num_clients: int
    classes_per_client: int
    samples_per_client: int
    rounds: int
    mode: str
    dtype: str
    hyper_local: Hyperparams
    hyper_meta: Hyperparams
    selection: SelectionSpec
    seeds: Seeds


class _Section:
    """One config table: typed key extraction with exact error messages."""

    def __init__(self, name, raw):
        self.name = name
        self.raw = dict(raw)

    def take(self, key, kind, required=False, default=None):
        if key not in self.raw:
            if required:
                raise ConfigError(f"{self.name}.{key}: required")
            return default
        value = self.raw.pop(key)
        if kind is float:
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        elif kind is int:
            ok = isinstance(value, int) and not isinstance(value, bool)
        else:
            ok = isinstance(value, kind)
        if not ok:
            raise ConfigError(f"{self.name}.{key}: expected {kind.__name__}, got {value!r}")
        return kind(value) if kind in (int, float) else value

    def finish(self):
        if self.raw:
            raise ConfigError(f"[{self.name}] unknown key {sorted(self.raw)[0]!r}")


def _positive(name, value, minimum=1):
    if value < minimum:
        raise ConfigError(f"{name}: must be >= {minimum}, got {value}")
    return value


def _int_list(section, key, value, length):
    if not isinstance(value, list) or len(value) != length or any(
            not isinstance(v, int) or isinstance(v, bool) or v < 1 for v in value):
        raise ConfigError(f"{section}.{key}: expected a list of {length} positive ints, got {value!r}")
    return tuple(int(v) for v in value)


def _parse_hyper(name, table):
    sec = _Section(name, table)
    lr = sec.take("learning_rate", float, required=True)
    batch = sec.take("batch_size", int, required=True)
    epochs = sec.take("epochs", int, required=True)
    wd = sec.take("weight_decay", float, default=0.0)
    sec.finish()
    if epochs < 0:
        raise ConfigError(f"{name}.epochs: must be >= 0, got {epochs}")
    try:
        return Hyperparams(learning_rate=lr, batch_size=batch, weight_decay=wd, epochs=epochs)
    except ConfigError as e:
        raise ConfigError(f"{name}: {e}") from None


def parse_config(path):
    """Read and validate a TOML config file into an ExperimentConfig."""
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as f:
        try:
            doc = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: invalid TOML: {e}") from None
    return _from_dict(doc)


def _from_dict(doc):
    doc = dict(doc)
    top = _Section("<top-level>", {k: v for k, v in doc.items() if not isinstance(v, dict)})
    dtype = top.take("dtype", str, default="float64")
    top.finish()
    if dtype not in ("float32", "float64"):
        raise ConfigError(f"dtype: expected 'float32' or 'float64', got {dtype!r}")

    tables = {k: v for k, v in doc.items() if isinstance(v, dict)}
    known = {"dataset", "arch", "federation", "hyper_local", "hyper_meta", "selection", "seeds"}
    for name in tables:
        if name not in known:
            raise ConfigError(f"unknown section [{name}]")

    if "dataset" not in tables:
        raise ConfigError("dataset.kind: required")
    ds = _Section("dataset", tables["dataset"])
    kind = ds.take("kind", str, required=True)
    cifar_dir = None
    synthetic = None
    if kind == "cifar10":
        cifar_dir = ds.take("dir", str, required=True)
    elif kind == "synthetic":
        num_classes = _positive("dataset.num_classes", ds.take("num_classes", int, required=True), 2)
        shape = _int_list("dataset", "shape", ds.take("shape", list, required=True), 3)
        train_pc = _positive("dataset.train_per_class", ds.take("train_per_class", int, required=True))
        test_pc = _positive("dataset.test_per_class", ds.take("test_per_class", int, required=True))
        sigma = ds.take("noise_sigma", float, default=0.05)
        seed = ds.take("seed", int, default=0)
        if sigma < 0:
            raise ConfigError(f"dataset.noise_sigma: must be >= 0, got {sigma}")
        synthetic = SyntheticSpec(num_classes, shape, train_pc, test_pc, sigma, seed)
    else:
        raise ConfigError(f"dataset.kind: expected 'cifar10' or 'synthetic', got {kind!r}")
    ds.finish()

    arch = _Section("arch", tables.get("arch", {}))
    widths_raw = arch.take("group_widths", list, default=[16, 32, 64])
    group_widths = _int_list("arch", "group_widths", widths_raw, 3)
    blocks = _positive("arch.blocks_per_group", arch.take("blocks_per_group", int, default=1))
    arch.finish()

    if "federation" not in tables:
        raise ConfigError("federation.num_clients: required")
    fed = _Section("federation", tables["federation"])
    num_clients = _positive("federation.num_clients", fed.take("num_clients", int, required=True))
    cpc = _positive("federation.classes_per_client",
                    fed.take("classes_per_client", int, required=True))
    spc = _positive("federation.samples_per_client",
                    fed.take("samples_per_client", int, required=True))
    rounds = _positive("federation.rounds", fed.take("rounds", int, required=True), 0)
    level = fed.take("level", str, default="G1")
    mode = fed.take("mode", str, default="select")
    fed.finish()
    if level not in LEVELS:
        raise ConfigError(f"federation.level: expected one of {LEVELS}, got {level!r}")
    if mode not in MODES:
        raise ConfigError(f"federation.mode: expected one of {MODES}, got {mode!r}")

    if "hyper_local" not in tables:
        raise ConfigError("hyper_local.learning_rate: required")
    if "hyper_meta" not in tables:
        raise ConfigError("hyper_meta.learning_rate: required")
    hyper_local = _parse_hyper("hyper_local", tables["hyper_local"])
    hyper_meta = _parse_hyper("hyper_meta", tables["hyper_meta"])

    selection = None
    if mode == "select":
        if "selection" not in tables:
            raise ConfigError("selection.n_components: required when mode = 'select'")
    if "selection" in tables:
        sel = _Section("selection", tables["selection"])
        n_comp = _positive("selection.n_components", sel.take("n_components", int, required=True))
        k = _positive("selection.clusters_per_class",
                      sel.take("clusters_per_class", int, required=True))
        max_iter = _positive("selection.max_iter", sel.take("max_iter", int, default=300))
        tol = sel.take("tol", float, default=1e-6)
        sel.finish()
        if tol < 0:
            raise ConfigError(f"selection.tol: must be >= 0, got {tol}")
        selection = SelectionSpec(n_comp, k, max_iter, tol)

    sd = _Section("seeds", tables.get("seeds", {}))
    seeds = Seeds(
        model=sd.take("model", int, default=0),
        partition=sd.take("partition", int, default=1),
        selection=sd.take("selection", int, default=2),
        shuffle=sd.take("shuffle", int, default=3),
    )
    sd.finish()

    return ExperimentConfig(
        dataset_kind=kind, cifar_dir=cifar_dir, synthetic=synthetic,
        group_widths=group_widths, blocks_per_group=blocks,
        level=level, num_clients=num_clients, classes_per_client=cpc,
        samples_per_client=spc, rounds=rounds, mode=mode, dtype=dtype,
        hyper_local=hyper_local, hyper_meta=hyper_meta,
        selection=selection, seeds=seeds,
    )


def apply_overrides(cfg, rounds=None, seed=None, mode=None):
    """Apply CLI overrides. A single seed value fans out to all four seeds."""
    if rounds is not None:
        if rounds < 0:
            raise ConfigError(f"--rounds: must be >= 0, got {rounds}")
        cfg = dataclasses.replace(cfg, rounds=rounds)
    if mode is not None:
        if mode not in MODES:
            raise ConfigError(f"--mode: expected one of {MODES}, got {mode!r}")
        if mode == "select" and cfg.selection is None:
            raise ConfigError("--mode select needs a [selection] section in the config")
        cfg = dataclasses.replace(cfg, mode=mode)
    if seed is not None:
        cfg = dataclasses.replace(
            cfg, seeds=Seeds(model=seed, partition=seed, selection=seed, shuffle=seed))
    return cfg


def config_to_dict(cfg):
    """JSON-ready resolved view of the config, for summary emission."""
    d = dataclasses.asdict(cfg)
    d["group_widths"] = list(cfg.group_widths)
    if cfg.synthetic is not None:
        d["synthetic"]["shape"] = list(cfg.synthetic.shape)
    for h in ("hyper_local", "hyper_meta"):
        d[h].pop("shuffle_seed", None)  # runtime value comes from seeds.shuffle
    return d
