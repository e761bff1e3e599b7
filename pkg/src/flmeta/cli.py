"""Command line entry point.

Subcommands:

    run        full experiment from a TOML config; writes rounds.csv and
               summary.json, prints one progress line per round on stderr
    gradcheck  finite-difference audit of the engine's gradients
    select     one-shot selection over a dumped activation file
    partition  emit the client partition plan as JSON

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

import argparse
import json
import sys

import numpy as np

from .activations import load_activation_dump, save_activation_dump, ActivationMaps
from .config import apply_overrides, config_to_dict, parse_config
from .engine import grad_check, relu_margin
from .exceptions import ConfigError, FormatError
from .model import ArchSpec, LayerParams, build_model
from .reporting import emit_metrics
from .selection import MetadataSelector
from .simulation import MODES, run_experiment, _build_datasets
from .data import partition_noniid


def _cmd_run(args):
    cfg = parse_config(args.config)
    cfg = apply_overrides(cfg, rounds=args.rounds, seed=args.seed, mode=args.mode)

    def progress(rec):
        print(
            f"round {rec.round}: acc_composed={rec.acc_composed:.4f} "
            f"acc_avg_global={rec.acc_avg_global:.4f} metadata_count={rec.metadata_count}",
            file=sys.stderr,
        )

    records = run_experiment(cfg, progress=progress)
    csv_path, json_path = emit_metrics(records, args.out, config_to_dict(cfg))
    print(f"wrote {csv_path} and {json_path}", file=sys.stderr)
    return 0


def _cmd_gradcheck(args):
    arch = ArchSpec(input_shape=(1, 8, 8), group_widths=(2, 3, 4),
                    blocks_per_group=1, num_classes=3)
    model = build_model(arch, seed=args.seed)
    # Fresh models have zero biases, so dead receptive fields leave
    # pre-activations exactly on the ReLU kink, where finite differences
    # are one-sided.  Jitter the biases and keep redrawing until every
    # rectified unit clears the kink by a few multiples of eps.
    margin_target = 5.0 * args.eps
    for attempt in range(64):
        rng = np.random.default_rng(np.random.SeedSequence([args.seed, attempt]))
        layers = [LayerParams(l.kind, l.weights,
                              l.bias + rng.normal(0.0, 0.05, size=l.bias.shape))
                  for l in model.layers]
        images = rng.uniform(0.0, 1.0, size=(4, *arch.input_shape))
        labels = rng.integers(0, arch.num_classes, size=4)
        if relu_margin(layers, images) >= margin_target:
            break
    else:
        print("could not find a well-conditioned instance", file=sys.stderr)
        return 1
    err = grad_check(layers, images, labels, eps=args.eps)
    print(f"max_rel_err={err:.3e} (threshold {args.threshold:.1e})")
    return 0 if err < args.threshold else 1


def _cmd_select(args):
    acts = load_activation_dump(args.maps, args.labels)
    selector = MetadataSelector(
        n_components=args.components,
        clusters_per_class=args.clusters,
        random_state=args.seed,
    )
    maps, labels, idx = selector.select(acts.maps, acts.labels)
    for i in idx:
        print(int(i))
    if args.out:
        save_activation_dump(ActivationMaps(maps, labels, acts.level), args.out)
        print(f"wrote {args.out} and {args.out}.labels", file=sys.stderr)
    return 0


def _cmd_partition(args):
    cfg = parse_config(args.config)
    train, _ = _build_datasets(cfg)
    plan = partition_noniid(train, cfg.num_clients, cfg.classes_per_client,
                            cfg.samples_per_client, cfg.seeds.partition)
    text = json.dumps(plan.to_json_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", newline="") as f:
            f.write(text)
        print(f"wrote {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="flmeta",
        description="Split federated learning with clustered activation-map selection.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a full experiment from a config file")
    run.add_argument("--config", required=True, help="TOML experiment config")
    run.add_argument("--out", default="./out", help="output directory (default ./out)")
    run.add_argument("--rounds", type=int, default=None, help="override federation.rounds")
    run.add_argument("--seed", type=int, default=None, help="override every seed with one value")
    run.add_argument("--mode", choices=MODES, default=None, help="override federation.mode")
    run.set_defaults(func=_cmd_run)

    gc = sub.add_parser("gradcheck", help="finite-difference audit of the gradients")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--eps", type=float, default=1e-5)
    gc.add_argument("--threshold", type=float, default=1e-4)
    gc.set_defaults(func=_cmd_gradcheck)

    sel = sub.add_parser("select", help="one-shot selection over an activation dump")
    sel.add_argument("--maps", required=True, help="activation dump file")
    sel.add_argument("--labels", default=None, help="label sidecar (default <maps>.labels)")
    sel.add_argument("--clusters", type=int, required=True, help="clusters per class")
    sel.add_argument("--components", type=int, default=200, help="PCA components (default 200)")
    sel.add_argument("--seed", type=int, default=0)
    sel.add_argument("--out", default=None, help="write the selected subset as a dump here")
    sel.set_defaults(func=_cmd_select)

    part = sub.add_parser("partition", help="emit the partition plan as JSON")
    part.add_argument("--config", required=True, help="TOML experiment config")
    part.add_argument("--out", default=None, help="output file (default stdout)")
    part.set_defaults(func=_cmd_partition)
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
