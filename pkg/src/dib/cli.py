"""Command-line frontend: train sweeps, measure checkpoints, emit reports.

Subcommands:
  circuit   sweep on an enumerated Boolean circuit, report plane + subsets
  glass     sweep on particle-neighborhood data (file or synthetic)
  mi-bench  benchmark the information bounds on a known-MI family
  report    recompute measurement CSVs for an existing run directory

Every run directory is self-describing: config.toml (training), meta.txt
(data source and measurement protocol), and for circuits a canonical
copy of the wiring.  `report RUNDIR` rebuilds the dataset from those
files and re-measures without retraining.

Exit codes: 0 success, 1 runtime failure, 2 invalid configuration.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .analysis import (AnalysisError, assemble_plane, distinguishability,
                       measure_run, probe_grid, top_k_channels,
                       write_alloc_csv, write_disting_csv)
from .circuit import (CircuitError, TruthTable, default_circuit, load_circuit,
                      serialize_circuit, subset_scatter, write_scatter_csv)
from .glassfeat import (GlassError, NormStats, featurize_all, labels_of,
                        linear_baseline, load_dataset, split_dataset,
                        synth_dataset)
from .miest import DEFAULT_BATCHES, DEFAULT_K, bench_orthogonal, write_bench_csv
from .objective import (DIBModel, ObjectiveError, TrainConfig, load_config,
                        train_sweep)
from .diffcore import Rng
from .textio import read_flat_config, write_flat_config

# protocol keys a config file may set alongside TrainConfig fields
_PROTOCOL_DEFAULTS = {
    "k": DEFAULT_K,
    "n_batches": DEFAULT_BATCHES,
    "train_frac": 0.9,
    "synth_n": 2000,
    "synth_difficulty": 1.0,
}

GLASS_DEFAULTS = dict(
    encoder_kind="scalar-mlp",
    latent_dim=32,
    encoder_hidden=(128, 128),
    decoder_hidden=(256, 256, 256),
    decoder_activation="tanh",
    batch_size=256,
    learning_rate=1e-4,
    beta_start=1e-6,
    beta_end=1.0,
)

GLASS_EPOCHS = 250
N_DISTING_CHANNELS = 4


class CLIError(ValueError):
    """Configuration or input validation failure (exit code 2)."""


def _prepare_out(out: str | None, force: bool) -> Path:
    if out is None:
        raise CLIError("--out is required")
    path = Path(out)
    if path.exists() and any(path.iterdir()) and not force:
        raise CLIError(f"{path} is not empty; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _print_config(mapping: dict) -> None:
    for key, value in mapping.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        print(f"{key} = {value}")


def _load_file_config(path: str) -> dict:
    try:
        return read_flat_config(path)
    except (OSError, ValueError) as err:
        raise CLIError(f"cannot read config file {path}: {err}") from err


def _merged_config(args, base: dict) -> tuple[TrainConfig, dict]:
    """Defaults < config file < explicit flags; protocol keys split off."""
    protocol = dict(_PROTOCOL_DEFAULTS)
    mapping = dict(base)
    if args.config:
        file_map = _load_file_config(args.config)
        for key in list(file_map):
            if key in protocol:
                protocol[key] = file_map.pop(key)
        if "n_channels" in file_map:
            raise CLIError("n_channels is derived from the data; "
                           "remove it from the config file")
        mapping.update(file_map)
    for name in ("steps", "beta_start", "beta_end", "seed"):
        value = getattr(args, name)
        if value is not None:
            mapping[name] = value
    if args.K is not None:
        protocol["k"] = args.K
    if args.B is not None:
        protocol["n_batches"] = args.B
    try:
        config = TrainConfig.from_mapping(mapping)
    except ObjectiveError as err:
        raise CLIError(str(err)) from err
    protocol["k"] = int(protocol["k"])
    protocol["n_batches"] = int(protocol["n_batches"])
    protocol["train_frac"] = float(protocol["train_frac"])
    protocol["synth_n"] = int(protocol["synth_n"])
    protocol["synth_difficulty"] = float(protocol["synth_difficulty"])
    return config, protocol


def _run_sweep(config: TrainConfig, train_set, val_set, run_dir: Path) -> bool:
    result = train_sweep(config, train_set, val_set, run_dir)
    if result.diverged:
        print(f"training diverged at step {result.last_step}; "
              f"checkpoints up to that point were kept "
              f"(`dib report {run_dir}` measures them)", file=sys.stderr)
        return False
    return True


def _print_plane_summary(points) -> None:
    if not points:
        return
    top = points[-1]
    print(f"measured {len(points)} checkpoints; widest: "
          f"{top.total_bits:.3f} total bits, "
          f"{top.predictive_bits:.3f} predictive bits, "
          f"accuracy {top.accuracy:.3f}")


# -- circuit ---------------------------------------------------------------


def _load_circuit_arg(spec_arg: str | None):
    if spec_arg is None or spec_arg == "default":
        return default_circuit()
    try:
        return load_circuit(spec_arg)
    except OSError as err:
        raise CLIError(str(err)) from err
    except CircuitError as err:
        raise CLIError(str(err)) from err


def _circuit_data(table: TruthTable) -> tuple[np.ndarray, np.ndarray]:
    return (table.inputs.astype(np.float64),
            table.outputs.astype(np.float64))


def _emit_circuit_reports(run_dir: Path, table: TruthTable, k: int, b: int,
                          seed: int):
    data = _circuit_data(table)
    measure_run(run_dir, data, k=k, n_batches=b, seed=seed)
    points = assemble_plane(run_dir)
    labels = [f"x{i}" for i in range(1, table.n_inputs + 1)]
    write_alloc_csv(run_dir / "alloc.csv", points, labels=labels)
    write_scatter_csv(subset_scatter(table), run_dir / "subsets.csv")
    return points


def cmd_circuit(args) -> int:
    if args.measure_only:
        return _report_run(args.measure_only, expect_kind="circuit",
                           k=args.K, b=args.B, seed=None)
    spec = _load_circuit_arg(args.spec)
    table = TruthTable.from_circuit(spec)
    config, protocol = _merged_config(args, dict(
        TrainConfig(n_channels=spec.n_inputs).to_mapping()))
    run_dir = _prepare_out(args.out, args.force)
    measure_seed = config.seed + 1
    _print_config({"kind": "circuit", "out": str(run_dir),
                   "n_inputs": spec.n_inputs,
                   "output_entropy_bits": table.output_entropy_bits(),
                   **config.to_mapping(),
                   "k": protocol["k"], "n_batches": protocol["n_batches"],
                   "measure_seed": measure_seed, "serial": True})
    (run_dir / "circuit.circ").write_text(serialize_circuit(spec))
    write_flat_config(run_dir / "meta.txt", {
        "kind": "circuit", "k": protocol["k"],
        "n_batches": protocol["n_batches"], "measure_seed": measure_seed})
    data = _circuit_data(table)
    if not _run_sweep(config, data, data, run_dir):
        return 1
    points = _emit_circuit_reports(run_dir, table, protocol["k"],
                                   protocol["n_batches"], measure_seed)
    _print_plane_summary(points)
    return 0


# -- glass -----------------------------------------------------------------


def _load_glass_source(args, protocol: dict, seed: int):
    """Returns (neighborhood list, meta entries describing the source)."""
    if args.data is None:
        raise CLIError("--data is required (a dataset file, or `synth`)")
    if args.data == "synth":
        nbs = synth_dataset(seed, protocol["synth_n"],
                            protocol["synth_difficulty"])
        meta = {"data": "synth", "synth_n": protocol["synth_n"],
                "synth_difficulty": protocol["synth_difficulty"]}
    else:
        try:
            nbs = load_dataset(args.data)
        except OSError as err:
            raise CLIError(str(err)) from err
        except GlassError as err:
            raise CLIError(str(err)) from err
        meta = {"data": str(Path(args.data).resolve())}
    meta["data_seed"] = seed
    meta["train_frac"] = protocol["train_frac"]
    return nbs, meta


def _glass_splits(nbs, seed: int, train_frac: float):
    train_nbs, val_nbs = split_dataset(nbs, seed, train_frac)
    raw_train = featurize_all(train_nbs)
    raw_val = featurize_all(val_nbs)
    return (raw_train, labels_of(train_nbs)), (raw_val, labels_of(val_nbs))


def _emit_glass_reports(run_dir: Path, train_set, val_set, labels, k: int,
                        b: int, seed: int):
    measure_run(run_dir, train_set, val_set, k=k, n_batches=b, seed=seed)
    points = assemble_plane(run_dir)
    write_alloc_csv(run_dir / "alloc.csv", points, labels=labels)
    # distinguishability where the bottleneck passes about one bit
    target = min(points, key=lambda p: abs(p.total_bits - 1.0))
    config = load_config(run_dir / "config.toml")
    model = DIBModel.from_checkpoint(
        config, run_dir / "ckpt" / f"{target.step}.dibckpt")
    channels = top_k_channels(target, N_DISTING_CHANNELS)
    if not channels:
        # nothing above threshold: still show the busiest channel
        channels = [int(np.argmax(target.per_channel_bits))]
    for ch in channels:
        probes = probe_grid(train_set[0][:, ch])
        matrix = distinguishability(model, ch, probes)
        write_disting_csv(run_dir / f"disting_{labels[ch]}.csv", matrix)
    return points


def cmd_glass(args) -> int:
    if args.measure_only:
        return _report_run(args.measure_only, expect_kind="glass",
                           k=args.K, b=args.B, seed=None,
                           data_override=args.data)
    # first pass resolves seed and batch size so the split and the
    # epoch-derived sweep length can be computed; second pass is final
    pre, protocol = _merged_config(args, dict(
        TrainConfig(n_channels=1, **GLASS_DEFAULTS).to_mapping()))
    nbs, source_meta = _load_glass_source(args, protocol, pre.seed)
    (raw_train, y_train), (raw_val, y_val) = _glass_splits(
        nbs, pre.seed, protocol["train_frac"])
    stats = NormStats.fit(raw_train)
    x_train = stats.apply(raw_train)
    x_val = stats.apply(raw_val)
    labels = stats.kept_labels()
    base = dict(TrainConfig(n_channels=x_train.shape[1],
                            **GLASS_DEFAULTS).to_mapping())
    # one epoch is a full pass; the sweep length follows the data size
    base["steps"] = GLASS_EPOCHS * max(
        1, math.ceil(len(x_train) / pre.batch_size))
    config, protocol = _merged_config(args, base)
    run_dir = _prepare_out(args.out, args.force)
    measure_seed = config.seed + 1
    _print_config({"kind": "glass", "out": str(run_dir), **source_meta,
                   "n_train": len(x_train), "n_val": len(x_val),
                   **config.to_mapping(),
                   "k": protocol["k"], "n_batches": protocol["n_batches"],
                   "measure_seed": measure_seed, "serial": True})
    stats.save(run_dir / "norm.json")
    write_flat_config(run_dir / "meta.txt", {
        "kind": "glass", **source_meta, "k": protocol["k"],
        "n_batches": protocol["n_batches"], "measure_seed": measure_seed})
    baseline = linear_baseline((x_train, y_train), (x_val, y_val))
    write_flat_config(run_dir / "baseline.txt",
                      {"baseline_accuracy": baseline})
    print(f"linear baseline accuracy = {baseline:.4f}")
    if not _run_sweep(config, (x_train, y_train), (x_val, y_val), run_dir):
        return 1
    points = _emit_glass_reports(run_dir, (x_train, y_train), (x_val, y_val),
                                 labels, protocol["k"],
                                 protocol["n_batches"], measure_seed)
    _print_plane_summary(points)
    return 0


# -- report ----------------------------------------------------------------


def _meta_value(meta: dict, key: str):
    if key not in meta:
        raise CLIError(f"meta.txt is missing {key!r}")
    return meta[key]


def _report_run(run_dir_arg: str, expect_kind: str | None = None,
                k: int | None = None, b: int | None = None,
                seed: int | None = None,
                data_override: str | None = None) -> int:
    run_dir = Path(run_dir_arg)
    meta_path = run_dir / "meta.txt"
    if not meta_path.exists():
        raise CLIError(f"{run_dir} has no meta.txt; not a run directory")
    meta = read_flat_config(meta_path)
    kind = meta.get("kind")
    if expect_kind is not None and kind != expect_kind:
        raise CLIError(f"{run_dir} is a {kind!r} run, not {expect_kind!r}")
    if kind not in ("circuit", "glass"):
        raise CLIError(f"cannot measure a {kind!r} run")
    k = int(k if k is not None else _meta_value(meta, "k"))
    b = int(b if b is not None else _meta_value(meta, "n_batches"))
    seed = int(seed if seed is not None else _meta_value(meta, "measure_seed"))
    _print_config({"kind": f"report ({kind})", "run_dir": str(run_dir),
                   "k": k, "n_batches": b, "measure_seed": seed,
                   "serial": True})
    if kind == "circuit":
        if data_override is not None:
            raise CLIError("circuit runs enumerate their own data; "
                           "--data does not apply")
        spec = _load_circuit_arg(str(run_dir / "circuit.circ"))
        points = _emit_circuit_reports(run_dir, TruthTable.from_circuit(spec),
                                       k, b, seed)
    else:
        source = data_override or _meta_value(meta, "data")
        if source == "synth":
            if "synth_n" not in meta:
                raise CLIError(f"{run_dir} was not trained on synthetic data")
            nbs = synth_dataset(int(_meta_value(meta, "data_seed")),
                                int(meta["synth_n"]),
                                float(meta["synth_difficulty"]))
        else:
            try:
                nbs = load_dataset(source)
            except (OSError, GlassError) as err:
                raise CLIError(str(err)) from err
        (raw_train, y_train), (raw_val, y_val) = _glass_splits(
            nbs, int(_meta_value(meta, "data_seed")),
            float(_meta_value(meta, "train_frac")))
        stats = NormStats.load(run_dir / "norm.json")
        points = _emit_glass_reports(
            run_dir, (stats.apply(raw_train), y_train),
            (stats.apply(raw_val), y_val), stats.kept_labels(), k, b, seed)
    _print_plane_summary(points)
    return 0


def cmd_report(args) -> int:
    return _report_run(args.run_dir, k=args.K, b=args.B, seed=args.seed,
                       data_override=args.data)


# -- mi-bench --------------------------------------------------------------


def cmd_mi_bench(args) -> int:
    run_dir = _prepare_out(args.out, args.force)
    b = args.B if args.B is not None else (32 if args.quick else 256)
    seed = args.seed if args.seed is not None else 14
    _print_config({"kind": "mi-bench", "out": str(run_dir),
                   "h_list": "1,2,4,6", "k_grid": "64,256,1024",
                   "n_batches": b, "seed": seed})
    rows = bench_orthogonal(n_batches=b, rng=Rng(seed))
    write_bench_csv(rows, run_dir / "bench.csv")
    bad = 0
    for r in rows:
        lo_ok = r.lower_bits <= r.mc_bits + 3 * (r.lower_std + r.mc_stderr) + 1e-9
        up_ok = r.mc_bits <= r.upper_bits + 3 * (r.upper_std + r.mc_stderr) + 1e-9
        bad += not (lo_ok and up_ok)
    print(f"sandwich check: {len(rows) - bad}/{len(rows)} rows "
          f"consistent with the oracle within 3 sigma")
    if bad:
        print("error: bound sandwich violated; see bench.csv",
              file=sys.stderr)
        return 1
    return 0


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dib",
        description="Distributed information bottleneck: train, measure, "
                    "report.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="run directory to create")
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--steps", type=int, default=None)
    common.add_argument("--beta-start", type=float, default=None)
    common.add_argument("--beta-end", type=float, default=None)
    common.add_argument("--K", type=int, default=None,
                        help="measurement batch size")
    common.add_argument("--B", type=int, default=None,
                        help="measurement batch count")
    common.add_argument("--serial", action="store_true",
                        help="bitwise-reproducible measurement "
                             "(always on; accepted for compatibility)")
    common.add_argument("--force", action="store_true",
                        help="allow writing into a non-empty directory")
    common.add_argument("--measure-only", metavar="RUNDIR", default=None,
                        help="skip training; re-measure an existing run")

    p_circuit = sub.add_parser("circuit", parents=[common],
                               help="Boolean circuit sweep")
    p_circuit.add_argument("--spec", default=None,
                           help="circuit file (default: packaged 10-input)")
    p_circuit.set_defaults(func=cmd_circuit)

    p_glass = sub.add_parser("glass", parents=[common],
                             help="particle neighborhood sweep")
    p_glass.add_argument("--data", default=None,
                         help="dataset file, or `synth`")
    p_glass.set_defaults(func=cmd_glass)

    p_bench = sub.add_parser("mi-bench", help="bound benchmark")
    p_bench.add_argument("--out", help="output directory")
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--B", type=int, default=None)
    p_bench.add_argument("--quick", action="store_true",
                         help="B=32 smoke profile")
    p_bench.add_argument("--force", action="store_true")
    p_bench.set_defaults(func=cmd_mi_bench)

    p_report = sub.add_parser("report", help="re-measure an existing run")
    p_report.add_argument("run_dir")
    p_report.add_argument("--data", default=None,
                          help="override the recorded dataset path")
    p_report.add_argument("--seed", type=int, default=None)
    p_report.add_argument("--K", type=int, default=None)
    p_report.add_argument("--B", type=int, default=None)
    p_report.add_argument("--serial", action="store_true")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CLIError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (AnalysisError, CircuitError, GlassError, ObjectiveError) as err:
        print(f"runtime error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
