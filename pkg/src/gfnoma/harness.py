"""Experiment orchestration: pipelines, Monte Carlo sweeps, persistence.

The harness turns a plain-text experiment config into deterministic
artifacts: trained ensemble checkpoints, sparsity-level model banks,
sweep CSVs (one row per grid point and algorithm), and convenience SVG
charts. Every random draw comes from a named substream of the master
seed, so all CSV cells and checkpoints are pure functions of
(config, seed); wall-clock timings go to a separate sidecar file for
that reason.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cs_baselines, daud_net, signal_model, sparsity_est
from .errors import ConfigurationError
from .rng import (BANK_STREAM, CODEBOOK_STREAM, GEOMETRY_STREAM, INIT_STREAM,
                  TEST_STREAM, TRAIN_STREAM, VALIDATION_STREAM, stream_rng)

KNOWN_ALGORITHMS = ("daud", "daud_ensemble", "ls_bomp", "mmse_bomp", "oracle")
SWEEP_AXES = ("snr_db", "active", "antennas", "devices", "subcarriers")

_GEOMETRY_TAG = {"uniform": 0, "normalized": 1}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class ScenarioSpec:
    """Plain dimensioning of a detection scenario (codebook built on demand)."""

    devices: int = 20
    subcarriers: int = 12
    codeword_nonzeros: int = 4
    slots: int = 2
    antennas: int = 1
    active: int = 2
    constellation: str = "qpsk"
    geometry: str = "uniform"
    cell_radius_km: float = 1.0
    min_distance_km: float = 0.1
    snr_db: float = 20.0
    train_snr_min_db: float = 5.0
    train_snr_max_db: float = 25.0


@dataclass
class TrainSpec:
    """Training-pipeline settings layered on top of the network config."""

    samples: int = 100_000
    width: int = 128
    depth: int = 3
    learning_rate: float = 5e-4
    batch_size: int = 64
    dropout: float = 0.1
    epochs: int = 10
    folds: int = 5
    ensemble: int = 2
    bank_samples: int = 30_000
    bank_epochs: int = 10
    bank_quantile: float = 0.01
    bank_validation: int = 2000

    def to_train_config(self, epochs: int | None = None) -> daud_net.TrainConfig:
        return daud_net.TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            dropout_prob=self.dropout,
            epochs=self.epochs if epochs is None else epochs,
            k_folds=self.folds,
            ensemble_size=self.ensemble,
        )


@dataclass
class SweepSpec:
    axis: str = "snr_db"
    grid: tuple = (5.0, 10.0, 15.0, 20.0, 25.0)
    algorithms: tuple = ("daud_ensemble", "ls_bomp", "mmse_bomp")
    trials: int = 2000


@dataclass
class ExperimentConfig:
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    train: TrainSpec = field(default_factory=TrainSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    master_seed: int = 0
    output_dir: Path = Path("out")

    def validate(self) -> None:
        if self.sweep.axis not in SWEEP_AXES:
            raise ConfigurationError(
                f"unknown sweep axis {self.sweep.axis!r}; choose from {SWEEP_AXES}"
            )
        unknown = set(self.sweep.algorithms) - set(KNOWN_ALGORITHMS)
        if unknown:
            raise ConfigurationError(f"unknown algorithms {sorted(unknown)}")
        if not self.sweep.grid:
            raise ConfigurationError("sweep grid is empty")
        if self.sweep.trials < 1:
            raise ConfigurationError("trial count must be >= 1")


def _coerce(value: str, like):
    if isinstance(like, bool):
        return value.lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def _fill_dataclass(obj, section) -> None:
    names = {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}
    for key, raw in section.items():
        if key not in names:
            raise ConfigurationError(f"unknown config key {key!r} in [{section.name}]")
        setattr(obj, key, _coerce(raw, names[key]))


def load_config(path) -> ExperimentConfig:
    """Parse a key=value experiment config with [scenario]/[train]/[sweep]/[output]."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigurationError(f"cannot read config file {path}")
    config = ExperimentConfig()
    if parser.has_section("scenario"):
        _fill_dataclass(config.scenario, parser["scenario"])
    if parser.has_section("train"):
        _fill_dataclass(config.train, parser["train"])
    if parser.has_section("sweep"):
        section = parser["sweep"]
        for key in section:
            if key == "axis":
                config.sweep.axis = section[key].strip()
            elif key == "grid":
                config.sweep.grid = tuple(
                    float(v) for v in section[key].replace(",", " ").split()
                )
            elif key == "algorithms":
                config.sweep.algorithms = tuple(
                    section[key].replace(",", " ").split()
                )
            elif key == "trials":
                config.sweep.trials = int(section[key])
            else:
                raise ConfigurationError(f"unknown config key {key!r} in [sweep]")
    if parser.has_section("output"):
        for key in parser["output"]:
            if key == "directory":
                config.output_dir = Path(parser["output"]["directory"])
            elif key == "seed":
                config.master_seed = int(parser["output"]["seed"])
            else:
                raise ConfigurationError(f"unknown config key {key!r} in [output]")
    config.validate()
    return config


def save_config(config: ExperimentConfig, path) -> None:
    parser = configparser.ConfigParser()
    parser["scenario"] = {
        f.name: str(getattr(config.scenario, f.name))
        for f in dataclasses.fields(config.scenario)
    }
    parser["train"] = {
        f.name: str(getattr(config.train, f.name))
        for f in dataclasses.fields(config.train)
    }
    parser["sweep"] = {
        "axis": config.sweep.axis,
        "grid": " ".join(f"{v:g}" for v in config.sweep.grid),
        "algorithms": " ".join(config.sweep.algorithms),
        "trials": str(config.sweep.trials),
    }
    parser["output"] = {"directory": str(config.output_dir),
                        "seed": str(config.master_seed)}
    with open(path, "w") as fh:
        parser.write(fh)


def desk_scale_config(seed: int = 0, output_dir="out") -> ExperimentConfig:
    """The desk-scale default experiment (normalized geometry).

    Sized so the full train-and-sweep cycle runs on a workstation CPU in
    minutes. Normalized geometry keeps per-device received powers equal;
    with the default near-far geometry at this tiny scale, cell-edge
    devices are undetectable by any method and success saturates on
    geometry rather than algorithm quality.
    """
    config = ExperimentConfig(master_seed=seed, output_dir=Path(output_dir))
    config.scenario.geometry = "normalized"
    return config


# ---------------------------------------------------------------------------
# Scenario construction
# ---------------------------------------------------------------------------

def build_scenario(spec: ScenarioSpec, master_seed: int) -> signal_model.AudScenario:
    """Materialize a scenario; codebook/geometry seeds derive from the dims.

    Two specs with identical structural dimensions share codebook and
    geometry under one master seed, so grid points of a sweep stay
    comparable, while a change of (N, m, S) regenerates them.
    """
    cb_rng = stream_rng(master_seed, CODEBOOK_STREAM, spec.devices,
                        spec.subcarriers, spec.codeword_nonzeros)
    codebook = signal_model.generate_codebook(
        spec.subcarriers, spec.devices, spec.codeword_nonzeros, cb_rng
    )
    geo_rng = stream_rng(master_seed, GEOMETRY_STREAM, spec.devices,
                         _GEOMETRY_TAG.get(spec.geometry, 0))
    geometry = signal_model.generate_geometry(
        spec.devices, spec.cell_radius_km, spec.min_distance_km,
        geo_rng, mode=spec.geometry,
    )
    return signal_model.AudScenario(
        codebook=codebook,
        geometry=geometry,
        n_active=spec.active,
        n_slots=spec.slots,
        n_antennas=spec.antennas,
        constellation=spec.constellation,
        train_snr_range_db=(spec.train_snr_min_db, spec.train_snr_max_db),
    )


def apply_axis(spec: ScenarioSpec, axis: str, value) -> ScenarioSpec:
    """Copy of ``spec`` with one sweep axis applied."""
    if axis == "snr_db":
        return dataclasses.replace(spec, snr_db=float(value))
    return dataclasses.replace(spec, **{axis: int(value)})


# ---------------------------------------------------------------------------
# Metric
# ---------------------------------------------------------------------------

def success_probability(estimated, true) -> float:
    """Fraction of true active devices present in the detected support."""
    true = np.asarray(true, dtype=int)
    if true.size == 0:
        raise ConfigurationError("the true support must be non-empty")
    estimated = np.asarray(estimated, dtype=int)
    return len(np.intersect1d(estimated, true)) / true.size


def _success_fractions(estimated: np.ndarray, true: np.ndarray) -> np.ndarray:
    est = np.sort(np.atleast_2d(estimated), axis=1)
    tru = np.sort(np.atleast_2d(true), axis=1)
    out = np.empty(len(tru))
    for i in range(len(tru)):
        out[i] = len(np.intersect1d(est[i], tru[i])) / tru.shape[1]
    return out


# ---------------------------------------------------------------------------
# Algorithm evaluation
# ---------------------------------------------------------------------------

@dataclass
class ResultRow:
    axis: str
    value: float
    algorithm: str
    p_succ: float
    trials: int
    ci_half_width: float
    mean_runtime_s: float
    unresolved: int = 0


def _evaluate(
    algorithm: str,
    scenario: signal_model.AudScenario,
    batch: signal_model.SampleBatch,
    models: list | None,
) -> tuple:
    """Per-trial success fractions and total runtime for one algorithm."""
    k = scenario.n_active
    start = time.perf_counter()
    if algorithm in ("daud", "daud_ensemble"):
        if not models:
            raise ConfigurationError(
                f"algorithm {algorithm!r} needs trained checkpoints"
            )
        used = models[:1] if algorithm == "daud" else models
        _, est = daud_net.ensemble_predict(used, batch.features, k)
        fractions = _success_fractions(est, batch.supports)
    elif algorithm in ("ls_bomp", "mmse_bomp"):
        phi = signal_model.scenario_sensing_matrix(scenario)
        estimator = "ls" if algorithm == "ls_bomp" else "mmse"
        fractions = np.empty(len(batch))
        for i in range(len(batch)):
            ratio = float(batch.noise_variance[i]) / scenario.mean_rx_power()
            config = cs_baselines.BompConfig(
                estimator=estimator, fixed_k=k,
                mmse_ratio=ratio if estimator == "mmse" else 0.0,
            )
            result = cs_baselines.bomp(batch.y[i], phi, config)
            fractions[i] = success_probability(list(result.support),
                                               batch.supports[i])
    elif algorithm == "oracle":
        phi = signal_model.scenario_sensing_matrix(scenario)
        fractions = np.empty(len(batch))
        for i in range(len(batch)):
            est = cs_baselines.oracle_exhaustive(batch.y[i], phi, k)
            fractions[i] = success_probability(list(est), batch.supports[i])
    else:
        raise ConfigurationError(f"unknown algorithm {algorithm!r}")
    return fractions, time.perf_counter() - start


def evaluate_point(
    spec: ScenarioSpec,
    algorithms,
    trials: int,
    master_seed: int,
    point_index: int,
    models: list | None,
) -> list:
    """Evaluate all algorithms on one grid point's shared test set."""
    scenario = build_scenario(spec, master_seed)
    rng = stream_rng(master_seed, TEST_STREAM, point_index)
    batch = signal_model.synthesize_batch(scenario, trials, rng, spec.snr_db)
    rows = []
    for algorithm in algorithms:
        fractions, elapsed = _evaluate(algorithm, scenario, batch, models)
        half = 1.96 * fractions.std(ddof=1) / np.sqrt(trials) if trials > 1 else 0.0
        rows.append((algorithm, float(fractions.mean()), float(half),
                     elapsed / trials))
    return rows


# ---------------------------------------------------------------------------
# Sweeps with resumable CSV output
# ---------------------------------------------------------------------------

_CSV_HEADER = "axis,value,algorithm,p_succ,trials,ci_half_width,unresolved\n"


def _progress_key(value, algorithm: str) -> str:
    return f"{value:.10g}|{algorithm}"


def run_sweep(
    config: ExperimentConfig,
    models: list | None = None,
    model_provider=None,
    csv_path=None,
) -> list:
    """Run the configured sweep and write results incrementally.

    ``models`` (or a per-point ``model_provider(spec, value) -> list``)
    supplies trained networks for the learned algorithms. Completed
    (value, algorithm) pairs are recorded in a progress ledger next to the
    CSV so interrupted sweeps resume without recomputation. Timings are
    written to a separate ``*_runtimes.csv`` because they are not
    functions of the seed.
    """
    config.validate()
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = Path(csv_path) if csv_path else outdir / "results.csv"
    progress_path = csv_path.with_suffix(".progress")
    runtime_path = csv_path.with_name(csv_path.stem + "_runtimes.csv")

    done = set()
    if progress_path.exists():
        done = set(progress_path.read_text().split())
    fresh = not csv_path.exists()
    threads = max(1, int(os.environ.get("GFNA_THREADS", "1")))

    points = []
    for index, value in enumerate(config.sweep.grid):
        spec = apply_axis(config.scenario, config.sweep.axis, value)
        todo = [a for a in config.sweep.algorithms
                if _progress_key(value, a) not in done]
        if todo:
            points.append((index, value, spec, todo))

    def work(args):
        index, value, spec, todo = args
        point_models = models
        if model_provider is not None:
            point_models = model_provider(spec, value)
        return evaluate_point(spec, todo, config.sweep.trials,
                              config.master_seed, index, point_models)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, points))
    else:
        results = [work(p) for p in points]

    rows: list[ResultRow] = []
    with open(csv_path, "a") as csv_fh, open(progress_path, "a") as prog_fh, \
            open(runtime_path, "a") as rt_fh:
        if fresh:
            csv_fh.write(_CSV_HEADER)
            rt_fh.write("axis,value,algorithm,mean_runtime_s\n")
        for (index, value, spec, todo), point_rows in zip(points, results):
            for algorithm, p_succ, half, runtime in point_rows:
                row = ResultRow(config.sweep.axis, float(value), algorithm,
                                p_succ, config.sweep.trials, half, runtime)
                rows.append(row)
                csv_fh.write(
                    f"{row.axis},{row.value:.10g},{row.algorithm},"
                    f"{row.p_succ:.10g},{row.trials},{row.ci_half_width:.10g},"
                    f"{row.unresolved}\n"
                )
                rt_fh.write(f"{row.axis},{row.value:.10g},{row.algorithm},"
                            f"{row.mean_runtime_s:.6g}\n")
                prog_fh.write(_progress_key(value, algorithm) + "\n")
            csv_fh.flush()
            prog_fh.flush()
    try:
        plot_sweep(csv_path, csv_path.with_suffix(".svg"))
    except Exception:  # plotting is a convenience, never fail the sweep
        pass
    return rows


def plot_sweep(csv_path, svg_path) -> None:
    """Line chart of p_succ vs the sweep axis, one line per algorithm."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series: dict[str, list] = {}
    axis_name = "value"
    with open(csv_path) as fh:
        header = fh.readline().strip().split(",")
        idx = {name: i for i, name in enumerate(header)}
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) < len(header):
                continue
            axis_name = parts[idx["axis"]]
            series.setdefault(parts[idx["algorithm"]], []).append(
                (float(parts[idx["value"]]), float(parts[idx["p_succ"]]))
            )
    fig, ax = plt.subplots(figsize=(6, 4))
    for algorithm in sorted(series):
        pts = sorted(series[algorithm])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                label=algorithm)
    ax.set_xlabel(axis_name)
    ax.set_ylabel("success probability")
    ax.set_ylim(0, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(svg_path, metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# Training pipeline
# ---------------------------------------------------------------------------

def train_pipeline(config: ExperimentConfig, out_dir=None, quiet: bool = False) -> Path:
    """Train the ensemble offline on synthetic data and persist everything.

    Each ensemble member gets its own data stream and initialization
    stream. Inputs are standardized by the scenario's closed-form feature
    scale during optimization; the constant is folded back into the input
    weights so checkpoints act on raw received vectors. Writes
    ``member_<j>.daud`` checkpoints, per-iteration loss curves, per-epoch
    validation curves, and an ensemble manifest; returns the manifest path.
    """
    out_dir = Path(out_dir) if out_dir else Path(config.output_dir) / "models"
    out_dir.mkdir(parents=True, exist_ok=True)
    scenario = build_scenario(config.scenario, config.master_seed)
    shape = daud_net.NetworkShape(
        scenario.input_dim, config.train.width, config.train.depth,
        scenario.n_devices,
    )
    scale = scenario.feature_scale()
    train_config = config.train.to_train_config()

    entries = []
    with open(out_dir / "losses.csv", "w") as loss_fh, \
            open(out_dir / "validation.csv", "w") as val_fh:
        loss_fh.write("member,fold,iteration,train_loss\n")
        val_fh.write("member,fold,epoch,val_loss\n")
        for member in range(1, config.train.ensemble + 1):
            data_rng = stream_rng(config.master_seed, TRAIN_STREAM, member)
            feats, sups = signal_model.generate_dataset_arrays(
                scenario, config.train.samples, data_rng
            )
            feats /= scale
            init_rng = stream_rng(config.master_seed, INIT_STREAM, member)
            result = daud_net.train(feats, sups, shape, train_config, init_rng)
            daud_net.fold_input_scale(result.params, scale)
            name = f"member_{member}.daud"
            daud_net.save_checkpoint(result.params, out_dir / name)
            entries.append(name)
            for fold, iteration, loss in result.loss_curve:
                loss_fh.write(f"{member},{fold},{iteration},{loss:.10g}\n")
            for fold, epoch, loss in result.val_curve:
                val_fh.write(f"{member},{fold},{epoch},{loss:.10g}\n")
            if not quiet:
                print(f"member {member}: fold val losses "
                      f"{[f'{v:.4f}' for v in result.fold_val_losses]}")

    manifest = configparser.ConfigParser()
    manifest["ensemble"] = {"members": str(len(entries))}
    for j, name in enumerate(entries, start=1):
        manifest[f"member {j}"] = {"checkpoint": name}
    manifest_path = out_dir / "ensemble.manifest"
    with open(manifest_path, "w") as fh:
        manifest.write(fh)
    save_config(config, out_dir / "experiment.cfg")
    return manifest_path


def load_ensemble(manifest_path) -> list:
    """Load all ensemble member checkpoints listed in a manifest."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "ensemble.manifest"
    parser = configparser.ConfigParser()
    if not parser.read(manifest_path):
        raise ConfigurationError(f"cannot read ensemble manifest {manifest_path}")
    count = int(parser["ensemble"]["members"])
    models = []
    for j in range(1, count + 1):
        rel = parser[f"member {j}"]["checkpoint"]
        path = manifest_path.parent / rel
        if not path.exists():
            raise ConfigurationError(f"ensemble member {j} checkpoint missing: {path}")
        models.append(daud_net.load_checkpoint(path))
    return models


# ---------------------------------------------------------------------------
# Sparsity-bank pipeline
# ---------------------------------------------------------------------------

def bank_pipeline(
    config: ExperimentConfig,
    max_sparsity: int,
    out_dir=None,
    quiet: bool = False,
) -> Path:
    """Train one model per sparsity level and calibrate its threshold.

    Returns the path of the bank manifest (level -> checkpoint -> tau).
    """
    if max_sparsity < 1:
        raise ConfigurationError("need at least one sparsity level")
    out_dir = Path(out_dir) if out_dir else Path(config.output_dir) / "bank"
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for level in range(1, max_sparsity + 1):
        spec = dataclasses.replace(config.scenario, active=level)
        scenario = build_scenario(spec, config.master_seed)
        shape = daud_net.NetworkShape(
            scenario.input_dim, config.train.width, config.train.depth,
            scenario.n_devices,
        )
        scale = scenario.feature_scale()
        data_rng = stream_rng(config.master_seed, BANK_STREAM, TRAIN_STREAM, level)
        feats, sups = signal_model.generate_dataset_arrays(
            scenario, config.train.bank_samples, data_rng
        )
        feats /= scale
        init_rng = stream_rng(config.master_seed, BANK_STREAM, INIT_STREAM, level)
        train_config = config.train.to_train_config(epochs=config.train.bank_epochs)
        result = daud_net.train(feats, sups, shape, train_config, init_rng)
        daud_net.fold_input_scale(result.params, scale)

        val_rng = stream_rng(config.master_seed, BANK_STREAM, VALIDATION_STREAM, level)
        val_feats, val_sups = signal_model.generate_dataset_arrays(
            scenario, config.train.bank_validation, val_rng
        )
        calibration = sparsity_est.calibrate_tau(
            result.params, val_feats, val_sups, config.train.bank_quantile
        )
        name = f"level_{level}.daud"
        daud_net.save_checkpoint(result.params, out_dir / name)
        entries.append((level, name, calibration.tau))
        if not quiet:
            print(f"bank level {level}: tau={calibration.tau:.4f}")
    manifest_path = out_dir / "bank.manifest"
    sparsity_est.write_bank_manifest(manifest_path, entries)
    return manifest_path
