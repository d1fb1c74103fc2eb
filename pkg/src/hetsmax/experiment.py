"""Config-driven experiment harness: single runs, temperature sweeps, reports.

Every run is identified by (config hash, temperature, seed) and writes its
own directory, so sweep cells are share-nothing and can execute in
parallel. The config hash covers the semantically meaningful fields only;
per-cell coordinates (temperature, seed) and infrastructure knobs (output
directory, worker count) stay out of it. Temperature selection reads
validation rows exclusively; test metrics are joined in afterwards.
"""

from __future__ import annotations

import concurrent.futures
import copy
import csv
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    NoisyDataset,
    corrupt_labels,
    effective_noise_rate,
    load_and_split,
    preset_spec,
    read_dataset,
    synth_clusters,
    write_dataset,
)
from .head import HetHeadConfig
from .metrics import (
    MetricsReport,
    ZeroVarianceError,
    apply_platt,
    estimate_bias,
    fit_platt_temperature,
    paired_t_test,
    predict_dataset_probs,
    report_from_probs,
    significance_marker,
)
from .rng import NoiseFamily, SeededRng, derive_seed
from .training import (
    BootstrapConfig,
    CoTeachingConfig,
    MLPSpec,
    MentorNetConfig,
    OptimizerConfig,
    TrainConfig,
    TrainedModel,
    fit,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "RunResult",
    "SweepResult",
    "DEFAULT_TEMPERATURE_GRID",
    "config_hash",
    "run_experiment",
    "sweep_temperature",
    "diagnose",
    "report",
    "generate_dataset",
]

# Temperature search grid from the training recipe.
DEFAULT_TEMPERATURE_GRID = (
    0.025, 0.05, 0.1, 0.2, 0.6, 1.0, 1.4, 1.8, 2.2, 2.6,
    3.0, 5.0, 10.0, 15.0, 20.0, 35.0, 50.0, 100.0,
)

HISTORY_COLUMNS = ("epoch", "train_loss", "valid_acc", "valid_nll", "log_dispersion")


class ConfigError(ValueError):
    """Invalid experiment configuration; message lists field paths."""


@dataclass
class DatasetSection:
    kind: str = "synthetic"  # synthetic | csv | saved
    classes: int = 10
    dims: int = 2
    per_class: int = 400
    separation: float = 6.0
    seed: int = 7
    path: str | None = None
    label_column: str = "label"
    scale_features: bool = True
    fractions: tuple = (0.70, 0.15, 0.15)


@dataclass
class CorruptionSection:
    preset: str = "default"
    seed: int = 11
    exclude_original: bool = False


@dataclass
class ModelSection:
    hidden: tuple = (32, 32)
    slope: float = 0.01
    dropout: tuple = ()


@dataclass
class HeadSection:
    mode: str = "heteroscedastic"
    tau: float = 1.0
    tau_grid: tuple = DEFAULT_TEMPERATURE_GRID
    train_samples: int = 100
    eval_samples: int = 1000
    family: str = "gaussian"


@dataclass
class TrainSection:
    max_epochs: int = 1000
    patience: int = 10
    batch_size: int = 128
    baseline: str = "none"
    bootstrap_beta: float = 0.8
    mentornet_lambda2: float = 1.0
    mentornet_burn_in: int = 5
    mentornet_ema_decay: float = 0.9
    coteaching_ramp_epochs: int = 10
    noise_rate: float | None = None  # default: effective rate of the preset
    early_stop_samples: int = 100
    track_gradients: bool = True


@dataclass
class ExperimentConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    corruption: CorruptionSection = field(default_factory=CorruptionSection)
    model: ModelSection = field(default_factory=ModelSection)
    head: HeadSection = field(default_factory=HeadSection)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    train: TrainSection = field(default_factory=TrainSection)
    seeds: tuple = tuple(range(10))
    out_dir: str = "runs"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        cfg = cls(
            dataset=_section(DatasetSection, raw.get("dataset", {}), "dataset"),
            corruption=_section(CorruptionSection, raw.get("corruption", {}), "corruption"),
            model=_section(ModelSection, raw.get("model", {}), "model"),
            head=_section(HeadSection, raw.get("head", {}), "head"),
            optimizer=_section(OptimizerConfig, raw.get("optimizer", {}), "optimizer"),
            train=_section(TrainSection, raw.get("train", {}), "train"),
            seeds=tuple(raw.get("seeds", tuple(range(10)))),
            out_dir=str(raw.get("out_dir", "runs")),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        errors = []
        d = self.dataset
        if d.kind not in ("synthetic", "csv", "saved"):
            errors.append(f"dataset.kind: unknown kind {d.kind!r}")
        if d.kind == "synthetic":
            if d.classes < 2:
                errors.append("dataset.classes: must be at least 2")
            if d.dims < 1:
                errors.append("dataset.dims: must be positive")
            if d.per_class < 1:
                errors.append("dataset.per_class: must be positive")
            if d.separation < 0:
                errors.append("dataset.separation: must be non-negative")
        elif d.path is None:
            errors.append(f"dataset.path: required for kind {d.kind!r}")
        fr = tuple(d.fractions)
        if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            errors.append("dataset.fractions: three non-negative values summing to 1")
        try:
            preset_spec(self.corruption.preset,
                        d.classes if d.kind == "synthetic" else 10)
        except ValueError as exc:
            errors.append(f"corruption.preset: {exc}")
        h = self.head
        if h.mode not in ("heteroscedastic", "homoscedastic"):
            errors.append(f"head.mode: unknown mode {h.mode!r}")
        if not h.tau > 0:
            errors.append(f"head.tau: must be positive, got {h.tau}")
        if not h.tau_grid:
            errors.append("head.tau_grid: must be nonempty")
        for i, t in enumerate(h.tau_grid):
            if not t > 0:
                errors.append(f"head.tau_grid[{i}]: must be positive, got {t}")
        if h.train_samples < 1:
            errors.append("head.train_samples: must be at least 1")
        if h.eval_samples < 1:
            errors.append("head.eval_samples: must be at least 1")
        try:
            NoiseFamily.from_name(h.family)
        except ValueError as exc:
            errors.append(f"head.family: {exc}")
        if self.optimizer.kind not in ("adam", "sgd"):
            errors.append(f"optimizer.kind: unknown kind {self.optimizer.kind!r}")
        if not self.optimizer.lr > 0:
            errors.append("optimizer.lr: must be positive")
        t = self.train
        if t.max_epochs < 0:
            errors.append("train.max_epochs: must be non-negative")
        if t.patience < 1:
            errors.append("train.patience: must be at least 1")
        if t.batch_size < 1:
            errors.append("train.batch_size: must be positive")
        if t.baseline not in ("none", "bootstrap", "mentornet", "coteaching"):
            errors.append(f"train.baseline: unknown baseline {t.baseline!r}")
        if not 0.0 <= t.bootstrap_beta <= 1.0:
            errors.append("train.bootstrap_beta: must lie in [0, 1]")
        if t.noise_rate is not None and not 0.0 <= t.noise_rate < 1.0:
            errors.append("train.noise_rate: must lie in [0, 1)")
        if not self.seeds:
            errors.append("seeds: must be nonempty")
        if errors:
            raise ConfigError("; ".join(errors))


def _section(section_cls, raw: dict, path: str):
    known = {f.name for f in section_cls.__dataclass_fields__.values()}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(
            f"{path}: unknown fields {sorted(unknown)}; expected subset of {sorted(known)}"
        )
    kwargs = dict(raw)
    for key, value in kwargs.items():
        if isinstance(value, list):
            kwargs[key] = tuple(value)
    try:
        return section_cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_hash(config: ExperimentConfig) -> str:
    """Hash of the semantically meaningful fields, stable under reordering."""
    payload = config.to_dict()
    payload.pop("out_dir", None)
    payload.pop("seeds", None)
    payload["head"].pop("tau", None)
    payload["head"].pop("tau_grid", None)
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def build_dataset(config: ExperimentConfig) -> NoisyDataset:
    """Materialise and corrupt the configured dataset, deterministically."""
    d = config.dataset
    if d.kind == "synthetic":
        ds = synth_clusters(d.classes, d.dims, d.per_class, d.separation,
                            SeededRng(derive_seed(d.seed, "synth")), d.fractions)
    elif d.kind == "csv":
        ds = load_and_split(d.path, d.label_column, d.fractions,
                            SeededRng(derive_seed(d.seed, "split")),
                            scale_features=d.scale_features)
    else:  # saved: corruption already realised in the file
        return read_dataset(d.path)
    spec = preset_spec(config.corruption.preset, ds.num_classes)
    if config.corruption.exclude_original:
        spec.exclude_original = True
    return corrupt_labels(ds, spec, SeededRng(derive_seed(config.corruption.seed, "corrupt")))


def _resolved_noise_rate(config: ExperimentConfig) -> float:
    if config.train.noise_rate is not None:
        return config.train.noise_rate
    classes = config.dataset.classes if config.dataset.kind == "synthetic" else 10
    return effective_noise_rate(preset_spec(config.corruption.preset, classes))


def _train_config(config: ExperimentConfig) -> TrainConfig:
    t = config.train
    rate = _resolved_noise_rate(config)
    return TrainConfig(
        max_epochs=t.max_epochs,
        patience=t.patience,
        batch_size=t.batch_size,
        baseline=t.baseline,
        bootstrap=BootstrapConfig(beta=t.bootstrap_beta),
        mentornet=MentorNetConfig(lambda2=t.mentornet_lambda2,
                                  burn_in_epochs=t.mentornet_burn_in,
                                  ema_decay=t.mentornet_ema_decay,
                                  noise_rate=rate),
        coteaching=CoTeachingConfig(noise_rate=rate,
                                    ramp_epochs=t.coteaching_ramp_epochs),
        early_stop_samples=t.early_stop_samples,
        track_gradients=t.track_gradients,
    )


def _head_config(config: ExperimentConfig, num_classes: int) -> HetHeadConfig:
    h = config.head
    return HetHeadConfig(
        num_classes=num_classes,
        tau=h.tau,
        train_samples=h.train_samples,
        eval_samples=h.eval_samples,
        family=NoiseFamily.from_name(h.family),
        mode=h.mode,
    )


@dataclass
class RunResult:
    """Everything one (config, seed) run produced."""

    config_hash: str
    seed: int
    tau: float
    mode: str
    baseline: str
    valid: MetricsReport
    test: MetricsReport
    test_platt: MetricsReport
    platt_temperature: float
    checkpoint: str
    run_dir: str
    wall_time_s: float

    def result_payload(self) -> dict:
        """The deterministic part, written as result.json."""
        return {
            "config_hash": self.config_hash,
            "seed": self.seed,
            "tau": self.tau,
            "mode": self.mode,
            "baseline": self.baseline,
            "valid": self.valid.to_dict(),
            "test": self.test.to_dict(),
            "test_platt": self.test_platt.to_dict(),
            "platt_temperature": self.platt_temperature,
            "checkpoint": self.checkpoint,
        }


def _tau_dirname(tau: float) -> str:
    return f"tau_{format(float(tau), 'g')}"


def run_dir_for(config: ExperimentConfig, seed: int) -> str:
    return os.path.join(config.out_dir, config_hash(config),
                        _tau_dirname(config.head.tau), f"seed_{int(seed)}")


def run_experiment(config: ExperimentConfig, seed: int) -> RunResult:
    """Train and evaluate one (config, seed) cell and write its artifacts.

    The run directory receives result.json (deterministic), history.csv,
    checkpoint.bin + manifest.json, and timing.json (wall time only, kept
    out of result.json so reruns are byte-identical).
    """
    config.validate()
    started = time.monotonic()
    data = build_dataset(config)
    head_cfg = _head_config(config, data.num_classes)
    mlp_spec = MLPSpec(in_dim=data.n_features, hidden=config.model.hidden,
                       slope=config.model.slope, dropout=config.model.dropout)
    model, history = fit(mlp_spec, head_cfg, data, _train_config(config),
                         config.optimizer, seed)

    valid_sub = data.subset("valid")
    test_sub = data.subset("test")
    s_eval = head_cfg.eval_samples
    valid_probs = predict_dataset_probs(
        model, valid_sub.features, s_eval, SeededRng(derive_seed(seed, "eval-valid")))
    test_probs = predict_dataset_probs(
        model, test_sub.features, s_eval, SeededRng(derive_seed(seed, "eval-test")))
    valid_report = report_from_probs(valid_probs, valid_sub.observed_labels,
                                     valid_sub.clean_labels, s_eval)
    test_report = report_from_probs(test_probs, test_sub.observed_labels,
                                    test_sub.clean_labels, s_eval)
    platt_t = fit_platt_temperature(valid_probs, valid_sub.observed_labels)
    test_platt = report_from_probs(apply_platt(test_probs, platt_t),
                                   test_sub.observed_labels,
                                   test_sub.clean_labels, s_eval)

    out_dir = run_dir_for(config, seed)
    os.makedirs(out_dir, exist_ok=True)
    result = RunResult(
        config_hash=config_hash(config),
        seed=int(seed),
        tau=float(config.head.tau),
        mode=config.head.mode,
        baseline=config.train.baseline,
        valid=valid_report,
        test=test_report,
        test_platt=test_platt,
        platt_temperature=float(platt_t),
        checkpoint="checkpoint.bin",
        run_dir=out_dir,
        wall_time_s=time.monotonic() - started,
    )
    save_checkpoint({k: v.data for k, v in model.params().items()},
                    os.path.join(out_dir, "checkpoint.bin"),
                    os.path.join(out_dir, "manifest.json"))
    _write_history(os.path.join(out_dir, "history.csv"), history)
    with open(os.path.join(out_dir, "result.json"), "w") as fh:
        json.dump(result.result_payload(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "timing.json"), "w") as fh:
        json.dump({"wall_time_s": result.wall_time_s}, fh)
        fh.write("\n")
    return result


def _write_history(path: str, history: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow([row[c] for c in HISTORY_COLUMNS])


def _cell_config(config: ExperimentConfig, tau: float, mode: str) -> ExperimentConfig:
    cell = copy.deepcopy(config)
    cell.head.tau = float(tau)
    cell.head.mode = mode
    return cell


def _run_cell(raw_config: dict, tau: float, mode: str, seed: int) -> dict:
    config = _cell_config(ExperimentConfig.from_dict(raw_config), tau, mode)
    result = run_experiment(config, seed)
    return result.result_payload()


def select_tau(validation_rows: list) -> float:
    """Pick the temperature with the lowest mean validation NLL.

    Receives (tau, seed, valid_nll) triples only; test metrics never enter
    the selection. Ties break toward the smaller temperature.
    """
    by_tau: dict = {}
    for tau, _seed, valid_nll in validation_rows:
        by_tau.setdefault(float(tau), []).append(float(valid_nll))
    means = {tau: float(np.mean(v)) for tau, v in by_tau.items()}
    return min(sorted(means), key=lambda tau: (means[tau], tau))


@dataclass
class SweepResult:
    tau_star: float
    summary: dict
    rows: list
    failures: list


def sweep_temperature(config: ExperimentConfig, workers: int = 1) -> SweepResult:
    """Run the full (temperature x seed) grid plus baselines and summarise.

    Heteroscedastic cells cover the grid; homoscedastic cells run once per
    seed; a temperature-1.0 heteroscedastic column is added if the grid
    lacks it. The optimal temperature comes from mean validation NLL and
    the summary reports paired t-tests of the selected column against both
    baselines on test NLL.
    """
    config.validate()
    grid = tuple(float(t) for t in config.head.tau_grid)
    seeds = tuple(int(s) for s in config.seeds)
    cells = [(tau, "heteroscedastic", seed) for tau in grid for seed in seeds]
    if 1.0 not in grid:
        cells += [(1.0, "heteroscedastic", seed) for seed in seeds]
    cells += [(1.0, "homoscedastic", seed) for seed in seeds]

    raw = config.to_dict()
    rows, failures = [], []
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_run_cell, raw, tau, mode, seed): (tau, mode, seed)
                       for tau, mode, seed in cells}
            for fut in concurrent.futures.as_completed(futures):
                tau, mode, seed = futures[fut]
                try:
                    rows.append(fut.result())
                except Exception as exc:  # cell failures don't stop the sweep
                    failures.append({"tau": tau, "mode": mode, "seed": seed,
                                     "error": str(exc)})
    else:
        for tau, mode, seed in cells:
            try:
                rows.append(_run_cell(raw, tau, mode, seed))
            except Exception as exc:
                failures.append({"tau": tau, "mode": mode, "seed": seed,
                                 "error": str(exc)})

    rows.sort(key=lambda r: (r["mode"], r["tau"], r["seed"]))
    het_rows = [r for r in rows if r["mode"] == "heteroscedastic" and r["tau"] in grid]
    validation_rows = [(r["tau"], r["seed"], r["valid"]["noisy_nll"]) for r in het_rows]
    tau_star = select_tau(validation_rows) if validation_rows else float("nan")

    per_tau = {}
    for tau in sorted({r["tau"] for r in rows if r["mode"] == "heteroscedastic"}):
        cols = [r for r in rows if r["mode"] == "heteroscedastic" and r["tau"] == tau]
        per_tau[format(tau, "g")] = {
            "mean_valid_nll": float(np.mean([r["valid"]["noisy_nll"] for r in cols])),
            "mean_test_nll": float(np.mean([r["test"]["noisy_nll"] for r in cols])),
            "mean_test_clean_acc": float(np.mean([r["test"]["clean_accuracy"] for r in cols])),
            "mean_test_ece": float(np.mean([r["test"]["ece"] for r in cols])),
            "n_runs": len(cols),
        }

    summary = {
        "tau_star": tau_star,
        "per_tau": per_tau,
        "comparisons": {},
        "n_failures": len(failures),
    }
    star_rows = {r["seed"]: r for r in rows
                 if r["mode"] == "heteroscedastic" and r["tau"] == tau_star}
    for label, pick in (
        ("homoscedastic", lambda r: r["mode"] == "homoscedastic"),
        ("tau_1.0", lambda r: r["mode"] == "heteroscedastic" and r["tau"] == 1.0),
    ):
        base_rows = {r["seed"]: r for r in rows if pick(r)}
        common = sorted(set(star_rows) & set(base_rows))
        if len(common) < 2:
            continue
        ours = [star_rows[s]["test"]["noisy_nll"] for s in common]
        theirs = [base_rows[s]["test"]["noisy_nll"] for s in common]
        try:
            t_stat, p_val = paired_t_test(ours, theirs)
        except ZeroVarianceError:
            t_stat, p_val = float("nan"), 1.0
        summary["comparisons"][label] = {
            "mean_test_nll_ours": float(np.mean(ours)),
            "mean_test_nll_baseline": float(np.mean(theirs)),
            "t": t_stat,
            "p": p_val,
            "marker": significance_marker(p_val),
            "n_pairs": len(common),
        }

    os.makedirs(config.out_dir, exist_ok=True)
    _write_sweep_table(os.path.join(config.out_dir, "sweep_table.csv"), rows)
    with open(os.path.join(config.out_dir, "sweep_summary.json"), "w") as fh:
        json.dump({"summary": summary, "failures": failures}, fh,
                  indent=2, sort_keys=True)
        fh.write("\n")
    return SweepResult(tau_star=tau_star, summary=summary, rows=rows,
                       failures=failures)


_SWEEP_COLUMNS = (
    "mode", "baseline", "tau", "seed",
    "valid_nll", "valid_acc", "test_nll", "test_noisy_acc", "test_clean_acc",
    "test_ece", "platt_temperature", "test_platt_nll", "test_platt_ece",
)


def _sweep_row(r: dict) -> list:
    return [
        r["mode"], r["baseline"], r["tau"], r["seed"],
        r["valid"]["noisy_nll"], r["valid"]["noisy_accuracy"],
        r["test"]["noisy_nll"], r["test"]["noisy_accuracy"],
        r["test"]["clean_accuracy"], r["test"]["ece"],
        r["platt_temperature"], r["test_platt"]["noisy_nll"],
        r["test_platt"]["ece"],
    ]


def _write_sweep_table(path: str, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SWEEP_COLUMNS)
        for r in rows:
            writer.writerow(_sweep_row(r))


def _rebuild_model(config: ExperimentConfig, run_dir: str,
                   num_classes: int, n_features: int) -> TrainedModel:
    from .training import _init_model  # deterministic shapes, weights replaced

    head_cfg = _head_config(config, num_classes)
    mlp_spec = MLPSpec(in_dim=n_features, hidden=config.model.hidden,
                       slope=config.model.slope, dropout=config.model.dropout)
    model = _init_model(mlp_spec, head_cfg, SeededRng(0).child("rebuild"))
    state = load_checkpoint(os.path.join(run_dir, "checkpoint.bin"),
                            os.path.join(run_dir, "manifest.json"))
    model.restore(state)
    return model


def diagnose(run_dir: str, config: ExperimentConfig,
             taus=(0.1, 1.0, 10.0), n_repr: int = 16,
             bias_samples: int = 20000, seed: int = 0) -> dict:
    """Bias-versus-temperature table plus the gradient dispersion series.

    Loads the run's checkpoint, estimates the smoothing bias at each
    temperature on held-out validation representations (shared noise draws
    across temperatures), and replays the log-dispersion column from the
    run's history.
    """
    history_path = os.path.join(run_dir, "history.csv")
    if not os.path.exists(history_path):
        raise FileNotFoundError(f"missing history: {history_path}")
    with open(os.path.join(run_dir, "result.json")) as fh:
        run_meta = json.load(fh)
    data = build_dataset(config)
    cell = _cell_config(config, run_meta["tau"], run_meta["mode"])
    model = _rebuild_model(cell, run_dir, data.num_classes, data.n_features)

    valid = data.subset("valid")
    reprs = model.representation(valid.features[:n_repr]).data
    family = NoiseFamily.from_name(config.head.family)
    bias_rows = []
    for tau in taus:
        values, errs = [], []
        for i in range(reprs.shape[0]):
            est = estimate_bias(model.head, reprs[i], float(tau), bias_samples,
                                SeededRng(derive_seed(seed, "diagnose-bias")),
                                family=family)
            values.append(est.value)
            errs.append(est.stderr)
        bias_rows.append({
            "tau": float(tau),
            "bias": float(np.mean(values)),
            "stderr": float(np.sqrt(np.mean(np.square(errs))) / np.sqrt(len(errs))),
            "n_repr": int(reprs.shape[0]),
            "samples": int(bias_samples),
        })

    dispersion = []
    with open(history_path, newline="") as fh:
        for row in csv.DictReader(fh):
            dispersion.append({"epoch": int(row["epoch"]),
                               "log_dispersion": float(row["log_dispersion"])})

    out = {"run": {"tau": run_meta["tau"], "mode": run_meta["mode"],
                   "seed": run_meta["seed"]},
           "bias": bias_rows, "dispersion": dispersion}
    diag_path = os.path.join(run_dir, "diagnostics.json")
    with open(diag_path, "w") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(run_dir, "diagnostics.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tau", "bias", "stderr", "n_repr", "samples"])
        for row in bias_rows:
            writer.writerow([row["tau"], row["bias"], row["stderr"],
                             row["n_repr"], row["samples"]])
    return out


def report(results_dir: str) -> dict:
    """Consolidate every result.json under a directory into a CSV + summary.

    Groups runs into methods (mode, baseline, temperature), reports means
    and standard deviations of the test metrics, and marks paired t-test
    significance against the method with the best mean test NLL. Malformed
    result files are listed, not fatal.
    """
    rows, malformed = [], []
    for root, _dirs, files in os.walk(results_dir):
        if "result.json" not in files:
            continue
        path = os.path.join(root, "result.json")
        try:
            with open(path) as fh:
                payload = json.load(fh)
            _ = _sweep_row(payload)  # shape check
            rows.append(payload)
        except Exception as exc:
            malformed.append({"path": path, "error": str(exc)})
    if not rows:
        raise FileNotFoundError(f"no result.json files under {results_dir}")
    rows.sort(key=lambda r: (r["mode"], r["baseline"], r["tau"], r["seed"]))
    _write_sweep_table(os.path.join(results_dir, "report.csv"), rows)

    methods: dict = {}
    for r in rows:
        key = (r["mode"], r["baseline"], r["tau"])
        methods.setdefault(key, []).append(r)

    def label(key):
        mode, baseline, tau = key
        name = mode if baseline == "none" else f"{mode}+{baseline}"
        return f"{name}@tau={format(tau, 'g')}"

    stats = {}
    for key, runs in methods.items():
        nlls = [r["test"]["noisy_nll"] for r in runs]
        stats[key] = {
            "n_runs": len(runs),
            "mean_test_nll": float(np.mean(nlls)),
            "sd_test_nll": float(np.std(nlls, ddof=1)) if len(nlls) > 1 else 0.0,
            "mean_test_clean_acc": float(np.mean([r["test"]["clean_accuracy"] for r in runs])),
            "mean_test_ece": float(np.mean([r["test"]["ece"] for r in runs])),
        }
    reference = min(stats, key=lambda k: (stats[k]["mean_test_nll"], label(k)))
    ref_by_seed = {r["seed"]: r for r in methods[reference]}
    summary: dict = {"reference": label(reference), "methods": {}, "malformed": malformed}
    for key, runs in methods.items():
        entry = dict(stats[key])
        if key != reference:
            by_seed = {r["seed"]: r for r in runs}
            common = sorted(set(by_seed) & set(ref_by_seed))
            if len(common) >= 2:
                try:
                    t_stat, p_val = paired_t_test(
                        [by_seed[s]["test"]["noisy_nll"] for s in common],
                        [ref_by_seed[s]["test"]["noisy_nll"] for s in common])
                except ZeroVarianceError:
                    t_stat, p_val = float("nan"), 1.0
                entry.update({"t_vs_reference": t_stat, "p_vs_reference": p_val,
                              "marker": significance_marker(p_val)})
        summary["methods"][label(key)] = entry
    with open(os.path.join(results_dir, "report_summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def generate_dataset(config: ExperimentConfig, path: str) -> NoisyDataset:
    """Materialise the configured dataset and persist it with provenance."""
    ds = build_dataset(config)
    spec = preset_spec(config.corruption.preset, ds.num_classes)
    write_dataset(ds, path, metadata={
        "corruption_preset": config.corruption.preset,
        "corruption_rates": list(spec.per_class_rate),
        "corruption_seed": config.corruption.seed,
        "dataset_seed": config.dataset.seed,
        "split_fractions": list(config.dataset.fractions),
    })
    return ds
