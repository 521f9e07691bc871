"""Experiment orchestration: training pipeline, scheme evaluation and sweeps.

A run is described by a YAML file whose top-level keys are scenario fields
(see :class:`~sagin_secure.config.ScenarioConfig`) plus three optional
sections::

    power_training:  {learning_rate, epochs, batch_size, seed, optimizer, dropout_rate}
    access_training: {learning_rate, epochs, batch_size, seed, optimizer, dropout_rate}
    data:            {n_train, n_test, oracle_grid, mask_infeasible}

Train and test draws come from the same seeded stream at disjoint indices, so
every number in an output file is a function of (config fingerprint, seed).
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml
from scipy.stats import spearmanr

from sagin_secure.access_trainer import (AccessNet, InferencePipeline, build_q_targets,
                                         train_access_net)
from sagin_secure.baselines import (baseline_equal_power, baseline_fractional_power,
                                    baseline_random_access)
from sagin_secure.config import ConfigError, ScenarioConfig
from sagin_secure.dataset import as_channels, generate_dataset
from sagin_secure.neural import TrainConfig
from sagin_secure.oracle import DEFAULT_GRID, brute_force_best
from sagin_secure.power_trainer import PowerNetBundle, train_power_bundle
from sagin_secure.rates import N_ACCESS, AccessMatrix, ap_loads, check_constraints

log = logging.getLogger(__name__)

SCHEMES = ("learned", "oracle", "equal_power", "fractional_power", "random_access")
SWEEP_VARIABLES = {"P_S": "p_sat_db", "P_U": "p_uav_db", "P_B": "p_bs_db"}
CSV_HEADER = ("sweep_db", "scheme", "mean_sum_secrecy", "qos_violation_rate", "n_samples", "seed")
TEST_OFFSET = 1_000_000_000  # test draws start here in the seeded stream


class InvariantViolation(RuntimeError):
    """A produced allocation or result broke a hard contract (budget, one-hot, range)."""


class MissingArtifact(FileNotFoundError):
    pass


# --------------------------------------------------------------------------
# run configuration

@dataclass(frozen=True)
class TrainingSettings:
    learning_rate: float = 3e-3
    epochs: int = 300
    batch_size: int = 64
    seed: int = 0
    optimizer: str = "adam"
    dropout_rate: float = 0.0

    def train_config(self):
        return TrainConfig(learning_rate=self.learning_rate, epochs=self.epochs,
                           batch_size=self.batch_size, seed=self.seed, optimizer=self.optimizer)


def default_power_training():
    return TrainingSettings()


def default_access_training():
    return TrainingSettings(learning_rate=1e-3, epochs=200, dropout_rate=0.2)


@dataclass(frozen=True)
class DataSettings:
    n_train: int = 10_000
    n_test: int = 2_000
    oracle_grid: int = DEFAULT_GRID
    mask_infeasible: bool = True


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    power: TrainingSettings = field(default_factory=default_power_training)
    access: TrainingSettings = field(default_factory=default_access_training)
    data: DataSettings = field(default_factory=DataSettings)

    def with_seed(self, seed):
        """Point every training stream at ``seed``."""
        return replace(self, power=replace(self.power, seed=seed), access=replace(self.access, seed=seed))

    def to_dict(self):
        return {**self.scenario.to_dict(), "power_training": asdict(self.power),
                "access_training": asdict(self.access), "data": asdict(self.data)}


def _section(base, data, name):
    data = data or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{name} must be a mapping")
    unknown = set(data) - {f.name for f in fields(base)}
    if unknown:
        raise ConfigError(f"unknown keys in {name}: {sorted(unknown)}")
    return replace(base, **data)


def run_config_from_dict(data):
    data = dict(data or {})
    power = _section(default_power_training(), data.pop("power_training", None), "power_training")
    access = _section(default_access_training(), data.pop("access_training", None), "access_training")
    data_settings = _section(DataSettings(), data.pop("data", None), "data")
    return RunConfig(ScenarioConfig.from_dict(data), power, access, data_settings)


def load_run_config(path=None):
    if path is None:
        return RunConfig()
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a key/value mapping")
    return run_config_from_dict(data)


# --------------------------------------------------------------------------
# results

@dataclass(frozen=True)
class ResultRow:
    sweep_db: float
    scheme: str
    mean_sum_secrecy: float
    qos_violation_rate: float
    n_samples: int
    seed: int

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvariantViolation(f"unknown scheme {self.scheme!r}")
        if not (np.isfinite(self.mean_sum_secrecy) and self.mean_sum_secrecy >= 0):
            raise InvariantViolation(f"{self.scheme}: mean sum secrecy {self.mean_sum_secrecy} < 0")
        if not 0.0 <= self.qos_violation_rate <= 1.0:
            raise InvariantViolation(f"{self.scheme}: violation rate outside [0, 1]")

    def cells(self):
        # shortest round-trip float text, so a re-read CSV compares equal
        return (f"{self.sweep_db:g}", self.scheme, repr(float(self.mean_sum_secrecy)),
                repr(float(self.qos_violation_rate)), str(self.n_samples), str(self.seed))


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def write_csv(rows, path):
    Path(path).write_text(rows_to_csv(rows))


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [ResultRow(float(r["sweep_db"]), r["scheme"], float(r["mean_sum_secrecy"]),
                          float(r["qos_violation_rate"]), int(r["n_samples"]), int(r["seed"]))
                for r in reader]


# --------------------------------------------------------------------------
# training

def train_and_test_sets(config, n_train, n_test, seed):
    return (generate_dataset(config, n_train, seed),
            generate_dataset(config, n_test, seed, start=TEST_OFFSET))


def train_pipeline(run, train, validation=None, log_every=0, progress=None):
    """Power bundle, then q-targets, then the access net; returns an :class:`InferencePipeline`."""
    cfg = run.scenario
    bundle = train_power_bundle(train, run.power.train_config(), cfg, log_every=log_every,
                                progress=progress, dropout_rate=run.power.dropout_rate)
    q = build_q_targets(train, bundle, cfg, mask_infeasible=run.data.mask_infeasible)
    val = None
    if validation is not None:
        val = (as_channels(validation).features,
               build_q_targets(validation, bundle, cfg, mask_infeasible=run.data.mask_infeasible))
    net = train_access_net(q, train, run.access.train_config(), (bundle.feature_mean, bundle.feature_std),
                           validation=val, dropout_rate=run.access.dropout_rate, log_every=log_every)
    return InferencePipeline(net, bundle)


def verify_allocations(access, power, config):
    """Raise :class:`InvariantViolation` unless every allocation is one-hot valid and within budget."""
    access = np.asarray(access)
    if access.shape[0] != power.shape[0] or np.any((access < 0) | (access >= N_ACCESS)):
        raise InvariantViolation("access index outside 0..26")
    if not np.all(np.isfinite(power)) or np.any(power < 0):
        raise InvariantViolation("negative or non-finite power")
    budgets = np.asarray(config.budgets_lin)
    for n in np.unique(access):
        rows = access == n
        loads = ap_loads(int(n), power[rows])
        if np.any(loads > budgets):
            worst = float((loads - budgets).max())
            raise InvariantViolation(f"access {AccessMatrix.from_index(n).label()}: "
                                     f"budget exceeded by {worst:.3g}")


# --------------------------------------------------------------------------
# evaluation

@dataclass
class SchemeResult:
    scheme: str
    sum_secrecy: np.ndarray  # per sample, clamped
    qos_ok: np.ndarray       # per sample, every user met q_min

    @property
    def mean(self):
        return float(self.sum_secrecy.mean()) if self.sum_secrecy.size else 0.0

    @property
    def violation_rate(self):
        return float(1.0 - self.qos_ok.mean()) if self.qos_ok.size else 0.0


def _fixed_access_result(scheme, access, power, chans, config):
    verify_allocations(access, power, config)
    secrecy = np.zeros(len(access))
    ok = np.zeros(len(access), dtype=bool)
    for n in np.unique(access):
        rows = np.flatnonzero(access == n)
        rep = check_constraints(int(n), power[rows], chans[rows], config)
        secrecy[rows] = rep.sum_secrecy
        ok[rows] = rep.qos_ok.all(axis=-1)
    return SchemeResult(scheme, secrecy, ok)


def evaluate_schemes(test, config, schemes, pipeline=None, seed=0, oracle_grid=DEFAULT_GRID):
    """Per-sample results for each scheme on one test set, keyed by scheme name."""
    chans = as_channels(test)
    n = len(chans)
    unknown = set(schemes) - set(SCHEMES)
    if unknown:
        raise ValueError(f"unknown schemes {sorted(unknown)}; choose from {SCHEMES}")
    needs_net = {"learned", "equal_power", "fractional_power"} & set(schemes)
    if needs_net and pipeline is None:
        raise MissingArtifact(f"schemes {sorted(needs_net)} need a trained model bundle "
                              "(run `sagin-secure pipeline` or `train-access` first)")
    out = {}
    inferred = pipeline.run(chans, config) if needs_net else None
    if inferred is not None:
        verify_allocations(inferred.access, inferred.power, config)
    for scheme in schemes:
        if scheme == "learned":
            out[scheme] = SchemeResult(scheme, inferred.sum_secrecy, inferred.qos_ok)
        elif scheme == "oracle":
            sol = brute_force_best(chans, config, oracle_grid)
            verify_allocations(sol.best_access, sol.best_power, config)
            ok = check_constraints_rows(sol.best_access, sol.best_power, chans, config)
            out[scheme] = SchemeResult(scheme, sol.best_objective, ok)
        elif scheme == "equal_power":
            power = np.stack([baseline_equal_power(int(a), config) for a in inferred.access]) \
                if n else np.zeros((0, 3))
            out[scheme] = _fixed_access_result(scheme, inferred.access, power, chans, config)
        elif scheme == "fractional_power":
            power = np.zeros((n, 3))
            for a in np.unique(inferred.access):
                rows = np.flatnonzero(inferred.access == a)
                power[rows] = baseline_fractional_power(int(a), chans[rows].gains, config)
            out[scheme] = _fixed_access_result(scheme, inferred.access, power, chans, config)
        elif scheme == "random_access":
            rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
            access = baseline_random_access(rng, size=n)
            power = np.stack([baseline_equal_power(int(a), config) for a in access]) \
                if n else np.zeros((0, 3))
            out[scheme] = _fixed_access_result(scheme, access, power, chans, config)
    return out


def check_constraints_rows(access, power, chans, config):
    ok = np.zeros(len(access), dtype=bool)
    for n in np.unique(access):
        rows = np.flatnonzero(access == n)
        ok[rows] = check_constraints(int(n), power[rows], chans[rows], config).qos_ok.all(axis=-1)
    return ok


def results_to_rows(results, sweep_db, seed, order=SCHEMES):
    return [ResultRow(float(sweep_db), s, results[s].mean, results[s].violation_rate,
                      int(results[s].sum_secrecy.size), int(seed))
            for s in order if s in results]


# --------------------------------------------------------------------------
# pipeline and sweep

@dataclass
class PipelineOutput:
    pipeline: InferencePipeline
    rows: list
    results: dict
    bundle_path: Path | None = None
    csv_path: Path | None = None


def run_pipeline(run, seed=0, out_dir=None, schemes=("learned", "equal_power", "fractional_power",
                                                       "random_access"), log_every=0, progress=None):
    """Train everything at the configured budgets, check inference, evaluate, optionally save.

    Writes ``bundle.json`` (+ the two model files) and ``evaluation.csv`` to
    ``out_dir``; the CSV's ``sweep_db`` column holds the satellite budget.
    """
    run = run.with_seed(seed)
    cfg = run.scenario
    train, test = train_and_test_sets(cfg, run.data.n_train, run.data.n_test, seed)
    pipe = train_pipeline(run, train, validation=test, log_every=log_every, progress=progress)

    # Algorithm inference steps on one held-out draw: features -> access -> power -> check
    probe = pipe.run(as_channels(test)[:1], cfg)
    verify_allocations(probe.access, probe.power, cfg)
    AccessMatrix.from_index(int(probe.access[0]))

    results = evaluate_schemes(test, cfg, schemes, pipe, seed, run.data.oracle_grid)
    rows = results_to_rows(results, cfg.p_sat_db, seed)
    output = PipelineOutput(pipe, rows, results)
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        output.bundle_path = pipe.save(d)
        output.csv_path = d / "evaluation.csv"
        write_csv(rows, output.csv_path)
        (d / "run_config.yaml").write_text(yaml.safe_dump(run.to_dict(), sort_keys=False))
    return output


@dataclass(frozen=True)
class ExperimentSpec:
    run: RunConfig = field(default_factory=RunConfig)
    sweep_variable: str = "P_S"
    sweep_values: tuple = (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0)
    schemes: tuple = SCHEMES
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sweep_values", tuple(float(v) for v in self.sweep_values))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ValueError(f"sweep variable must be one of {sorted(SWEEP_VARIABLES)}")
        if not self.sweep_values:
            raise ValueError("sweep range is empty")
        if list(self.sweep_values) != sorted(self.sweep_values):
            raise ValueError("sweep values must be sorted ascending")
        if not self.schemes:
            raise ValueError("need at least one scheme")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown:
            raise ValueError(f"unknown schemes {sorted(unknown)}")

    def point_config(self, value):
        return replace(self.run, scenario=self.run.scenario.replace(
            **{SWEEP_VARIABLES[self.sweep_variable]: float(value)}))


def run_sweep(spec, out_dir=None, log_every=0, progress=None):
    """Retrain at every sweep point and evaluate all schemes on a fresh seeded test set.

    Returns the :class:`ResultRow` list in (sweep value, scheme) order and, with
    ``out_dir``, writes ``sweep.csv``.
    """
    rows = []
    needs_net = {"learned", "equal_power", "fractional_power"} & set(spec.schemes)
    for value in spec.sweep_values:
        run = spec.point_config(value).with_seed(spec.seed)
        cfg = run.scenario
        train, test = train_and_test_sets(cfg, run.data.n_train, run.data.n_test, spec.seed)
        pipe = train_pipeline(run, train, log_every=log_every) if needs_net else None
        results = evaluate_schemes(test, cfg, spec.schemes, pipe, spec.seed, run.data.oracle_grid)
        point_rows = results_to_rows(results, value, spec.seed)
        rows.extend(point_rows)
        log.info(json.dumps({"event": "sweep_point", "variable": spec.sweep_variable, "value": value,
                             "means": {r.scheme: r.mean_sum_secrecy for r in point_rows}}))
        if progress is not None:
            progress(value, point_rows)
    if out_dir is not None:
        d = Path(out_dir)
        d.mkdir(parents=True, exist_ok=True)
        write_csv(rows, d / "sweep.csv")
    return rows


def load_pipeline(path):
    p = Path(path)
    if not (p / "bundle.json").exists() and not (p.is_file() and p.name == "bundle.json"):
        raise MissingArtifact(f"no model bundle at {p}; create one with `sagin-secure pipeline` "
                              "or `sagin-secure train-access`")
    return InferencePipeline.load(p)


def load_power_bundle(path):
    if not Path(path).exists():
        raise MissingArtifact(f"no power bundle at {path}; create one with `sagin-secure train-power`")
    return PowerNetBundle.load(path)


def load_access_net(path):
    if not Path(path).exists():
        raise MissingArtifact(f"no access net at {path}; create one with `sagin-secure train-access`")
    return AccessNet.load(path)


def spearman(x, y):
    """Spearman rank correlation (average ranks for ties)."""
    return float(spearmanr(x, y)[0])


# --------------------------------------------------------------------------
# gradient check

@dataclass
class GradcheckSummary:
    power_max_error: float
    access_max_error: float
    instances: int
    kinks_skipped: int

    @property
    def max_error(self):
        return max(self.power_max_error, self.access_max_error)


def gradcheck_both_shapes(config, instances=100, seed=0, step=1e-4):
    """Backprop vs central differences (long double) on random (channel, access) instances.

    Power-net shape: penalty loss through the softplus map. Access-net shape:
    the squared residual it is trained on, against the 27 equal-power sum
    secrecy rates of the same draw (a label-free target that needs no trained
    power nets). Dropout is off in both.
    """
    from sagin_secure.neural import gradcheck_report, init_mlp
    from sagin_secure.access_trainer import ACCESS_NET_DIMS
    from sagin_secure.power_trainer import (feature_stats, init_power_net, penalty_hinge_pattern,
                                            penalty_loss, penalty_loss_and_gradient)
    from sagin_secure.rates import sum_secrecy_rate

    data = generate_dataset(config, instances, seed)
    mean, std = feature_stats(data.features) if instances > 1 else (None, None)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 11]))
    worst_p = worst_a = 0.0
    kinks = 0
    for k in range(instances):
        n = int(rng.integers(N_ACCESS))
        gains = data.gains[k:k + 1]
        feats = data.features[k:k + 1]
        model = init_power_net(n, config, rng, mean, std)
        # perturb the output bias so allocations are not all at the equal split
        biases = list(model.biases)
        biases[-1] = biases[-1] + rng.normal(0.0, 1.0, 3)
        model = model.with_params(model.weights, biases)

        def power_loss(raw, gains=gains, n=n):
            p = np.logaddexp(0, raw)
            if raw.ndim == 2:
                loss, dp = penalty_loss_and_gradient(gains, n, p, config)
                return loss.sum(), dp / (1.0 + np.exp(-raw))
            return (penalty_loss(gains, n, p, config).sum(-1), None,
                    penalty_hinge_pattern(gains, n, p, config))

        rep = gradcheck_report(model, power_loss, feats, step=step, dtype=np.longdouble)
        worst_p = max(worst_p, rep.max_rel_error)
        kinks += rep.n_kinks

        targets = np.array([[sum_secrecy_rate(a, baseline_equal_power(a, config), gains[0])
                             for a in range(N_ACCESS)]])
        net = init_mlp(ACCESS_NET_DIMS, rng, 0.2)
        if mean is not None:
            net = net.with_standardization(mean, std)

        def access_loss(out, targets=targets):
            r = out - targets
            return 0.5 * (r * r).sum(axis=(-2, -1)), r

        rep = gradcheck_report(net, access_loss, feats, step=step, dtype=np.longdouble)
        worst_a = max(worst_a, rep.max_rel_error)
        kinks += rep.n_kinks
    return GradcheckSummary(worst_p, worst_a, instances, kinks)
