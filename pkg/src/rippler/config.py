"""Run configuration: YAML schema, validation, and seed derivation.

A config file has four core sections and two optional ones::

    model:                      # dynamics and population
      kind: sir                 # sir | seir | multistrain
      num_individuals: 100
      num_timepoints: 50
      beta: 0.0125              # sir/seir infection rate
      gamma: 0.1                # sir/seir recovery rate
      initial_infectives: 1
      num_exposed_stages: 3     # seir only
      sigmas: auto              # seir: auto = stages/10 each, or a list
      num_strains: 3            # multistrain only
      betas: 0.01               # multistrain: scalar broadcast or list
      gammas: 0.1
      delta: 0.2
      initial_infectives_per_strain: 1
      initial_state_probs: null # optional N x S row distributions
    observation:
      kind: diagnostic-test     # diagnostic-test | recovery-time
      sensitivity: 0.9
      specificity: 0.9
      test_probability: 0.1
      target_states: auto       # auto = the model's infective states
    sampler:
      kernel: rippler           # rippler | rippler-data-informed |
                                # iffbs | rjmcmc-sir
      iterations: 10000         # outer iterations K
      latent_updates: 10        # updates per iteration K'
      kappa: adaptive           # adaptive | fixed positive integer
      epsilon: 0.05
      kappa_max: 10
      target_rate: 0.234
    seed: 1
    out_dir: out/run            # optional; the CLI --out overrides
    benchmark:                  # optional; used by `benchmark`
      sizes: [1, 2, 3]          # S_E (seir) or strain count values
      kernels: [rippler, rippler-data-informed, iffbs]
      iterations: 1000
      latent_updates: 10
      majd_variant: ordered     # ordered | indicator
    oracle:                     # optional; used by `oracle`
      kernels: [rippler, rippler-data-informed, iffbs]
      updates: 200000

The master seed expands into four independent streams (simulation,
chain, tuner, parameters) via `numpy.random.SeedSequence.spawn`, so
changing sampler settings never perturbs the simulated dataset.

Presets ship inside the package; `load_preset` accepts the tokens
sir-5.2, seir-5.3, sis-5.4, and sir-recovery-s3.2.
"""

from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np
import yaml

from .chmm import InvariantError, RipplerError
from .models import (
    DiagnosticTestObservation,
    MultiStrainModel,
    MultiStrainParams,
    RecoveryTimeObservation,
    SeirModel,
    SeirParams,
    SirModel,
    SirParams,
)
from .samplers import KERNEL_NAMES

PRESET_NAMES = ("sir-5.2", "seir-5.3", "sis-5.4", "sir-recovery-s3.2")

MODEL_KINDS = ("sir", "seir", "multistrain")
OBSERVATION_KINDS = ("diagnostic-test", "recovery-time")
MAJD_VARIANTS = ("ordered", "indicator")

# seed-stream order; spawn index is positional
STREAMS = ("simulation", "chain", "tuner", "params")


class ConfigError(RipplerError):
    """Malformed or inconsistent run configuration."""


def _require(section, key, kinds, where):
    if key not in section or section[key] is None:
        raise ConfigError(f"{where}: missing required key '{key}'")
    value = section[key]
    if kinds is not None and not isinstance(value, kinds):
        raise ConfigError(f"{where}: key '{key}' has invalid type "
                          f"{type(value).__name__}")
    return value


def _reject_unknown(section, allowed, where):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    num_individuals: int
    num_timepoints: int
    beta: Optional[float] = None
    gamma: Optional[float] = None
    initial_infectives: int = 1
    num_exposed_stages: Optional[int] = None
    sigmas: object = "auto"
    num_strains: Optional[int] = None
    betas: object = None
    gammas: object = None
    delta: Optional[float] = None
    initial_infectives_per_strain: int = 1
    initial_state_probs: Optional[tuple] = None


@dataclass(frozen=True)
class ObservationConfig:
    kind: str
    sensitivity: Optional[float] = None
    specificity: Optional[float] = None
    test_probability: Optional[float] = None
    target_states: object = "auto"


@dataclass(frozen=True)
class SamplerConfig:
    kernel: str = "rippler"
    iterations: int = 1000
    latent_updates: int = 10
    kappa: object = "adaptive"
    epsilon: float = 0.05
    kappa_max: int = 10
    target_rate: float = 0.234


@dataclass(frozen=True)
class BenchmarkConfig:
    sizes: tuple
    kernels: tuple
    iterations: int = 1000
    latent_updates: int = 10
    majd_variant: str = "ordered"


@dataclass(frozen=True)
class OracleConfig:
    kernels: tuple
    updates: int = 200000


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    observation: ObservationConfig
    sampler: SamplerConfig
    seed: int
    out_dir: Optional[str] = None
    benchmark: Optional[BenchmarkConfig] = None
    oracle: Optional[OracleConfig] = None


def _parse_model(section):
    where = "model"
    if not isinstance(section, dict):
        raise ConfigError("model section must be a mapping")
    _reject_unknown(section, ModelConfig.__dataclass_fields__, where)
    kind = _require(section, "kind", str, where)
    if kind not in MODEL_KINDS:
        raise ConfigError(f"{where}: kind must be one of {MODEL_KINDS}")
    N = _require(section, "num_individuals", int, where)
    T = _require(section, "num_timepoints", int, where)
    if N < 1 or T < 1:
        raise ConfigError(f"{where}: population and horizon must be positive")
    kw = dict(kind=kind, num_individuals=N, num_timepoints=T)
    if kind in ("sir", "seir"):
        kw["beta"] = float(_require(section, "beta", (int, float), where))
        kw["gamma"] = float(_require(section, "gamma", (int, float), where))
        kw["initial_infectives"] = int(section.get("initial_infectives", 1))
    if kind == "seir":
        kw["num_exposed_stages"] = int(
            _require(section, "num_exposed_stages", int, where))
        sigmas = section.get("sigmas", "auto")
        if sigmas != "auto":
            if not isinstance(sigmas, (list, tuple)):
                raise ConfigError(f"{where}: sigmas must be 'auto' or a list")
            sigmas = tuple(float(s) for s in sigmas)
        kw["sigmas"] = sigmas
    if kind == "multistrain":
        strains = section.get("num_strains")
        betas = section.get("betas")
        gammas = section.get("gammas")
        if strains is None:
            if not isinstance(betas, (list, tuple)):
                raise ConfigError(f"{where}: give num_strains or a betas list")
            strains = len(betas)
        strains = int(strains)
        if strains < 1:
            raise ConfigError(f"{where}: num_strains must be positive")

        def _broadcast(name, value):
            if value is None:
                raise ConfigError(f"{where}: missing required key '{name}'")
            if isinstance(value, (int, float)):
                return (float(value),) * strains
            if len(value) != strains:
                raise ConfigError(f"{where}: {name} needs {strains} entries")
            return tuple(float(v) for v in value)

        kw["num_strains"] = strains
        kw["betas"] = _broadcast("betas", betas)
        kw["gammas"] = _broadcast("gammas", gammas)
        kw["delta"] = float(_require(section, "delta", (int, float), where))
        kw["initial_infectives_per_strain"] = int(
            section.get("initial_infectives_per_strain", 1))
    probs = section.get("initial_state_probs")
    if probs is not None:
        kw["initial_state_probs"] = tuple(tuple(float(p) for p in row)
                                          for row in probs)
    return ModelConfig(**kw)


def _parse_observation(section):
    where = "observation"
    if not isinstance(section, dict):
        raise ConfigError("observation section must be a mapping")
    _reject_unknown(section, ObservationConfig.__dataclass_fields__, where)
    kind = _require(section, "kind", str, where)
    if kind not in OBSERVATION_KINDS:
        raise ConfigError(f"{where}: kind must be one of {OBSERVATION_KINDS}")
    kw = dict(kind=kind)
    if kind == "diagnostic-test":
        for key in ("sensitivity", "specificity", "test_probability"):
            kw[key] = float(_require(section, key, (int, float), where))
        targets = section.get("target_states", "auto")
        if targets != "auto":
            if not isinstance(targets, (list, tuple)):
                raise ConfigError(
                    f"{where}: target_states must be 'auto' or a list")
            targets = tuple(int(s) for s in targets)
        kw["target_states"] = targets
    return ObservationConfig(**kw)


def _parse_sampler(section):
    where = "sampler"
    if not isinstance(section, dict):
        raise ConfigError("sampler section must be a mapping")
    _reject_unknown(section, SamplerConfig.__dataclass_fields__, where)
    kernel = section.get("kernel", "rippler")
    if kernel not in KERNEL_NAMES:
        raise ConfigError(f"{where}: kernel must be one of {KERNEL_NAMES}")
    iterations = int(_require(section, "iterations", int, where))
    if iterations < 0:
        raise ConfigError(f"{where}: iterations must be >= 0")
    latent_updates = int(section.get("latent_updates", 10))
    if latent_updates < 1:
        raise ConfigError(f"{where}: latent_updates must be >= 1")
    kappa = section.get("kappa", "adaptive")
    if kappa != "adaptive" and (not isinstance(kappa, int) or kappa < 1):
        raise ConfigError(f"{where}: kappa must be 'adaptive' or a positive "
                          f"integer")
    epsilon = float(section.get("epsilon", 0.05))
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigError(f"{where}: epsilon must lie in [0, 1]")
    kappa_max = int(section.get("kappa_max", 10))
    if kappa_max < 1:
        raise ConfigError(f"{where}: kappa_max must be >= 1")
    target_rate = float(section.get("target_rate", 0.234))
    if not 0.0 < target_rate < 1.0:
        raise ConfigError(f"{where}: target_rate must lie in (0, 1)")
    return SamplerConfig(kernel=kernel, iterations=iterations,
                         latent_updates=latent_updates, kappa=kappa,
                         epsilon=epsilon, kappa_max=kappa_max,
                         target_rate=target_rate)


def _parse_benchmark(section):
    where = "benchmark"
    if not isinstance(section, dict):
        raise ConfigError("benchmark section must be a mapping")
    _reject_unknown(section, BenchmarkConfig.__dataclass_fields__, where)
    sizes = _require(section, "sizes", (list, tuple), where)
    kernels = _require(section, "kernels", (list, tuple), where)
    for kernel in kernels:
        if kernel not in KERNEL_NAMES:
            raise ConfigError(f"{where}: unknown kernel {kernel!r}")
    variant = section.get("majd_variant", "ordered")
    if variant not in MAJD_VARIANTS:
        raise ConfigError(f"{where}: majd_variant must be one of "
                          f"{MAJD_VARIANTS}")
    return BenchmarkConfig(sizes=tuple(int(s) for s in sizes),
                           kernels=tuple(kernels),
                           iterations=int(section.get("iterations", 1000)),
                           latent_updates=int(section.get("latent_updates", 10)),
                           majd_variant=variant)


def _parse_oracle(section):
    where = "oracle"
    if not isinstance(section, dict):
        raise ConfigError("oracle section must be a mapping")
    _reject_unknown(section, OracleConfig.__dataclass_fields__, where)
    kernels = _require(section, "kernels", (list, tuple), where)
    for kernel in kernels:
        if kernel not in KERNEL_NAMES:
            raise ConfigError(f"{where}: unknown kernel {kernel!r}")
    return OracleConfig(kernels=tuple(kernels),
                        updates=int(section.get("updates", 200000)))


def config_from_dict(doc):
    """Validate a loaded YAML document into a RunConfig; building the
    model afterwards enforces every parameter invariant, so call
    `build_model` before starting any run."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a mapping")
    allowed = ("model", "observation", "sampler", "seed", "out_dir",
               "benchmark", "oracle")
    _reject_unknown(doc, allowed, "config")
    model = _parse_model(_require(doc, "model", dict, "config"))
    observation = _parse_observation(_require(doc, "observation", dict,
                                              "config"))
    sampler = _parse_sampler(_require(doc, "sampler", dict, "config"))
    seed = _require(doc, "seed", int, "config")
    if seed < 0:
        raise ConfigError("config: seed must be a non-negative integer")
    out_dir = doc.get("out_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("config: out_dir must be a string path")
    benchmark = (None if "benchmark" not in doc
                 else _parse_benchmark(doc["benchmark"]))
    oracle = None if "oracle" not in doc else _parse_oracle(doc["oracle"])
    cfg = RunConfig(model=model, observation=observation, sampler=sampler,
                    seed=seed, out_dir=out_dir, benchmark=benchmark,
                    oracle=oracle)
    try:
        build_model(cfg, size=benchmark.sizes[0] if benchmark else None)
    except InvariantError as exc:
        raise ConfigError(f"config: {exc}") from exc
    return cfg


def load_config(path):
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    return config_from_dict(doc)


def load_preset(name):
    if name not in PRESET_NAMES:
        raise ConfigError(f"unknown preset {name!r}; expected one of "
                          f"{', '.join(PRESET_NAMES)}")
    ref = resources.files("rippler").joinpath(f"presets/{name}.yaml")
    doc = yaml.safe_load(ref.read_text())
    return config_from_dict(doc)


def config_to_dict(cfg):
    """Resolved config as plain nested dicts (for hashing/manifests).
    Optional sections appear only when present; list-valued fields are
    emitted as lists."""

    def _clean(obj):
        if isinstance(obj, tuple):
            return [_clean(v) for v in obj]
        return obj

    def _section(dc):
        return {k: _clean(getattr(dc, k))
                for k in dc.__dataclass_fields__
                if getattr(dc, k) is not None}

    doc = dict(model=_section(cfg.model),
               observation=_section(cfg.observation),
               sampler=_section(cfg.sampler), seed=cfg.seed)
    if cfg.out_dir is not None:
        doc["out_dir"] = cfg.out_dir
    if cfg.benchmark is not None:
        doc["benchmark"] = _section(cfg.benchmark)
    if cfg.oracle is not None:
        doc["oracle"] = _section(cfg.oracle)
    return doc


def infective_states(model_cfg):
    """States the diagnostic test reads as positive, per model kind."""
    if model_cfg.kind == "sir":
        return (2,)
    if model_cfg.kind == "seir":
        return (model_cfg.num_exposed_stages + 2,)
    return tuple(range(2, model_cfg.num_strains + 2))


def _build_observation(cfg, model_cfg):
    obs = cfg.observation
    if obs.kind == "diagnostic-test":
        targets = obs.target_states
        if targets == "auto":
            targets = infective_states(model_cfg)
        return DiagnosticTestObservation(
            sensitivity=obs.sensitivity, specificity=obs.specificity,
            test_probability=obs.test_probability, target_states=targets)
    if model_cfg.kind == "multistrain":
        raise ConfigError("recovery-time observations need an absorbing "
                          "recovered state; the multistrain model has none")
    recovered = (3 if model_cfg.kind == "sir"
                 else model_cfg.num_exposed_stages + 3)
    return RecoveryTimeObservation(infective_state=recovered - 1,
                                   recovered_state=recovered)


def build_model(cfg, size=None):
    """Instantiate the configured model. `size` overrides the swept
    axis (exposure stages or strain count) for benchmark runs."""
    mc = cfg.model
    if size is not None and mc.kind == "sir":
        raise ConfigError("the sir model has no state-space size axis to "
                          "sweep")
    try:
        if mc.kind == "sir":
            params = SirParams(beta=mc.beta, gamma=mc.gamma)
            return SirModel(params, mc.num_individuals, mc.num_timepoints,
                            _build_observation(cfg, mc),
                            initial_infectives=mc.initial_infectives,
                            initial_state_probs=mc.initial_state_probs)
        if mc.kind == "seir":
            stages = mc.num_exposed_stages if size is None else size
            if size is not None and mc.sigmas != "auto":
                raise ConfigError("size sweeps need sigmas: auto")
            sigmas = (mc.sigmas if mc.sigmas != "auto"
                      else (stages / 10.0,) * stages)
            if len(sigmas) != stages:
                raise ConfigError(f"model: sigmas needs {stages} entries")
            mc = ModelConfig(**{**mc.__dict__, "num_exposed_stages": stages})
            params = SeirParams(beta=mc.beta, gamma=mc.gamma, sigmas=sigmas)
            return SeirModel(params, mc.num_individuals, mc.num_timepoints,
                             _build_observation(cfg, mc),
                             initial_infectives=mc.initial_infectives,
                             initial_state_probs=mc.initial_state_probs)
        strains = mc.num_strains if size is None else size
        if size is not None:
            if len(set(mc.betas)) > 1 or len(set(mc.gammas)) > 1:
                raise ConfigError("size sweeps need scalar betas/gammas")
            mc = ModelConfig(**{**mc.__dict__, "num_strains": strains,
                                "betas": (mc.betas[0],) * strains,
                                "gammas": (mc.gammas[0],) * strains})
        params = MultiStrainParams(betas=mc.betas, gammas=mc.gammas,
                                   delta=mc.delta)
        return MultiStrainModel(
            params, mc.num_individuals, mc.num_timepoints,
            _build_observation(cfg, mc),
            initial_infectives_per_strain=mc.initial_infectives_per_strain,
            initial_state_probs=mc.initial_state_probs)
    except RipplerError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from exc


def derive_rngs(seed):
    """Independent generators per purpose from one master seed. The
    spawn order is fixed (simulation, chain, tuner, params), so e.g.
    changing the iteration count never changes the dataset."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(child)
            for name, child in zip(STREAMS, children)}
