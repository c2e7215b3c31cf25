"""
Permission is hereby granted, free of charge, to any person obtaining a copy
of this software and associated documentation files (the "Software"), to deal
in the Software without restriction, including without limitation the rights
to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
copies of the Software, and to permit persons to whom the Software is
furnished to do so, subject to the following conditions:

The above copyright notice and this permission notice shall be included in all
copies or substantial portions of the Software.

THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
SOFTWARE.
"""

from dataclasses import asdict, dataclass, field, fields
import json
import logging
import os

from .errors import ConfigError
from .model import PROFILES, ModelConfig
from .powersystem import SYSTEMS_DIR
from .simulator import SimulationConfig
from .training import PretrainConfig, SchSConfig, TeaFConfig


logger = logging.getLogger(__name__)

DEFAULT_FRACTIONS = [0.0, 0.05, 0.25, 1.0]


@dataclass
class ExperimentConfig:
    """Everything a command needs; see README.md for the JSON schema."""
    system: str = "three_machine"
    target_system: str = "nine_machine"
    n_scenarios: int = 300
    target_scenarios: int = 300
    harder_order: int = 2
    harder_scenarios: int = 30
    split: list = field(default_factory=lambda: [0.8, 0.1, 0.1])
    simulation: dict = field(default_factory=dict)
    L_seq: int = 65
    L_pred: int = 1
    L_p: int = 16
    S: int = 8
    profile: str = "desk"
    model: dict = field(default_factory=dict)
    freeze: bool = True
    pretrain: dict = field(default_factory=dict)
    teaf: dict = field(default_factory=dict)
    schs: dict = field(default_factory=dict)
    seed: int = 0
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    fractions: list = field(default_factory=lambda: list(DEFAULT_FRACTIONS))
    threshold: float = 0.8
    diagnose_windows: int = 64
    out: str = "runs"

    def validate(self):
        if len(self.split) != 3 or min(self.split) < 0 or \
            abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError("split must be three nonnegative fractions "
                "summing to 1, got %s" % (self.split,))
        if self.n_scenarios < 1 or self.target_scenarios < 1:
            raise ConfigError("scenario counts must be positive")
        if self.profile not in PROFILES:
            raise ConfigError("unknown profile %r" % self.profile)
        for f in self.fractions:
            if not 0.0 <= f <= 1.0:
                raise ConfigError("few-shot fraction %r outside [0, 1]" % f)
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        for name in (self.system, self.target_system):
            if not system_exists(name):
                raise ConfigError("system description %r not found" % name)
        self.model_config()
        self.simulation_config().validate()
        self.teaf_config()
        self.schs_config()
        self.pretrain_config()
        return self

    def model_config(self, **overrides):
        """ModelConfig of the selected profile and pipeline geometry."""
        kwargs = dict(L_seq=self.L_seq, L_pred=self.L_pred, L_p=self.L_p,
            S=self.S)
        kwargs.update(self.model)
        kwargs.update(overrides)
        try:
            return ModelConfig.profile(self.profile, **kwargs).validate()
        except TypeError as e:
            raise ConfigError("bad model settings: %s" % e)

    def simulation_config(self):
        return _build(SimulationConfig, self.simulation, "simulation")

    def teaf_config(self, **overrides):
        doc = dict(self.teaf)
        doc.setdefault("seed", self.seed)
        doc.update(overrides)
        return TeaFConfig.from_dict(doc)

    def schs_config(self, **overrides):
        doc = dict(self.schs)
        doc.setdefault("seed", self.seed)
        doc.update(overrides)
        return SchSConfig.from_dict(doc)

    def pretrain_config(self):
        return PretrainConfig.from_dict(dict(self.pretrain))

    def path(self, *parts):
        """A path inside the output directory."""
        return os.path.join(self.out, *parts)

    def to_dict(self):
        return asdict(self)


def _build(cls, doc, what):
    known = set(f.name for f in fields(cls))
    unknown = set(doc) - known
    if unknown:
        raise ConfigError("unknown %s keys: %s" % (what, ", ".join(
            sorted(unknown))))
    return cls(**doc)


def system_exists(name):
    return os.path.exists(name) or os.path.exists(os.path.join(SYSTEMS_DIR,
        name+".json"))


def _is_path(value):
    return os.sep in value or value.endswith(".json")


def load_config(path=None, seed=None, out=None, profile=None):
    """Read an ExperimentConfig from JSON and apply command-line overrides.

    Relative system paths and the output directory are resolved against
    the directory of the config file.

    Raises:
        ConfigError: On unreadable JSON, unknown keys or invalid values.
    """
    doc = {}
    if path is not None:
        try:
            with open(path) as f:
                doc = json.load(f)
        except (IOError, OSError) as e:
            raise ConfigError("cannot read config %s: %s" % (path, e))
        except ValueError as e:
            raise ConfigError("config %s is not valid JSON: %s" % (path, e))
        if not isinstance(doc, dict):
            raise ConfigError("config %s must hold a JSON object" % path)
        base = os.path.dirname(os.path.abspath(path))
        for key in ("system", "target_system"):
            if key in doc and _is_path(doc[key]) and \
                not os.path.isabs(doc[key]):
                doc[key] = os.path.join(base, doc[key])
        if "out" in doc and not os.path.isabs(doc["out"]):
            doc["out"] = os.path.join(base, doc["out"])
    cfg = _build(ExperimentConfig, doc, "experiment config")
    if seed is not None:
        cfg.seed = seed
    if out is not None:
        cfg.out = out
    if profile is not None:
        cfg.profile = profile
    logger.debug("experiment config: %s", cfg.to_dict())
    return cfg.validate()
