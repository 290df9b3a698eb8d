# Solver and experiment configuration, flat key=value files
# Copyright (C) 2014 Ingo Ruhnke <grumbel@gmail.com>
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.


import logging
import os
import re

from .dataset import CLEAN, DEGRADED
from .linsolve import CGConfig
from .sdca import SDCAConfig, SELECTIONS
from .weights import ESTIMATORS, NW
from .util import sha1_text


keyvalue_regex = re.compile(r'^\s*([^=]+)\s*=\s*(.*)\s*')
comment_regex = re.compile(r'(.*?)(//.*|#.*)')

TASKS = ["deblur", "upsample", "inpaint", "denoise"]
SOLVERS = ["mse", "l2-hqs"]
SCHEDULES = ["switch-to-clean", "always-degraded"]
POPULATIONS = [DEGRADED, CLEAN]

# noise level on the 0-255 scale -> fidelity weight
DENOISE_GAMMA = [(15, 64.0), (25, 32.0), (50, 16.0)]


class ConfigError(RuntimeError):
    pass


class SolverConfig:

    optional_types = {"gap_tolerance": float, "krr_lambda": float, "workers": int}

    def __init__(self):
        self.gamma = 3200.0
        self.beta0 = 3.0
        self.delta = 2.0
        self.iterations = 8

        self.estimator = NW
        self.kernel_scale = 0.2
        self.bandwidth_population = DEGRADED
        self.drop_dc = False
        self.recompute_alpha = True
        self.alpha_schedule = "switch-to-clean"

        # None picks lambda from the q rule with krr_q
        self.krr_lambda = None
        self.krr_q = 1.0

        self.sdca_max_steps = 500
        self.gap_tolerance = None
        self.gap_recompute_period = 25
        self.selection = "gap"
        self.center_patches = True
        self.chunk_size = 32
        self.warm_start_duals = False

        self.cg_tolerance = 1e-6
        self.cg_max_iterations = 2000

        self.seed = 0
        self.workers = None

    def validate(self):
        if not self.gamma > 0:
            raise ConfigError("gamma must be > 0, got %s" % self.gamma)
        if not self.beta0 > 0:
            raise ConfigError("beta0 must be > 0, got %s" % self.beta0)
        if not self.delta > 1:
            raise ConfigError("delta must be > 1, got %s" % self.delta)
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1, got %s" % self.iterations)
        if self.gap_tolerance is not None and not self.gap_tolerance > 0:
            raise ConfigError("gap_tolerance must be > 0, got %s" % self.gap_tolerance)
        if self.estimator not in ESTIMATORS:
            raise ConfigError("unknown estimator '%s', expected one of %s" % (self.estimator, ESTIMATORS))
        if self.alpha_schedule not in SCHEDULES:
            raise ConfigError("unknown alpha_schedule '%s', expected one of %s" % (self.alpha_schedule, SCHEDULES))
        if self.selection not in SELECTIONS:
            raise ConfigError("unknown selection '%s', expected one of %s" % (self.selection, SELECTIONS))
        if self.sdca_max_steps < 0 or self.gap_recompute_period < 1 or self.chunk_size < 1:
            raise ConfigError("sdca_max_steps, gap_recompute_period and chunk_size out of range")
        if not self.kernel_scale > 0:
            raise ConfigError("kernel_scale must be > 0, got %s" % self.kernel_scale)
        if self.bandwidth_population not in POPULATIONS:
            raise ConfigError("unknown bandwidth_population '%s', expected one of %s" %
                              (self.bandwidth_population, POPULATIONS))
        if self.krr_lambda is not None and not self.krr_lambda > 0:
            raise ConfigError("krr_lambda must be > 0, got %s" % self.krr_lambda)
        if not self.cg_tolerance > 0 or self.cg_max_iterations < 1:
            raise ConfigError("invalid CG settings")
        return self

    def sdca_config(self, workers=None):
        return SDCAConfig(max_steps=self.sdca_max_steps,
                          gap_tolerance=self.gap_tolerance,
                          recompute_period=self.gap_recompute_period,
                          selection=self.selection,
                          center=self.center_patches,
                          chunk_size=self.chunk_size,
                          seed=self.seed,
                          workers=workers or self.workers,
                          warm_start=self.warm_start_duals)

    def cg_config(self, x0=None):
        return CGConfig(rel_tolerance=self.cg_tolerance, max_iterations=self.cg_max_iterations, x0=x0)


class ExperimentConfig:

    optional_types = {"kernel": str, "dataset": str, "train_images": str}

    def __init__(self):
        self.task = "deblur"
        self.solver = "l2-hqs"

        # degradation
        self.kernel = None
        self.factor = 2
        self.antialias_sigma = 0.8
        self.keep_fraction = 0.5
        self.noise_sigma = 0.01

        # training data, either a PRD1 file or a directory to sample from
        self.dataset = None
        self.train_images = None
        self.patch_size = 8
        self.num_samples = 10000

        self.seed = 0
        self.output_dir = "."

        self.solver_cfg = SolverConfig()

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError("unknown task '%s', expected one of %s" % (self.task, TASKS))
        if self.solver not in SOLVERS:
            raise ConfigError("unknown solver '%s', expected one of %s" % (self.solver, SOLVERS))
        if self.factor < 1:
            raise ConfigError("factor must be >= 1, got %s" % self.factor)
        if self.task == "upsample" and self.patch_size % self.factor != 0:
            raise ConfigError("patch_size %d is not divisible by factor %d" % (self.patch_size, self.factor))
        if not 0.0 <= self.keep_fraction <= 1.0:
            raise ConfigError("keep_fraction must be in [0,1], got %s" % self.keep_fraction)
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0, got %s" % self.noise_sigma)
        if self.patch_size < 1 or self.num_samples < 1:
            raise ConfigError("patch_size and num_samples must be >= 1")
        if self.task == "deblur" and self.kernel is None:
            raise ConfigError("deblur needs a 'kernel' file")

        for key in ["kernel", "dataset", "train_images"]:
            path = getattr(self, key)
            if path is not None and not os.path.exists(path):
                raise ConfigError("%s: no such file or directory: %s" % (key, path))

        if self.solver == "l2-hqs" and self.solver_cfg.estimator != NW:
            raise ConfigError("the l2-hqs solver needs NW weights, KRR weights can be negative")

        self.solver_cfg.validate()
        return self


def apply_preset(cfg):
    """Resets the solver settings to the published values for cfg.task/cfg.solver"""
    solver = cfg.solver_cfg
    if cfg.solver == "mse":
        solver.gamma = 5000.0
    elif cfg.task == "upsample":
        solver.gamma = 6000.0
        solver.beta0 = 0.5
        solver.delta = 2.0
        solver.iterations = 3
    elif cfg.task == "denoise":
        level = cfg.noise_sigma * 255.0
        solver.gamma = min(DENOISE_GAMMA, key=lambda entry: abs(entry[0] - level))[1]
        solver.beta0 = 0.015
        solver.delta = 2.0
        solver.iterations = 5
    else:
        solver.gamma = 3200.0
        solver.beta0 = 3.0
        solver.delta = 2.0
        solver.iterations = 8

    solver.seed = cfg.seed
    return cfg


def coerce_value(key, text, default, optional_types):
    if default is None:
        if key not in optional_types:
            raise ConfigError("%s: no type known for key" % key)
        kind = optional_types[key]
        if text.lower() in ["", "none"]:
            return None
    else:
        kind = type(default)

    try:
        if kind is bool:
            lowered = text.lower()
            if lowered in ["1", "true", "yes", "on"]:
                return True
            elif lowered in ["0", "false", "no", "off"]:
                return False
            else:
                raise ValueError("not a boolean")
        elif kind is int:
            return int(text)
        elif kind is float:
            return float(text)
        else:
            return text
    except ValueError:
        raise ConfigError("%s: invalid %s value '%s'" % (key, kind.__name__, text))


def _target(cfg, key):
    if key != "solver_cfg" and hasattr(cfg, key):
        return cfg
    elif hasattr(cfg.solver_cfg, key):
        return cfg.solver_cfg
    else:
        raise ConfigError("unknown config key '%s'" % key)


def set_value(cfg, key, text):
    key = key.strip().replace("-", "_")
    obj = _target(cfg, key)
    value = coerce_value(key, text.strip(), getattr(obj, key), obj.optional_types)
    setattr(obj, key, value)


def parse_config_text(text, source="<string>"):
    """Returns the (key, value) pairs of a key=value text in order"""
    pairs = []
    for lineno, orig_line in enumerate(text.splitlines(), start=1):
        line = orig_line
        m = comment_regex.match(line)
        if m:
            line = m.group(1)

        if not line.strip():
            continue

        m = keyvalue_regex.match(line)
        if m:
            pairs.append((m.group(1).strip(), m.group(2).strip()))
        else:
            raise ConfigError("%s:%d: expected 'key = value', got: %s" % (source, lineno, orig_line))
    return pairs


def read_config_file(filename):
    try:
        with open(filename, "rt") as fin:
            return parse_config_text(fin.read(), filename)
    except OSError as e:
        raise ConfigError("%s: %s" % (filename, e.strerror))


def build_config(pairs):
    """ExperimentConfig from ordered (key, value) pairs: experiment keys
    first, then the task preset, then the solver keys on top"""

    cfg = ExperimentConfig()
    solver_pairs = []
    for key, value in pairs:
        key = key.replace("-", "_")
        if key != "solver_cfg" and hasattr(cfg, key):
            set_value(cfg, key, value)
        else:
            solver_pairs.append((key, value))

    apply_preset(cfg)
    for key, value in solver_pairs:
        set_value(cfg, key, value)

    logging.debug("config: %s", ", ".join("%s=%s" % kv for kv in canonical_items(cfg)))
    return cfg


# settings that don't change the results
NON_CANONICAL = ["solver_cfg", "output_dir", "workers"]


def canonical_items(cfg):
    items = {}
    for obj in [cfg, cfg.solver_cfg]:
        for key, value in vars(obj).items():
            if key not in NON_CANONICAL:
                items[key] = value
    return sorted(items.items())


def canonical_text(cfg):
    return "".join("%s=%s\n" % (key, value) for key, value in canonical_items(cfg))


def config_hash(cfg):
    return sha1_text(canonical_text(cfg))


# EOF #
