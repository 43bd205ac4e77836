"""Experiment configuration and dispatch.

A configuration is a flat ``key = value`` text file (``#`` starts a
comment) naming an experiment and its parameters. Every experiment has a
fixed parameter schema with defaults; unknown keys are rejected and values
are parsed to the schema type before anything runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._errors import InvalidInputError, PLMMSEError

__all__ = [
    "EXPERIMENTS",
    "ExperimentConfig",
    "parse_grid",
    "parse_config_text",
    "load_config",
    "run",
]


def parse_grid(text):
    """``start:step:stop`` (inclusive) or a comma-separated list of numbers."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise InvalidInputError(f"grid {text!r} must look like start:step:stop")
        try:
            start, step, stop = (float(v) for v in parts)
        except ValueError:
            raise InvalidInputError(f"grid {text!r} has non-numeric fields") from None
        if step == 0 or (stop - start) * step < 0:
            raise InvalidInputError(f"grid {text!r} does not reach its stop value")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(count)]
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidInputError(f"grid {text!r} has non-numeric entries") from None
    if not vals:
        raise InvalidInputError("empty grid")
    return vals


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise InvalidInputError(f"expected a boolean, got {text!r}")


def _choice(*options):
    def parse(text):
        t = str(text).strip()
        if t not in options:
            raise InvalidInputError(f"expected one of {', '.join(options)}, got {t!r}")
        return t

    return parse


def _positive_int(text):
    v = int(str(text).strip())
    if v < 1:
        raise InvalidInputError(f"expected a positive integer, got {text!r}")
    return v


def _optional_float(text):
    t = str(text).strip().lower()
    return None if t in ("", "none", "default") else float(t)


# name -> (parser, default, help with units)
EXPERIMENTS = {
    "toy": {
        "sigma_u2": (float, 1.0, "variance of the y-channel noise (signal units^2)"),
        "sigma_v2": (float, 1.0, "variance of the z-channel noise (signal units^2)"),
        "n_alphas": (_positive_int, 41, "number of naive mixing weights on [0, 1] (count)"),
        "mc": (_positive_int, 100_000, "Monte Carlo draws (count)"),
    },
    "sparse": {
        "m": (_positive_int, 64, "signal dimension (power of two for the Hadamard dictionary)"),
        "p": (float, 0.5, "probability of an active coefficient (probability)"),
        "sigma1_sq": (float, 1.0, "variance of active coefficients (signal units^2)"),
        "snr_grid": (parse_grid, "-5:5:20", "input SNR sweep start:step:stop (dB, inclusive)"),
        "mc": (_positive_int, 200, "Monte Carlo draws per SNR point (count)"),
        "kernel_decay": (float, 8.5, "decay length of the exponential blur (samples)"),
        "column_norm": (float, 0.99, "column norm of the blur matrix (dimensionless)"),
        "g_scale": (float, 0.01, "gain alpha of the z channel, G = alpha I (dimensionless)"),
        "sigma_v2_scale": (_optional_float, None,
                           "z-noise variance as a multiple of the y-noise variance "
                           "(dimensionless; default g_scale^2)"),
        "dictionary": (_choice("hadamard", "identity", "dct"), "hadamard",
                       "sparsity basis (choice)"),
        "blur": (_choice("exponential", "identity"), "exponential",
                 "y-channel operator (choice)"),
    },
    "deblur": {
        "n": (_positive_int, 1024, "signal length (samples, divisible by 2^levels)"),
        "levels": (_positive_int, 4, "wavelet decomposition depth (levels)"),
        "trials": (_positive_int, 100, "independent signals (count)"),
        "p": (float, 0.1, "probability of an active wavelet coefficient (probability)"),
        "sigma1_sq": (float, 25.0, "variance of active coefficients (signal units^2)"),
        "blur_width": (float, 4.0, "std of the Gaussian blur kernel (samples)"),
        "sigma_u": (float, 0.1, "std of the y-channel noise (signal units)"),
        "sigma_v": (float, 2.0, "std of the z-channel noise (signal units)"),
        "em_iterations": (_positive_int, 10, "EM iterations per wavelet band (count)"),
    },
    "track": {
        "sigma_v_grid": (parse_grid, "1:1:15", "acceleration-noise std sweep start:step:stop "
                         "(position units per step^2, inclusive)"),
        "mc": (_positive_int, 100, "Monte Carlo runs per grid point (count)"),
        "steps": (_positive_int, 1000, "time steps per run (count)"),
        "u_family": (_choice("gaussian", "mixture", "both"), "gaussian",
                     "position-noise distribution (choice)"),
        "p": (float, 0.05, "probability of a maneuver step (probability)"),
        "sigma1": (float, 10.0, "maneuver acceleration std (position units per step^2)"),
        "sigma2": (float, 1.0, "nominal acceleration std (position units per step^2)"),
        "sigma_u": (float, 5.0, "position-noise std (position units)"),
        "outlier_prob": (float, 0.1, "outlier probability of mixture noise (probability)"),
        "outlier_scale": (float, 5.0, "outlier variance / sigma_u^2 for mixture noise (ratio)"),
        "imm": (_bool, True, "also run the IMM filter (boolean)"),
    },
    "minimax": {
        "mc": (_positive_int, 100_000, "Monte Carlo draws for fitting and testing (count)"),
        "challengers": (_positive_int, 5, "random-feature challengers (count)"),
    },
}


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    ``params`` holds every schema key of the experiment, parsed to its type;
    ``out`` is the output path (may be empty).
    """

    experiment: str
    params: dict = field(default_factory=dict)
    seed: int = 0
    out: str = ""

    @classmethod
    def build(cls, experiment, raw=None, seed=0, out=""):
        """Merge ``raw`` (strings or values) over the schema defaults and validate."""
        if experiment not in EXPERIMENTS:
            raise InvalidInputError(
                f"unknown experiment {experiment!r}; expected one of {', '.join(EXPERIMENTS)}"
            )
        schema = EXPERIMENTS[experiment]
        raw = dict(raw or {})
        unknown = sorted(set(raw) - set(schema))
        if unknown:
            raise InvalidInputError(f"unknown keys for {experiment}: {', '.join(unknown)}")
        params = {}
        for key, (parser, default, _) in schema.items():
            value = raw.get(key, default)
            if isinstance(value, str):
                try:
                    value = parser(value)
                except (ValueError, TypeError) as exc:
                    raise InvalidInputError(f"{key}: {exc}") from None
            params[key] = value
        try:
            seed = int(seed)
        except (TypeError, ValueError):
            raise InvalidInputError(f"seed must be an integer, got {seed!r}") from None
        if not 0 <= seed < 2**64:
            raise InvalidInputError("seed must fit in 64 unsigned bits")
        return cls(experiment, params, seed, str(out or ""))

    @property
    def mc_count(self):
        return self.params.get("mc")


def parse_config_text(text):
    """Parse ``key = value`` lines; ``#`` starts a comment. Returns a dict."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InvalidInputError(f"line {lineno}: expected key = value")
        key = key.strip().replace("-", "_")
        if not key:
            raise InvalidInputError(f"line {lineno}: empty key")
        if key in out:
            raise InvalidInputError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def load_config(path, overrides=None, experiment=None):
    """Read a config file and apply ``overrides`` (which win).

    ``experiment``, ``seed`` and ``out`` may appear in the file; the
    ``experiment`` argument, when given, must agree with it.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise PLMMSEError(f"cannot read config {path}: {exc}") from exc
    raw = parse_config_text(text)
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    file_exp = raw.pop("experiment", None)
    if experiment and file_exp and file_exp != experiment:
        raise InvalidInputError(f"config is for {file_exp!r}, not {experiment!r}")
    exp = experiment or file_exp
    if not exp:
        raise InvalidInputError("config does not name an experiment")
    seed = raw.pop("seed", 0)
    out = raw.pop("out", "")
    return ExperimentConfig.build(exp, raw, seed, out)


def run(config):
    """Run the configured experiment and return its :class:`ResultTable`."""
    p, seed = config.params, config.seed
    try:
        if config.experiment == "toy":
            from .toy import toy_experiment

            table = toy_experiment(p["sigma_u2"], p["sigma_v2"], p["n_alphas"], p["mc"], seed)
        elif config.experiment == "sparse":
            from .sparse import sparse_experiment

            table = sparse_experiment(
                m=p["m"], p=p["p"], sigma1_sq=p["sigma1_sq"], kernel_decay=p["kernel_decay"],
                column_norm=p["column_norm"], g_scale=p["g_scale"], snr_grid=p["snr_grid"],
                mc_count=p["mc"], seed=seed, sigma_v2_scale=p["sigma_v2_scale"],
                dictionary=p["dictionary"], blur=p["blur"],
            )
        elif config.experiment == "deblur":
            from .deblur import deblur_experiment

            table = deblur_experiment(
                n=p["n"], levels=p["levels"], trials=p["trials"], p=p["p"],
                sigma1_sq=p["sigma1_sq"], blur_width=p["blur_width"], sigma_u=p["sigma_u"],
                sigma_v=p["sigma_v"], em_iterations=p["em_iterations"], seed=seed,
            )
        elif config.experiment == "track":
            from .tracking import tracking_experiment

            table = tracking_experiment(
                sigma_v_grid=p["sigma_v_grid"], mc_runs=p["mc"], steps=p["steps"], seed=seed,
                u_family=p["u_family"], p=p["p"], sigma1=p["sigma1"], sigma2=p["sigma2"],
                sigma_u=p["sigma_u"], outlier_prob=p["outlier_prob"],
                outlier_scale=p["outlier_scale"], with_imm=p["imm"],
            )
        elif config.experiment == "minimax":
            from .minimax import minimax_experiment

            table = minimax_experiment(p["mc"], p["challengers"], seed)
        else:  # pragma: no cover - build() rejects unknown ids
            raise InvalidInputError(f"unknown experiment {config.experiment!r}")
    except PLMMSEError as exc:
        raise type(exc)(f"{config.experiment}: {exc}") from exc
    table.metadata["seed"] = seed
    return table
