"""Config file grammar and model construction.

The config file is the single source of model truth for the command line.
Grammar (exact):

    # comments run to end of line; blank lines are ignored
    [model]
    kind = overdamped | underdamped | generalized
    d = <int>
    beta = <float>                  # 'inf' switches the noise off
    potential.kind = quadratic | double_well
    potential.params = [<float>, ...]   # quadratic: [omega2]; double_well: [a, b]
    interaction.eta2 = <float>      # omit for no interaction
    gamma = <float>                 # underdamped kind only

    [memory]                        # generalized kind only
    m = <int>
    lambda = [<float>, ...]         # flat row-major (d*m) x d, or m scalars for d = 1
    A = [<float>, ...]              # flat row-major (d*m) x (d*m)
    diag = [<float>, ...]           # alternative to A: diagonal entries

    [run]
    N = <int>
    T = <float>
    dt = <float>
    seed = <int>
    record_every = <int>

Values are integers, floats, bare words, or bracketed lists of numbers.
Unknown sections or keys are errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError
from .model import (
    CurieWeiss,
    DoubleWell,
    Kind,
    MemorySpec,
    ModelSpec,
    NoInteraction,
    Quadratic,
    ValidatedModel,
    validate,
)

_KNOWN_KEYS = {
    "model": {
        "kind",
        "d",
        "beta",
        "potential.kind",
        "potential.params",
        "interaction.eta2",
        "gamma",
    },
    "memory": {"m", "lambda", "A", "diag"},
    "run": {"N", "T", "dt", "seed", "record_every"},
}


@dataclass
class RunParams:
    """Scalar run parameters; CLI flags may override these, never the model."""

    N: int = 1000
    T: float = 1.0
    dt: float = 1e-3
    seed: int = 0
    record_every: int = 1


@dataclass
class Config:
    sections: dict

    def model_spec(self) -> ModelSpec:
        return build_model_spec(self.sections)

    def model(self) -> ValidatedModel:
        return validate(self.model_spec())

    def run_params(self) -> RunParams:
        run = self.sections.get("run", {})
        rp = RunParams()
        if "N" in run:
            rp.N = int(run["N"])
        if "T" in run:
            rp.T = float(run["T"])
        if "dt" in run:
            rp.dt = float(run["dt"])
        if "seed" in run:
            rp.seed = int(run["seed"])
        if "record_every" in run:
            rp.record_every = int(run["record_every"])
        return rp


def _parse_scalar(text: str):
    text = text.strip()
    if text.lower() in ("inf", "+inf"):
        return math.inf
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if all(ch.isalnum() or ch == "_" for ch in text) and text:
        return text
    raise ConfigError(f"cannot parse value {text!r}")


def _parse_value(text: str):
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError(f"unterminated list {text!r}")
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [float(_parse_scalar(tok)) for tok in inner.split(",")]
    return _parse_scalar(text)


def parse_config(text: str) -> Config:
    """Parse the documented key = value grammar; unknown keys are errors."""
    sections: dict = {}
    current: Optional[str] = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {lineno}: malformed section header {raw!r}")
            name = line[1:-1].strip()
            if name not in _KNOWN_KEYS:
                raise ConfigError(f"line {lineno}: unknown section [{name}]")
            current = name
            sections.setdefault(name, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any section")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _KNOWN_KEYS[current]:
            raise ConfigError(f"line {lineno}: unknown key {key!r} in section [{current}]")
        if key in sections[current]:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        sections[current][key] = _parse_value(val)
    if "model" not in sections:
        raise ConfigError("config must contain a [model] section")
    return Config(sections=sections)


def load_config(path) -> Config:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def build_model_spec(sections: dict) -> ModelSpec:
    model = sections["model"]
    try:
        kind = Kind(str(model["kind"]).lower())
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"model.kind missing or invalid: {exc}") from exc
    d = int(model.get("d", 1))
    beta = float(model.get("beta", 1.0))

    pkind = str(model.get("potential.kind", "quadratic")).lower()
    params = model.get("potential.params", None)
    if pkind == "quadratic":
        omega2 = float(params[0]) if params else 1.0
        potential = Quadratic(omega2=omega2)
    elif pkind == "double_well":
        if not params or len(params) != 2:
            raise ConfigError("double_well needs potential.params = [a, b]")
        potential = DoubleWell(a=float(params[0]), b=float(params[1]))
    else:
        raise ConfigError(f"unknown potential.kind {pkind!r}")

    if "interaction.eta2" in model:
        interaction = CurieWeiss(eta2=float(model["interaction.eta2"]))
    else:
        interaction = NoInteraction()

    gamma = float(model["gamma"]) if "gamma" in model else None

    memory = None
    if "memory" in sections:
        mem = sections["memory"]
        try:
            m = int(mem["m"])
        except KeyError as exc:
            raise ConfigError("memory section needs m") from exc
        dm = d * m
        lam_list = mem.get("lambda")
        if lam_list is None:
            raise ConfigError("memory section needs lambda")
        lam = np.asarray(lam_list, dtype=float)
        if lam.size == m and d == 1:
            lam = lam.reshape(dm, 1)
        elif lam.size == dm * d:
            lam = lam.reshape(dm, d)
        else:
            raise ConfigError(f"lambda needs {dm * d} entries (or {m} scalars for d=1)")
        if "A" in mem and "diag" in mem:
            raise ConfigError("give either A or diag, not both")
        if "diag" in mem:
            diag = np.asarray(mem["diag"], dtype=float)
            if diag.size != dm:
                raise ConfigError(f"diag needs {dm} entries")
            A = np.diag(diag)
        elif "A" in mem:
            A = np.asarray(mem["A"], dtype=float)
            if A.size != dm * dm:
                raise ConfigError(f"A needs {dm * dm} entries")
            A = A.reshape(dm, dm)
        else:
            raise ConfigError("memory section needs A or diag")
        diag_rates = None
        if d == 1 and np.allclose(A, np.diag(np.diag(A)), atol=0.0):
            diag_rates = (tuple(lam.reshape(-1).tolist()), tuple(np.diag(A).tolist()))
        memory = MemorySpec(m=m, lam=lam, A=A, diag=diag_rates)

    return ModelSpec(
        d=d,
        beta=beta,
        potential=potential,
        interaction=interaction,
        memory=memory,
        gamma=gamma,
        kind=kind,
    )
