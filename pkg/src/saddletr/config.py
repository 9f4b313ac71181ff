"""Experiment configuration files.

The format is INI (``configparser``) with these sections; keys not listed
are rejected so that typos surface as errors.

``[experiment]``  name, out_dir, workers
``[problem]``     kind = rayleigh | quadratic; dim; spectrum; rotation = seeded | identity;
                  seed; matrix (rows separated by ``;``); matrix_file; c; b; alpha
``[solver]``      kind = exact | inexact
``[trust_region]`` delta0, delta_max, eta1, eta2, tau1, tau2, eps_g, eps_H,
                  max_outer_iterations, hvp_budget
``[tcg]``         zeta
``[meo]``         mode = lanczos | dense; failure_prob; seed
``[params]``      alpha, beta, gamma, delta (override the problem's own values)
``[constants]``   L_H, L_hat_H, kappa_R, nu_R, nu_S, kappa_S, f0 (for ``budgets`` without a trace)
``[run]``         seeds; repetitions; start = random | near_eigenvector;
                  near_seeds; eigen_index; perturbation; start_radius

Vectors are written either as comma/space separated numbers or as
``linspace(a, b)`` / ``linspace(a, b, n)``, where ``n`` defaults to ``dim``.
Seed sets accept ``0..9`` ranges and comma lists.
"""

from __future__ import annotations

import configparser
import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .driver import TrConfig

OUT_DIR_ENV = "SADDLETR_OUT_DIR"

_SCHEMA = {
    "experiment": {"name", "out_dir", "workers"},
    "problem": {"kind", "dim", "spectrum", "rotation", "seed", "matrix", "matrix_file", "c", "b", "alpha"},
    "solver": {"kind"},
    "trust_region": {"delta0", "delta_max", "eta1", "eta2", "tau1", "tau2", "eps_g", "eps_h",
                     "max_outer_iterations", "hvp_budget"},
    "tcg": {"zeta"},
    "meo": {"mode", "failure_prob", "seed"},
    "params": {"alpha", "beta", "gamma", "delta"},
    "constants": {"l_h", "l_hat_h", "kappa_r", "nu_r", "nu_s", "kappa_s", "f0"},
    "run": {"seeds", "repetitions", "start", "near_seeds", "eigen_index", "perturbation", "start_radius"},
}
_REQUIRED = {"problem": {"kind", "seed"}, "solver": {"kind"}}


class ConfigError(ValueError):
    def __init__(self, message: str, path: str | None = None, line: int | None = None,
                 section: str | None = None, key: str | None = None):
        where = []
        if path:
            where.append(str(path) + (f":{line}" if line else ""))
        if section:
            where.append(f"[{section}]" + (f" {key}" if key else ""))
        super().__init__((" ".join(where) + ": " if where else "") + message)
        self.line, self.section, self.key = line, section, key


@dataclass(frozen=True)
class ProblemSpec:
    kind: str
    seed: int
    dim: int
    spectrum: tuple[float, ...] | None = None
    rotation: str = "seeded"
    matrix: tuple[tuple[float, ...], ...] | None = None
    c: float = 1.0
    b: tuple[float, ...] | None = None
    alpha: float = 1.0


@dataclass(frozen=True)
class StartSpec:
    kind: str = "random"
    near_seeds: tuple[int, ...] | None = None
    eigen_index: int | None = None
    perturbation: float = 1e-3
    radius: float = 1.0


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    problem: ProblemSpec
    solver: str
    tr: TrConfig
    zeta: float = 0.5
    meo_mode: str = "lanczos"
    meo_failure_prob: float = 0.01
    meo_seed: int = 0
    param_overrides: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)
    seeds: tuple[int, ...] = (0,)
    start: StartSpec = StartSpec()
    out_dir: str = "out"
    workers: int = 1
    source: str | None = None


class _Reader:
    def __init__(self, cp: configparser.ConfigParser, path: str | None, text: str):
        self.cp, self.path = cp, path
        self.lines = text.splitlines()

    def line_of(self, section: str, key: str | None = None) -> int | None:
        in_sec = False
        for i, raw in enumerate(self.lines, start=1):
            s = raw.strip()
            m = re.fullmatch(r"\[([^\]]+)\]", s)
            if m:
                in_sec = m.group(1).strip().lower() == section
                if in_sec and key is None:
                    return i
                continue
            if in_sec and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", s, re.IGNORECASE):
                return i
        return None

    def error(self, msg: str, section: str, key: str | None = None) -> ConfigError:
        return ConfigError(msg, self.path, self.line_of(section, key), section, key)

    def has(self, section: str, key: str) -> bool:
        return self.cp.has_option(section, key)

    def raw(self, section: str, key: str, default=None):
        if not self.has(section, key):
            return default
        return self.cp.get(section, key).strip()

    def num(self, section, key, default=None, cast=float):
        text = self.raw(section, key)
        if text is None:
            return default
        try:
            if cast is int:
                v = float(text)
                if v != int(v):
                    raise ValueError
                return int(v)
            v = float(text)
            if not math.isfinite(v):
                raise ValueError
            return v
        except ValueError:
            raise self.error(f"expected {'an integer' if cast is int else 'a finite number'}, got {text!r}",
                             section, key) from None


def parse_vector(text: str, dim: int | None = None) -> tuple[float, ...]:
    t = text.strip()
    m = re.fullmatch(r"linspace\(\s*([^,()]+)\s*,\s*([^,()]+)\s*(?:,\s*([^,()]+)\s*)?\)", t)
    if m:
        n = m.group(3)
        if n is None:
            if dim is None:
                raise ValueError("linspace without a count needs dim")
            n = dim
        return tuple(float(v) for v in np.linspace(float(m.group(1)), float(m.group(2)), int(n)))
    parts = [p for p in re.split(r"[,\s]+", t) if p]
    if not parts:
        raise ValueError("empty vector")
    return tuple(float(p) for p in parts)


def parse_seeds(text: str) -> tuple[int, ...]:
    out: list[int] = []
    for part in (p.strip() for p in text.split(",")):
        if not part:
            continue
        m = re.fullmatch(r"(-?\d+)\s*\.\.\s*(-?\d+)", part)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                raise ValueError(f"empty range {part!r}")
            out.extend(range(lo, hi + 1))
        else:
            out.append(int(part))
    if not out:
        raise ValueError("no seeds given")
    if len(set(out)) != len(out):
        raise ValueError("seeds must be distinct")
    return tuple(out)


def _matrix(text: str) -> tuple[tuple[float, ...], ...]:
    rows = [parse_vector(r) for r in text.split(";") if r.strip()]
    if len({len(r) for r in rows}) != 1 or len(rows) != len(rows[0]):
        raise ValueError("matrix must be square")
    return tuple(rows)


def loads_config(text: str, path: str | None = None) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string(text, source=path or "<string>")
    except configparser.ParsingError as e:
        line, content = e.errors[0]
        raise ConfigError(f"cannot parse line {content.strip()!r}", path, line) from None
    except configparser.Error as e:
        line = getattr(e, "lineno", None)
        raise ConfigError(str(e).splitlines()[0], path, line) from None
    rd = _Reader(cp, path, text)
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise rd.error("unknown section", sec)
        for key in cp.options(sec):
            if key not in _SCHEMA[sec]:
                raise rd.error("unknown key", sec, key)
    for sec, keys in _REQUIRED.items():
        if not cp.has_section(sec):
            raise ConfigError(f"missing section [{sec}]", path)
        for k in keys:
            if not rd.has(sec, k):
                raise rd.error("missing required key", sec, k)

    base_dir = Path(path).parent if path else Path(".")
    kind = rd.raw("problem", "kind")
    if kind not in ("rayleigh", "quadratic"):
        raise rd.error(f"kind must be rayleigh or quadratic, got {kind!r}", "problem", "kind")
    pseed = rd.num("problem", "seed", cast=int)
    dim = rd.num("problem", "dim", None, int)
    matrix = spectrum = None
    if rd.has("problem", "matrix") and rd.has("problem", "matrix_file"):
        raise rd.error("give either matrix or matrix_file, not both", "problem", "matrix_file")
    if rd.has("problem", "matrix"):
        try:
            matrix = _matrix(rd.raw("problem", "matrix"))
        except ValueError as e:
            raise rd.error(str(e), "problem", "matrix") from None
    elif rd.has("problem", "matrix_file"):
        mf = base_dir / rd.raw("problem", "matrix_file")
        if not mf.is_file():
            raise rd.error(f"file not found: {mf}", "problem", "matrix_file")
        try:
            arr = np.loadtxt(mf, ndmin=2)
        except ValueError as e:
            raise rd.error(f"cannot read matrix: {e}", "problem", "matrix_file") from None
        if arr.shape[0] != arr.shape[1]:
            raise rd.error("matrix must be square", "problem", "matrix_file")
        matrix = tuple(tuple(float(v) for v in row) for row in arr)
    if matrix is not None:
        if rd.has("problem", "spectrum"):
            raise rd.error("spectrum conflicts with an explicit matrix", "problem", "spectrum")
        if dim is not None and dim != len(matrix):
            raise rd.error(f"dim = {dim} but the matrix is {len(matrix)}x{len(matrix)}", "problem", "dim")
        dim = len(matrix)
    else:
        if not rd.has("problem", "spectrum"):
            raise rd.error("need spectrum, matrix or matrix_file", "problem")
        try:
            spectrum = parse_vector(rd.raw("problem", "spectrum"), dim)
        except ValueError as e:
            raise rd.error(str(e), "problem", "spectrum") from None
        if dim is not None and dim != len(spectrum):
            raise rd.error(f"dim = {dim} but the spectrum has {len(spectrum)} entries", "problem", "spectrum")
        dim = len(spectrum)
    if dim < 2:
        raise rd.error("dimension must be at least 2", "problem", "dim")
    rotation = rd.raw("problem", "rotation", "seeded")
    if rotation not in ("seeded", "identity"):
        raise rd.error("rotation must be seeded or identity", "problem", "rotation")
    b = None
    if rd.has("problem", "b"):
        if kind != "quadratic":
            raise rd.error("b only applies to quadratic problems", "problem", "b")
        btext = rd.raw("problem", "b")
        try:
            b = (0.0,) * dim if btext == "zeros" else parse_vector(btext, dim)
        except ValueError as e:
            raise rd.error(str(e), "problem", "b") from None
        if len(b) != dim:
            raise rd.error(f"b has {len(b)} entries, expected {dim}", "problem", "b")
    c = rd.num("problem", "c", 1.0)
    alpha = rd.num("problem", "alpha", 1.0)
    for key, v in (("c", c), ("alpha", alpha)):
        if not v > 0:
            raise rd.error("must be positive", "problem", key)
    problem = ProblemSpec(kind, pseed, dim, spectrum, rotation, matrix, c, b, alpha)

    solver = rd.raw("solver", "kind")
    if solver not in ("exact", "inexact"):
        raise rd.error(f"kind must be exact or inexact, got {solver!r}", "solver", "kind")

    trk = {}
    for key, attr in (("delta0", "delta0"), ("delta_max", "delta_max"), ("eta1", "eta1"), ("eta2", "eta2"),
                      ("tau1", "tau1"), ("tau2", "tau2"), ("eps_g", "eps_g"), ("eps_h", "eps_H")):
        v = rd.num("trust_region", key)
        if v is not None:
            trk[attr] = v
    for key in ("max_outer_iterations", "hvp_budget"):
        v = rd.num("trust_region", key, None, int)
        if v is not None:
            trk[key] = v
    try:
        tr = TrConfig(**trk)
    except ValueError as e:
        raise rd.error(str(e), "trust_region") from None

    zeta = rd.num("tcg", "zeta", 0.5)
    if not 0 < zeta < 1:
        raise rd.error("zeta must lie in (0, 1)", "tcg", "zeta")
    mode = rd.raw("meo", "mode", "lanczos")
    if mode not in ("lanczos", "dense"):
        raise rd.error("mode must be lanczos or dense", "meo", "mode")
    fp = rd.num("meo", "failure_prob", 0.01)
    if not 0 < fp < 1:
        raise rd.error("failure_prob must lie in (0, 1)", "meo", "failure_prob")
    meo_seed = rd.num("meo", "seed", 0, int)

    overrides = {}
    for key in ("alpha", "beta", "gamma", "delta"):
        v = rd.num("params", key)
        if v is not None:
            if not v > 0:
                raise rd.error("must be positive", "params", key)
            overrides[key] = v
    names = {"l_h": "L_H", "l_hat_h": "L_hat_H", "kappa_r": "kappa_R", "nu_r": "nu_R", "nu_s": "nu_S",
             "kappa_s": "kappa_S", "f0": "f0"}
    constants = {}
    for key, name in names.items():
        v = rd.num("constants", key)
        if v is not None:
            if name != "f0" and not v > 0:
                raise rd.error("must be positive", "constants", key)
            constants[name] = v

    reps = rd.num("run", "repetitions", None, int)
    if reps is not None and reps < 1:
        raise rd.error("repetitions must be at least 1", "run", "repetitions")
    if rd.has("run", "seeds"):
        try:
            seeds = parse_seeds(rd.raw("run", "seeds"))
        except ValueError as e:
            raise rd.error(str(e), "run", "seeds") from None
        if reps is not None and reps != len(seeds):
            raise rd.error(f"repetitions = {reps} but {len(seeds)} seeds are listed", "run", "repetitions")
    else:
        seeds = tuple(range(reps if reps is not None else 1))
    start_kind = rd.raw("run", "start", "random")
    if start_kind not in ("random", "near_eigenvector"):
        raise rd.error("start must be random or near_eigenvector", "run", "start")
    near = None
    if rd.has("run", "near_seeds"):
        try:
            near = parse_seeds(rd.raw("run", "near_seeds"))
        except ValueError as e:
            raise rd.error(str(e), "run", "near_seeds") from None
        if start_kind != "near_eigenvector":
            raise rd.error("near_seeds requires start = near_eigenvector", "run", "near_seeds")
    idx = rd.num("run", "eigen_index", None, int)
    if start_kind == "near_eigenvector":
        if kind != "rayleigh":
            raise rd.error("near_eigenvector starts need a rayleigh problem", "run", "start")
        if idx is None:
            idx = dim // 2
        if not 0 <= idx < dim:
            raise rd.error(f"eigen_index must lie in [0, {dim})", "run", "eigen_index")
    pert = rd.num("run", "perturbation", 1e-3)
    radius = rd.num("run", "start_radius", 1.0)
    if not pert >= 0:
        raise rd.error("perturbation must be nonnegative", "run", "perturbation")
    if not radius > 0:
        raise rd.error("start_radius must be positive", "run", "start_radius")
    start = StartSpec(start_kind, near, idx, pert, radius)

    name = rd.raw("experiment", "name") or (Path(path).stem if path else "experiment")
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", name):
        raise rd.error("name may only contain letters, digits, '_', '.', '-'", "experiment", "name")
    out_dir = rd.raw("experiment", "out_dir") or os.environ.get(OUT_DIR_ENV, "out")
    workers = rd.num("experiment", "workers", 1, int)
    if workers < 1:
        raise rd.error("workers must be at least 1", "experiment", "workers")
    return ExperimentConfig(name, problem, solver, tr, zeta, mode, fp, meo_seed, overrides, constants, seeds,
                            start, out_dir, workers, path)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config file not found", str(p))
    return loads_config(p.read_text(), str(p))
