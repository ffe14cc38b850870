"""Experiment configuration and on-disk problem format.

Configs and problem files are JSON documents with a fixed field set;
unknown fields are parse errors so typos fail loudly. Problem files
carry the constraint system as explicit ``D_rows`` triples
``[row, block, coeff]`` (optionally ``[row, block, coord, coeff]`` for
vector-valued components) plus the ``H_diag`` vector.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from typing import Any, Optional

import numpy as np

from .benchmarks import BENCHMARK_NAMES
from .errors import ParseError, ValidationError
from .problem import ConstraintSystem, SeparableProblem
from .terms import AbsDev, Box, Custom, Free, L1, Quadratic, SumZeroPairs

CONFIG_FIELDS = ("problem", "T", "seeds", "beta", "blocks", "block_probs",
                 "probes", "stride", "out", "workers", "x0", "z0", "reference")
PROBE_FIELDS = ("shadow", "lyapunov", "ergodic")
PROBLEM_SOURCE_KINDS = ("file", "inline", "benchmark", "object")
BENCHMARK_FIELDS = ("name", "graph", "a", "w", "b", "pi", "box_margin")
PROBLEM_FIELDS = ("n", "N", "W", "beta", "terms", "x_sets", "z_set",
                  "D_rows", "H_diag")


@dataclass(frozen=True)
class ProbeFlags:
    shadow: bool = False
    lyapunov: bool = False
    ergodic: bool = False


@dataclass(frozen=True)
class ProblemSource:
    """Where the problem comes from: a file, an inline document, a named
    benchmark, or an in-memory object (API only, not renderable)."""

    kind: str
    value: Any

    def __post_init__(self):
        if self.kind not in PROBLEM_SOURCE_KINDS:
            raise ValidationError(f"unknown problem source kind {self.kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSource
    T: int
    seeds: tuple = (0,)
    beta: float = 1.0
    blocks: Optional[tuple] = None        # None: per-edge / single block
    block_probs: Optional[tuple] = None   # None: uniform
    probes: ProbeFlags = field(default_factory=ProbeFlags)
    stride: int = 1
    out: Optional[str] = None
    workers: int = 1
    x0: Optional[tuple] = None
    z0: Optional[tuple] = None
    reference: str = "auto"               # auto | sync | none

    def __post_init__(self):
        if self.T < 1:
            raise ValidationError("T must be >= 1")
        if not self.seeds:
            raise ValidationError("seeds must be nonempty")
        if self.stride < 1:
            raise ValidationError("stride must be >= 1")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")
        if not self.beta > 0:
            raise ValidationError("beta must be positive")
        if self.reference not in ("auto", "sync", "none"):
            raise ValidationError(f"unknown reference mode {self.reference!r}")
        if self.block_probs is not None:
            total = float(sum(self.block_probs))
            if abs(total - 1.0) > 1e-12:
                raise ValidationError(
                    f"block_probs sum to {total!r}, expected 1")
            if any(p <= 0 for p in self.block_probs):
                raise ValidationError("block_probs must be positive")


def _check_fields(obj: dict, allowed, where: str):
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: expected an object, got {type(obj).__name__}")
    for key in obj:
        if key not in allowed:
            raise ParseError(f"{where}: unknown field {key!r}")


def _parse_seeds(raw) -> tuple:
    if isinstance(raw, int):
        return (raw,)
    if isinstance(raw, str):
        if ".." in raw:
            lo, hi = raw.split("..", 1)
            try:
                lo, hi = int(lo), int(hi)
            except ValueError:
                raise ParseError(f"bad seed range {raw!r}") from None
            if hi < lo:
                raise ValidationError(f"empty seed range {raw!r}")
            return tuple(range(lo, hi + 1))
        try:
            return tuple(int(s) for s in raw.split(","))
        except ValueError:
            raise ParseError(f"bad seed list {raw!r}") from None
    if isinstance(raw, list):
        return tuple(int(s) for s in raw)
    raise ParseError(f"seeds must be an int, list, or range string, got {raw!r}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON experiment config.

    Defaults: beta 1.0, single seed 0, stride 1, all probes off.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"config is not valid JSON: {exc}") from None
    _check_fields(raw, CONFIG_FIELDS, "config")
    if "problem" not in raw:
        raise ParseError("config: missing required field 'problem'")
    if "T" not in raw:
        raise ParseError("config: missing required field 'T'")

    src_raw = raw["problem"]
    _check_fields(src_raw, ("file", "inline", "benchmark"), "problem")
    if len(src_raw) != 1:
        raise ParseError("problem: give exactly one of file/inline/benchmark")
    kind, value = next(iter(src_raw.items()))
    if kind == "benchmark":
        _check_fields(value, BENCHMARK_FIELDS, "problem.benchmark")
        if "name" not in value:
            raise ParseError("problem.benchmark: missing field 'name'")
        if value["name"] not in BENCHMARK_NAMES:
            raise ValidationError(
                f"problem.benchmark: unknown name {value['name']!r}")
        if "graph" not in value:
            raise ParseError("problem.benchmark: missing field 'graph'")
    elif kind == "inline":
        _check_fields(value, PROBLEM_FIELDS, "problem.inline")
    elif not isinstance(value, str):
        raise ParseError("problem.file must be a path string")
    source = ProblemSource(kind=kind, value=value)

    probes_raw = raw.get("probes", {})
    _check_fields(probes_raw, PROBE_FIELDS, "probes")
    probes = ProbeFlags(**{k: bool(v) for k, v in probes_raw.items()})

    blocks = raw.get("blocks")
    if blocks is not None:
        blocks = tuple(tuple(int(r) for r in blk) for blk in blocks)
    block_probs = raw.get("block_probs")
    if block_probs is not None:
        block_probs = tuple(float(p) for p in block_probs)
    x0 = tuple(float(v) for v in raw["x0"]) if raw.get("x0") is not None else None
    z0 = tuple(float(v) for v in raw["z0"]) if raw.get("z0") is not None else None

    try:
        return ExperimentConfig(
            problem=source, T=int(raw["T"]),
            seeds=_parse_seeds(raw.get("seeds", 0)),
            beta=float(raw.get("beta", 1.0)), blocks=blocks,
            block_probs=block_probs, probes=probes,
            stride=int(raw.get("stride", 1)), out=raw.get("out"),
            workers=int(raw.get("workers", 1)), x0=x0, z0=z0,
            reference=raw.get("reference", "auto"))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"config: {exc}") from None


def render_config(config: ExperimentConfig) -> str:
    """Canonical JSON for a config; parse(render(c)) == c."""
    if config.problem.kind == "object":
        raise ValidationError("in-memory problem objects are not renderable")
    doc = {
        "problem": {config.problem.kind: config.problem.value},
        "T": config.T,
        "seeds": list(config.seeds),
        "beta": config.beta,
        "probes": asdict(config.probes),
        "stride": config.stride,
        "workers": config.workers,
        "reference": config.reference,
    }
    if config.blocks is not None:
        doc["blocks"] = [list(b) for b in config.blocks]
    if config.block_probs is not None:
        doc["block_probs"] = list(config.block_probs)
    if config.out is not None:
        doc["out"] = config.out
    if config.x0 is not None:
        doc["x0"] = list(config.x0)
    if config.z0 is not None:
        doc["z0"] = list(config.z0)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# Problem files
# ---------------------------------------------------------------------------

def _term_from_json(doc, n, where):
    _check_fields(doc, ("kind", "center", "weight", "gamma", "dim"), where)
    kind = doc.get("kind")
    if kind == "quadratic":
        return Quadratic(np.asarray(doc["center"], dtype=float),
                         float(doc.get("weight", 1.0)))
    if kind == "absdev":
        return AbsDev(np.asarray(doc["center"], dtype=float))
    if kind == "l1":
        return L1(gamma=float(doc["gamma"]), dim=int(doc.get("dim", n)))
    raise ParseError(f"{where}: unknown term kind {kind!r}")


def _term_to_json(term, where):
    if isinstance(term, Quadratic):
        return {"kind": "quadratic", "center": term.center.tolist(),
                "weight": term.weight}
    if isinstance(term, AbsDev):
        return {"kind": "absdev", "center": term.center.tolist()}
    if isinstance(term, L1):
        return {"kind": "l1", "gamma": term.gamma, "dim": term.dim}
    if isinstance(term, Custom):
        raise ValidationError(f"{where}: custom terms are code-only")
    raise ValidationError(f"{where}: unknown term {type(term).__name__}")


def _set_from_json(doc, where):
    _check_fields(doc, ("kind", "dim", "lower", "upper", "pairs"), where)
    kind = doc.get("kind")
    if kind == "free":
        return Free(dim=int(doc["dim"]))
    if kind == "box":
        return Box(np.asarray(doc["lower"], dtype=float),
                   np.asarray(doc["upper"], dtype=float))
    if kind == "sum_zero_pairs":
        return SumZeroPairs(dim=int(doc["dim"]),
                            pairs=tuple((int(i), int(j))
                                        for i, j in doc.get("pairs", ())))
    raise ParseError(f"{where}: unknown set kind {kind!r}")


def _set_to_json(fset):
    if isinstance(fset, Free):
        return {"kind": "free", "dim": fset.dim}
    if isinstance(fset, Box):
        return {"kind": "box", "lower": fset.lower.tolist(),
                "upper": fset.upper.tolist()}
    if isinstance(fset, SumZeroPairs):
        return {"kind": "sum_zero_pairs", "dim": fset.dim,
                "pairs": [list(p) for p in fset.pairs]}
    raise ValidationError(f"unknown set {type(fset).__name__}")


def load_problem(doc) -> SeparableProblem:
    """Build a separable problem from a parsed problem document."""
    if isinstance(doc, str):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ParseError(f"problem file is not valid JSON: {exc}") from None
    _check_fields(doc, PROBLEM_FIELDS, "problem")
    for key in PROBLEM_FIELDS:
        if key not in doc:
            raise ParseError(f"problem: missing required field {key!r}")
    n, num, w = int(doc["n"]), int(doc["N"]), int(doc["W"])
    entries = []
    for row in doc["D_rows"]:
        if len(row) == 3:
            entries.append((int(row[0]), int(row[1]), 0, float(row[2])))
        elif len(row) == 4:
            entries.append((int(row[0]), int(row[1]), int(row[2]),
                            float(row[3])))
        else:
            raise ParseError(f"problem.D_rows: bad entry {row!r}")
    cs = ConstraintSystem(n=n, N=num, W=w, entries=tuple(entries),
                          h_diag=np.asarray(doc["H_diag"], dtype=float))
    terms = tuple(_term_from_json(t, n, f"problem.terms[{i}]")
                  for i, t in enumerate(doc["terms"]))
    x_sets = tuple(_set_from_json(s, f"problem.x_sets[{i}]")
                   for i, s in enumerate(doc["x_sets"]))
    z_set = _set_from_json(doc["z_set"], "problem.z_set")
    return SeparableProblem(terms=terms, x_sets=x_sets, z_set=z_set,
                            constraints=cs, beta=float(doc["beta"]))


def dump_problem(prob: SeparableProblem) -> str:
    """Serialize a separable problem to the JSON problem format."""
    cs = prob.constraints
    doc = {
        "n": cs.n, "N": cs.N, "W": cs.W, "beta": prob.beta,
        "terms": [_term_to_json(t, f"terms[{i}]")
                  for i, t in enumerate(prob.terms)],
        "x_sets": [_set_to_json(s) for s in prob.x_sets],
        "z_set": _set_to_json(prob.z_set),
        "D_rows": [[row, blk, coord, coeff] if cs.n > 1 else [row, blk, coeff]
                   for (row, blk, coord, coeff) in cs.entries],
        "H_diag": cs.h_diag.tolist(),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
