"""INI-style run configurations: parsing, schema check, and construction of library objects.

A configuration is a flat ``key = value`` file with section headers.  Numbers
are decimals with optional exponent; exact fractions such as ``1/8`` are also
accepted.  Lists are comma separated; tensor lists separate labels with ``;``.
Built-in presets live in ``gclab/configs`` and are addressed by name.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from .core import ControlSpace, EllipticityBounds, GclabError, InvalidInput, Microstructure, SpdTensor
from .gclosure import FAMILIES
from .nonlinearity import F0_REGISTRY, F_REGISTRY, SOURCES, TARGETS, make_nonlinearity, tabulated_nonlinearity

__all__ = ["ConfigError", "RunConfig", "validate_config", "load_config", "preset_names", "resolve_config"]


class ConfigError(GclabError):
    """Raised with the complete list of problems found in a configuration."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _num(text):
    text = text.strip()
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def _int(text):
    v = _num(text)
    if v != int(v):
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


def _list(conv):
    def parse(text):
        return [conv(t) for t in text.split(",") if t.strip()]
    return parse


def _str(text):
    return text.strip()


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{text!r} is not a boolean")


def _tensors(text):
    return [[_num(t) for t in group.split(",") if t.strip()] for group in text.split(";") if group.strip()]


# section -> key -> (parser, default); a default of ... marks a required key
SCHEMA = {
    "problem": {
        "dim": (_int, 1),
        "lengths": (_list(_num), None),
        "seed": (_int, 0),
    },
    "controls": {
        "labels": (_list(_str), ...),
        "conductivities": (_list(_num), None),
        "tensors": (_tensors, None),
        "values": (_list(_num), None),
        "modulation": (_num, 0.0),
        "lower": (_num, None),
        "upper": (_num, None),
    },
    "microstructure": {
        "kind": (_str, "laminate"),
        "labels": (_list(_str), None),
        "fraction": (_num, 0.5),
        "fractions": (_list(_num), None),
        "resolution": (_int, 64),
        "axis": (_int, 1),
        "x": (_list(_num), None),
    },
    "nonlinearity": {
        "f": (_str, "affine-decreasing"),
        "f0": (_str, "state"),
        "source": (_num, 1.0),
        "source_kind": (_str, "constant"),
        "control": (_num, 0.0),
        "decay": (_num, 0.0),
        "radius": (_num, 1.0),
        "weight_state": (_num, None),
        "weight_tracking": (_num, None),
        "weight_control": (_num, None),
        "weight_unit": (_num, None),
        "target_scale": (_num, 1.0),
        "target_kind": (_str, "bump"),
        "center": (_num, 0.5),
        "f_table": (_list(_num), None),
        "f0_table": (_list(_num), None),
    },
    "sweep": {
        "eps": (_list(_num), [1 / 8, 1 / 16, 1 / 32]),
        "resolution": (_int, 1024),
        "rhs": (_num, 1.0),
        "comparator": (_str, "arithmetic"),
        "weak_rhs": (_bool, True),
    },
    "gclosure": {
        "families": (_list(_str), ["laminate", "checkerboard", "random-cell"]),
        "count": (_int, 16),
        "resolution": (_int, 16),
        "x": (_list(_num), None),
    },
    "state": {
        "resolution": (_int, 64),
        "level": (_int, 0),
        "labels": (_list(_str), None),
        "mode": (_str, "direct"),
        "tol": (_num, 1e-9),
    },
    "cesari": {
        "x": (_list(_num), None),
        "y": (_num, 0.0),
        "deltas": (_list(_num), [0.1, 0.01]),
        "families": (_list(_str), ["constant", "laminate"]),
        "count": (_int, 8),
        "resolution": (_int, 16),
        "tol": (_num, 1e-8),
        "hull_steps": (_int, 64),
    },
    "optimize": {
        "levels": (_list(_int), [0, 1, 2, 3]),
        "budget": (_int, 10),
        "resolution": (_int, 64),
        "oracle_limit": (_int, 1024),
        "relaxed": (_bool, True),
        "pair": (_list(_str), None),
    },
}

COMPARATORS = ("arithmetic", "harmonic", "none")


def preset_names() -> list[str]:
    root = resources.files("gclab") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def resolve_config(name) -> tuple[str, str]:
    """(source label, text) for a file path or a preset name."""
    path = Path(name)
    if path.is_file():
        return str(name), path.read_text(encoding="utf-8")
    if path.suffix == "" and name in preset_names():
        res = resources.files("gclab") / "configs" / f"{name}.ini"
        return f"preset:{name}", res.read_text(encoding="utf-8")
    raise ConfigError([f"config {str(name)!r} is neither a readable file nor a preset ({', '.join(preset_names())})"])


@dataclass
class RunConfig:
    """Normalized configuration plus the objects it describes."""

    values: dict
    source: str
    space: ControlSpace
    bounds: EllipticityBounds

    @property
    def seed(self) -> int:
        return self.values["problem"]["seed"]

    @property
    def dim(self) -> int:
        return self.values["problem"]["dim"]

    @property
    def lengths(self) -> tuple:
        return tuple(self.values["problem"]["lengths"])

    def section(self, name) -> dict:
        return self.values[name]

    def digest(self) -> str:
        blob = json.dumps(self.values, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def nonlinearity(self):
        nl = dict(self.values["nonlinearity"])
        if nl["f_table"] is not None or nl["f0_table"] is not None:
            return tabulated_nonlinearity(self.space, nl["f_table"], nl["f0_table"], decay=nl["decay"],
                                          f=nl["f"], radius=nl["radius"])
        for k in ("f_table", "f0_table"):
            nl.pop(k)
        return make_nonlinearity(self.space, nl.pop("f"), nl.pop("f0"), **nl)

    def microstructure(self) -> Microstructure:
        m = self.values["microstructure"]
        labels = list(m["labels"] or self.space.labels[:2]) * 2  # a lone label pairs with itself
        kind = m["kind"]
        if kind == "constant":
            return Microstructure.constant(self.space, labels[0], m["resolution"])
        if kind == "laminate":
            return Microstructure.laminate(self.space, labels[:2], m["fraction"], m["resolution"], axis=m["axis"] - 1)
        if kind == "checkerboard":
            return Microstructure.checkerboard(self.space, labels[:2], m["resolution"])
        if kind == "stratified":
            fr = m["fractions"] if m["fractions"] is not None else [1.0 / self.space.size] * self.space.size
            return Microstructure.stratified(self.space, fr, m["resolution"])
        from .gclosure import generate_microstructures
        return generate_microstructures(self.space, "random-cell", 1, self.seed, resolution=m["resolution"])[0][1]

    def point(self, section) -> np.ndarray:
        x = self.values[section]["x"]
        return np.asarray(x if x is not None else [0.5 * L for L in self.lengths], dtype=float)


def _parse(text) -> tuple[dict, list]:
    errors = []
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        return {}, [f"syntax: {exc}"]
    values = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            errors.append(f"unknown section [{sec}]; known: {', '.join(SCHEMA)}")
    for sec, keys in SCHEMA.items():
        out = {}
        present = cp[sec] if cp.has_section(sec) else {}
        for key in present:
            if key not in keys:
                errors.append(f"[{sec}] unknown key {key!r}")
        for key, (conv, default) in keys.items():
            if key in present:
                try:
                    out[key] = conv(present[key])
                except (ValueError, ZeroDivisionError) as exc:
                    errors.append(f"[{sec}] {key}: {exc}")
                    out[key] = default if default is not ... else None
            elif default is ...:
                errors.append(f"[{sec}] missing required key {key!r}")
                out[key] = None
            else:
                out[key] = default
        values[sec] = out
    return values, errors


def _check(values) -> tuple[list, ControlSpace | None, EllipticityBounds | None]:
    errors = []
    prob = values["problem"]
    dim = prob["dim"]
    if dim not in (1, 2):
        errors.append(f"[problem] dim must be 1 or 2, got {dim}")
        return errors, None, None
    if prob["lengths"] is None:
        prob["lengths"] = [1.0] * dim
    if len(prob["lengths"]) != dim or any(L <= 0 for L in prob["lengths"]):
        errors.append("[problem] lengths must be positive, one per axis")
    if prob["seed"] < 0:
        errors.append("[problem] seed must be >= 0")

    ctl = values["controls"]
    labels = ctl["labels"] or []
    space = bounds = None
    tensors = None
    if ctl["conductivities"] is not None and ctl["tensors"] is not None:
        errors.append("[controls] give either conductivities or tensors, not both")
    elif ctl["conductivities"] is not None:
        if len(ctl["conductivities"]) != len(labels):
            errors.append("[controls] one conductivity per label required")
        else:
            tensors = [np.eye(dim) * c for c in ctl["conductivities"]]
    elif ctl["tensors"] is not None:
        if len(ctl["tensors"]) != len(labels) or any(len(t) != dim * dim for t in ctl["tensors"]):
            errors.append(f"[controls] tensors need {dim * dim} entries per label")
        else:
            tensors = [np.reshape(t, (dim, dim)) for t in ctl["tensors"]]
    elif labels:
        errors.append("[controls] conductivities or tensors required")
    if abs(ctl["modulation"]) >= 1:
        errors.append("[controls] modulation must lie in (-1, 1)")
    if tensors is not None:
        try:
            amp = ctl["modulation"]
            xdep = None
            if amp:
                table = np.stack(tensors)

                def xdep(x, u, table=table, amp=amp):
                    return (1 + amp * np.sin(2 * np.pi * x[:, 0]))[:, None, None] * table[u]
            space = ControlSpace(labels, [SpdTensor(t) for t in tensors], ctl["values"], xdep)
        except InvalidInput as exc:
            errors.append(f"[controls] {exc}")
    if space is not None:
        eig = np.concatenate([t.eigvals() for t in space.tensors])
        amp = abs(ctl["modulation"])
        lo = ctl["lower"] if ctl["lower"] is not None else float(eig.min()) * (1 - amp)
        hi = ctl["upper"] if ctl["upper"] is not None else float(eig.max()) * (1 + amp)
        ctl["lower"], ctl["upper"] = lo, hi
        try:
            bounds = EllipticityBounds(lo, hi)
        except InvalidInput as exc:
            errors.append(f"[controls] {exc}")
        else:
            g = np.linspace(0, 1, 9)
            pts = np.stack(np.meshgrid(*[g * L for L in prob["lengths"][:dim]], indexing="ij"), -1).reshape(-1, dim) \
                if len(prob["lengths"]) == dim else None
            errors += [f"[controls] bounds violated: {p}" for p in space.check(bounds, pts)]
        if ctl["values"] is None:
            ctl["values"] = list(space.values)

    nl = values["nonlinearity"]
    if nl["f"] not in F_REGISTRY:
        errors.append(f"[nonlinearity] unknown nonlinearity {nl['f']!r}; registry: {', '.join(sorted(F_REGISTRY))}")
    if nl["f0"] not in F0_REGISTRY:
        errors.append(f"[nonlinearity] unknown cost integrand {nl['f0']!r}; registry: {', '.join(sorted(F0_REGISTRY))}")
    if nl["source_kind"] not in SOURCES:
        errors.append(f"[nonlinearity] unknown source_kind {nl['source_kind']!r}; choose from {', '.join(SOURCES)}")
    if nl["target_kind"] not in TARGETS:
        errors.append(f"[nonlinearity] unknown target_kind {nl['target_kind']!r}; choose from {', '.join(TARGETS)}")
    if nl["decay"] < 0:
        errors.append("[nonlinearity] decay must be >= 0")
    if nl["radius"] <= 0:
        errors.append("[nonlinearity] radius must be positive")
    if (nl["f_table"] is None) != (nl["f0_table"] is None):
        errors.append("[nonlinearity] f_table and f0_table go together")
    elif nl["f_table"] is not None and (len(nl["f_table"]) != len(labels) or len(nl["f0_table"]) != len(labels)):
        errors.append("[nonlinearity] tables need one value per label")

    ms = values["microstructure"]
    if ms["kind"] not in ("constant", "laminate", "checkerboard", "stratified", "random-cell"):
        errors.append(f"[microstructure] unknown kind {ms['kind']!r}")
    if ms["resolution"] < 2:
        errors.append("[microstructure] resolution must be >= 2")
    if not 0 <= ms["fraction"] <= 1:
        errors.append("[microstructure] fraction must lie in [0, 1]")
    if not 1 <= ms["axis"] <= dim:
        errors.append(f"[microstructure] axis must lie in 1..{dim}")
    for sec in ("microstructure", "gclosure", "cesari"):
        x = values[sec]["x"]
        if x is not None and len(x) != dim:
            errors.append(f"[{sec}] x needs {dim} coordinates")
    for lab in (ms["labels"] or []) + (values["optimize"]["pair"] or []) + (values["state"]["labels"] or []):
        if lab not in labels:
            errors.append(f"unknown control label {lab!r}; known: {', '.join(labels)}")

    sw = values["sweep"]
    if not sw["eps"] or any(e <= 0 for e in sw["eps"]):
        errors.append("[sweep] eps values must be positive")
    if sw["comparator"] not in COMPARATORS:
        errors.append(f"[sweep] comparator must be one of {', '.join(COMPARATORS)}")
    for sec in ("sweep", "gclosure", "state", "cesari", "optimize"):
        if values[sec]["resolution"] < 2:
            errors.append(f"[{sec}] resolution must be >= 2")
    gc = values["gclosure"]
    for fam in gc["families"] + values["cesari"]["families"]:
        if fam not in FAMILIES:
            errors.append(f"unknown microstructure family {fam!r}; choose from {', '.join(FAMILIES)}")
    if gc["count"] < 1 or values["cesari"]["count"] < 1:
        errors.append("sample counts must be >= 1")
    st = values["state"]
    if st["mode"] not in ("direct", "effective"):
        errors.append("[state] mode must be direct or effective")
    if st["level"] < 0:
        errors.append("[state] level must be >= 0")
    elif st["labels"] is not None and len(st["labels"]) not in (1, 2 ** (st["level"] * dim)):
        errors.append(f"[state] labels need 1 or {2 ** (st['level'] * dim)} entries")
    ce = values["cesari"]
    if any(d < 0 for d in ce["deltas"]) or ce["tol"] < 0 or ce["hull_steps"] < 1:
        errors.append("[cesari] deltas and tol must be >= 0, hull_steps >= 1")
    op = values["optimize"]
    lv = op["levels"]
    if not lv or any(v < 0 for v in lv) or any(b <= a for a, b in zip(lv, lv[1:])):
        errors.append("[optimize] levels must be increasing and >= 0")
    if op["budget"] < 1:
        errors.append("[optimize] budget must be >= 1")
    return errors, space, bounds


def load_config(text: str, source: str = "<string>", overrides: dict | None = None) -> RunConfig:
    """Parse and check configuration text; raises ConfigError listing every problem."""
    values, errors = _parse(text)
    if errors and not values:
        raise ConfigError(errors)
    for (sec, key), v in (overrides or {}).items():
        values[sec][key] = v
    more, space, bounds = _check(values)
    errors += more
    if errors:
        raise ConfigError(errors)
    cfg = RunConfig(values, source, space, bounds)
    try:
        cfg.nonlinearity()
        cfg.microstructure()
    except InvalidInput as exc:
        raise ConfigError([str(exc)]) from None
    return cfg


def validate_config(path, overrides: dict | None = None) -> RunConfig:
    """Read a file (or preset name) and return the normalized configuration.

    ``RunConfig.values`` echoes every key with defaults filled in.  Unreadable
    files raise ``OSError``; schema problems raise ``ConfigError``.
    """
    if not Path(path).exists() and str(path) not in preset_names():
        raise OSError(f"cannot read config {str(path)!r}")
    source, text = resolve_config(path)
    return load_config(text, source, overrides)
