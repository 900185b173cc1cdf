"""Plain-text model files.

A model file is a sequence of sections. Blank lines and text after ``#``
are ignored. ::

    [states]
    idle busy down            # labels, any number per line

    [rates]
    idle busy 2.0             # from, to, rate
    busy idle 1.0
    busy down 0.1

    [targets]
    1: down                   # key: labels of Gamma_k

    [alpha]
    idle 1                    # label, weight (rescaled if needed)

Instead of ``[states]`` and ``[rates]`` a ``[lattice]`` section generates a
constrained random walk on ``{0..size-1}^dims``::

    [lattice]
    size 3
    dims 3
    increment 1,0,0 2.0       # step vector and its rate
    absorbing zero            # no step touches coordinate k once z_k = 0
    reflecting top            # no step raises coordinate k once z_k = size-1
    targets zero              # Gamma_k = {z : z_k = 0}, k = 1..dims
    alpha interior            # uniform on {z : every z_k > 0}

Lattice labels join the coordinates with ``_`` (``1_2_0``). Steps leaving
the box are always suppressed. ``[targets]`` and ``[alpha]`` may follow a
lattice to override the generated ones.
"""
from __future__ import annotations

import itertools
import math
import re
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InvalidModelError, ModelFileError, ModelMismatchError
from .mcore import IntensityModel

SECTIONS = ("states", "rates", "targets", "alpha", "lattice")
_LABEL_RE = re.compile(r"^[^\s#:\[\],]+$")


def _strip(line: str) -> str:
    return line.split("#", 1)[0].strip()


def _float(tok: str, lineno: int, path, what: str) -> float:
    try:
        x = float(tok)
    except ValueError:
        raise ModelFileError(f"bad {what} {tok!r}", lineno, path) from None
    if not math.isfinite(x) or x < 0:
        raise ModelFileError(f"{what} must be finite and nonnegative, got {tok}", lineno, path)
    return x


class _Lattice:
    def __init__(self):
        self.size = None
        self.dims = None
        self.increments: list[tuple[tuple[int, ...], float]] = []
        self.absorbing_zero = False
        self.reflecting_top = False
        self.targets_zero = False
        self.alpha_interior = False

    def feed(self, toks, lineno, path):
        key = toks[0]
        if key in ("size", "dims") and len(toks) == 2:
            try:
                val = int(toks[1])
            except ValueError:
                raise ModelFileError(f"{key} must be an integer", lineno, path) from None
            if val < 1 or (key == "size" and val < 2):
                raise ModelFileError(f"{key} out of range: {val}", lineno, path)
            setattr(self, key, val)
        elif key == "increment" and len(toks) == 3:
            try:
                vec = tuple(int(x) for x in toks[1].split(","))
            except ValueError:
                raise ModelFileError(f"bad increment vector {toks[1]!r}", lineno, path) from None
            if not any(vec):
                raise ModelFileError("zero increment", lineno, path)
            self.increments.append((vec, _float(toks[2], lineno, path, "rate")))
        elif toks == ["absorbing", "zero"]:
            self.absorbing_zero = True
        elif toks == ["reflecting", "top"]:
            self.reflecting_top = True
        elif toks == ["targets", "zero"]:
            self.targets_zero = True
        elif toks == ["alpha", "interior"]:
            self.alpha_interior = True
        else:
            raise ModelFileError(f"unknown lattice directive {' '.join(toks)!r}", lineno, path)

    def expand(self, path):
        if self.size is None or self.dims is None:
            raise ModelFileError("lattice needs size and dims", None, path)
        for vec, _ in self.increments:
            if len(vec) != self.dims:
                raise ModelFileError(f"increment {vec} does not have {self.dims} coordinates", None, path)
        top = self.size - 1
        points = list(itertools.product(range(self.size), repeat=self.dims))
        labels = ["_".join(str(c) for c in z) for z in points]
        index = {z: i for i, z in enumerate(points)}
        q = np.zeros((len(points), len(points)))
        for z in points:
            for vec, rate in self.increments:
                if rate == 0:
                    continue
                ok = True
                for k, v in enumerate(vec):
                    if v == 0:
                        continue
                    if self.absorbing_zero and z[k] == 0:
                        ok = False
                    if self.reflecting_top and v > 0 and z[k] == top:
                        ok = False
                    if not 0 <= z[k] + v <= top:
                        ok = False
                if ok:
                    q[index[z], index[tuple(a + b for a, b in zip(z, vec))]] += rate
        targets = {}
        if self.targets_zero:
            for k in range(self.dims):
                targets[k + 1] = [labels[i] for i, z in enumerate(points) if z[k] == 0]
        alpha = None
        if self.alpha_interior:
            inner = [i for i, z in enumerate(points) if min(z) > 0]
            alpha = {labels[i]: 1.0 for i in inner}
        return labels, q, targets, alpha


def parse_model(text: str, path=None, check: bool = True) -> IntensityModel:
    """Parse model-file text; errors carry the offending line number."""
    section = None
    labels: list[str] = []
    label_line: dict[str, int] = {}
    rates: list[tuple[str, str, float, int]] = []
    targets: dict[int, tuple[list[str], int]] = {}
    alpha: dict[str, tuple[float, int]] = {}
    lattice = None
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = _strip(raw)
        if not line:
            continue
        m = re.fullmatch(r"\[(\w+)\]", line)
        if m:
            section = m.group(1).lower()
            if section not in SECTIONS:
                raise ModelFileError(f"unknown section [{section}]", lineno, path)
            if section in seen:
                raise ModelFileError(f"section [{section}] repeated", lineno, path)
            seen.add(section)
            if section == "lattice":
                lattice = _Lattice()
            continue
        if section is None:
            raise ModelFileError("content before the first section", lineno, path)
        toks = line.replace(",", " ").split() if section == "states" else line.split()
        if section == "states":
            for lab in toks:
                if not _LABEL_RE.match(lab):
                    raise ModelFileError(f"invalid state label {lab!r}", lineno, path)
                if lab in label_line:
                    raise ModelFileError(
                        f"duplicate state label {lab!r} (first on line {label_line[lab]})", lineno, path)
                label_line[lab] = lineno
                labels.append(lab)
        elif section == "rates":
            if len(toks) != 3:
                raise ModelFileError("rate lines are 'from to rate'", lineno, path)
            rates.append((toks[0], toks[1], _float(toks[2], lineno, path, "rate"), lineno))
        elif section == "targets":
            m = re.fullmatch(r"(-?\d+)\s*:\s*(.*)", line)
            if not m:
                raise ModelFileError("target lines are 'k: label label ...'", lineno, path)
            k = int(m.group(1))
            if k in targets:
                raise ModelFileError(f"target {k} defined twice", lineno, path)
            members = m.group(2).replace(",", " ").split()
            if not members:
                raise ModelFileError(f"target {k} is empty", lineno, path)
            targets[k] = (members, lineno)
        elif section == "alpha":
            if len(toks) != 2:
                raise ModelFileError("alpha lines are 'label weight'", lineno, path)
            if toks[0] in alpha:
                raise ModelFileError(f"alpha weight for {toks[0]!r} given twice", lineno, path)
            alpha[toks[0]] = (_float(toks[1], lineno, path, "weight"), lineno)
        else:
            lattice.feed(toks, lineno, path)

    if lattice is not None:
        if "states" in seen or "rates" in seen:
            raise ModelFileError("[lattice] cannot be combined with [states] or [rates]", None, path)
        labels, q, gen_targets, gen_alpha = lattice.expand(path)
        index = {lab: i for i, lab in enumerate(labels)}
        if not targets:
            targets = {k: (v, None) for k, v in gen_targets.items()}
        if not alpha and gen_alpha is not None:
            alpha = {lab: (w, None) for lab, w in gen_alpha.items()}
    else:
        if not labels:
            raise ModelFileError("no [states] section", None, path)
        index = {lab: i for i, lab in enumerate(labels)}
        q = np.zeros((len(labels), len(labels)))
        seen_pairs: dict[tuple[str, str], int] = {}
        for a, b, r, lineno in rates:
            for lab in (a, b):
                if lab not in index:
                    raise ModelFileError(f"unknown state {lab!r}", lineno, path)
            if a == b:
                raise ModelFileError(f"self-transition on {a!r}", lineno, path)
            if (a, b) in seen_pairs:
                raise ModelFileError(
                    f"rate {a} -> {b} repeated (first on line {seen_pairs[(a, b)]})", lineno, path)
            seen_pairs[(a, b)] = lineno
            q[index[a], index[b]] = r

    np.fill_diagonal(q, -q.sum(axis=1))
    tg = {}
    for k, (members, lineno) in targets.items():
        idx = []
        for lab in members:
            if lab not in index:
                raise ModelFileError(f"unknown state {lab!r} in target {k}", lineno, path)
            idx.append(index[lab])
        tg[k] = sorted(set(idx))
    if not alpha:
        raise ModelFileError("no initial distribution ([alpha] section)", None, path)
    a = np.zeros(len(labels))
    for lab, (w, lineno) in alpha.items():
        if lab not in index:
            raise ModelFileError(f"unknown state {lab!r} in alpha", lineno, path)
        a[index[lab]] = w
    total = a.sum()
    if not total > 0:
        raise ModelFileError("alpha weights sum to zero", None, path)
    if abs(total - 1.0) > 1e-12:
        a = a / total
    try:
        return IntensityModel(q, tg, a, labels, check=check)
    except (InvalidModelError, ModelMismatchError) as exc:
        raise ModelFileError(str(exc), None, path) from exc


def bundled_models() -> list[str]:
    root = resources.files("phasehit") / "data"
    return sorted(p.name[:-len(".model")] for p in root.iterdir() if p.name.endswith(".model"))


def load_model(path, check: bool = True) -> IntensityModel:
    """Load a model file, or a bundled model by name (e.g. ``"example_s5"``)."""
    p = Path(path)
    if p.is_file():
        return parse_model(p.read_text(encoding="utf-8"), str(p), check)
    name = str(path)
    if name.endswith(".model"):
        name = name[:-len(".model")]
    res = resources.files("phasehit") / "data" / f"{name}.model"
    if res.is_file():
        return parse_model(res.read_text(encoding="utf-8"), f"{name}.model", check)
    raise ModelFileError(f"no such model file or bundled model: {path}", None, None)


def dump_model(model: IntensityModel) -> str:
    """Explicit-form text of ``model``; reloading reproduces it bit for bit."""
    labs = model.space.labels
    for lab in labs:
        if not _LABEL_RE.match(lab):
            raise ModelFileError(f"label {lab!r} cannot be written to a model file")
    out = ["[states]"]
    for i in range(0, len(labs), 9):
        out.append(" ".join(labs[i:i + 9]))
    out.append("")
    out.append("[rates]")
    q = model.intensity
    for i, j in zip(*np.nonzero(q)):
        if i != j:
            out.append(f"{labs[i]} {labs[j]} {float(q[i, j])!r}")
    out.append("")
    out.append("[targets]")
    for k, g in model.targets.items():
        out.append(f"{k}: " + " ".join(labs[i] for i in g))
    out.append("")
    out.append("[alpha]")
    for i in np.flatnonzero(model.alpha):
        out.append(f"{labs[i]} {float(model.alpha[i])!r}")
    return "\n".join(out) + "\n"
