"""Run configuration: JSON ingestion, validation, defaults.

The document has five sections: ``domain``, ``physics``, ``pressure``,
``initial`` and ``numerics``, plus an optional ``study`` section for the
convergence ladder. Unknown keys are rejected by name; omitted optional
keys take the documented defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import pressure
from .errors import ValidationError
from .grid import Grid1D
from .hydro import Params
from .lab import OscillationSpec, bounded_observable

_DEFAULT_OBSERVABLES = ("xi", "peff", "bounded")


@dataclass
class RunConfig:
    """Validated, fully-defaulted configuration for one run or study."""

    grid: Grid1D
    params: Params
    law: pressure.PressureLaw
    oscillation: OscillationSpec
    u0_spec: dict
    c0_spec: dict
    output_times: list
    window_h: float
    n_ladder: list
    observables: tuple
    echo: dict = field(default_factory=dict)


def _require_table(doc, key, where="config"):
    block = doc.get(key)
    if block is None:
        raise ValidationError(f"{where}.{key} section is missing")
    if not isinstance(block, dict):
        raise ValidationError(f"{where}.{key} must be an object")
    return block


def _reject_unknown(block, known, where):
    unknown = sorted(set(block) - set(known))
    if unknown:
        raise ValidationError(f"{where} has unknown key {unknown[0]!r}")


def _positive(block, key, where, default=None):
    v = block.get(key, default)
    if v is None:
        raise ValidationError(f"{where}.{key} is missing")
    v = float(v)
    if not v > 0.0:
        raise ValidationError(f"{where}.{key} must be positive")
    return v


def parse_config(path):
    """Read and validate a JSON run configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config parse error at line {exc.lineno}: {exc.msg}")
    return build_config(doc)


def build_config(doc):
    if not isinstance(doc, dict):
        raise ValidationError("config root must be an object")
    _reject_unknown(doc, ("domain", "physics", "pressure", "initial", "numerics", "study"), "config")

    dom = _require_table(doc, "domain")
    _reject_unknown(dom, ("length", "n_cells"), "domain")
    length = _positive(dom, "length", "domain", default=1.0)
    n_cells = int(dom.get("n_cells", 512))
    if n_cells < 4:
        raise ValidationError("domain.n_cells must be at least 4")
    grid = Grid1D(n_cells, length)

    phys = _require_table(doc, "physics")
    _reject_unknown(phys, ("mu", "lambda", "kappa", "alpha", "beta"), "physics")
    phys_vals = {
        "mu": _positive(phys, "mu", "physics"),
        "lambda_": _positive(phys, "lambda", "physics"),
        "kappa": _positive(phys, "kappa", "physics"),
        "alpha": _positive(phys, "alpha", "physics"),
        "beta": _positive(phys, "beta", "physics"),
    }

    num = doc.get("numerics", {})
    if not isinstance(num, dict):
        raise ValidationError("config.numerics must be an object")
    _reject_unknown(
        num,
        (
            "cfl",
            "dt_max",
            "t_end",
            "output_times",
            "n_outputs",
            "max_atoms",
            "merge_eps",
            "renorm_tol",
            "window_h",
        ),
        "numerics",
    )
    t_end = float(num.get("t_end", 0.25))
    if t_end < 0.0:
        raise ValidationError("numerics.t_end must be non-negative")
    max_atoms = num.get("max_atoms", 64)
    if max_atoms is not None:
        max_atoms = int(max_atoms)
        if max_atoms < 0:
            raise ValidationError("numerics.max_atoms must be non-negative")
    params = Params(
        **phys_vals,
        cfl=float(num.get("cfl", 0.4)),
        dt_max=_positive(num, "dt_max", "numerics", default=1e-3),
        t_end=t_end,
        renorm_tol=float(num.get("renorm_tol", 1e-6)),
        atom_merge_eps=None if num.get("merge_eps") is None else float(num["merge_eps"]),
        max_atoms=max_atoms,
    )

    law = pressure.law_from_config(
        _require_table(doc, "pressure"), default_alpha=phys_vals["alpha"]
    )
    if abs(law.alpha - phys_vals["alpha"]) > 1e-12 * max(1.0, phys_vals["alpha"]):
        raise ValidationError(
            "pressure.alpha must equal physics.alpha (one coupling coefficient in the model)"
        )

    init = _require_table(doc, "initial")
    _reject_unknown(init, ("oscillation", "u0", "c0"), "initial")
    osc_block = _require_table(init, "oscillation", "initial")
    _reject_unknown(
        osc_block,
        ("n_interfaces", "r_vap", "r_liq", "theta", "profile", "smoothing_width"),
        "initial.oscillation",
    )
    profile = osc_block.get("profile", "blocks")
    if profile not in ("blocks", "smoothed"):
        raise ValidationError("initial.oscillation.profile must be 'blocks' or 'smoothed'")
    osc = OscillationSpec(
        n_interfaces=int(osc_block.get("n_interfaces", 1)),
        r_vap=_positive(osc_block, "r_vap", "initial.oscillation"),
        r_liq=_positive(osc_block, "r_liq", "initial.oscillation"),
        theta=float(osc_block.get("theta", 0.5)),
        profile=profile,
        smoothing_width=float(osc_block.get("smoothing_width", 0.0)),
    )
    if 2 * osc.n_interfaces > grid.n_cells:
        raise ValidationError(
            "initial.oscillation.n_interfaces too large: the block generator "
            "requires 2 * n_interfaces <= n_cells"
        )

    u0_spec = init.get("u0", {"kind": "zero"})
    _reject_unknown(u0_spec, ("kind", "amplitude", "mode"), "initial.u0")
    if u0_spec.get("kind", "zero") not in ("zero", "sine"):
        raise ValidationError("initial.u0.kind must be 'zero' or 'sine'")
    c0_spec = init.get("c0", {"kind": "mean-density"})
    _reject_unknown(c0_spec, ("kind", "value"), "initial.c0")
    if c0_spec.get("kind", "mean-density") not in ("mean-density", "match-density", "uniform"):
        raise ValidationError(
            "initial.c0.kind must be 'mean-density', 'match-density' or 'uniform'"
        )

    out_times = num.get("output_times")
    if out_times is None:
        n_out = int(num.get("n_outputs", 8))
        if n_out < 1:
            raise ValidationError("numerics.n_outputs must be at least 1")
        out_times = list(np.linspace(0.0, t_end, n_out + 1)[1:]) if t_end > 0 else [0.0]
    else:
        out_times = [float(t) for t in out_times]
        if any(t < 0.0 for t in out_times):
            raise ValidationError("numerics.output_times must be non-negative")
        if sorted(out_times) != out_times:
            raise ValidationError("numerics.output_times must be increasing")

    window_h = num.get("window_h")
    window_h = grid.length / 16.0 if window_h is None else float(window_h)
    if window_h < grid.dx:
        raise ValidationError("numerics.window_h must be at least one cell wide")

    study = doc.get("study", {})
    if not isinstance(study, dict):
        raise ValidationError("config.study must be an object")
    _reject_unknown(study, ("n_ladder", "observables"), "study")
    n_ladder = [int(n) for n in study.get("n_ladder", [4, 8, 16, 32])]
    for n in n_ladder:
        if n < 1:
            raise ValidationError("study.n_ladder entries must be positive")
        if 2 * n > grid.n_cells:
            raise ValidationError(
                f"study.n_ladder entry {n} exceeds n_cells/2: the oscillating "
                "initial-data generator requires 2 * n_interfaces <= n_cells"
            )
    observables = tuple(study.get("observables", _DEFAULT_OBSERVABLES))
    for name in observables:
        if name not in _DEFAULT_OBSERVABLES:
            raise ValidationError(f"study.observables entry {name!r} unknown")

    return RunConfig(
        grid=grid,
        params=params,
        law=law,
        oscillation=osc,
        u0_spec={"kind": u0_spec.get("kind", "zero"), **{k: v for k, v in u0_spec.items() if k != "kind"}},
        c0_spec={"kind": c0_spec.get("kind", "mean-density"), **{k: v for k, v in c0_spec.items() if k != "kind"}},
        output_times=out_times,
        window_h=window_h,
        n_ladder=n_ladder,
        observables=observables,
        echo=doc,
    )


def build_u0(cfg):
    spec = cfg.u0_spec
    u = np.zeros(cfg.grid.n_cells + 1)
    if spec["kind"] == "sine":
        amp = float(spec.get("amplitude", 0.01))
        mode = int(spec.get("mode", 1))
        x = cfg.grid.faces()
        u = amp * np.sin(np.pi * mode * x / cfg.grid.length)
        u[0] = 0.0
        u[-1] = 0.0
    return u


def build_c0(cfg, rho0):
    spec = cfg.c0_spec
    kind = spec["kind"]
    if kind == "match-density":
        return rho0.copy()
    if kind == "uniform":
        return np.full(cfg.grid.n_cells, float(spec.get("value", 1.0)))
    # mean-density
    return np.full(cfg.grid.n_cells, float(np.mean(rho0)))
