"""Command line entry point: ``berezin-lab run|emit|list``.

Configs are TOML or JSON (chosen by extension) and parsed strictly: any
unknown key is an error. Exit codes: 0 success, 2 invalid input, 3 size
cap exceeded, 4 selection stage failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError

from . import __version__
from .analysis import compactness_proxy, l1_symbol_bound, strip_counterexample, uncertainty_constant
from .berezin import (admissibility_constant, b1w_integral, holder_modulus, kernel_decay_profile,
                      moment_check, normalize_admissible, schur_condition, thinness_report)
from .errors import BerezinLabError, InvalidArgument, ResourceError, StageFailure
from .frames import (WINDOWS, Lattice, frame_operator_residual, load_window_csv, make_affine_wavelet,
                     make_finite_gabor, make_plane_gabor, matched_plane_lattice, window)
from .operators import assemble_toeplitz, spectrum
from .phase_space import AFFINE, FINITE, PLANE, Geometry, GroupElement, grid_from_spec
from .serialize import atomic_write, config_hash, dumps, schedule_csv
from .symbols import SetSpec, indicator, sup_translates_select

EXIT_OK, EXIT_INPUT, EXIT_RESOURCE, EXIT_STAGE = 0, 2, 3, 4


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GeometryConfig(_Strict):
    kind: Literal["finite_gabor", "plane", "affine"]
    N: Optional[int] = None
    t_half: Optional[float] = None
    w_half: Optional[float] = None
    dt: Optional[float] = None
    dw: Optional[float] = None
    a_min: Optional[float] = None
    a_max: Optional[float] = None
    n_scales: Optional[int] = None
    b_half: Optional[float] = None
    n_shifts: Optional[int] = None

    def grid_spec(self):
        d = self.model_dump(exclude_none=True)
        d["geometry"] = d.pop("kind")
        return d


class WindowConfig(_Strict):
    name: Optional[str] = None
    csv: Optional[str] = None
    half_width: float = 16.0
    step: float = 1.0 / 32
    matched: bool = True
    margin: float = 2.0
    admissible: bool = True


class SetConfig(_Strict):
    kind: Literal["balls", "strip", "band", "predicate", "empty", "all"]
    centers: Optional[list[list[float]]] = None
    radii: Optional[list[float]] = None
    axis: Optional[int] = None
    half_width: Optional[float] = None
    center: Optional[float] = None
    lo: Optional[float] = None
    hi: Optional[float] = None
    expr: Optional[str] = None


class Thresholds(_Strict):
    parseval_tol: float = 1e-8
    thinness: float = 0.05
    eps: float = 0.1
    kernel_decay: float = 1e-3


class ExperimentConfig(_Strict):
    operation: str
    geometry: Optional[GeometryConfig] = None
    window: Optional[WindowConfig] = None
    set: Optional[SetConfig] = None
    params: dict = {}
    output_dir: str = "berezin-lab-out"
    seed: int = 0
    thresholds: Thresholds = Thresholds()


# -- per-operation parameter models ----------------------------------------------------

class ParsevalParams(_Strict):
    trials: int = 8


class SpectrumParams(_Strict):
    k: Optional[int] = None


class TrialsParams(_Strict):
    trials: int = 100


class ThinnessParams(_Strict):
    R_list: list[float] = [1.0]
    n_radii: int = 8
    boundary_margin: Optional[float] = None


class CompactnessParams(_Strict):
    extents: list[float] = [4.0, 8.0, 16.0]
    delta: float = 0.25
    margin: float = 2.0
    trials: int = 100


class B1wParams(_Strict):
    schedule: list[float] = [4.0, 16.0, 64.0, 256.0, 1024.0]
    epsilon: float = 0.5
    per_octave: int = 8


class NoParams(_Strict):
    pass


class HolderParams(_Strict):
    alpha: float = 1.0
    h_list: list[float] = [0.0625, 0.125, 0.25]


class MomentParams(_Strict):
    alpha: float = 1.0


class SelectParams(_Strict):
    candidates: list[list[float]]
    K: int = 6
    enforce_ball: bool = True
    probe_stride: int = 4


class StripParams(_Strict):
    phi_halfwidth: float = 0.5
    f_halfwidth: float = 0.5
    offset: float = 0.0


class KernelParams(_Strict):
    n_bins: int = 10


class SchurParams(_Strict):
    R: float = 0.0


OPERATIONS = {
    "admissibility_constant": (NoParams, "Calderon constant of the wavelet in both directions"),
    "b1w_integral": (B1wParams, "truncated weighted integral of |W_psi psi| over a growing scale range"),
    "compactness_proxy": (CompactnessParams, "eps-rank of T_{1_E} across growing plane grids"),
    "holder_modulus": (HolderParams, "L1 modulus of continuity constant of the window"),
    "kernel_decay_profile": (KernelParams, "binned |<k_x, k_e>| against distance"),
    "l1_symbol_bound": (TrialsParams, "uncertainty constant with the L1 bound on lambda_max"),
    "moment_check": (MomentParams, "mean and |x|^alpha moment of the window"),
    "parseval_check": (ParsevalParams, "max ||S f - f|| over random unit f"),
    "schur_condition": (SchurParams, "Schur sums of |<k_x, k_y>| and their tails"),
    "spectrum": (SpectrumParams, "eigenvalues of T_sigma"),
    "strip_counterexample": (StripParams, "box-window STFT vanishing outside a strip"),
    "sup_translates_select": (SelectParams, "running max of translates with per-stage Berezin bounds"),
    "thinness_report": (ThinnessParams, "Berezin and ball-integral envelopes far from the origin"),
    "uncertainty_constant": (TrialsParams, "c = lambda_min(S) - lambda_max(T_sigma)"),
}
SCHEDULE_OPS = ("b1w_integral", "compactness_proxy", "thinness_report")


def load_config(path):
    ext = os.path.splitext(path)[1].lower()
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise InvalidArgument(f"cannot read config {path}: {exc}") from None
    if ext == ".toml":
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        try:
            data = tomllib.loads(raw.decode())
        except tomllib.TOMLDecodeError as exc:
            raise InvalidArgument(f"{path}: {exc}") from None
    elif ext == ".json":
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"{path}: {exc}") from None
    else:
        raise InvalidArgument(f"config must be .toml or .json, got {ext or 'no extension'}")
    try:
        cfg = ExperimentConfig.model_validate(data)
        if cfg.operation not in OPERATIONS:
            raise InvalidArgument(f"unknown operation {cfg.operation!r}; see `berezin-lab list`")
        params = OPERATIONS[cfg.operation][0].model_validate(cfg.params)
    except ValidationError as exc:
        raise InvalidArgument(_describe(exc)) from None
    return cfg, params


def _describe(exc):
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"])
        if err["type"] == "extra_forbidden":
            parts.append(f"unknown field {loc!r}")
        else:
            parts.append(f"{loc}: {err['msg']}")
    return "invalid config: " + "; ".join(parts)


# -- building blocks from config --------------------------------------------------------

def _grid(cfg):
    if cfg.geometry is None:
        raise InvalidArgument(f"{cfg.operation} needs a [geometry] section")
    return grid_from_spec(cfg.geometry.grid_spec())


def _lattice(cfg, grid):
    w = cfg.window or WindowConfig()
    kind = grid.geometry.kind if grid is not None else AFFINE
    if kind == FINITE:
        return Lattice.finite(grid.geometry.N)
    if kind == PLANE and w.matched:
        return matched_plane_lattice(grid, w.margin)
    return Lattice.real(w.half_width, w.step)


def _window(cfg, lattice):
    w = cfg.window
    if w is None or (w.name is None) == (w.csv is None):
        raise InvalidArgument("[window] needs exactly one of 'name' or 'csv'")
    if w.csv is not None:
        return load_window_csv(w.csv, lattice)
    return window(w.name, lattice)


def _family(cfg, grid):
    phi = _window(cfg, _lattice(cfg, grid))
    kind = grid.geometry.kind
    if kind == FINITE:
        return make_finite_gabor(phi)
    if kind == PLANE:
        return make_plane_gabor(phi, grid)
    if cfg.window.admissible:
        phi = normalize_admissible(phi)
    return make_affine_wavelet(phi, grid)


def _set_spec(cfg, geometry):
    if cfg.set is None:
        raise InvalidArgument(f"{cfg.operation} needs a [set] section")
    d = cfg.set.model_dump(exclude_none=True)
    return SetSpec.from_dict(d, geometry)


def _symbol(cfg, grid):
    return indicator(grid, _set_spec(cfg, grid.geometry))


def _element(geometry, coords):
    if geometry.kind == AFFINE:
        return GroupElement(geometry, tuple(coords))
    if len(coords) == 2:
        return geometry.element(*coords)
    if len(coords) == 4:
        return GroupElement(geometry, (coords[0], coords[1], complex(coords[2], coords[3])))
    raise InvalidArgument("Heisenberg candidates are [p, q] or [p, q, Re z, Im z]")


def _wavelet(cfg):
    return _window(cfg, _lattice(cfg, None))


# -- operations ---------------------------------------------------------------------------

def execute(cfg, params):
    """Run the configured operation; returns (result dict, schedules)."""
    op = cfg.operation
    th = cfg.thresholds
    schedules = {}
    if op == "parseval_check":
        grid = _grid(cfg)
        F = _family(cfg, grid)
        res = {"residual": frame_operator_residual(F, grid, params.trials, cfg.seed), "trials": params.trials,
               "lattice": F.lattice.to_dict(), "pre_normalization_norm": F.pre_norm}
    elif op == "spectrum":
        grid = _grid(cfg)
        F = _family(cfg, grid)
        res = spectrum(assemble_toeplitz(_symbol(cfg, grid), F, grid), params.k, cfg.seed).to_dict()
        res["eps_rank"] = int(np.sum(np.asarray(res["eigenvalues"]) > th.eps))
    elif op in ("uncertainty_constant", "l1_symbol_bound"):
        grid = _grid(cfg)
        F = _family(cfg, grid)
        fn = uncertainty_constant if op == "uncertainty_constant" else l1_symbol_bound
        kw = {"parseval_tol": th.parseval_tol} if fn is uncertainty_constant else {}
        res = fn(_symbol(cfg, grid), F, grid, params.trials, cfg.seed, **kw).to_dict()
    elif op == "thinness_report":
        grid = _grid(cfg)
        F = _family(cfg, grid)
        rep = thinness_report(_symbol(cfg, grid), F, grid, params.R_list, th.thinness, params.n_radii,
                              params.boundary_margin)
        res = rep.to_dict()
        schedules["envelope"] = rep.schedule
        radii = rep.parameters
        for R, env in rep.details.get("ball_envelopes", {}).items():
            schedules[f"ball_R{R}"] = list(zip(radii, env))
    elif op == "compactness_proxy":
        if cfg.geometry is not None and cfg.geometry.kind != PLANE:
            raise InvalidArgument("compactness_proxy runs on the plane geometry")
        if cfg.window is None or cfg.window.name is None:
            raise InvalidArgument("compactness_proxy needs a built-in window name")
        spec = _set_spec(cfg, Geometry.plane())
        rep = compactness_proxy(spec, cfg.window.name, params.extents, th.eps, params.delta, params.margin,
                                params.trials, cfg.seed)
        res = rep.to_dict()
        ext = rep.parameters
        schedules["eps_rank"] = rep.schedule
        schedules["lambda_max"] = list(zip(ext, rep.details["lambda_max"]))
        schedules["c_estimate"] = list(zip(ext, rep.details["c_estimate"]))
    elif op == "b1w_integral":
        rep = b1w_integral(_wavelet(cfg), params.schedule, params.epsilon, params.per_octave)
        res = rep.to_dict()
        schedules["b1w"] = rep.schedule
    elif op == "admissibility_constant":
        psi = _wavelet(cfg)
        res = {"plus": admissibility_constant(psi, 1), "minus": admissibility_constant(psi, -1)}
    elif op == "holder_modulus":
        res = {"C": holder_modulus(_wavelet(cfg), params.alpha, params.h_list), "alpha": params.alpha,
               "h_list": params.h_list}
    elif op == "moment_check":
        mean, mom = moment_check(_wavelet(cfg), params.alpha)
        res = {"mean": mean, "moment": mom, "alpha": params.alpha}
    elif op == "sup_translates_select":
        grid = _grid(cfg)
        F = _family(cfg, grid)
        cands = [_element(grid.geometry, c) for c in params.candidates]
        idx, rho, cert = sup_translates_select(_symbol(cfg, grid), F, grid, cands,
                                               grid.points[::params.probe_stride], params.K, params.enforce_ball)
        res = {"selected": idx, "rho_l1": rho.l1_norm(), "certificate": cert.to_dict()}
    elif op == "strip_counterexample":
        grid = _grid(cfg)
        ce = strip_counterexample(params.phi_halfwidth, params.f_halfwidth, grid, params.offset)
        res = {"max_outside": ce.max_outside, "strip_halfwidth": ce.strip_halfwidth}
    elif op == "kernel_decay_profile":
        grid = _grid(cfg)
        rep = kernel_decay_profile(_family(cfg, grid), grid, n_bins=params.n_bins, threshold=th.kernel_decay)
        res = rep.to_dict()
    elif op == "schur_condition":
        grid = _grid(cfg)
        est = schur_condition(_family(cfg, grid), grid, None, params.R)
        res = {"M_estimate": est.M_estimate, "tail_sup": est.tail_sup, "M_min": est.M_min}
    else:  # pragma: no cover - guarded in load_config
        raise InvalidArgument(f"unknown operation {op!r}")
    return res, schedules


def _canonical(cfg, params):
    """Config with defaults filled in, minus the output location."""
    return {"config": cfg.model_dump(mode="json", exclude_none=True, exclude={"output_dir"}),
            "params": params.model_dump(mode="json")}


def _provenance(cfg, params, digest):
    return {"version": __version__, "config_hash": digest, **_canonical(cfg, params)}


def _run(path, emit=False):
    cfg, params = load_config(path)
    if emit and cfg.operation not in SCHEDULE_OPS:
        raise InvalidArgument(f"{cfg.operation} is not a schedule-valued operation; choose from {SCHEDULE_OPS}")
    if emit:
        sched_param = {"compactness_proxy": "extents", "b1w_integral": "schedule", "thinness_report": "R_list"}
        if not getattr(params, sched_param[cfg.operation]):
            raise InvalidArgument("empty schedule")
    digest = config_hash(_canonical(cfg, params))
    result, schedules = execute(cfg, params)
    out = cfg.output_dir
    stem = f"{cfg.operation}-{digest}"
    doc = {"provenance": _provenance(cfg, params, digest), "result": result}
    written = []
    p = os.path.join(out, stem + ".json")
    atomic_write(p, dumps(doc) + "\n")
    written.append(p)
    if emit:
        for name, rows in sorted(schedules.items()):
            p = os.path.join(out, f"{stem}-{name}.csv")
            atomic_write(p, schedule_csv(rows))
            written.append(p)
    else:
        p = os.path.join(out, stem + ".csv")
        atomic_write(p, _summary_csv(result))
        written.append(p)
    return written


def _summary_csv(result):
    """Scalar fields of a result as (key, value) rows."""
    lines = ["key,value"]
    for k in sorted(result):
        v = result[k]
        if isinstance(v, bool) or isinstance(v, str):
            lines.append(f"{k},{v}")
        elif isinstance(v, (int, float, np.integer, np.floating)):
            lines.append(f"{k},{dumps(v)}")
    return "\n".join(lines) + "\n"


def list_builtins():
    lines = ["windows:"]
    for name in sorted(WINDOWS):
        lines.append(f"  {name:<24}{WINDOWS[name][1]}")
    lines.append("geometries:")
    for name, desc in ((AFFINE, "half plane (a, b), a > 0, Haar measure da db / a"),
                       (FINITE, "Z_N x Z_N with weights 1/N"),
                       (PLANE, "time-frequency plane (w, t)")):
        lines.append(f"  {name:<24}{desc}")
    lines.append("operations:")
    for name in sorted(OPERATIONS):
        tag = " [schedule]" if name in SCHEDULE_OPS else ""
        lines.append(f"  {name:<24}{OPERATIONS[name][1]}{tag}")
    return "\n".join(lines) + "\n"


def _limit_threads():
    n = os.environ.get("BEREZIN_LAB_THREADS")
    if not n:
        return None
    try:
        k = int(n)
    except ValueError:
        raise InvalidArgument(f"BEREZIN_LAB_THREADS must be an integer, got {n!r}") from None
    if k < 1:
        raise InvalidArgument("BEREZIN_LAB_THREADS must be >= 1")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=k)


def main(argv=None):
    parser = argparse.ArgumentParser(prog="berezin-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("config")
    p_emit = sub.add_parser("emit", help="write one CSV per schedule plus a combined JSON")
    p_emit.add_argument("config")
    sub.add_parser("list", help="list built-in windows, geometries and operations")
    args = parser.parse_args(argv)

    if args.command == "list":
        sys.stdout.write(list_builtins())
        return EXIT_OK
    try:
        limiter = _limit_threads()
        try:
            written = _run(args.config, emit=args.command == "emit")
        finally:
            if limiter is not None:
                limiter.unregister()
    except StageFailure as exc:
        print(f"error: {exc} (stage {exc.stage}, best bound {exc.best_bound:.6g})", file=sys.stderr)
        return EXIT_STAGE
    except ResourceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (InvalidArgument, BerezinLabError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for p in written:
        print(p)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
