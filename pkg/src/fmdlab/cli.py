"""Command line driver: configured experiments with deterministic outputs.

One INI config describes a domain, a standalone field, an operator and
problem, level grids, norm requests, and scan parameters.  Subcommands run
individual stages or everything:

    fmdlab maximal --config exp.ini     maximal functions + level profiles
    fmdlab norms   --config exp.ini     norm table of the field and M_alpha
    fmdlab solve   --config exp.ini     PDE solve, solution field + gradient
    fmdlab verify  --config exp.ini     comparison checks and decay scans
    fmdlab run     --config exp.ini     all of the above, one manifest
    fmdlab report  --out DIR            merge stage JSONs, emit CSV + .dat

Every CSV is byte-identical across reruns with the same config and seed;
JSON files are key-sorted.  The manifest records the config hash, the seed,
stage timings and the produced files.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .distribution import LevelGrid, dist_fn, fmd, weak_bound_constant
from .exprs import compile_expr
from .funcspaces import (
    NormSpec,
    YoungFn,
    evaluate_norm,
    young_exp,
    young_plog,
    young_power,
)
from .grid import (
    ScalarField,
    field_from_function,
    gradient,
    make_domain,
    save_field,
    vector_field_from_function,
)
from .maximal import RadiusSet, frac_maximal
from .pde import OperatorSpec, ProblemSpec, solve
from .verify import (
    RangeRuleError,
    check_global_comparison,
    check_local_comparison,
    check_quasi_triangle,
    dyadic_radii,
    goodlambda_scan,
    make_dop_pair,
    make_p1_pair,
    norm_comparison_report,
    reverse_holder_sweep,
    sample_centers,
)

_DEFAULTS = {
    "run": {"seed": "1234", "threads": "0"},
    "domain": {"shape": "square", "nx": "48", "ny": "48", "h": "auto"},
    "field": {"expr": "exp(-8*((x-0.5)^2+(y-0.5)^2))"},
    "maximal": {"alphas": "0, 0.5", "radii": "auto"},
    "levels": {"count": "200", "lo_factor": "1e-4", "hi_factor": "10"},
    "spaces": {"norms": "lorentz:2:2"},
    "operator": {
        "p": "2.0", "varsigma": "0.0", "coeff": "1",
        "bform": "auto", "strict_range": "false",
    },
    "problem": {"kind": "dirichlet", "f_x": "0", "f_y": "0", "g": "0",
                "f1": "", "f2": ""},
    "scan": {
        "mode": "A", "eps": "0.1, 0.01", "alpha": "0.5", "gamma": "auto",
        "centers_interior": "12", "centers_boundary": "6", "weak_s": "1.5",
    },
    "output": {"dir": "out"},
}


def _jsonable(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {
            f.name: _jsonable(getattr(obj, f.name))
            for f in dataclasses.fields(obj)
        }
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and math.isinf(obj):
        return "inf" if obj > 0 else "-inf"
    if isinstance(obj, ScalarField):
        vals = obj.values[obj.grid.mask]
        return {"cells": int(vals.size), "min": float(vals.min()),
                "max": float(vals.max())}
    if callable(obj):
        return None
    return obj


def _write_json(path: Path, payload) -> Path:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_csv(path: Path, header: list[str], rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def _parse_young(token: str) -> YoungFn:
    token = token.strip()
    if token == "exp":
        return young_exp()
    for name, maker in (("power", young_power), ("plog", young_plog)):
        if token.startswith(name + "(") and token.endswith(")"):
            return maker(float(token[len(name) + 1 : -1]))
    raise ValueError(f"unknown Young function {token!r}")


def _parse_norm_spec(token: str) -> NormSpec:
    parts = [p.strip() for p in token.split(":")]
    kind = parts[0]
    if kind == "lorentz":
        if len(parts) != 3:
            raise ValueError(f"lorentz spec needs q and s: {token!r}")
        return NormSpec("lorentz", q=float(parts[1]),
                        s=math.inf if parts[2] == "inf" else float(parts[2]))
    if kind == "orlicz":
        if len(parts) != 2:
            raise ValueError(f"orlicz spec needs a Young function: {token!r}")
        return NormSpec("orlicz", phi=_parse_young(parts[1]))
    if kind in ("orlicz_lorentz", "orlicz-lorentz"):
        if len(parts) != 4:
            raise ValueError(f"orlicz_lorentz spec needs phi, q, s: {token!r}")
        return NormSpec(
            "orlicz_lorentz", phi=_parse_young(parts[1]), q=float(parts[2]),
            s=math.inf if parts[3] == "inf" else float(parts[3]),
        )
    raise ValueError(f"unknown norm space {kind!r}")


class ExperimentConfig:
    """Parsed INI config with typed accessors and a content hash."""

    def __init__(self, path: str | Path, seed: int | None = None,
                 out: str | Path | None = None):
        self.path = Path(path)
        raw = self.path.read_bytes()
        self.sha256 = hashlib.sha256(raw).hexdigest()
        cp = configparser.ConfigParser()
        cp.read_dict(_DEFAULTS)
        cp.read_string(raw.decode())
        self.cp = cp
        self.seed = seed if seed is not None else cp.getint("run", "seed")
        self.out_dir = Path(out) if out is not None else Path(cp.get("output", "dir"))

    def _floats(self, section: str, key: str) -> list[float]:
        return [float(tok) for tok in self.cp.get(section, key).split(",") if tok.strip()]

    def resolved(self) -> dict:
        return {s: dict(self.cp.items(s)) for s in self.cp.sections()}

    def grid(self):
        d = self.cp["domain"]
        nx, ny = int(d["nx"]), int(d["ny"])
        h = (1.0 / nx) if d["h"] == "auto" else float(d["h"])
        return make_domain(d["shape"], nx, ny, h)

    def field(self, grid) -> ScalarField:
        fn = compile_expr(self.cp.get("field", "expr"))
        return field_from_function(grid, fn)

    def radii(self, grid) -> RadiusSet | None:
        tok = self.cp.get("maximal", "radii")
        if tok.strip() == "auto":
            return None
        ks = [int(t) for t in tok.split(",") if t.strip()]
        return RadiusSet(tuple(ks), grid.h)

    def alphas(self) -> list[float]:
        return self._floats("maximal", "alphas")

    def levels_for(self, max_value: float) -> LevelGrid:
        L = self.cp["levels"]
        return LevelGrid.default(
            max_value, n=int(L["count"]),
            lo_factor=float(L["lo_factor"]), hi_factor=float(L["hi_factor"]),
        )

    def norm_specs(self) -> list[NormSpec]:
        toks = [t.strip() for t in self.cp.get("spaces", "norms").split(",")]
        return [_parse_norm_spec(t) for t in toks if t]

    def operator(self, grid) -> OperatorSpec:
        o = self.cp["operator"]
        coeff = field_from_function(grid, compile_expr(o["coeff"]))
        bform = o["bform"]
        if bform == "auto":
            bform = "dop" if self.cp.get("problem", "kind") == "double_obstacle" else "p1"
        return OperatorSpec.create(
            float(o["p"]), float(o["varsigma"]), coeff, bform=bform,
            strict_range=self.cp.getboolean("operator", "strict_range"),
        )

    def problem(self, grid, op) -> ProblemSpec:
        pr = self.cp["problem"]
        F = vector_field_from_function(
            grid, compile_expr(pr["f_x"]), compile_expr(pr["f_y"])
        )
        g = field_from_function(grid, compile_expr(pr["g"]))
        kind = pr["kind"]
        f1 = f2 = None
        if kind == "double_obstacle":
            if not pr["f1"] or not pr["f2"]:
                raise ValueError("double obstacle problem needs f1 and f2")
            f1 = field_from_function(grid, compile_expr(pr["f1"]))
            f2 = field_from_function(grid, compile_expr(pr["f2"]))
        return ProblemSpec(grid, op, kind, F, g, f1, f2)

    def scan_params(self) -> dict:
        s = self.cp["scan"]
        return {
            "mode": s["mode"],
            "eps": self._floats("scan", "eps"),
            "alpha": float(s["alpha"]),
            "gamma": None if s["gamma"] == "auto" else float(s["gamma"]),
            "n_interior": int(s["centers_interior"]),
            "n_boundary": int(s["centers_boundary"]),
            "weak_s": float(s["weak_s"]),
        }


class _Manifest:
    def __init__(self, cfg: ExperimentConfig, out_dir: Path):
        self.path = out_dir / "manifest.json"
        if self.path.exists():
            self.data = json.loads(self.path.read_text())
        else:
            self.data = {
                "config_sha256": cfg.sha256,
                "config": cfg.resolved(),
                "seed": cfg.seed,
                "version": __version__,
                "stages": {},
            }

    def record(self, stage: str, elapsed: float, outputs: list[Path]):
        self.data["stages"][stage] = {
            "elapsed_s": round(elapsed, 3),
            "outputs": sorted(str(p.name) for p in outputs),
        }
        _write_json(self.path, self.data)


def _profile_paths(out: Path, name: str) -> Path:
    return out / f"{name}.csv"


def stage_maximal(cfg: ExperimentConfig, out: Path) -> list[Path]:
    grid = cfg.grid()
    f = cfg.field(grid)
    radii = cfg.radii(grid)
    outputs = [save_field(f, out / "field")[0], (out / "field.json")]
    top = float(np.abs(f.values[grid.mask]).max(initial=0.0))
    if top > 0:
        levels = cfg.levels_for(top)
        outputs.append(dist_fn(f, levels).to_csv(_profile_paths(out, "profile_dist")))
    summary = {}
    for alpha in cfg.alphas():
        mres = frac_maximal(f, alpha, radii)
        tag = f"a{alpha:g}"
        c, j = save_field(mres.restricted(), out / f"maximal_{tag}")
        outputs += [c, j]
        mtop = float(mres.values[grid.mask].max(initial=0.0))
        if mtop > 0:
            levels = cfg.levels_for(mtop)
            prof = fmd(f, alpha, levels, radii=radii, maximal=mres)
            outputs.append(prof.to_csv(_profile_paths(out, f"profile_fmd_{tag}")))
        summary[tag] = {
            "max": mtop,
            "argmax_radius_max": float(mres.argmax_radius.max(initial=0.0)),
        }
    outputs.append(_write_json(out / "maximal.json", summary))
    return outputs


def stage_norms(cfg: ExperimentConfig, out: Path) -> list[Path]:
    grid = cfg.grid()
    f = cfg.field(grid)
    radii = cfg.radii(grid)
    specs = cfg.norm_specs()
    rows = []
    for spec in specs:
        rows.append(("field", spec.label, float(evaluate_norm(f, spec))))
    for alpha in cfg.alphas():
        mf = frac_maximal(f, alpha, radii).restricted()
        for spec in specs:
            rows.append((f"maximal a={alpha:g}", spec.label,
                         float(evaluate_norm(mf, spec))))
    path = _write_csv(out / "norms.csv", ["target", "space", "value"], rows)
    jpath = _write_json(
        out / "norms.json",
        [{"target": t, "space": s, "value": v} for t, s, v in rows],
    )
    return [path, jpath]


def stage_solve(cfg: ExperimentConfig, out: Path) -> list[Path]:
    grid = cfg.grid()
    op = cfg.operator(grid)
    prob = cfg.problem(grid, op)
    rep = solve(prob)
    grad = gradient(rep.u)
    c, j = save_field(rep.u, out / "solution", vector=grad)
    payload = {
        "converged": rep.converged,
        "iterations": rep.iterations,
        "residual": rep.residual,
        "relative_residual": rep.relative_residual,
        "energy": rep.energy,
        "stages": [{"delta": d, "iterations": k} for d, k in rep.stages],
        "message": rep.message,
        "kind": prob.kind,
        "p": op.p,
        "varsigma": op.varsigma,
        "lambda": op.lam,
    }
    jpath = _write_json(out / "solve.json", payload)
    return [c, j, jpath]


def stage_verify(cfg: ExperimentConfig, out: Path) -> list[Path]:
    grid = cfg.grid()
    op = cfg.operator(grid)
    prob = cfg.problem(grid, op)
    rep = solve(prob)
    pair = make_dop_pair(prob, rep) if prob.kind == "double_obstacle" else make_p1_pair(prob, rep)
    sp = cfg.scan_params()
    alpha = sp["alpha"]
    radii = cfg.radii(grid)
    centers = sample_centers(grid, sp["n_interior"], sp["n_boundary"], cfg.seed)
    rads = dyadic_radii(grid)
    outputs: list[Path] = []
    payload: dict = {"kind": prob.kind, "alpha": alpha, "mode": sp["mode"]}

    # self-improving integrability of the reference solutions, and gamma
    gammas = [1.05, 1.1, 1.2, 1.3, 1.5] if sp["gamma"] is None else [sp["gamma"]]
    rh_centers = centers[: max(4, len(centers) // 4)]
    rh_source = lambda c, r: pair.builder(c, r, "A2_1").phi  # noqa: E731
    best_gamma, rh_sups = reverse_holder_sweep(rh_source, gammas, rh_centers, rads[:3])
    gamma = best_gamma if best_gamma is not None else 1.0
    payload["reverse_holder"] = {"sups": {f"{g:g}": v for g, v in rh_sups.items()},
                                 "gamma": gamma}

    # quasi-triangle sanity of the triplet at the first sampled ball
    c0, r0 = centers[0], rads[min(1, len(rads) - 1)]
    built = pair.builder(c0, r0, "A2_1")
    from .grid import ball_cells

    qt = check_quasi_triangle(pair.G, built.phi, built.psi, pair.c_tilde,
                              region=ball_cells(grid, c0, 2 * r0))
    payload["quasi_triangle"] = _jsonable(qt)

    glob = check_global_comparison(pair)
    payload["global_comparison"] = _jsonable(glob)

    lc_mode = "A2_1" if sp["mode"] == "A" else "A2_2"
    lc = check_local_comparison(pair, lc_mode, sp["eps"], centers, rads)
    payload["local_comparison"] = {
        "mode": lc.mode,
        "c_eps": {f"{e:g}": v for e, v in lc.c_eps.items()},
        "c_inf": lc.c_inf,
    }
    outputs.append(_write_csv(
        out / "local_comparison.csv",
        ["cx", "cy", "r", "lhs", "mean_G", "mean_F"],
        [(row["center"][0], row["center"][1], row["r"], row["lhs"],
          row["mG"], row["mF"]) for row in lc.rows],
    ))

    scan = goodlambda_scan(
        pair, alpha, gamma, sp["mode"], tuple(sp["eps"]), radii=radii,
        c_eps=lc.c_eps, c_inf=lc.c_inf,
        n_interior=sp["n_interior"], n_boundary=sp["n_boundary"], seed=cfg.seed,
    )
    payload["goodlambda"] = {
        "mode": scan.mode,
        "gamma": scan.gamma,
        "sigma_by_eps": {f"{e:g}": v for e, v in scan.sigma_by_eps.items()},
        "kappa_by_eps": {f"{e:g}": v for e, v in scan.kappa_by_eps.items()},
        "C_by_eps": {f"{e:g}": v for e, v in scan.C_by_eps.items()},
        "sigma0": scan.sigma0,
        "passed": scan.passed,
    }
    outputs.append(_write_csv(
        out / "goodlambda_scan.csv",
        ["eps", "sigma", "kappa", "C", "worst_lambda"],
        [(row["eps"], row["sigma"], row["kappa"], row["C"],
          row["worst_lam"] if row["worst_lam"] is not None else math.nan)
         for row in scan.rows],
    ))

    MG = frac_maximal(pair.G, alpha, radii)
    MF = frac_maximal(pair.F, alpha, radii)
    top = float(MG.values[grid.mask].max(initial=0.0))
    if top > 0:
        levels = cfg.levels_for(top)
        profG = fmd(pair.G, alpha, levels, maximal=MG)
        profF = fmd(pair.F, alpha, levels, maximal=MF)
        outputs.append(_write_csv(
            out / "scan_profile.csv",
            ["lambda", "dist_MG", "dist_MF"],
            [(float(l), float(a), float(b)) for l, a, b in
             zip(levels.lambdas, profG.measures, profF.measures)],
        ))

    norm_rows = []
    for spec in cfg.norm_specs():
        try:
            nrep = norm_comparison_report(pair, alpha, spec, sp["mode"], gamma=gamma,
                                          radii=radii)
            norm_rows.append({
                "space": nrep.space_label, "rule": nrep.rule, "status": "ok",
                "norm_G": nrep.norm_G, "norm_F": nrep.norm_F, "ratio": nrep.ratio,
            })
        except RangeRuleError as err:
            norm_rows.append({
                "space": spec.label, "rule": err.rule, "status": "refused",
                "reason": str(err),
            })
    payload["norm_comparisons"] = norm_rows

    try:
        wb = weak_bound_constant(pair.G, sp["weak_s"], alpha)
        payload["weak_bound"] = {
            "constant": wb.constant, "exponent": wb.exponent,
            "s": wb.s, "norm_s": wb.norm_s, "pad_factor": wb.pad_factor,
        }
    except ValueError as err:
        payload["weak_bound"] = {"skipped": str(err)}

    outputs.append(_write_json(out / "verify.json", payload))
    return outputs


def stage_report(out: Path) -> list[Path]:
    merged = {}
    for jpath in sorted(out.glob("*.json")):
        # manifest timings are volatile; results files only
        if jpath.name in ("report.json", "manifest.json"):
            continue
        try:
            merged[jpath.stem] = json.loads(jpath.read_text())
        except json.JSONDecodeError:
            merged[jpath.stem] = {"unreadable": True}
    outputs = [_write_json(out / "report.json", merged)]

    def leaves(prefix, obj, acc):
        if isinstance(obj, dict):
            for k in sorted(obj):
                leaves(f"{prefix}.{k}" if prefix else str(k), obj[k], acc)
        elif isinstance(obj, list):
            for i, v in enumerate(obj):
                leaves(f"{prefix}[{i}]", v, acc)
        elif isinstance(obj, (int, float, str, bool)) or obj is None:
            acc.append((prefix, obj))

    acc: list[tuple[str, object]] = []
    leaves("", merged, acc)
    outputs.append(_write_csv(out / "report.csv", ["key", "value"],
                              [(k, v if not isinstance(v, float) else float(v))
                               for k, v in acc]))

    for cpath in sorted(out.glob("*.csv")):
        if cpath.name in ("report.csv",):
            continue
        with open(cpath, newline="") as fh:
            rd = csv.reader(fh)
            try:
                header = next(rd)
            except StopIteration:
                continue
            rows = list(rd)
        dat = cpath.parent / (cpath.name[:-4] + ".dat")
        with open(dat, "w") as fh:
            fh.write("# " + " ".join(header) + "\n")
            for row in rows:
                fh.write(" ".join(str(v) for v in row) + "\n")
        outputs.append(dat)
    return outputs


_STAGES = {
    "maximal": stage_maximal,
    "norms": stage_norms,
    "solve": stage_solve,
    "verify": stage_verify,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="fmdlab",
                                 description="FMD numerical laboratory")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "solve", "maximal", "norms", "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
    rp = sub.add_parser("report")
    rp.add_argument("--out", required=True)
    args = ap.parse_args(argv)

    if args.command == "report":
        outputs = stage_report(Path(args.out))
        print(f"report: wrote {len(outputs)} files to {args.out}")
        return 0

    if args.threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    cfg = ExperimentConfig(args.config, seed=args.seed, out=args.out)
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    manifest = _Manifest(cfg, out)

    stages = list(_STAGES) if args.command == "run" else [args.command]
    for name in stages:
        t0 = time.perf_counter()
        outputs = _STAGES[name](cfg, out)
        dt = time.perf_counter() - t0
        manifest.record(name, dt, outputs)
        print(f"{name}: {len(outputs)} files in {dt:.2f}s -> {out}")
    if args.command == "run":
        t0 = time.perf_counter()
        outputs = stage_report(out)
        manifest.record("report", time.perf_counter() - t0, outputs)
        print(f"report: {len(outputs)} files -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
