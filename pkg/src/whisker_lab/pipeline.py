"""Stage orchestration, machine-readable artifacts and the verification report."""
from __future__ import annotations

import csv
import math
import subprocess
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .linearization import solve_newton, tune_gamma_rg
from .lindstedt import expand_orders, trig_degree_check
from .model import load_config
from .torus import combined_residual, solve_torus, ward_residual
from .whisker import (a1_defect, homoclinic_check, residual_pde, section_points, shadow_check, solve_whisker,
                      symmetry_check)

CSV_COLUMNS = ("branch", "phi", "I")


# ---------------------------------------------------------------- serialization


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return '"%r"' % x
    return "%.17g" % x


def _str(s):
    out = ['"']
    for ch in str(s):
        if ch in '"\\':
            out.append("\\" + ch)
        elif ch == "\n":
            out.append("\\n")
        elif ord(ch) < 0x20:
            out.append("\\u%04x" % ord(ch))
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def dumps(obj, indent=1, _level=0):
    """JSON text with every float written to 17 significant digits; keys keep insertion order."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if obj is None:
        return "null"
    if isinstance(obj, (complex, np.complexfloating)):
        return dumps({"re": obj.real, "im": obj.imag}, indent, _level)
    if isinstance(obj, (bool, np.bool_, int, float, np.integer, np.floating)):
        return _num(obj)
    if isinstance(obj, str):
        return _str(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [pad + _str(k) + ": " + dumps(v, indent, _level + 1) for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_num(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError("cannot serialize %r" % type(obj))


def write_json(path, obj):
    Path(path).write_text(dumps(obj) + "\n")


def fp_rows(modes, c, real):
    return modes.sparse(c, real=real, tol=1e-16).to_json()


# ---------------------------------------------------------------- stage artifacts


def torus_artifact(cfg, tor):
    m = tor.basis.modes
    return {
        "phi0": fp_rows(m, tor.cphi, cfg.is_real),
        "psi0": fp_rows(m, tor.cpsi, cfg.is_real),
        "residuals": {"phi": tor.residual_phi, "psi": tor.residual_psi, "psi_zero_mode": tor.residual_zero,
                      "combined": combined_residual(tor)},
        "iterations": tor.iterations,
    }


def linearization_artifact(cfg, lin):
    m = lin.prob.b.modes
    return {
        "method": lin.method,
        "gamma": complex(lin.gamma),
        "phi1": fp_rows(m, lin.cphi1, cfg.is_real),
        "psi1": fp_rows(m, lin.cpsi1, cfg.is_real),
        "residual": lin.residual,
        "iterations": lin.iterations,
        "delta_trace": [complex(v) for v in lin.delta_trace],
        "norms": {"pi_n": [float(v) for v in lin.norms]},
    }


def whisker_artifact(cfg, sol, nz=48):
    m = sol.prob.modes
    zs = np.linspace(-1, 1, 9)
    C = sol.coeffs(zs, "u")
    return {
        "gamma": complex(sol.gamma),
        "alpha": complex(sol.alpha),
        "beta": [complex(b) for b in np.atleast_1d(sol.beta)],
        "z_iterations": len(sol.changes),
        "z_changes": [float(v) for v in sol.changes],
        "normalization_residual": float(sol.norm_residual),
        "residual_u": residual_pde(sol, "u", nz),
        "residual_s": residual_pde(sol, "s", nz),
        "a1_defect": list(a1_defect(sol.Z)),
        "samples": [{"z": float(z), "Xu": fp_rows(m, C[i], cfg.is_real)} for i, z in enumerate(zs)],
    }


def expand_artifact(cfg, s, zs=(-1.0, -0.5, 0.0, 0.5, 1.0)):
    zs = np.asarray(zs, dtype=float)
    Xu = s.normalized(zs)
    real = True
    orders = []
    for l in range(s.L + 1):
        orders.append({
            "order": l,
            "gamma": float(np.real(s.gamma[l])),
            "alpha": float(np.real(s.alpha[l])),
            "beta": [float(v) for v in np.real(s.beta[l])],
            "x0": fp_rows(s.modes, s.x0[l], real),
            "x1": fp_rows(s.modes, s.x1[l], real),
            "Xu": [{"z": float(z), "coeffs": fp_rows(s.modes, Xu[l, i], real)} for i, z in enumerate(zs)],
        })
    return {
        "max_order": s.L,
        "gamma": [float(np.real(v)) for v in s.gamma],
        "trig_degree": trig_degree_check(s),
        "solvability": s.solvability,
        "orders": orders,
    }


# ---------------------------------------------------------------- report


@dataclass
class Check:
    name: str
    value: float
    tol: float
    enabled: bool = True

    @property
    def passed(self):
        return bool(np.isfinite(self.value) and self.value < self.tol)

    def row(self):
        return {"name": self.name, "value": self.value, "tol": self.tol, "passed": self.passed}


@dataclass
class RunReport:
    config: dict
    stages: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    error: str | None = None
    solution: object = field(default=None, repr=False)

    @property
    def passed(self):
        return self.error is None and all(c.passed for c in self.checks if c.enabled)

    @property
    def exit_code(self):
        return 0 if self.passed else 1

    def to_dict(self, timing=False):
        out = {
            "config": self.config,
            "stages": self.stages,
            "invariants": [c.row() for c in self.checks if c.enabled],
            "status": "PASS" if self.passed else "FAIL",
            "provenance": self.provenance,
        }
        if self.error is not None:
            out["error"] = self.error
        if timing:
            out["timing"] = self.timing
        return out

    def text(self):
        lines = []
        for c in self.checks:
            if c.enabled:
                lines.append("%-28s %-4s %.3e (tol %.1e)" % (c.name, "PASS" if c.passed else "FAIL", c.value, c.tol))
        if self.error:
            lines.append("error: " + self.error)
        for k, v in self.timing.items():
            lines.append("time %-23s %.2f s" % (k, v))
        lines.append("status: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def git_hash():
    try:
        r = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True, timeout=5,
                           cwd=Path(__file__).resolve().parent)
        return r.stdout.strip() or None
    except (OSError, subprocess.SubprocessError):
        return None


def run_pipeline(config_path=None, cfg=None, eps=None, out_dir=None, rg=False, shadow=True, nz=48):
    """Run torus -> linearize -> whisker and the invariant checks.

    Stage failures are recorded in the report; artifacts written so far stay on disk.
    """
    if cfg is None:
        cfg = load_config(config_path)
    if eps is not None:
        cfg = cfg.with_eps(eps).validate()
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rep = RunReport(config=cfg.to_dict(), provenance={"git": git_hash(), "seed": 0})

    def stage(name, fn):
        t = time.perf_counter()
        val = fn()
        rep.timing[name] = time.perf_counter() - t
        return val

    try:
        tor = stage("torus", lambda: solve_torus(cfg))
        art = torus_artifact(cfg, tor)
        rep.stages["torus"] = art["residuals"]
        if out is not None:
            write_json(out / "torus.json", art)
        rep.checks.append(Check("torus_residual", art["residuals"]["combined"], 100 * cfg.tol_torus))
        rep.checks.append(Check("ward_identity", float(np.max(ward_residual(cfg, tor.cpsi, tor.basis))), 1e-10))

        lin = stage("linearize", lambda: solve_newton(cfg, tor))
        art = linearization_artifact(cfg, lin)
        rep.stages["linearize"] = {"gamma": art["gamma"], "residual": lin.residual}
        if out is not None:
            write_json(out / "lin.json", art)
        rep.checks.append(Check("linearization_residual", lin.residual, 100 * cfg.tol_lin))
        if rg:
            lrg = stage("linearize_rg", lambda: tune_gamma_rg(cfg, tor))
            rep.stages["linearize"]["gamma_rg"] = complex(lrg.gamma)
            rep.checks.append(Check("gamma_newton_vs_rg", abs(lrg.gamma - lin.gamma) / cfg.g, 1e-6))

        sol = stage("whisker", lambda: solve_whisker(cfg, tor, lin))
        art = whisker_artifact(cfg, sol, nz)
        rep.stages["whisker"] = {k: art[k] for k in ("alpha", "beta", "z_iterations", "normalization_residual",
                                                     "residual_u", "residual_s", "a1_defect")}
        if out is not None:
            write_json(out / "whisker.json", art)
        rep.checks.append(Check("pde_residual_u", art["residual_u"], 1e-7))
        rep.checks.append(Check("pde_residual_s", art["residual_s"], 1e-7))
        rep.checks.append(Check("normalization", art["normalization_residual"], 1e-10))
        ex, ey = stage("symmetry", lambda: symmetry_check(sol))
        rep.checks.append(Check("symmetry_X", ex, 1e-9))
        rep.checks.append(Check("symmetry_Y", ey, 1e-9))
        if cfg.is_real:
            rep.checks.append(Check("homoclinic", stage("homoclinic", lambda: homoclinic_check(sol)), 1e-7))
            if shadow:
                rep.checks.append(Check("shadowing", stage("shadow", lambda: shadow_check(sol, z0=0.05)), 1e-5))
        rep.solution = sol
    except Exception as exc:  # a failing stage ends the run; the report says where
        from .model import ConfigError
        if isinstance(exc, ConfigError):
            raise
        rep.error = "%s: %s" % (type(exc).__name__, exc)
    return rep


# ---------------------------------------------------------------- plot data


def parse_section(spec):
    """'psi=0' is the only supported section."""
    key, _, val = spec.partition("=")
    if key.strip() != "psi" or not val.strip():
        raise ValueError("section must look like psi=<angle>")
    v = float(val)
    if v != 0.0:
        raise ValueError("only the section psi=0 is supported")
    return v


def plotdata_rows(sol, n=200):
    rows = [("u", r[2], r[3]) for r in section_points(sol, "u", n)]
    rows += [("s", r[2], r[3]) for r in section_points(sol, "s", n)]
    if not rows:
        raise ValueError("empty section")
    return rows


def branch_gap(rows):
    """Max |I_u - I_s| at matching phi, by a cubic spline through the stable branch."""
    u = np.array([(p, i) for b, p, i in rows if b == "u"])
    s = np.array([(p, i) for b, p, i in rows if b == "s"])
    s = s[np.argsort(s[:, 0])]
    lo, hi = max(u[:, 0].min(), s[:, 0].min()), min(u[:, 0].max(), s[:, 0].max())
    keep = (u[:, 0] >= lo) & (u[:, 0] <= hi)
    if not keep.any():
        return float("nan")
    return float(np.max(np.abs(u[keep, 1] - CubicSpline(s[:, 0], s[:, 1])(u[keep, 0]))))


def write_plotdata(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for b, p, i in rows:
            w.writerow([b, "%.17g" % p, "%.17g" % i])


def validate_plotdata(path):
    """Check the plot-data CSV against its schema; returns the parsed rows."""
    rows = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if tuple(header or ()) != CSV_COLUMNS:
            raise ValueError("bad header %r" % (header,))
        for k, line in enumerate(r, start=2):
            if len(line) != 3:
                raise ValueError("line %d: expected 3 fields" % k)
            b, p, i = line
            if b not in ("u", "s"):
                raise ValueError("line %d: branch must be u or s" % k)
            p, i = float(p), float(i)
            if not (math.isfinite(p) and math.isfinite(i)):
                raise ValueError("line %d: non-finite value" % k)
            rows.append((b, p, i))
    if not rows:
        raise ValueError("empty section")
    return rows

