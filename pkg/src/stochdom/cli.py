"""Batch front end.

A run is described by a JSON config::

    {"command": "lyap", "spec": {...}, "params": {...}, "seed": 42}

and writes ``report.json`` (plus ``<command>.csv`` with ``--format csv``)
into ``--out``. Exit codes: 0 success, 2 invalid config, 3 numerical
failure. Reports contain no timestamps, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import accessibility, domination, lyapunov, perturbation, ruelle
from .base import FiniteCycle, sample_mu
from .cocycle import CocycleSpec, random_cocycle
from .linalg import TAU_STOCH, random_stochastic

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

COMMANDS = ("gen", "lyap", "dominate", "perturb", "access", "ruelle", "classify")
CONFIG_FIELDS = {"command", "spec", "spec_path", "family", "family_path", "seed", "params", "tolerances"}
TOLERANCE_FIELDS = {"tau_gap", "log_floor"}
PARAMS = {
    "gen": {"count", "n", "kind", "q", "profile"},
    "lyap": {"method", "x", "L", "stride"},
    "dominate": {"sample_size", "m_max", "splitting"},
    "perturb": {"rhos"},
    "access": {"count", "n", "eps"},
    "ruelle": {"sample_size", "m_max", "L", "m_pullback"},
    "classify": {"count", "n", "kind", "q", "sample_size", "m_max", "L"},
}
NEEDS_SPEC = {"lyap", "dominate", "perturb"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    seed: int
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    spec: object = None
    family: object = None
    raw: dict = field(default_factory=dict)

    def config_hash(self):
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _load_json_file(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path!r}: {exc.strerror}") from None
    if not text.strip():
        return {}
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} {path!r} is not valid JSON: {exc.msg}") from None


def parse_config(raw, seed=None, base_dir="."):
    """Validate a raw config dict into a :class:`RunConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(raw) - CONFIG_FIELDS
    if extra:
        raise ConfigError(f"unknown config fields: {sorted(extra)}")
    cmd = raw.get("command")
    if cmd is None:
        raise ConfigError("missing command")
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}; expected one of {list(COMMANDS)}")
    raw = dict(raw)
    if seed is not None:
        raw["seed"] = seed
    s = raw.get("seed", 0)
    if isinstance(s, bool) or not isinstance(s, int) or not 0 <= s < 2**64:
        raise ConfigError("seed must be an integer in [0, 2^64)")
    raw["seed"] = s
    params = raw.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("params must be an object")
    extra = set(params) - PARAMS[cmd]
    if extra:
        raise ConfigError(f"unknown params for {cmd}: {sorted(extra)}")
    tols = raw.get("tolerances", {})
    if not isinstance(tols, dict) or set(tols) - TOLERANCE_FIELDS:
        raise ConfigError(f"tolerances may only set {sorted(TOLERANCE_FIELDS)}")
    for k, v in tols.items():
        if not isinstance(v, (int, float)) or isinstance(v, bool):
            raise ConfigError(f"tolerance {k} must be a number")

    spec_obj = raw.get("spec")
    if "spec_path" in raw:
        if spec_obj is not None:
            raise ConfigError("give either spec or spec_path, not both")
        spec_obj = _load_json_file(os.path.join(base_dir, raw["spec_path"]), "spec")
    spec = None
    if spec_obj is not None:
        try:
            spec = CocycleSpec.from_json(spec_obj)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid spec: {exc}") from None
    elif cmd in NEEDS_SPEC:
        raise ConfigError(f"command {cmd} needs a spec")

    fam_obj = raw.get("family")
    if "family_path" in raw:
        if fam_obj is not None:
            raise ConfigError("give either family or family_path, not both")
        fam_obj = _load_json_file(os.path.join(base_dir, raw["family_path"]), "family")
    family = None
    if fam_obj is not None:
        try:
            family = ruelle.PartitionFamily.from_json(fam_obj)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"invalid family: {exc}") from None
    elif cmd == "ruelle":
        raise ConfigError("command ruelle needs a family")
    if cmd == "perturb" and not isinstance(spec.base, FiniteCycle):
        raise ConfigError("perturb needs a spec over a cycle base")
    return RunConfig(cmd, s, params, tols, spec, family, raw)


def tolerances(cfg):
    out = {
        "tau_stoch": TAU_STOCH,
        "tau_gap": lyapunov.TAU_GAP,
        "log_floor": lyapunov.LOG_FLOOR,
        "degeneracy_rtol": lyapunov.DEGENERACY_RTOL,
        "ratio_bound": domination.RATIO_BOUND,
        "invariance_tol": domination.INVARIANCE_TOL,
        "sigma_tol": domination.SIGMA_TOL,
        "sigma_max_iter": domination.SIGMA_MAX_ITER,
        "hilbert_tol": ruelle.HILBERT_TOL,
        "ell_floor": ruelle.ELL_FLOOR,
        "power_tol": perturbation.POWER_TOL,
    }
    out.update(cfg.tolerances)
    return out


def _p(cfg, key, default):
    return cfg.params.get(key, default)


def _spectrum(c, x, L, tol, method="auto"):
    if method == "periodic" or (method == "auto" and isinstance(c.base, FiniteCycle)):
        rep, est = lyapunov.lyapunov_periodic(c, x, log_floor=tol["log_floor"])
        return rep, est
    return lyapunov.lyapunov_qr(c, x, L, tau_gap=tol["tau_gap"], log_floor=tol["log_floor"]), None


def classify(c, sample, m_max, L=2000, tol=None):
    """Empirical bucket among ``trivial``, ``two_point``, ``multi_point_dominated``, ``multi_point_uncertified``."""
    tol = tol or {"tau_gap": lyapunov.TAU_GAP, "log_floor": lyapunov.LOG_FLOOR}
    sample = list(sample)
    rep, est = _spectrum(c, sample[0], L, tol)
    k = len(rep.exponents)
    out = {"spectrum": rep.to_json(), "point_count": k, "empirical": True, "certificate": None}
    if k == 1:
        out["bucket"] = "trivial"
    elif k == 2:
        out["bucket"] = "two_point"
    else:
        cert = None
        if est is not None:
            try:
                cert = domination.certify_domination(c, est.field, sample, m_max)
            except domination.DominationError as exc:
                out["reason"] = str(exc)
        else:
            fld = lambda x: lyapunov.estimated_splitting(c, x, rep)  # noqa: E731
            try:
                cert = domination.certify_domination(c, fld, sample, m_max)
            except (domination.DominationError, lyapunov.SpectralGapError) as exc:
                out["reason"] = str(exc)
        if cert is not None:
            out["certificate"] = cert.to_json()
        out["bucket"] = "multi_point_dominated" if cert is not None and cert.valid else "multi_point_uncertified"
    return out


def _pool_map(fn, items, threads):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _cmd_gen(cfg, rng, tol, threads):
    count = int(_p(cfg, "count", 10))
    specs = [
        random_cocycle(rng, int(_p(cfg, "n", 3)), _p(cfg, "kind", "tabulated"), _p(cfg, "q", None), _p(cfg, "profile", "uniform")).to_json()
        for _ in range(count)
    ]
    return {"specs": specs}, None


def _cmd_lyap(cfg, rng, tol, threads):
    c = cfg.spec
    rep, est = _spectrum(c, _p(cfg, "x", 0), int(_p(cfg, "L", 10_000)), tol, _p(cfg, "method", "auto"))
    result = rep.to_json()
    if est is not None:
        result["residuals"] = est.residuals
        result["condition_number"] = est.condition_number()
    csv = rep.series_csv() if rep.finite_time_series is not None else None
    return result, csv


def _cmd_dominate(cfg, rng, tol, threads):
    c = cfg.spec
    sample = sample_mu(c.base, rng, int(_p(cfg, "sample_size", 16)))
    m_max = int(_p(cfg, "m_max", 32))
    kind = _p(cfg, "splitting", "zero_negative")
    if kind == "zero_negative":
        _, cert = domination.zero_negative_splitting(c, sample, m_max)
    elif kind == "oseledets":
        if not isinstance(c.base, FiniteCycle):
            raise lyapunov.SpectralGapError("oseledets splittings are certified over cycle bases only")
        rep, est = lyapunov.lyapunov_periodic(c, log_floor=tol["log_floor"])
        if len(rep.exponents) < 2:
            raise domination.DominationError("spectrum has a single point; nothing to certify")
        cert = domination.certify_domination(c, est.field, sample, m_max)
    else:
        raise ConfigError(f"unknown splitting {kind!r}")
    out = cert.to_json()
    out["info"] = cert.info
    return out, None


def _cmd_perturb(cfg, rng, tol, threads):
    c = cfg.spec
    rhos = [float(r) for r in _p(cfg, "rhos", [round(0.1 * k, 1) for k in range(1, 10)])]
    base_rep, _ = lyapunov.lyapunov_periodic(c, log_floor=tol["log_floor"])
    neg = [i for i, (lam, m) in enumerate(zip(base_rep.exponents, base_rep.multiplicities)) if m == 1 and -np.inf < lam < -tol["tau_gap"]]

    def job(rho):
        d = perturbation.deform_cocycle(c, rho)
        rep, _ = lyapunov.lyapunov_periodic(d, log_floor=tol["log_floor"])
        disp = perturbation.cycle_phi_displacement(c, rho, neg[0]) if neg and rho < 1 else float("nan")
        shift = perturbation.exponent_shift_check(c, rho, tol["log_floor"]) if rho > 0 else None
        return rho, rep, disp, shift

    rows = _pool_map(job, rhos, threads)
    n = c.n
    lines = ["rho," + ",".join(f"lambda_{i + 1}" for i in range(n)) + ",phi_displacement"]
    table = []
    for rho, rep, disp, shift in rows:
        spec_ = rep.full_spectrum()
        lines.append(",".join([_fmt(rho)] + [_fmt(v) for v in spec_] + [_fmt(disp)]))
        table.append({
            "rho": rho,
            "exponents": rep.exponents,
            "multiplicities": rep.multiplicities,
            "phi_displacement": disp,
            "shift_errors": None if shift is None else [r["error"] for r in shift["rows"]],
        })
    return {"sweep": table}, "\n".join(lines) + "\n"


def _cmd_access(cfg, rng, tol, threads):
    count = int(_p(cfg, "count", 20))
    n = int(_p(cfg, "n", 3))
    eps = float(_p(cfg, "eps", 0.1))
    if not 0 < eps <= 1 or n < 2:
        raise ConfigError("access needs n >= 2 and eps in (0, 1]")
    C = accessibility.Constants(n).C
    jobs = []
    for _ in range(count):
        S = random_stochastic(n, rng)
        x = accessibility.random_unit_normal(n, rng)
        ang = rng.random() * eps**2 / C**2
        if n > 2:
            z = accessibility.random_unit_normal(n, rng)
            z -= (z @ x) * x
            z /= np.linalg.norm(z)
            y = np.cos(ang) * x + np.sin(ang) * z
        else:
            y = x.copy()
        jobs.append((S, x, y))

    def job(args):
        S, x, y = args
        res = accessibility.access(S, x, y, eps, details=True)
        tr = res.transport
        return [eps, tr.delta1, tr.delta2, tr.t, tr.worst_row_deviation,
                float(np.linalg.norm(S @ x - res.lam * (res.R @ y))), res.gap, tr.mix]

    rows = _pool_map(job, jobs, threads)
    header = "eps,delta1,delta2,t,worst_row_deviation,identity_residual,norm_gap,mix"
    csv = header + "\n" + "".join(",".join(_fmt(v) for v in r) + "\n" for r in rows)
    keys = header.split(",")
    return {"instances": [dict(zip(keys, r)) for r in rows]}, csv


def _cmd_ruelle(cfg, rng, tol, threads):
    pf = cfg.family
    sample = sample_mu(pf.base, rng, int(_p(cfg, "sample_size", 8)))
    rep = ruelle.analyze_ruelle(pf, sample, int(_p(cfg, "m_max", 32)), int(_p(cfg, "L", 2000)), int(_p(cfg, "m_pullback", 200)))
    return rep.to_json(), None


def _cmd_classify(cfg, rng, tol, threads):
    m_max = int(_p(cfg, "m_max", 16))
    size = int(_p(cfg, "sample_size", 4))
    L = int(_p(cfg, "L", 2000))
    if cfg.spec is not None:
        specs = [cfg.spec]
    else:
        specs = [
            random_cocycle(rng, int(_p(cfg, "n", 3)), _p(cfg, "kind", "tabulated"), _p(cfg, "q", None))
            for _ in range(int(_p(cfg, "count", 100)))
        ]
    samples = [sample_mu(c.base, rng, size) for c in specs]
    results = _pool_map(lambda a: classify(a[0], a[1], m_max, L, tol), list(zip(specs, samples)), threads)
    hist = {b: 0 for b in ("trivial", "two_point", "multi_point_dominated", "multi_point_uncertified")}
    counts = {}
    for r in results:
        hist[r["bucket"]] += 1
        counts[str(r["point_count"])] = counts.get(str(r["point_count"]), 0) + 1
    csv = "index,bucket,point_count\n" + "".join(f"{i},{r['bucket']},{r['point_count']}\n" for i, r in enumerate(results))
    return {"histogram": hist, "point_count_histogram": counts, "empirical": True, "results": results}, csv


HANDLERS = {
    "gen": _cmd_gen,
    "lyap": _cmd_lyap,
    "dominate": _cmd_dominate,
    "perturb": _cmd_perturb,
    "access": _cmd_access,
    "ruelle": _cmd_ruelle,
    "classify": _cmd_classify,
}


def _fmt(v):
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else _fmt(v)
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def run(cfg, out_dir, fmt="json", threads=1):
    """Execute a validated config; returns ``(exit_code, report)``."""
    tol = tolerances(cfg)
    rng = np.random.default_rng(cfg.seed)
    report = {
        "command": cfg.command,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "tolerances": tol,
    }
    code = EXIT_OK
    csv = None
    try:
        result, csv = HANDLERS[cfg.command](cfg, rng, tol, threads)
        report.update(status="ok", result=result)
    except ConfigError as exc:
        code = EXIT_INVALID
        report.update(status="error", reason={"kind": "validation", "type": type(exc).__name__, "message": str(exc)})
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        code = EXIT_NUMERICAL
        report.update(status="error", reason={"kind": "numerical", "type": type(exc).__name__, "message": str(exc)})
    report["exit_code"] = code
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(report))
    if fmt == "csv" and csv is not None and code == EXIT_OK:
        with open(os.path.join(out_dir, f"{cfg.command}.csv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(csv)
    return code, report


def build_parser():
    ap = argparse.ArgumentParser(prog="stochdom", description="Lyapunov spectra and dominated splittings of stochastic cocycles.")
    ap.add_argument("--config", required=True, help="path to the JSON run config")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for independent jobs")
    ap.add_argument("--format", choices=("json", "csv"), default="json", help="also write a CSV table with 'csv'")
    return ap


def _fail(code, kind, message):
    sys.stderr.write(json.dumps({"status": "error", "exit_code": code, "reason": {"kind": kind, "message": message}}, sort_keys=True) + "\n")
    return code


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    if args.threads < 1:
        return _fail(EXIT_INVALID, "validation", "--threads must be >= 1")
    try:
        raw = _load_json_file(args.config, "config")
        cfg = parse_config(raw, args.seed, os.path.dirname(os.path.abspath(args.config)))
    except ConfigError as exc:
        return _fail(EXIT_INVALID, "validation", str(exc))
    code, report = run(cfg, args.out, args.format, args.threads)
    if code != EXIT_OK:
        sys.stderr.write(json.dumps(_clean(report["reason"]), sort_keys=True) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
