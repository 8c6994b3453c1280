"""Configuration-driven experiment runner.

Usage: ``rnm <subcommand> --config <path> [--out <dir>] [--seed <u64>]``
with subcommands droplet, kernel-check, sample, fluctuations, ward, clt,
dn-field.  Results are CSV/JSON plus gnuplot-ready .dat files, all listed in
a manifest with content hashes; identical config and seed produce
byte-identical data files.  The environment variable RNM_THREADS caps the
worker pool used for the n list.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import RnmError, SchemaError
from .fieldops import (
    ComplexField,
    TestFunction,
    dn_field,
    fluctuation_mean_limit,
    perturbation_shift,
    variance_limit,
)
from .kernel import build_kernel, eval_approx_kernel, ApproxKernel, kernel_trace
from .potential import Potential, obstacle, solve_droplet
from .sampler import ChainConfig, sample_dpp_stream, sample_mcmc, save_configurations
from .stats import (
    clt_test,
    fluctuation_mean,
    linear_statistic,
    mc_fluctuation,
    ward_check_kernel,
)

EXPERIMENTS = ("droplet", "kernel-check", "sample", "fluctuations",
               "ward", "clt", "dn-field")

_TOP_KEYS = {"experiment", "potential", "n", "seed", "out", "sampler",
             "test_functions", "tolerances", "quadrature"}
_SAMPLER_KEYS = {"kind", "samples", "chain"}
_CHAIN_KEYS = {"proposal_scale", "sweeps", "burn_in", "thinning"}
_TF_KEYS = {"name", "expr", "im_expr", "support_radius", "role"}
_QUAD_KEYS = {"n_radial", "n_angular"}
_TOL_KEYS = {"trace_rel", "ward_rel"}


@dataclass
class ExperimentConfig:
    experiment: str
    potential: Potential
    ns: list
    seed: int
    out: str
    sampler: dict | None
    test_functions: list
    tolerances: dict = field(default_factory=dict)
    quadrature: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _reject_unknown(obj, allowed, where):
    unknown = set(obj) - allowed
    if unknown:
        raise SchemaError(f"unknown keys {sorted(unknown)} in {where}",
                          where=where, keys=sorted(unknown))


def validate_config(obj, subcommand):
    if not isinstance(obj, dict):
        raise SchemaError("config must be a JSON object")
    _reject_unknown(obj, _TOP_KEYS, "config")
    for key in ("experiment", "potential", "n"):
        if key not in obj:
            raise SchemaError(f"config lacks required key {key!r}", key=key)
    if obj["experiment"] not in EXPERIMENTS:
        raise SchemaError(f"unknown experiment {obj['experiment']!r}")
    if obj["experiment"] != subcommand:
        raise SchemaError(
            f"config experiment {obj['experiment']!r} does not match "
            f"subcommand {subcommand!r}")
    ns = obj["n"]
    if not isinstance(ns, list) or not ns or \
            not all(isinstance(v, int) and v >= 1 for v in ns):
        raise SchemaError("'n' must be a nonempty list of integers >= 1")
    try:
        pot = Potential.from_json(obj["potential"])
    except RnmError as exc:
        raise SchemaError(f"invalid potential: {exc.message}",
                          cause=exc.to_dict()) from exc
    sampler = obj.get("sampler")
    if sampler is not None:
        _reject_unknown(sampler, _SAMPLER_KEYS, "sampler")
        if sampler.get("kind") not in ("dpp", "mcmc"):
            raise SchemaError("sampler.kind must be 'dpp' or 'mcmc'")
        chain = sampler.get("chain")
        if chain is not None:
            _reject_unknown(chain, _CHAIN_KEYS, "sampler.chain")
    tfs = []
    for i, spec in enumerate(obj.get("test_functions", [])):
        _reject_unknown(spec, _TF_KEYS, f"test_functions[{i}]")
        try:
            f = TestFunction(spec["expr"], spec["support_radius"],
                             name=spec.get("name", f"f{i}"))
            im = None
            if spec.get("im_expr") is not None:
                im = TestFunction(spec["im_expr"], spec["support_radius"],
                                  name=f.name + "_im")
        except (KeyError, RnmError) as exc:
            raise SchemaError(f"invalid test function #{i}: {exc}") from exc
        tfs.append((f, im, spec.get("role", "f")))
    tol = obj.get("tolerances", {})
    _reject_unknown(tol, _TOL_KEYS, "tolerances")
    quad = obj.get("quadrature", {})
    _reject_unknown(quad, _QUAD_KEYS, "quadrature")
    return ExperimentConfig(
        experiment=obj["experiment"], potential=pot, ns=list(ns),
        seed=int(obj.get("seed", 0)), out=str(obj.get("out", "results")),
        sampler=sampler, test_functions=tfs, tolerances=dict(tol),
        quadrature=dict(quad), raw=obj)


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return str(value)


def _csv_escape(text):
    if any(c in text for c in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_csv_escape(_fmt(v)) for v in row) + "\n")


def write_dat(path, comment_lines, columns_header, rows):
    """Gnuplot-compatible whitespace-delimited table with header comments."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in comment_lines:
            fh.write(f"# {line}\n")
        fh.write("# " + " ".join(columns_header) + "\n")
        for row in rows:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _pool_size(n_tasks):
    cap = os.environ.get("RNM_THREADS")
    workers = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(workers, n_tasks))


def _map_over_n(task, ns):
    with ThreadPoolExecutor(max_workers=_pool_size(len(ns))) as pool:
        return list(pool.map(task, ns, range(len(ns))))


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------

def _exp_droplet(cfg, outdir):
    d = solve_droplet(cfg.potential)
    obs = obstacle(cfg.potential, d)
    mass = d.mass()
    rows = [[cfg.potential.ident, d.radius, mass,
             abs(d.radius * cfg.potential.radial_prime(d.radius) - 1.0),
             abs(cfg.potential.radial_prime(d.radius) - 1.0 / d.radius),
             obs.equilibrium_constant()]]
    path = os.path.join(outdir, "droplet.csv")
    write_csv(path, ["potential", "R", "mass", "radius_residual",
                     "c1_residual", "equilibrium_constant"], rows)
    return [path], {"radius": d.radius, "mass": mass}


def _exp_kernel_check(cfg, outdir):
    p = cfg.potential
    d = solve_droplet(p)

    def one(n, idx):
        km = build_kernel(p, n)
        trace = kernel_trace(km)
        z = 0.45 * d.radius
        diag_ratio = km.kdiag(z + 0j) / (n * p.laplacian(z + 0j) / (2 * np.pi))
        ak = ApproxKernel(p)
        approx = abs(eval_approx_kernel(ak, n, z, z))
        return [n, trace, abs(trace - n) / n, float(diag_ratio),
                approx / (n * p.laplacian(z + 0j) / (2 * np.pi))]

    rows = _map_over_n(one, cfg.ns)
    path = os.path.join(outdir, "kernel_check.csv")
    write_csv(path, ["n", "trace", "trace_rel_err", "bulk_diag_ratio",
                     "approx_diag_ratio"], rows)
    return [path], {"rows": len(rows)}


def _default_sampler(cfg):
    return cfg.sampler or {"kind": "dpp", "samples": 200}


def _draw_samples(cfg, n, seed):
    spec = _default_sampler(cfg)
    count = int(spec.get("samples", 200))
    if spec["kind"] == "dpp":
        km = build_kernel(cfg.potential, n)
        return [sample_dpp_stream(km, seed, i) for i in range(count)]
    chain_spec = spec.get("chain") or {}
    sweeps = int(chain_spec.get("sweeps", 200 + 5 * count))
    chain = ChainConfig(
        sweeps=sweeps,
        burn_in=int(chain_spec.get("burn_in", min(200, sweeps // 2))),
        thinning=int(chain_spec.get("thinning", 5)),
        proposal_scale=chain_spec.get("proposal_scale"),
        seed=seed)
    out = []
    for c in sample_mcmc(cfg.potential, None, n, chain):
        out.append(c)
        if len(out) >= count:
            break
    return out


def _exp_sample(cfg, outdir):
    files = []
    summary = []

    def one(n, idx):
        seed = cfg.seed ^ idx
        configs = _draw_samples(cfg, n, seed)
        path = os.path.join(outdir, f"configurations_n{n}.jsonl")
        save_configurations(path, configs)
        radial = [float(np.mean(np.abs(c.points) ** 2)) for c in configs]
        acc = configs[-1].acceptance if configs[-1].tag == "mcmc" else ""
        return path, [n, len(configs), configs[0].tag,
                      float(np.mean(radial)), acc]

    for path, row in _map_over_n(one, cfg.ns):
        files.append(path)
        summary.append(row)
    csv_path = os.path.join(outdir, "sample_summary.csv")
    write_csv(csv_path, ["n", "count", "tag", "mean_abs_sq", "acceptance"], summary)
    files.append(csv_path)
    return files, {"rows": len(summary)}


def _functions_by_role(cfg):
    fs = [(f, im) for f, im, role in cfg.test_functions if role == "f"]
    hs = [(f, im) for f, im, role in cfg.test_functions if role == "h"]
    return fs, hs


def _exp_fluctuations(cfg, outdir):
    p = cfg.potential
    d = solve_droplet(p)
    fs, hs = _functions_by_role(cfg)
    if not fs:
        raise SchemaError("fluctuations experiment needs at least one "
                          "test function with role 'f'")
    h = hs[0][0] if hs else None
    rows = []

    def one(n, idx):
        km = build_kernel(p, n)
        out = []
        for f, _ in fs:
            nu_n = fluctuation_mean(km, d, f)
            limit = fluctuation_mean_limit(f, p, d).value
            out.append([n, f.name, "kernel", nu_n, limit, nu_n - limit, ""])
            if h is not None:
                km_h = build_kernel(p, n, h=h)
                nu_h = fluctuation_mean(km_h, d, f)
                shift = perturbation_shift(f, h, d)
                out.append([n, f.name, "kernel-perturbed", nu_h - nu_n,
                            shift, nu_h - nu_n - shift, ""])
        return out

    for chunk in _map_over_n(one, cfg.ns):
        rows.extend(chunk)
    path = os.path.join(outdir, "fluctuations.csv")
    write_csv(path, ["n", "f", "method", "value", "limit", "gap", "se"], rows)
    files = [path]
    gap_rows = [[r[0], r[5]] for r in rows if r[2] == "kernel"]
    if gap_rows:
        dat = os.path.join(outdir, "gap_vs_n.dat")
        write_dat(dat, ["expected-fluctuation gap against the limit"],
                  ["n", "gap"], gap_rows)
        files.append(dat)
    return files, {"rows": len(rows)}


def _exp_ward(cfg, outdir):
    p = cfg.potential
    fields = []
    for f, im, _role in cfg.test_functions:
        fields.append(ComplexField(re=f, im=im, name=f.name))
    if not fields:
        raise SchemaError("ward experiment needs at least one test function")
    rows = []

    def one(n, idx):
        km = build_kernel(p, n)
        out = []
        for v in fields:
            rep = ward_check_kernel(km, v)
            out.append([n, v.name,
                        rep.term_i.real, rep.term_i.imag,
                        rep.term_ii.real, rep.term_ii.imag,
                        rep.term_iii.real, rep.term_iii.imag,
                        rep.residual.real, rep.residual.imag,
                        rep.relative])
        return out

    for chunk in _map_over_n(one, cfg.ns):
        rows.extend(chunk)
    path = os.path.join(outdir, "ward.csv")
    write_csv(path, ["n", "v", "I_re", "I_im", "II_re", "II_im",
                     "III_re", "III_im", "residual_re", "residual_im",
                     "relative_residual"], rows)
    dat = os.path.join(outdir, "ward_residual_vs_n.dat")
    write_dat(dat, ["relative Ward residual per field and n"],
              ["n", "relative_residual"],
              [[r[0], r[10]] for r in rows])
    return [path, dat], {"rows": len(rows)}


def _exp_clt(cfg, outdir):
    p = cfg.potential
    d = solve_droplet(p)
    fs, _ = _functions_by_role(cfg)
    if not fs:
        raise SchemaError("clt experiment needs a test function with role 'f'")
    h = fs[0][0]
    rows = []
    files = []
    for idx, n in enumerate(cfg.ns):
        samples = _draw_samples(cfg, n, cfg.seed ^ idx)
        stats = mc_fluctuation(samples, h, d)
        rep = clt_test(samples, h, d)
        limit = variance_limit(h, d)
        rows.append([n, len(samples), stats.mean, stats.variance, limit,
                     "" if rep.skipped else rep.ks_statistic,
                     "" if rep.skipped else rep.skewness,
                     "" if rep.skipped else rep.excess_kurtosis])
        if not rep.skipped:
            traces = np.array([linear_statistic(c, h) for c in samples])
            std = (traces - traces.mean()) / traces.std(ddof=1)
            hist, edges = np.histogram(std, bins=25, density=True)
            centers = 0.5 * (edges[1:] + edges[:-1])
            overlay = np.exp(-centers ** 2 / 2.0) / np.sqrt(2.0 * np.pi)
            dat = os.path.join(outdir, f"clt_hist_n{n}.dat")
            write_dat(dat, [f"standardized fluctuations of Tr[{h.name}], n={n}"],
                      ["bin_center", "density", "normal_density"],
                      [[float(c), float(v), float(o)]
                       for c, v, o in zip(centers, hist, overlay)])
            files.append(dat)
    path = os.path.join(outdir, "clt.csv")
    write_csv(path, ["n", "samples", "mean", "variance", "variance_limit",
                     "ks", "skewness", "excess_kurtosis"], rows)
    return [path, *files], {"rows": len(rows)}


def _exp_dn_field(cfg, outdir):
    p = cfg.potential
    d = solve_droplet(p)
    radii = np.concatenate([np.linspace(0.15, 0.9, 6) * d.radius,
                            np.linspace(1.2, 5.0, 8) * d.radius])
    rows = []

    def one(n, idx):
        km = build_kernel(p, n)
        vals = dn_field(km, d, radii.astype(complex))
        return [[n, float(r), abs(v), abs(v) * float(r) ** 2]
                for r, v in zip(radii, vals)]

    for chunk in _map_over_n(one, cfg.ns):
        rows.extend(chunk)
    path = os.path.join(outdir, "dn_field.csv")
    write_csv(path, ["n", "radius", "abs_dn", "abs_dn_times_r2"], rows)
    dat = os.path.join(outdir, "dn_decay.dat")
    write_dat(dat, ["Cauchy field of the fluctuation measure along radii"],
              ["n", "radius", "abs_dn"],
              [[r[0], r[1], r[2]] for r in rows])
    return [path, dat], {"rows": len(rows)}


_RUNNERS = {
    "droplet": _exp_droplet,
    "kernel-check": _exp_kernel_check,
    "sample": _exp_sample,
    "fluctuations": _exp_fluctuations,
    "ward": _exp_ward,
    "clt": _exp_clt,
    "dn-field": _exp_dn_field,
}


def emit_plot_data(reports, outdir):
    """Write plot-ready .dat files for a set of fluctuation reports."""
    files = []
    if not reports:
        return files
    rows = [[r.n, r.gap] for r in reports if r.gap is not None]
    if rows:
        path = os.path.join(outdir, "gap_vs_n.dat")
        write_dat(path, ["expected-fluctuation gap against the limit"],
                  ["n", "gap"], rows)
        files.append(path)
    return files


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def run(subcommand, config_path, out_override=None, seed_override=None):
    try:
        with open(config_path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        _emit_error(SchemaError(f"cannot read config: {exc}"))
        return 2
    try:
        cfg = validate_config(raw, subcommand)
    except SchemaError as exc:
        _emit_error(exc)
        return 2
    if out_override:
        cfg.out = out_override
    if seed_override is not None:
        cfg.seed = int(seed_override)
    os.makedirs(cfg.out, exist_ok=True)
    try:
        files, summary = _RUNNERS[cfg.experiment](cfg, cfg.out)
    except SchemaError as exc:
        _emit_error(exc)
        return 2
    except RnmError as exc:
        _emit_error(exc)
        return 3
    manifest = {
        "experiment": cfg.experiment,
        "config_hash": hashlib.sha256(
            json.dumps(raw, sort_keys=True, separators=(",", ":"))
            .encode()).hexdigest(),
        "code_version": __version__,
        "seed": cfg.seed,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "summary": summary,
        "files": [{"path": os.path.relpath(f, cfg.out), "sha256": _sha256(f),
                   "bytes": os.path.getsize(f)} for f in files],
    }
    with open(os.path.join(cfg.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return 0


def _emit_error(exc):
    sys.stderr.write(json.dumps({"error": exc.to_dict()}) + "\n")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="rnm",
        description="Reproducible experiments on planar eigenvalue ensembles")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default=None)
        sp.add_argument("--seed", type=int, default=None)
    args = parser.parse_args(argv)
    code = run(args.subcommand, args.config, args.out, args.seed)
    raise SystemExit(code)


if __name__ == "__main__":
    main()
