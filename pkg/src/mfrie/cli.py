"""
Monte-Carlo harness: sweep SNR and aspect ratio, run estimators, write CSV.

Configuration is a flat ``key = value`` text file (``#`` starts a comment,
lists are comma separated)::

    x_prior    = wishart:0.25      # shifted_wigner:c | wigner | wishart:a
                                   # sqrt_wishart:a | bernoulli:p | identity
    y_prior    = gaussian          # gaussian | uniform:a:b | bernoulli_rademacher:p
    n          = 1000
    alphas     = 0.5               # M = round(n / alpha)
    kappas     = 0.3, 1, 5
    seeds      = 0, 1, 2, 3, 4
    estimators = rie_x, oracle_x, sqrt_x2
    eta        = 0.02              # optional constant spectral offset

Each (kappa, alpha, seed) cell is synthesized once, decomposed once, and
every requested estimator is scored on it. Cells draw from disjoint random
streams keyed by ``(seed, kappa index, alpha index)``.

Outputs in ``--out``:

``results.csv``
    One row per (estimator, kappa, alpha, seed). Deterministic: the same
    config gives byte-identical files for any worker count.
``aggregate.csv``
    Mean and standard error over seeds.
``timings.csv``
    Wall time per row; kept apart because it is not reproducible.
"""

import argparse
import configparser
import csv
import io
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import ensembles as ens
from .evaluate import (
    ObservationSVD,
    normalized_mse,
    oracle_x,
    oracle_xy,
    oracle_y,
)
from .rie_x import estimate_x, estimate_x2, overlap_x_theory, solve_x_params, sqrt_psd_estimate
from .rie_y import denoise_xy, estimate_y, overlap_y_theory, solve_y_params, threshold_sparse
from .spectrum import SingularSpectrum, SpectralEvaluator
from .transforms import SolverError, UniformSingular

__all__ = [
    "SCHEMA_VERSION",
    "ExperimentConfig",
    "FIGURES",
    "parse_config",
    "run",
    "run_cell",
    "emit_overlap_figure",
    "main",
]

SCHEMA_VERSION = "mfrie-results/1"
RESULT_FIELDS = ["estimator", "kappa", "alpha", "n", "m", "seed", "normalized_mse",
                 "raw_mse", "edge_modes", "max_residual", "status"]
AGGREGATE_FIELDS = ["estimator", "kappa", "alpha", "n", "m", "count", "mean", "stderr"]
ESTIMATORS = ("rie_x", "rie_x2", "sqrt_x2", "rie_y", "denoise_xy", "oracle_x",
              "oracle_y", "oracle_xy", "product_xy")
_THRESHOLD = re.compile(r"^threshold_y\(\s*([0-9.eE+-]+)\s*\)$")


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep of the harness."""

    x_prior: str = "wishart:0.25"
    y_prior: str = "gaussian"
    n: int = 1000
    alphas: tuple = (0.5,)
    kappas: tuple = (1.0,)
    seeds: tuple = tuple(range(5))
    estimators: tuple = ("rie_x", "oracle_x")
    eta_override: float = None
    name: str = "custom"
    output_dir: str = field(default="results", compare=False)

    def __post_init__(self):
        if not (self.alphas and self.kappas and self.seeds and self.estimators):
            raise ValueError("sweeps and estimator list must be nonempty")
        for est in self.estimators:
            _resolve_estimator(est)
        parse_x_prior(self.x_prior)
        parse_y_prior(self.y_prior)

    def dims(self, alpha):
        return self.n, int(round(self.n / alpha))


def _floats(text):
    return tuple(float(t) for t in text.split(",") if t.strip())


def _ints(text):
    out = []
    for tok in (t.strip() for t in text.split(",")):
        if not tok:
            continue
        if "-" in tok[1:]:
            lo, hi = tok.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(tok))
    return tuple(out)


def parse_x_prior(text):
    """Build an ``X`` prior from ``name[:param]``."""
    name, _, arg = text.strip().partition(":")
    name = name.strip().lower()
    if name == "shifted_wigner":
        return ens.ShiftedWigner(float(arg or 0.0))
    if name == "wigner":
        return ens.WignerSym()
    if name == "wishart":
        return ens.Wishart(float(arg))
    if name == "sqrt_wishart":
        return ens.SqrtWishart(float(arg))
    if name == "bernoulli":
        return ens.BernoulliSpectralHaar(float(arg))
    if name == "identity":
        return ens.Identity()
    raise ValueError(f"unknown x prior {text!r}")


def parse_y_prior(text):
    """Build a ``Y`` prior from ``name[:params]``."""
    name, _, arg = text.strip().partition(":")
    name = name.strip().lower()
    if name == "gaussian":
        return ens.GaussianIID()
    if name == "uniform":
        a, b = (float(t) for t in arg.split(":"))
        return ens.HaarWithSingulars(UniformSingular(a, b))
    if name == "bernoulli_rademacher":
        return ens.BernoulliRademacher(float(arg))
    raise ValueError(f"unknown y prior {text!r}")


def _resolve_estimator(name):
    name = name.strip()
    match = _THRESHOLD.match(name)
    if match:
        h = float(match.group(1))
        if not 0.0 <= h <= 1.0:
            raise ValueError("threshold must lie in [0, 1]")
        return "threshold_y", h
    if name not in ESTIMATORS:
        raise ValueError(f"unknown estimator {name!r}")
    return name, None


def parse_config(text, **overrides):
    """Parse ``key = value`` text into an :class:`ExperimentConfig`."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read_string("[run]\n" + text)
    sec = parser["run"]
    kwargs = {}
    if "figure" in sec:
        kwargs.update(FIGURES[sec["figure"].strip()].__dict__)
    simple = {"x_prior": str, "y_prior": str, "n": int, "name": str}
    for key, cast in simple.items():
        if key in sec:
            kwargs[key] = cast(sec[key].strip())
    if "alphas" in sec:
        kwargs["alphas"] = _floats(sec["alphas"])
    if "kappas" in sec:
        kwargs["kappas"] = _floats(sec["kappas"])
    if "seeds" in sec:
        kwargs["seeds"] = _ints(sec["seeds"])
    if "estimators" in sec:
        kwargs["estimators"] = tuple(
            t.strip() for t in re.split(r",(?![^(]*\))", sec["estimators"]) if t.strip())
    if "eta" in sec:
        kwargs["eta_override"] = float(sec["eta"])
    known = set(simple) | {"alphas", "kappas", "seeds", "estimators", "eta", "figure"}
    unknown = set(sec) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    kwargs.update(overrides)
    return ExperimentConfig(**kwargs)


_KAPPAS = (0.1, 0.3, 0.6, 1.0, 2.0, 3.0, 4.0, 5.0)

FIGURES = {
    "x_wishart": ExperimentConfig(
        name="x_wishart", x_prior="wishart:0.25", alphas=(0.5,), kappas=_KAPPAS,
        estimators=("rie_x", "oracle_x", "sqrt_x2")),
    "x2_wishart": ExperimentConfig(
        name="x2_wishart", x_prior="wishart:0.25", alphas=(0.5,), kappas=_KAPPAS,
        estimators=("rie_x2",)),
    "x2_wigner": ExperimentConfig(
        name="x2_wigner", x_prior="wigner", alphas=(0.5,), kappas=_KAPPAS,
        estimators=("rie_x2",)),
    "y_uniform": ExperimentConfig(
        name="y_uniform", x_prior="shifted_wigner:3", y_prior="uniform:1:3",
        alphas=(0.5,), kappas=_KAPPAS, estimators=("rie_y", "oracle_y")),
    "y_gaussian": ExperimentConfig(
        name="y_gaussian", x_prior="shifted_wigner:3", alphas=(0.5,), kappas=_KAPPAS,
        estimators=("rie_y", "oracle_y")),
    "mf_c1": ExperimentConfig(
        name="mf_c1", x_prior="shifted_wigner:1", alphas=(0.5,), kappas=_KAPPAS,
        estimators=("rie_x", "oracle_x", "rie_y", "oracle_y", "denoise_xy",
                    "product_xy", "oracle_xy")),
    "y_alpha2_gaussian": ExperimentConfig(
        name="y_alpha2_gaussian", x_prior="shifted_wigner:3", alphas=(2.0,),
        kappas=_KAPPAS, estimators=("rie_y", "oracle_y")),
    "y_alpha2_uniform": ExperimentConfig(
        name="y_alpha2_uniform", x_prior="shifted_wigner:3", y_prior="uniform:1:3",
        alphas=(2.0,), kappas=_KAPPAS, estimators=("rie_y", "oracle_y")),
    "x_alpha2_wigner": ExperimentConfig(
        name="x_alpha2_wigner", x_prior="shifted_wigner:3", alphas=(2.0,),
        kappas=_KAPPAS, estimators=("rie_x", "oracle_x")),
    "x_alpha2_wishart": ExperimentConfig(
        name="x_alpha2_wishart", x_prior="wishart:0.25", alphas=(2.0,),
        kappas=_KAPPAS, estimators=("rie_x", "oracle_x")),
    "y_sparse": ExperimentConfig(
        name="y_sparse", x_prior="shifted_wigner:3", y_prior="bernoulli_rademacher:0.5",
        alphas=(0.5,), kappas=(1.0, 2.0, 5.0),
        estimators=("rie_y", "threshold_y(0.5)", "oracle_y")),
    "overlap_x_wigner": ExperimentConfig(
        name="overlap_x_wigner", x_prior="shifted_wigner:3", alphas=(0.5,),
        kappas=(1.0,), seeds=tuple(range(200)), estimators=("rie_x",)),
}


def _spec(config, kappa, alpha, seed):
    n, m = config.dims(alpha)
    return ens.EnsembleSpec(parse_x_prior(config.x_prior), parse_y_prior(config.y_prior),
                            n, m, kappa, seed)


def run_cell(config, kappa_index, alpha_index, seed):
    """Run every estimator of ``config`` on one synthesized instance.

    Returns
    -------
    list of (dict, float)
        Result rows and their wall times, in estimator order.
    """
    kappa = config.kappas[kappa_index]
    alpha = config.alphas[alpha_index]
    spec = _spec(config, kappa, alpha, seed)
    inst = ens.synthesize(spec, cell=(kappa_index, alpha_index))
    svd = ObservationSVD.from_matrix(inst.s)
    ev = SpectralEvaluator(svd.gammas, eta=config.eta_override)
    cache = {}

    def get(key, build):
        if key not in cache:
            cache[key] = build()
        return cache[key]

    def x_est():
        return get("x", lambda: estimate_x(ev, spec.rho_x, spec.mu_y, spec.mu_w, kappa))

    def x2_est():
        return get("x2", lambda: estimate_x2(ev, spec.mu_y, spec.mu_w, kappa))

    def y_est():
        return get("y", lambda: estimate_y(ev, spec.rho_x, spec.mu_w, kappa))

    def score(name):
        kind, h = _resolve_estimator(name)
        if kind == "rie_x":
            est = x_est()
            return est.matrix(svd.u), inst.x, est
        if kind == "rie_x2":
            est = x2_est()
            return est.matrix(svd.u, est.xi2), inst.x @ inst.x, est
        if kind == "sqrt_x2":
            est = sqrt_psd_estimate(x2_est())
            return est.matrix(svd.u), inst.x, est
        if kind == "oracle_x":
            est = oracle_x(svd, inst.x)
            return est.matrix(svd.u), inst.x, est
        if kind == "rie_y":
            est = y_est()
            return est.matrix(svd.u, svd.v), inst.y, est
        if kind == "oracle_y":
            est = oracle_y(svd, inst.y)
            return est.matrix(svd.u, svd.v), inst.y, est
        if kind == "threshold_y":
            est = y_est()
            return threshold_sparse(est.matrix(svd.u, svd.v), h, spec.n), inst.y, est
        xy = inst.x @ inst.y
        if kind == "denoise_xy":
            est = denoise_xy(ev, spec.mu_w, kappa)
            return est.matrix(svd.u, svd.v), xy, est
        if kind == "oracle_xy":
            est = oracle_xy(svd, inst.x, inst.y)
            return est.matrix(svd.u, svd.v), xy, est
        if kind == "product_xy":
            ex, ey = x_est(), y_est()
            return ex.matrix(svd.u) @ ey.matrix(svd.u, svd.v), xy, ey
        raise ValueError(name)

    rows = []
    for name in config.estimators:
        start = time.perf_counter()
        row = {"estimator": name, "kappa": kappa, "alpha": alpha, "n": spec.n,
               "m": spec.m, "seed": seed}
        try:
            est_matrix, truth, est = score(name)
            report = normalized_mse(est_matrix, truth, kappa, seed, name)
            edges = est.edge_flags
            row.update(normalized_mse=report.normalized_mse, raw_mse=report.raw_mse,
                       edge_modes=int(np.count_nonzero(edges)) if edges is not None else 0,
                       max_residual=float(getattr(est, "residual", 0.0)), status="ok")
        except (SolverError, ValueError, np.linalg.LinAlgError) as exc:
            row.update(normalized_mse=float("nan"), raw_mse=float("nan"), edge_modes=0,
                       max_residual=float(getattr(exc, "residual", float("nan"))),
                       status=f"error: {type(exc).__name__}: {exc}".replace("\n", " "))
        rows.append((row, time.perf_counter() - start))
    return rows


def _cell_job(args):
    config, ki, ai, seed = args
    return (ki, ai, seed), run_cell(config, ki, ai, seed)


def _fmt(value):
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _write_csv(path, fields, rows, meta):
    buf = io.StringIO()
    buf.write(f"# {SCHEMA_VERSION}\n")
    for key, value in meta:
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([_fmt(row[f]) for f in fields])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def aggregate(rows):
    """Mean and standard error of ``normalized_mse`` over seeds."""
    groups = {}
    for row in rows:
        key = (row["estimator"], row["kappa"], row["alpha"], row["n"], row["m"])
        groups.setdefault(key, []).append(row["normalized_mse"])
    out = []
    for key, values in groups.items():
        vals = np.asarray([v for v in values if np.isfinite(v)], dtype=float)
        mean = float(vals.mean()) if vals.size else float("nan")
        stderr = float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0
        out.append(dict(zip(AGGREGATE_FIELDS[:5], key), count=int(vals.size),
                        mean=mean, stderr=stderr))
    return out


def run(config, out_dir=None, workers=1, seed_offset=0):
    """Execute the sweep and write the CSV files.

    Parameters
    ----------
    config : ExperimentConfig
    out_dir : str, optional
        Defaults to ``config.output_dir``. Created if missing.
    workers : int
        Process count; results do not depend on it.
    seed_offset : int
        Added to every seed.

    Returns
    -------
    rows : list of dict
        Sorted result rows (also written to ``results.csv``).
    summary : list of dict
        Aggregated rows (also written to ``aggregate.csv``).
    """
    out_dir = config.output_dir if out_dir is None else out_dir
    os.makedirs(out_dir, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise PermissionError(f"cannot write to {out_dir}")
    seeds = tuple(int(s) + int(seed_offset) for s in config.seeds)
    config = replace(config, seeds=seeds)
    jobs = [(config, ki, ai, s) for ki in range(len(config.kappas))
            for ai in range(len(config.alphas)) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_cell_job, jobs))
    else:
        results = [_cell_job(job) for job in jobs]
    order = {name: i for i, name in enumerate(config.estimators)}
    flat = []
    for (ki, ai, seed), cell_rows in results:
        for row, elapsed in cell_rows:
            flat.append(((order[row["estimator"]], ki, ai, seed), row, elapsed))
    flat.sort(key=lambda item: item[0])
    rows = [row for _, row, _ in flat]
    meta = [("figure", config.name), ("x_prior", config.x_prior),
            ("y_prior", config.y_prior), ("n", config.n),
            ("eta", "scale-relative" if config.eta_override is None else config.eta_override)]
    _write_csv(os.path.join(out_dir, "results.csv"), RESULT_FIELDS, rows, meta)
    summary = aggregate(rows)
    _write_csv(os.path.join(out_dir, "aggregate.csv"), AGGREGATE_FIELDS, summary, meta)
    timing_rows = [dict(row, wall_time=elapsed) for _, row, elapsed in flat]
    _write_csv(os.path.join(out_dir, "timings.csv"),
               ["estimator", "kappa", "alpha", "seed", "wall_time"], timing_rows, meta)
    return rows, summary


def _overlap_job(args):
    config, kappa, alpha, seed, factor, mode_indices, fixed, eta_scale = args
    spec = _spec(config, kappa, alpha, seed)
    streams = ens.substreams(seed, (0, 0))
    # fixed = (matrix, left vectors, spectrum, right vectors or None)
    if factor == "x":
        x = fixed[0]
        y = ens.sample_y(spec, streams["y"])
    else:
        x = ens.sample_x(spec, streams["x"])
        y = fixed[0]
    w = ens.sample_w(spec, streams["w"])
    s = np.sqrt(kappa) * (x @ y) + w
    # overlaps are sign-free, so a thin SVD without sign fixing suffices
    u, gammas, vt = np.linalg.svd(s, full_matrices=False)
    ev = SpectralEvaluator(SingularSpectrum(gammas, *s.shape), eta=config.eta_override)
    idx = np.asarray(mode_indices)
    # the Lorentzian tails of a finite offset inflate the theory far from
    # the peak, so the curve is evaluated closer to the real axis
    z = gammas[idx] - 1j * eta_scale * ev.eta_at(gammas[idx])
    g = ev.symmetrized_stieltjes(z)
    dens = g.imag / np.pi
    if factor == "x":
        _, vecs, lam, _ = fixed
        emp = spec.n * (u[:, idx].T @ vecs) ** 2
        params = solve_x_params(ev, spec.mu_y, spec.mu_w, z=z, g=g)
        theory = overlap_x_theory(params, lam, dens, kappa=kappa)
    else:
        _, yl, sig, yrt = fixed
        emp = spec.n * (u[:, idx].T @ yl) * (vt[idx] @ yrt.T)
        params = solve_y_params(ev, spec.rho_x, spec.mu_w, z=z, g=g)
        theory = overlap_y_theory(params, sig, dens, kappa=kappa)
    return emp, theory


def emit_overlap_figure(config, mode_indices, out_path=None, factor="x", bins=40,
                        workers=1, theory_eta_scale=0.25):
    """Theory and Monte-Carlo overlaps for fixed ``X`` (or ``Y``).

    The factor named by ``factor`` is drawn once from the first seed and
    kept fixed; the other factor and the noise are redrawn for every seed.
    Overlaps are averaged over seeds and over ``bins`` equal-count groups of
    eigenvalues (singular values for ``Y``), with at most one group per
    value. The theory is evaluated at ``theory_eta_scale`` times the usual
    imaginary offset.

    Returns
    -------
    dict
        Maps each mode index to an array with columns
        ``(lambda, theory, monte_carlo_mean, stderr)``.
    """
    if factor not in ("x", "y"):
        raise ValueError("factor must be 'x' or 'y'")
    if bins < 1:
        raise ValueError("bins must be positive")
    kappa, alpha = config.kappas[0], config.alphas[0]
    base = _spec(config, kappa, alpha, config.seeds[0])
    # a cell key no sweep index can reach
    streams = ens.substreams(config.seeds[0], (2 ** 32 - 1,))
    if factor == "x":
        mat = ens.sample_x(base, streams["x"])
        spectrum, vecs = np.linalg.eigh(mat)
        fixed = (mat, vecs, spectrum, None)
    else:
        mat = ens.sample_y(base, streams["y"])
        yl, sig, yrt = np.linalg.svd(mat, full_matrices=False)
        fixed = (mat, yl, sig, yrt)
        spectrum = sig
    jobs = [(config, kappa, alpha, s, factor, tuple(mode_indices), fixed,
             float(theory_eta_scale))
            for s in config.seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_overlap_job, jobs))
    else:
        results = [_overlap_job(job) for job in jobs]
    emp = np.stack([r[0] for r in results])      # seeds x modes x spectrum
    theory = np.stack([r[1] for r in results])
    groups = np.array_split(np.arange(spectrum.size), min(int(bins), spectrum.size))
    out = {}
    for k, i in enumerate(mode_indices):
        rows = []
        for grp in groups:
            per_seed = emp[:, k, grp].mean(axis=1)
            rows.append((spectrum[grp].mean(), theory[:, k, grp].mean(),
                         per_seed.mean(), per_seed.std(ddof=1) / np.sqrt(per_seed.size)))
        out[int(i)] = np.array(rows)
    if out_path is not None:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# {SCHEMA_VERSION} overlap {factor}\n")
            fh.write("mode,lambda,theory,monte_carlo_mean,stderr\n")
            for i, table in out.items():
                for row in table:
                    fh.write(",".join([str(i)] + [_fmt(float(v)) for v in row]) + "\n")
    return out


def _build_parser():
    p = argparse.ArgumentParser(
        prog="mfrie", description="Monte-Carlo benchmarks for rotation-invariant "
        "estimators in matrix factorization.")
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--figure", choices=sorted(FIGURES), help="named preset")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed-offset", type=int, default=0)
    p.add_argument("--overlap-modes", default=None,
                   help="comma-separated mode indices; writes overlap data instead")
    p.add_argument("--overlap-factor", choices=("x", "y"), default="x")
    return p


def main(argv=None):
    args = _build_parser().parse_args(argv)
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
        if args.figure:
            text = f"figure = {args.figure}\n" + text
        config = parse_config(text)
    elif args.figure:
        config = FIGURES[args.figure]
    else:
        _build_parser().error("one of --config or --figure is required")
    out_dir = args.out or os.path.join("results", config.name)
    if args.overlap_modes:
        os.makedirs(out_dir, exist_ok=True)
        seeds = tuple(s + args.seed_offset for s in config.seeds)
        modes = _ints(args.overlap_modes)
        path = os.path.join(out_dir, f"overlap_{args.overlap_factor}.csv")
        emit_overlap_figure(replace(config, seeds=seeds), modes, path,
                            factor=args.overlap_factor, workers=args.workers)
        print(path)
        return 0
    _, summary = run(config, out_dir, workers=args.workers, seed_offset=args.seed_offset)
    for row in summary:
        print(f"{row['estimator']:>18}  kappa={row['kappa']:<5g} alpha={row['alpha']:<5g} "
              f"mse={row['mean']:.5f} +- {row['stderr']:.5f}  (n={row['count']})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
