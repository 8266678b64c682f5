"""Experiment drivers. Each writes CSV artifacts plus ``summary.json`` under
``cfg.out`` and returns the summary as a dict.

Random streams are split from the config seed: key 1 initialises the
generator, key 2 drives training or sampling, key 3 draws evaluation sets.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .._io import atomic_write_text, write_csv
from ..flowcore.field import DiscriminatorField
from ..flowcore.langevin import langevin_run
from ..flowcore.train import train
from ..generators import LinearGenerator, generator_from_config, save_checkpoint
from ..metrics import MetricSeries, energy_distance, fit_gaussian_moments, mode_coverage, w2_gaussian
from ..numkit import SeededPrng
from .pgm import pgm_load
from .shapes import make_shape, shape_sample


def _streams(seed):
    root = SeededPrng(seed)
    return root.spawn(1), root.spawn(2), root.spawn(3)


def _json_safe(v):
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _write_summary(out, summary):
    text = json.dumps(_json_safe(summary), indent=2, sort_keys=True, allow_nan=False)
    atomic_write_text(os.path.join(out, "summary.json"), text + "\n")


def _write_points(path, x):
    write_csv(path, [f"x{i}" for i in range(x.shape[1])], x.tolist())


def _trace_csv(path, result):
    write_csv(path, result.columns, result.rows)


def _train_run(cfg, target, metric_fns):
    init_rng, train_rng, _ = _streams(cfg.seed)
    gen = generator_from_config(cfg.generator, target.dim, init_rng)
    tc = cfg.train_config()
    loss = cfg.train["loss"]
    kernel = cfg.kernel_spec(dim=target.dim) if cfg.kernel is not None else None
    result = train(loss, gen, target, tc, train_rng, kernel=kernel, metrics=metric_fns(gen))
    os.makedirs(cfg.out, exist_ok=True)
    _trace_csv(os.path.join(cfg.out, "metrics.csv"), result)
    save_checkpoint(os.path.join(cfg.out, "checkpoint.bin"), result.generator)
    final = dict(zip(result.columns, result.rows[-1]))
    summary = {"kind": cfg.kind, "loss": loss, "seed": cfg.seed, "final": final,
               "config": cfg.to_dict()}
    _write_summary(cfg.out, summary)
    summary["result"] = result
    return summary


def _exact_w2(target, g):
    return w2_gaussian(target.mean, target.cov, g.b, g.A @ g.A.T)


def run_gaussian_experiment(cfg):
    """Train a generator on a Gaussian target and log W2 every stride.

    ``w2`` fits moments to ``eval.samples`` generated points from a fixed
    latent set; linear generators also log ``w2_exact`` from ``N(b, A A^T)``.
    """
    target = cfg.density()
    _, _, eval_rng = _streams(cfg.seed)

    def metric_fns(gen):
        z = eval_rng.normal((int(cfg.eval["samples"]), gen.n_in))

        def w2(g):
            fit = fit_gaussian_moments(g.forward(z))
            return w2_gaussian(target.mean, target.cov, fit.mean, fit.cov)

        fns = {"w2": w2}
        if isinstance(gen, LinearGenerator):
            fns["w2_exact"] = lambda g: _exact_w2(target, g)
        return fns

    return _train_run(cfg, target, metric_fns)


def run_gmm_experiment(cfg):
    """Train on a mixture target, logging per-mode coverage and energy distance.

    With ``eval.data_as_generator`` training is skipped and fresh data samples
    stand in for generator output.
    """
    target = cfg.density()
    _, train_rng, eval_rng = _streams(cfg.seed)
    n_eval = int(cfg.eval["metric_samples"])
    radius = float(cfg.eval["radius_multiplier"])
    reference = target.sample(eval_rng, n_eval)
    names = [f"coverage_{k}" for k in range(len(target.components))]

    if cfg.eval["data_as_generator"]:
        x = target.sample(train_rng, n_eval)
        cov = mode_coverage(target, x, radius)
        row = [0, float("nan"), *cov.tolist(), energy_distance(x, reference)]
        os.makedirs(cfg.out, exist_ok=True)
        write_csv(os.path.join(cfg.out, "metrics.csv"), ["iteration", "loss", *names, "energy_distance"], [row])
        summary = {"kind": cfg.kind, "seed": cfg.seed, "data_as_generator": True,
                   "final": dict(zip(["iteration", "loss", *names, "energy_distance"], row)),
                   "config": cfg.to_dict()}
        _write_summary(cfg.out, summary)
        return summary

    def metric_fns(gen):
        z = eval_rng.normal((n_eval, gen.n_in))
        cache = {}

        def coverage(k):
            def fn(g):
                key = g.params.tobytes()
                if cache.get("key") != key:
                    cache["key"] = key
                    cache["x"] = g.forward(z)
                    cache["cov"] = mode_coverage(target, cache["x"], radius)
                return cache["cov"][k]
            return fn

        fns = {name: coverage(k) for k, name in enumerate(names)}
        fns["energy_distance"] = lambda g: energy_distance(g.forward(z), reference)
        return fns

    return _train_run(cfg, target, metric_fns)


def load_particles(cfg, src, n, rng, dim=2):
    """Draw ``n`` particles from a source spec (shape, pgm, unit normal or density)."""
    kind = src["type"]
    if kind == "shape":
        return shape_sample(make_shape(src["name"], int(src.get("size", 64))), n, rng)
    if kind == "pgm":
        return shape_sample(pgm_load(cfg.resolve_path(src["path"])), n, rng)
    if kind == "normal":
        return rng.normal((n, int(src.get("dim", dim))))
    from .config import build_density

    return build_density(src).sample(rng, n)


def run_morph_experiment(cfg):
    """Langevin transport of a source particle set onto a target set.

    Writes ``metrics.csv`` (step, energy distance to the target pool, mean
    squared step) and particle snapshots every ``snapshot_stride`` steps.
    """
    _, run_rng, eval_rng = _streams(cfg.seed)
    lg = cfg.langevin
    pool = load_particles(cfg, cfg.target, int(lg["data_pool"]), eval_rng)
    init = load_particles(cfg, cfg.source, int(lg["particles"]), eval_rng, dim=pool.shape[1])
    if init.shape[1] != pool.shape[1]:
        raise ValueError(f"source dimension {init.shape[1]} differs from target dimension {pool.shape[1]}")
    kernel = cfg.kernel_spec(dim=pool.shape[1])
    stride = int(lg["metric_stride"])
    series = MetricSeries("energy_distance")

    def recorder(t, x):
        if t % stride == 0 or t == lg["steps"]:
            series.append(t, energy_distance(x, pool))

    res = langevin_run(init, pool, kernel, cfg.schedule(), run_rng, scale=float(lg["scale"]),
                       batch_size=int(lg["data_batch"]), recorder=recorder,
                       snapshot_stride=int(lg["snapshot_stride"]))
    os.makedirs(cfg.out, exist_ok=True)
    step_sq = [float("nan"), *res.step_sq.tolist()]
    rows = [[t, v, step_sq[t]] for t, v in zip(series.iterations, series.values)]
    write_csv(os.path.join(cfg.out, "metrics.csv"), ["step", "energy_distance", "step_sq"], rows)
    snap_dir = os.path.join(cfg.out, "snapshots")
    for t, x in res.snapshots:
        _write_points(os.path.join(snap_dir, f"step_{t:05d}.csv"), x)
    _write_points(os.path.join(cfg.out, "final_particles.csv"), res.particles)
    e0 = series.values[0]
    summary = {"kind": cfg.kind, "seed": cfg.seed, "initial_energy_distance": e0,
               "final_energy_distance": series.values[-1], "config": cfg.to_dict()}
    _write_summary(cfg.out, summary)
    summary["series"] = series
    summary["step_sq"] = res.step_sq
    summary["particles"] = res.particles
    return summary


def quiver_field(cfg):
    """Grid nodes and field vectors ``(x, y, u, v, field)`` as an ``(G, 5)`` array.

    The score view evaluates the target score (``field`` is the log-density).
    The flow view gives the direction particles move, ``-grad D``, with data
    centres drawn from the target and generator centres from ``gen_source``
    (``field`` is ``D``).
    """
    target = cfg.density()
    if target.dim != 2:
        raise ValueError(f"quiver export needs a 2-D target, got dimension {target.dim}")
    q = cfg.quiver
    x0, x1, y0, y1 = map(float, q["extent"])
    res = int(q["resolution"])
    gx, gy = np.meshgrid(np.linspace(x0, x1, res), np.linspace(y0, y1, res))
    nodes = np.column_stack((gx.ravel(), gy.ravel()))
    if q["view"] == "score":
        uv = target.score(nodes)
        val = target.logpdf(nodes)
    else:
        _, run_rng, _ = _streams(cfg.seed)
        data = target.sample(run_rng, int(q["n_centers"]))
        gen = data if q["gen_source"] == "data" else run_rng.normal((int(q["n_centers"]), 2))
        disc = DiscriminatorField(data, gen, cfg.kernel_spec(dim=2))
        uv = -disc.grad(nodes)
        val = disc.value(nodes)
    return np.column_stack((nodes, uv, val))


def quiver_export(cfg):
    grid = quiver_field(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    write_csv(os.path.join(cfg.out, "quiver.csv"), ["x", "y", "u", "v", "field"], grid.tolist())
    summary = {"kind": cfg.kind, "seed": cfg.seed, "nodes": int(grid.shape[0]), "config": cfg.to_dict()}
    _write_summary(cfg.out, summary)
    summary["grid"] = grid
    return summary


DRIVERS = {
    "gaussian": run_gaussian_experiment,
    "gmm": run_gmm_experiment,
    "morph": run_morph_experiment,
    "langevin": run_morph_experiment,
    "quiver": quiver_export,
}


def run_experiment(cfg):
    return DRIVERS[cfg.kind](cfg)
