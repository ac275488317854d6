"""Absorbed mean-field particle systems and their Fokker-Planck limit.

Configs are the same JSON documents the ``amf`` command-line tool reads; every function
accepts either a dict or a path to a JSON file. Relative paths inside a config (tabulated
kernels) resolve against the file's directory.
"""

import json
import os

from . import _core
from ._core import (
    PicardDivergence,
    QuadratureError,
    drifted_killed_density,
    drifted_killed_survival,
    stopped_bm_density,
    stopped_bm_survival,
    w1_distance,
)

__version__ = _core.version()

__all__ = [
    "PicardDivergence",
    "QuadratureError",
    "chaos_sweep",
    "drifted_killed_density",
    "drifted_killed_survival",
    "eval_kernel",
    "fixed_point",
    "simulate",
    "solve_fpe",
    "stopped_bm_density",
    "stopped_bm_survival",
    "validate",
    "w1_distance",
]


def _load(config):
    if isinstance(config, (str, os.PathLike)):
        with open(config) as f:
            return json.dumps(json.load(f)), os.path.dirname(os.path.abspath(config))
    return json.dumps(config), "."


def simulate(config, seed=None, threads=1, paths=False):
    """Run the particle system. Returns time grid, survival fraction, terminal positions and,
    with ``paths=True``, the full (steps + 1) x N position matrix."""
    text, base = _load(config)
    return _core.simulate(text, base, seed, threads, paths)


def solve_fpe(config, kernel):
    """Solve the nonlinear Fokker-Planck equation; returns density, beta, flux and the drift table."""
    text, base = _load(config)
    ktext, _ = _load(kernel)
    return _core.solve_fpe(text, ktext, base)


def fixed_point(config, kernel, tol=1e-8, max_iter=100, damping=1.0, max_splits=4):
    """Picard iteration for the mean-field limit; raises PicardDivergence when it fails."""
    text, base = _load(config)
    ktext, _ = _load(kernel)
    return _core.fixed_point(text, ktext, base, tol, max_iter, damping, max_splits)


def chaos_sweep(config, seed=None, threads=1):
    """Propagation-of-chaos sweep; returns CSV tables (replicas, summary, slopes) and the manifest."""
    text, base = _load(config)
    out = _core.chaos_sweep(text, base, seed, threads)
    out["manifest"] = json.loads(out["manifest"])
    return out


def validate(level="fast", seed=20240917, threads=1):
    """Run the acceptance checks and return one dict per check."""
    return _core.validate(level, seed, threads)


def eval_kernel(kernel, t, x, y):
    ktext, _ = _load(kernel)
    return _core.eval_kernel(ktext, t, x, y)
