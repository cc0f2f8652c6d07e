"""Command-line entry point.

Exit codes: 0 success, 1 a hypothesis check failed, 2 invalid model or
configuration, 3 a numerical method did not converge.  Artifacts go to
``--out``, defaulting to ``$PWEXPAND_OUTPUT`` and then the working
directory.  Every file is written to a temporary name and renamed, so a
failed run leaves no partial output.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import __version__
from .correlation import covariance_operator, covariance_orbit, fit_decay, observable
from .errors import ConvergenceError, InsufficientDataError, ModelFileError, NumericError, PwexpandError
from .hypothesis import derivative_bounds, hypothesis_report
from .io import atomic_write, write_csv, write_json
from .mapcore import induce
from .modelfile import load_model, model_key
from .models import prng_stream
from .ulam import (
    UlamOperator,
    assemble,
    build_grid,
    marginal_consistency,
    marginal_x,
    marginal_y_rescaled,
    peripheral_spectrum,
    stationary_density,
    stationary_residual,
)

log = logging.getLogger("pwexpand")

OUTPUT_ENV = "PWEXPAND_OUTPUT"
EXIT_OK, EXIT_FAIL, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3


class ConfigError(PwexpandError):
    """Invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    model: str = "nonlinear"
    a: Optional[int] = None
    b: Optional[int] = None
    L: float = 1.0
    grid: tuple = (128, 96)
    samples_per_cell: int = 36864
    seed: int = 0
    eps0: Optional[float] = None
    alpha: Optional[float] = None
    kmax: int = 20
    out: Optional[str] = None

    def __post_init__(self):
        nx, ny = self.grid
        if not (2 <= nx <= 4096 and 2 <= ny <= 4096):
            raise ConfigError("grid sizes must lie in [2, 4096]")
        if not 16 <= self.samples_per_cell <= 1 << 20:
            raise ConfigError("samples per cell must lie in [16, 2^20]")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if not 0 <= self.kmax <= 10_000:
            raise ConfigError("kmax must lie in [0, 10000]")
        if not self.L > 0:
            raise ConfigError("L must be positive")
        if self.alpha is not None and not 0 < self.alpha <= 1:
            raise ConfigError("alpha must lie in (0, 1]")
        if self.eps0 is not None and not self.eps0 > 0:
            raise ConfigError("eps0 must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - names
        if extra:
            raise ConfigError(f"unknown configuration keys: {sorted(extra)}")
        d = dict(d)
        if "grid" in d:
            d["grid"] = parse_grid(d["grid"]) if isinstance(d["grid"], str) else tuple(int(v) for v in d["grid"])
        return cls(**d)

    @property
    def source(self) -> str:
        """Model source string understood by :func:`load_model`."""
        if self.model in ("linear", "linear-example"):
            if self.a is None or self.b is None:
                raise ConfigError("the linear model needs --a and --b")
            return f"linear-example:{self.a},{self.b},{self.L!r}"
        return self.model

    def out_dir(self) -> Path:
        return Path(self.out or os.environ.get(OUTPUT_ENV) or ".")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["grid"] = list(self.grid)
        d.pop("out")
        return d


def parse_grid(text: str) -> tuple:
    try:
        nx, ny = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"grid must look like 128x96, got {text!r}") from None
    return nx, ny


# ---------------------------------------------------------------------------
# model and operator plumbing


def load_system(cfg: RunConfig):
    m = load_model(cfg.source)
    if cfg.alpha is not None:
        m = dataclasses.replace(m, alpha=cfg.alpha)
    A = m.declared_A if m.declared_A is not None else derivative_bounds(m, seed=cfg.seed).A
    return m, induce(m, A)


def _cache_key(cfg: RunConfig) -> str:
    payload = {
        "model": model_key(cfg.source),
        "grid": list(cfg.grid),
        "samples_per_cell": cfg.samples_per_cell,
        "seed": cfg.seed,
        "version": __version__,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:20]


def cache_path(cfg: RunConfig) -> Path:
    return cfg.out_dir() / ".cache" / f"ulam-{_cache_key(cfg)}.npz"


def _save_operator(path: Path, op: UlamOperator) -> None:
    import io as _io

    buf = _io.BytesIO()
    m = op.matrix
    np.savez(
        buf,
        data=m.data,
        indices=m.indices,
        indptr=m.indptr,
        shape=np.array(m.shape),
        dead=op.dead,
        meta=np.array([op.samples_per_cell, op.rng_seed, op.grid.nx, op.grid.ny]),
    )
    atomic_write(path, buf.getvalue(), mode="wb")


def _load_operator(path: Path, grid, cfg: RunConfig) -> UlamOperator:
    with np.load(path) as z:
        meta = z["meta"].tolist()
        if meta != [cfg.samples_per_cell, cfg.seed, grid.nx, grid.ny]:
            raise ValueError("cache metadata does not match the configuration")
        mat = sp.csr_matrix((z["data"], z["indices"], z["indptr"]), shape=tuple(z["shape"]))
        dead = z["dead"]
    if mat.shape != (grid.n, grid.n) or dead.shape != (grid.n,):
        raise ValueError("cached matrix has the wrong shape")
    rows = np.asarray(mat.sum(axis=1)).ravel()
    if not np.all(np.isfinite(mat.data)) or np.any(mat.data < 0) or np.max(np.abs(rows - 1.0)) > 1e-9:
        raise ValueError("cached matrix is not row-stochastic")
    return UlamOperator(grid=grid, matrix=mat, samples_per_cell=cfg.samples_per_cell, rng_seed=cfg.seed, dead=dead)


def get_operator(cfg: RunConfig, system) -> UlamOperator:
    """Assemble the Ulam matrix, reusing the on-disk cache when valid."""
    grid = build_grid(system, *cfg.grid)
    path = cache_path(cfg)
    if path.exists():
        try:
            return _load_operator(path, grid, cfg)
        except Exception as exc:  # any unreadable cache is rebuilt
            log.warning("operator cache %s is unusable (%s); rebuilding", path, exc)
    op = assemble(system, grid, cfg.samples_per_cell, cfg.seed)
    _save_operator(path, op)
    return op


def _stem(cfg: RunConfig) -> str:
    src = cfg.source
    if Path(src).is_file():
        return Path(src).stem
    return src.replace(":", "_").replace(",", "_")


# ---------------------------------------------------------------------------
# commands


def cmd_check(cfg: RunConfig, args) -> int:
    m, _ = load_system(cfg)
    rep = hypothesis_report(m, seed=cfg.seed)
    path = cfg.out_dir() / f"check_{_stem(cfg)}.json"
    d = rep.to_dict()
    d["config"] = cfg.to_dict()
    write_json(path, d)
    for c in rep.checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}")
    if rep.constants is not None:
        k = rep.constants
        print(f"A={k.A!r} M={k.M!r} gamma={k.gamma!r} s={k.s!r} eta={k.eta!r}")
    print(f"overall: {'pass' if rep.passed else 'fail'}  ({path})")
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_model(cfg: RunConfig, args) -> int:
    m, system = load_system(cfg)
    info = {
        "name": m.name,
        "L": m.L,
        "alpha": m.alpha,
        "Y": m.Y,
        "branches": len(m.branches),
        "branch_ids": [m.branches[0].id, m.branches[-1].id],
        "A": system.A,
        "gamma": system.gamma,
        "omega": list(system.omega),
    }
    if m.declared_M is not None:
        info["M"] = m.declared_M
    print(json.dumps(info, indent=2))
    return EXIT_OK


def cmd_density(cfg: RunConfig, args) -> int:
    _, system = load_system(cfg)
    op = get_operator(cfg, system)
    h = stationary_density(op)
    g = op.grid
    xc, yc = g.centers()
    path = cfg.out_dir() / f"density_{_stem(cfg)}.csv"
    write_csv(path, ["x", "y", "value"], zip(xc.tolist(), yc.tolist(), h.tolist()), cfg.to_dict())
    const = 1.0 / g.area
    dev = float(np.max(np.abs(h - const)) / const)
    print(f"sup relative deviation from constant: {dev!r}")
    print(f"stationarity residual: {stationary_residual(op, h)!r}")
    print(f"dead fraction: {op.dead_fraction!r}  ({path})")
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, args) -> int:
    _, system = load_system(cfg)
    op = get_operator(cfg, system)
    rep = peripheral_spectrum(op, delta=args.delta)
    d = rep.to_dict()
    d["config"] = cfg.to_dict()
    path = cfg.out_dir() / f"spectrum_{_stem(cfg)}.json"
    write_json(path, d)
    print(f"r={rep.r} gap={rep.gap!r}  ({path})")
    return EXIT_OK


def cmd_marginal(cfg: RunConfig, args) -> int:
    _, system = load_system(cfg)
    op = get_operator(cfg, system)
    h = stationary_density(op)
    fx = marginal_x(h, op.grid)
    fy = marginal_y_rescaled(h, op.grid, system.gamma)
    # the two expressions live on different bins (grid columns vs rescaled rows)
    path = cfg.out_dir() / f"marginal_{_stem(cfg)}.csv"
    for dens, target in ((fx, path), (fy, cfg.out_dir() / f"marginal_from_y_{_stem(cfg)}.csv")):
        rows = zip(dens.edges[:-1].tolist(), dens.edges[1:].tolist(), dens.values.tolist())
        write_csv(target, ["x_left", "x_right", "value"], rows, cfg.to_dict())
    print(f"integral: {fx.integral()!r}")
    print(f"marginal consistency (L1): {marginal_consistency(h, op.grid, system.gamma)!r}  ({path})")
    return EXIT_OK


def cmd_correlate(cfg: RunConfig, args) -> int:
    _, system = load_system(cfg)
    F, H = observable(args.F, system.L), observable(args.H, system.L)
    out = cfg.out_dir()
    summary = {"config": cfg.to_dict(), "F": F.name, "H": H.name}
    methods = ["operator", "orbit"] if args.method == "both" else [args.method]
    for method in methods:
        if method == "operator":
            op = get_operator(cfg, system)
            series = covariance_operator(op, stationary_density(op), F, H, cfg.kmax)
        else:
            series = covariance_orbit(system, F, H, cfg.kmax, orbit_len=args.orbit_len, seed=cfg.seed)
        path = out / f"cov_{method}_{_stem(cfg)}_{F.name}_{H.name}.csv".replace(":", "-")
        write_csv(path, ["k", "cov", "stderr"], series.rows(), {**cfg.to_dict(), "method": method})
        try:
            fit = fit_decay(series)
            summary[method] = fit.to_dict()
            print(f"{method}: rho_hat={fit.rho_hat!r} C_hat={fit.C_hat!r} lags={len(fit.lags)}  ({path})")
        except InsufficientDataError as exc:
            summary[method] = {"error": str(exc)}
            print(f"{method}: no fit ({exc})  ({path})")
    write_json(out / f"fit_{_stem(cfg)}_{F.name}_{H.name}.json".replace(":", "-"), summary)
    return EXIT_OK


def cmd_prng(cfg: RunConfig, args) -> int:
    if cfg.a is None or cfg.b is None:
        raise ConfigError("prng needs --a and --b")
    try:
        x0, x1 = (float(v) for v in args.seed_pair.split(","))
    except ValueError:
        raise ConfigError("--seed must be two reals: x0,x1") from None
    xs = prng_stream(cfg.a, cfg.b, cfg.L, (x0, x1), args.n)
    text = "".join(f"{v!r}\n" for v in xs.tolist())
    if args.output:
        atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser, with_model: bool = True) -> None:
    if with_model:
        p.add_argument("--model", help="nonlinear, linear, a built-in name or a JSON model file")
    p.add_argument("--a", type=int)
    p.add_argument("--b", type=int)
    p.add_argument("--L", type=float)
    p.add_argument("--grid", help="cells as NXxNY, e.g. 128x96")
    p.add_argument("--samples", type=int, dest="samples_per_cell", help="Monte Carlo samples per cell")
    p.add_argument("--eps0", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--kmax", type=int)
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or .)")
    p.add_argument("--config", help="JSON file with run configuration keys")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pwexpand", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, func in (("check", cmd_check), ("density", cmd_density), ("marginal", cmd_marginal)):
        p = sub.add_parser(name)
        _common(p)
        p.add_argument("--seed", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("model")
    p.add_argument("kind", nargs="?", help="nonlinear, linear or a model source")
    _common(p)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("spectrum")
    _common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--delta", type=float, default=0.05)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("correlate")
    _common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--F", default="id")
    p.add_argument("--H", default="id")
    p.add_argument("--method", choices=("operator", "orbit", "both"), default="operator")
    p.add_argument("--orbit-len", type=int, default=None)
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("prng")
    _common(p, with_model=False)
    p.add_argument("--seed", dest="seed_pair", default="0.1234,0.5678", help="initial pair x0,x1")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--output", help="file instead of standard output")
    p.set_defaults(func=cmd_prng, model="linear")
    return ap


_FLAG_KEYS = ("model", "a", "b", "L", "grid", "samples_per_cell", "seed", "eps0", "alpha", "kmax", "out")


def config_from_args(args) -> RunConfig:
    d = {}
    if getattr(args, "config", None):
        try:
            d = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config file must hold a JSON object")
    if getattr(args, "kind", None):
        d["model"] = args.kind
    for key in _FLAG_KEYS:
        v = getattr(args, key, None)
        if v is not None and not (key == "model" and getattr(args, "kind", None)):
            d[key] = v
    if args.command == "prng":
        d["model"] = "linear"
    return RunConfig.from_dict(d)


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = config_from_args(args)
        return args.func(cfg, args)
    except (ConfigError, ModelFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConvergenceError, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PwexpandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TypeError as exc:  # bad value types in a config file
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
