"""Command-line entry point: phantoms, MAP and MCMC reconstructions, metrics."""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .arrayio import read_array, write_array, write_pgm
from .basis import SpatialGrid, build_grid
from .config import MODELS, ConfigError, ExperimentConfig, load_config
from .exceptions import DegeneratePointError
from .forward import (
    ForwardOp,
    NoiseModel,
    Observations,
    gauss_newton_apply,
    log_likelihood,
    objective,
    radon_op,
    selection_op,
    whitened_potential,
)
from .infer import MapOptions, MapResult, McmcOptions, map_optimize, stderr_progress, wn_mcmc_run
from .metrics import metrics_row, report, rle, write_metrics_csv
from .phantoms import CtPhantomSpec, phantom_annulus, phantom_dynamic_ct
from .prior import PriorSpec, SpaceTimeField, build_prior, init_whitened, transform_T
from .tkernel import TemporalKernel, matern_cov, uniform_time_grid

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


@dataclass
class Problem:
    cfg: ExperimentConfig
    grid: SpatialGrid
    t_grid: np.ndarray
    truth: SpaceTimeField
    op: ForwardOp
    noise: NoiseModel
    obs: Observations
    spec: PriorSpec

    @property
    def norm_variant(self) -> str:
        # Space-time tables for the annulus use the (inf, 1) norm; CT images use Frobenius.
        return "infty_1" if self.cfg.experiment == "annulus-regression" else "frobenius"


def rng_streams(seed: int):
    """Independent generators for data, initialization and sampling."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


def make_truth(cfg: ExperimentConfig, grid, t) -> SpaceTimeField:
    if cfg.experiment == "annulus-regression":
        return phantom_annulus(grid, t)
    spec = CtPhantomSpec.from_dicts(cfg.phantom) if cfg.phantom else None
    return phantom_dynamic_ct(grid, t, spec)


def ct_angles(cfg: ExperimentConfig) -> np.ndarray:
    n_a, J = cfg.forward.angles, cfg.time.J
    base = np.linspace(0.0, np.pi, n_a, endpoint=False)
    if not cfg.forward.rotate_angles:
        return base
    return np.array([base + j * np.pi / (n_a * J) for j in range(J)])


def build_problem(cfg: ExperimentConfig, rng: np.random.Generator) -> Problem:
    grid = build_grid(cfg.grid.nx, cfg.grid.ny)
    t = uniform_time_grid(cfg.time.J, cfg.time.t0, cfg.time.t1)
    truth = make_truth(cfg, grid, t)
    J = cfg.time.J
    if cfg.experiment == "annulus-regression":
        op = selection_op(grid.I, J)
        noise = NoiseModel.isotropic(cfg.forward.sigma)
    else:
        op = radon_op(grid, ct_angles(cfg), cfg.forward.detectors, J)
        clean = op.apply(truth.values)
        noise = NoiseModel(sigma2=np.array([(cfg.forward.relative_noise * np.linalg.norm(y)) ** 2 / y.size
                                            for y in clean]))
    clean = op.apply(truth.values)
    data = [y + noise.sample(rng, y.size, j) for j, y in enumerate(clean)]
    obs = Observations(data, t)

    q, identity = cfg.effective()
    k = cfg.prior.kernel
    kern = TemporalKernel(t, cfg.prior.kappa, k.rho, k.nu, k.s_exp, identity=identity)
    spec = build_prior(grid, matern_cov(kern), q=q, s=cfg.prior.s, L=cfg.prior.L, kind=cfg.prior.basis)
    return Problem(cfg, grid, t, truth, op, noise, obs, spec)


def solve_map(p: Problem, rng, progress=None) -> tuple[MapResult, SpaceTimeField]:
    m = p.cfg.map
    opts = MapOptions(max_iter=m.max_iter, grad_tol=m.grad_tol, step_tol=m.step_tol, memory=m.memory)
    f = objective(p.obs, p.op, p.noise, p.spec, jacobian=m.jacobian)

    def err(z):
        return rle(transform_T(z, p.spec), p.truth, p.norm_variant)

    res = map_optimize(f, init_whitened(rng, p.spec, m.init_scale), opts, error_fn=err, progress=progress)
    return res, transform_T(res.x, p.spec)


def sample_posterior(p: Problem, z0, rng, progress=None):
    """Run the chain from ``z0`` and return it with the posterior-mean field."""
    c = p.cfg.mcmc
    opts = McmcOptions(step_size=c.step_size, leapfrog_steps=c.leapfrog_steps, beta=c.beta, alpha=c.alpha,
                       n_samples=c.n_samples, n_burnin=c.n_burnin, thin=c.thin, adapt=c.adapt,
                       target_accept=c.target_accept, rank=c.rank)
    pot = whitened_potential(p.obs, p.op, p.noise, p.spec)
    gn = None
    if c.beta > 0:
        def gn(z, v):
            return gauss_newton_apply(z, v, p.op, p.noise, p.spec)
    chain = wn_mcmc_run(pot, z0, opts, rng, gn_hessian=gn, progress=progress)
    mean = np.mean([transform_T(z, p.spec).values for z in chain.samples], axis=0)
    return chain, SpaceTimeField(mean, p.grid, p.t_grid)


# ---------------------------------------------------------------- output


def frame_indices(cfg: ExperimentConfig) -> list[int]:
    J = cfg.time.J
    return sorted({f % J for f in cfg.output.frames if -J <= f < J})


def save_field(out: Path, name: str, u: SpaceTimeField, cfg: ExperimentConfig) -> None:
    write_array(out / f"{name}.stba", u.values)
    if cfg.output.pgm:
        for j in frame_indices(cfg):
            write_pgm(out / f"{name}_t{j:03d}.pgm", u.frame(j))


def save_observations(out: Path, p: Problem) -> None:
    sizes = {y.size for y in p.obs.data}
    if len(sizes) == 1:
        write_array(out / "observations.stba", np.column_stack(p.obs.data))
    else:
        for j, y in enumerate(p.obs.data):
            write_array(out / f"observations_t{j:03d}.stba", y)


def write_map_trace(path: Path, res: MapResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "objective", "rle"])
        for i, f in enumerate(res.objective_trace):
            e = res.error_trace[i] if i < len(res.error_trace) else float("nan")
            w.writerow([i, repr(float(f)), repr(float(e))])


def write_chain_trace(path: Path, chain) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "potential", "accepted", "delta_energy"])
        for i, (phi, a, e) in enumerate(zip(chain.potential, chain.accepted, chain.energy)):
            w.writerow([i, repr(float(phi)), int(a), repr(float(e))])


def evaluate(p: Problem, u: SpaceTimeField, model: str) -> dict:
    rep = report(u, p.truth, log_likelihood(u.values, p.obs, p.op, p.noise), p.norm_variant)
    return metrics_row(model, p.grid.I, len(p.t_grid), rep, p.cfg.seed)


# ---------------------------------------------------------------- commands


def cmd_phantom(cfg: ExperimentConfig, out: Path, progress) -> None:
    grid = build_grid(cfg.grid.nx, cfg.grid.ny)
    t = uniform_time_grid(cfg.time.J, cfg.time.t0, cfg.time.t1)
    save_field(out, "truth", make_truth(cfg, grid, t), cfg)


def cmd_map(cfg, out: Path, progress, with_mcmc: bool = False) -> None:
    rng_data, rng_init, rng_chain = rng_streams(cfg.seed)
    p = build_problem(cfg, rng_data)
    save_field(out, "truth", p.truth, cfg)
    save_observations(out, p)
    res, u_map = solve_map(p, rng_init, progress)
    save_field(out, "map", u_map, cfg)
    write_map_trace(out / "trace.csv", res)
    rows = [evaluate(p, u_map, cfg.model)]
    if with_mcmc and cfg.mcmc.n_samples > 0:
        chain, u_mean = sample_posterior(p, res.x, rng_chain, progress)
        save_field(out, "posterior_mean", u_mean, cfg)
        write_chain_trace(out / "chain.csv", chain)
        rows.append(evaluate(p, u_mean, f"{cfg.model}-mcmc"))
    write_metrics_csv(out / "metrics.csv", rows)


def cmd_mcmc(cfg, out: Path, progress) -> None:
    if cfg.mcmc.n_samples <= 0:
        raise ConfigError("mcmc.n_samples must be positive for the mcmc command")
    cmd_map(cfg, out, progress, with_mcmc=True)


def cmd_metrics(args, cfg, out: Path) -> None:
    if not (args.truth and args.estimate):
        raise ConfigError("metrics needs --truth and --estimate")
    truth, est = read_array(args.truth), read_array(args.estimate)
    if truth.shape != est.shape:
        raise ConfigError(f"shape mismatch {truth.shape} vs {est.shape}")
    rep = report(est, truth, variant=args.norm)
    I, J = (truth.shape + (1,))[:2]
    row = metrics_row(cfg.model, I, J, rep, cfg.seed)
    write_metrics_csv(out / "compare.csv", [row])
    print(f"rle={rep.rle:.6g} psnr={rep.psnr:.6g} ssim={rep.ssim:.6g}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--model", choices=MODELS + ("time-uncorrelated",))
    common.add_argument("--quiet", action="store_true", help="no progress lines on stderr")

    ap = argparse.ArgumentParser(prog="stbp", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("phantom", parents=[common], help="write the ground-truth field")
    sub.add_parser("map", parents=[common], help="simulate data and compute the MAP estimate")
    sub.add_parser("mcmc", parents=[common], help="MAP followed by posterior sampling")
    m = sub.add_parser("metrics", parents=[common], help="compare two array files")
    m.add_argument("--truth", type=Path)
    m.add_argument("--estimate", type=Path)
    m.add_argument("--norm", choices=("frobenius", "infty_1"), default="frobenius")
    sub.add_parser("run", parents=[common], help="full pipeline: phantom, MAP, optional MCMC, metrics")
    return ap


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.model is not None:
        cfg.model = args.model
    if args.out is not None:
        cfg.out_dir = str(args.out)
    return cfg.validate()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    progress = None if args.quiet else stderr_progress()
    try:
        if args.command == "phantom":
            cmd_phantom(cfg, out, progress)
        elif args.command == "map":
            cmd_map(cfg, out, progress)
        elif args.command == "mcmc":
            cmd_mcmc(cfg, out, progress)
        elif args.command == "metrics":
            cmd_metrics(args, cfg, out)
        else:
            cmd_map(cfg, out, progress, with_mcmc=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError, DegeneratePointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
