"""Command-line experiment runner.

Three modes share one set of options:

* ``sample`` runs one or more chains and writes ``chain.csv`` and
  ``summary.json`` (plus ``transitions.csv`` with ``--trace``).
* ``geodesic`` integrates a single trajectory without acceptance and writes
  ``trace.csv``.
* ``metric-field`` evaluates the metric on a grid over a 2-D target and writes
  ``metric_field.csv``.

Options can also come from a config file of ``key = value`` lines (or a
previous ``summary.json``); command-line flags take precedence.

Exit codes: 0 success, 1 usage or input error, 2 the run itself failed
(invalid starting point or every transition divergent).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from mongelmc import __version__
from mongelmc import targets as tg
from mongelmc.diagnostics import ESS_POLICIES, gaussian_kl_range, histogram_kl, summarize
from mongelmc.errors import DivergenceError, InitialPointInvalid
from mongelmc.integrator import PhaseState, geodesic_trace, hamiltonian
from mongelmc.metric import MongeConfig, evaluate_point, metric_tensor
from mongelmc.samplers import SAMPLERS, SamplerConfig, make_rng, sample_velocity

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2
MODES = ("sample", "geodesic", "metric-field")
TWO_D = ("banana", "ring", "squiggle")


class UsageError(Exception):
    """Bad flags, config file or inputs; maps to exit code 1."""


class RunFailure(Exception):
    """The experiment ran but could not produce a result; maps to exit code 2."""


@dataclass
class ExperimentSpec:
    """Everything needed to reproduce a run.

    Target parameters left as ``None`` take the target's own defaults.
    ``dim`` is the number of ``x`` coordinates for the funnel (the latent
    ``a`` is extra) and the full dimension for the Gaussian.
    """

    target: str = "gaussian"
    sampler: str = "lmc-monge"
    mode: str = "sample"
    alpha: float = 1.0
    eps: float = 0.1
    lf: int = 10
    n: int = 1000
    warmup: int = 0
    seed: int = 0
    chains: int = 1
    dim: Optional[int] = None
    data: Optional[str] = None
    out: str = "."
    ess_policy: str = "first-negative"
    trace: bool = False
    divergence_threshold: float = 1000.0
    mu: Optional[float] = None
    sigma2_a: Optional[float] = None
    sigma2: Optional[float] = None
    sigma2_y: Optional[float] = None
    a: Optional[float] = None
    prior_var: Optional[float] = None
    x0: Optional[list] = None
    v0: Optional[list] = None
    grid_min: float = -3.0
    grid_max: float = 3.0
    grid_n: int = 25

    def validate(self) -> None:
        if self.target not in tg.REGISTRY:
            raise UsageError(f"unknown target {self.target!r}; choose from {sorted(tg.REGISTRY)}")
        if self.sampler not in SAMPLERS:
            raise UsageError(f"unknown sampler {self.sampler!r}; choose from {sorted(SAMPLERS)}")
        if self.mode not in MODES:
            raise UsageError(f"unknown mode {self.mode!r}; choose from {MODES}")
        if self.ess_policy not in ESS_POLICIES:
            raise UsageError(f"unknown ESS policy {self.ess_policy!r}")
        if not self.eps > 0:
            raise UsageError(f"eps must be > 0, got {self.eps}")
        if not self.alpha >= 0:
            raise UsageError(f"alpha must be >= 0, got {self.alpha}")
        for name in ("lf", "n", "chains", "grid_n"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1")
        if self.warmup < 0:
            raise UsageError("warmup must be >= 0")
        if self.dim is not None and self.dim < 1:
            raise UsageError("dim must be >= 1")
        if self.target in TWO_D and self.dim not in (None, 2):
            raise UsageError(f"target {self.target} is two-dimensional; got --dim {self.dim}")
        if self.target == "logistic" and not self.data:
            raise UsageError("target logistic requires --data <path>")
        if self.target != "logistic" and self.data:
            raise UsageError("--data only applies to the logistic target")
        if self.mode == "metric-field" and not self.grid_max > self.grid_min:
            raise UsageError("grid-max must exceed grid-min")
        if self.mode != "sample" and self.chains != 1:
            raise UsageError("--chains applies to sample mode only")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


FIELD_TYPES = {f.name: f.type for f in fields(ExperimentSpec)}


def _coerce(name: str, raw):
    """Convert a config-file or JSON value to the field's type."""
    kind = FIELD_TYPES[name]
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none", "null")):
        if "Optional" in kind:
            return None
        raise ValueError("a value is required")
    if "list" in kind:
        if isinstance(raw, str):
            return [float(t) for t in raw.replace(",", " ").split()]
        return [float(t) for t in raw]
    if "bool" in kind:
        if isinstance(raw, bool):
            return raw
        text = str(raw).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if "int" in kind:
        value = float(raw)
        if value != int(value):
            raise ValueError(f"expected an integer, got {raw!r}")
        return int(value)
    if "float" in kind:
        return float(raw)
    return str(raw).strip()


def _key(name: str) -> str:
    return name.strip().replace("-", "_")


def load_experiment_config(path) -> dict:
    """Read option values from ``path``.

    Accepts either ``key = value`` lines (``#`` starts a comment, keys use
    the long flag names) or a JSON object; a JSON object with a ``spec``
    member, such as ``summary.json``, is read from that member.

    Raises:
        UsageError: on unreadable files, malformed lines (with the line
            number), unknown keys or bad values.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    if text.lstrip().startswith("{"):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
        obj = obj.get("spec", obj)
        items = [(None, k, v) for k, v in obj.items()]
    else:
        items = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            k, v = line.split("=", 1)
            items.append((lineno, k, v.strip()))
    values = {}
    for lineno, k, v in items:
        where = f"{path}:{lineno}" if lineno else str(path)
        name = _key(k)
        if name not in FIELD_TYPES:
            raise UsageError(f"{where}: unknown key {k.strip()!r}")
        try:
            values[name] = _coerce(name, v)
        except ValueError as exc:
            raise UsageError(f"{where}: bad value for {k.strip()!r}: {exc}") from exc
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mongelmc", description=__doc__.split("\n\n")[0],
                argument_default=argparse.SUPPRESS, allow_abbrev=False)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="key = value file or summary.json; flags override it")
    p.add_argument("--target", help=f"one of {', '.join(sorted(tg.REGISTRY))}")
    p.add_argument("--sampler", help=f"one of {', '.join(SAMPLERS)}")
    p.add_argument("--mode", help=f"one of {', '.join(MODES)}")
    p.add_argument("--alpha", type=float, help="Monge metric scale (0 gives Euclidean)")
    p.add_argument("--eps", type=float, help="step size")
    p.add_argument("--lf", type=int, help="leapfrog steps per trajectory")
    p.add_argument("--n", type=int, help="post-warmup samples per chain")
    p.add_argument("--warmup", type=int, help="discarded initial transitions")
    p.add_argument("--seed", type=int)
    p.add_argument("--chains", type=int, help="independent chains, seeded seed + index")
    p.add_argument("--dim", type=int, help="gaussian dimension or funnel x-dimension")
    p.add_argument("--data", help="CSV of features then a 0/1 label (logistic target)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--ess-policy", dest="ess_policy", help=f"one of {', '.join(ESS_POLICIES)}")
    p.add_argument("--trace", action="store_true", help="also write per-transition diagnostics")
    p.add_argument("--divergence-threshold", dest="divergence_threshold", type=float)
    g = p.add_argument_group("target parameters")
    g.add_argument("--mu", type=float, help="gaussian/funnel mean or ring radius")
    g.add_argument("--sigma2-a", dest="sigma2_a", type=float, help="funnel prior variance of a")
    g.add_argument("--sigma2", type=float, help="gaussian, ring or banana variance")
    g.add_argument("--sigma2-y", dest="sigma2_y", type=float, help="banana noise variance")
    g.add_argument("--a", type=float, help="squiggle frequency")
    g.add_argument("--prior-var", dest="prior_var", type=float, help="logistic prior variance")
    g.add_argument("--x0", type=_floats, help="initial point, comma separated")
    g.add_argument("--v0", type=_floats, help="initial velocity for geodesic mode")
    g = p.add_argument_group("metric-field grid")
    g.add_argument("--grid-min", dest="grid_min", type=float)
    g.add_argument("--grid-max", dest="grid_max", type=float)
    g.add_argument("--grid-n", dest="grid_n", type=int, help="points per axis")
    return p


def resolve_spec(argv) -> ExperimentSpec:
    """Defaults, then the config file, then explicit flags."""
    ns = vars(build_parser().parse_args(argv))
    values = {}
    config = ns.pop("config", None)
    if config:
        values.update(load_experiment_config(config))
    values.update(ns)
    spec = ExperimentSpec(**values)
    spec.validate()
    return spec


# ---- targets ----------------------------------------------------------------

def _pick(value, default):
    return default if value is None else value


def _load_dataset(path):
    path = Path(path)
    try:
        first = path.read_text().splitlines()[0] if path.stat().st_size else ""
    except OSError as exc:
        raise UsageError(f"cannot read dataset {path}: {exc}") from exc
    try:
        [float(t) for t in first.split(",")]
        header = False
    except ValueError:
        header = True
    try:
        return tg.ClassificationDataset.from_file(path, header=header)
    except (OSError, ValueError, IndexError) as exc:
        raise UsageError(f"cannot load dataset {path}: {exc}") from exc


def build_target(spec: ExperimentSpec) -> tg.TargetDensity:
    try:
        if spec.target == "gaussian":
            d = _pick(spec.dim, 2)
            return tg.gaussian_target(np.full(d, _pick(spec.mu, 0.0)), _pick(spec.sigma2, 1.0) * np.eye(d))
        if spec.target == "funnel":
            return tg.funnel_target(_pick(spec.dim, 1), _pick(spec.mu, 0.0), _pick(spec.sigma2_a, 15.0))
        if spec.target == "banana":
            return tg.banana_target(tg.BANANA_Y, _pick(spec.sigma2_y, 0.5), _pick(spec.sigma2, 0.5))
        if spec.target == "ring":
            return tg.ring_target(_pick(spec.mu, 12.0), _pick(spec.sigma2, 0.12))
        if spec.target == "squiggle":
            return tg.squiggle_target(_pick(spec.a, 1.0))
        return tg.logistic_regression_target(_load_dataset(spec.data), _pick(spec.prior_var, 100.0))
    except UsageError:
        raise
    except ValueError as exc:
        raise UsageError(f"invalid parameters for target {spec.target}: {exc}") from exc


def initial_point(spec: ExperimentSpec, target) -> np.ndarray:
    if spec.x0 is not None:
        x0 = np.array(spec.x0, dtype=float)
        if x0.shape != (target.dimension,):
            raise UsageError(f"--x0 has {x0.size} entries, target has dimension {target.dimension}")
        return x0
    x0 = np.zeros(target.dimension)
    if spec.target == "ring":
        x0[0] = target.mu
    return x0


# ---- outputs ----------------------------------------------------------------

def _out_dir(spec: ExperimentSpec) -> Path:
    out = Path(spec.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _write(path: Path, writer) -> None:
    try:
        writer(path)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from exc


def _savetxt(path: Path, rows, header) -> None:
    _write(path, lambda p: np.savetxt(p, rows, fmt="%.17g", delimiter=",",
                                      header=",".join(header), comments=""))


def _write_json(path: Path, obj) -> None:
    _write(path, lambda p: p.write_text(json.dumps(obj, indent=2, allow_nan=True) + "\n"))


def _coord_names(d: int) -> list:
    return [f"x{i + 1}" for i in range(d)]


# ---- modes ------------------------------------------------------------------

def _run_chain(spec: ExperimentSpec, index: int):
    target = build_target(spec)
    cfg = SamplerConfig(alpha=spec.alpha, eps=spec.eps, l_f=spec.lf, n_samples=spec.n,
                        warmup=spec.warmup, seed=spec.seed + index,
                        divergence_energy_threshold=spec.divergence_threshold)
    return SAMPLERS[spec.sampler](target, cfg, initial_point(spec, target))


def run_experiment(spec: ExperimentSpec) -> list:
    """Sample mode. Returns the list of written summary dicts."""
    target = build_target(spec)
    out = _out_dir(spec)
    x0 = initial_point(spec, target)
    try:
        evaluate_point(target, x0)
    except DivergenceError as exc:
        raise RunFailure(f"invalid initial point {x0.tolist()}: {exc}") from exc

    indices = list(range(spec.chains))
    try:
        if spec.chains == 1:
            chains = [_run_chain(spec, 0)]
        else:
            with ProcessPoolExecutor(max_workers=spec.chains) as pool:
                chains = list(pool.map(_run_chain, [spec] * spec.chains, indices))
    except InitialPointInvalid as exc:
        raise RunFailure(str(exc)) from exc

    summaries, failures = [], []
    for i, chain in zip(indices, chains):
        suffix = "" if spec.chains == 1 else f"_{i}"
        names = _coord_names(chain.samples.shape[1])
        _savetxt(out / f"chain{suffix}.csv", chain.samples, names)
        if spec.trace:
            rows = np.column_stack([chain.accepted, chain.divergent, chain.accept_prob, chain.energies])
            _savetxt(out / f"transitions{suffix}.csv", rows,
                     ["accepted", "divergent", "accept_prob", "energy_start", "energy_end"])
        summary = summarize(chain, spec.ess_policy).to_dict()
        if spec.target == "funnel":
            summary["funnel_a_kl"] = histogram_kl(
                chain.samples[:, -1], target.marginal_log_pdf, 40,
                gaussian_kl_range(target.mu, target.sigma2_a))
        summary.update(version=__version__, seed=spec.seed + i, chain_index=i, spec=spec.to_dict())
        _write_json(out / f"summary{suffix}.json", summary)
        summaries.append(summary)
        if chain.divergence_count == chain.n_samples:
            failures.append(i)
    if failures:
        raise RunFailure(f"every transition diverged in chain(s) {failures}")
    return summaries


def run_geodesic(spec: ExperimentSpec) -> dict:
    target = build_target(spec)
    out = _out_dir(spec)
    mcfg = MongeConfig(spec.alpha)
    try:
        pt = evaluate_point(target, initial_point(spec, target))
    except DivergenceError as exc:
        raise RunFailure(f"invalid initial point: {exc}") from exc
    if spec.v0 is not None:
        v0 = np.array(spec.v0, dtype=float)
        if v0.shape != pt.x.shape:
            raise UsageError(f"--v0 has {v0.size} entries, target has dimension {pt.dimension}")
    else:
        v0 = sample_velocity(pt, mcfg, make_rng(spec.seed))
    start = PhaseState(pt, v0)
    positions, drift, result = geodesic_trace(target, start, mcfg,
                                              SamplerConfig(eps=spec.eps, l_f=spec.lf).integrator(),
                                              divergence_threshold=spec.divergence_threshold)
    steps = np.arange(positions.shape[0])[:, None]
    _savetxt(out / "trace.csv", np.hstack([steps, positions]), ["step"] + _coord_names(pt.dimension))
    h0 = hamiltonian(start, mcfg)
    summary = {
        "energy_start": h0,
        "energy_drift": drift,
        "relative_drift": drift / abs(h0) if h0 != 0 else math.nan,
        "steps_completed": positions.shape[0] - 1,
        "diverged": result.diverged,
        "reason": result.reason,
        "v0": v0.tolist(),
        "version": __version__,
        "seed": spec.seed,
        "spec": spec.to_dict(),
    }
    _write_json(out / "summary.json", summary)
    if result.diverged:
        raise RunFailure(f"trajectory diverged: {result.reason}")
    return summary


def _mode_of(target, start) -> np.ndarray:
    from scipy.optimize import minimize

    res = minimize(lambda x: -target.log_density(x), start, jac=lambda x: -target.gradient(x),
                   hess=lambda x: -target.hessian(x), method="trust-exact")
    return res.x


def run_metric_field(spec: ExperimentSpec) -> np.ndarray:
    """Metric entries and eigen-decomposition over a grid, plus a row at the mode."""
    target = build_target(spec)
    if target.dimension != 2:
        raise UsageError(f"metric-field needs a 2-D target; {spec.target} has dimension {target.dimension}")
    out = _out_dir(spec)
    mcfg = MongeConfig(spec.alpha)
    axis = np.linspace(spec.grid_min, spec.grid_max, spec.grid_n)
    points = [(x1, x2) for x2 in axis for x1 in axis]
    rows, best = [], None
    for x in points:
        try:
            pt = evaluate_point(target, x)
        except DivergenceError:
            continue
        rows.append(_metric_row(pt, mcfg, 0))
        if best is None or pt.ell > best.ell:
            best = pt
    if best is not None:
        try:
            rows.append(_metric_row(evaluate_point(target, _mode_of(target, best.x)), mcfg, 1))
        except DivergenceError:
            logger.warning("mode search left the support; no mode row written")
    table = np.array(rows)
    _savetxt(out / "metric_field.csv", table,
             ["x1", "x2", "g11", "g12", "g22", "lambda_min", "lambda_max",
              "u_min1", "u_min2", "u_max1", "u_max2", "is_mode"])
    return table


def _metric_row(pt, mcfg, is_mode):
    G = metric_tensor(pt, mcfg)
    lam, vec = np.linalg.eigh(G)
    return [pt.x[0], pt.x[1], G[0, 0], G[0, 1], G[1, 1], lam[0], lam[1],
            vec[0, 0], vec[1, 0], vec[0, 1], vec[1, 1], is_mode]


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        spec = resolve_spec(argv)
        if spec.mode == "sample":
            summaries = run_experiment(spec)
            for s in summaries:
                print(f"chain {s['chain_index']}: acceptance {s['acceptance_rate']:.3f}, "
                      f"divergences {s['divergence_count']}, min ESS {s['ess_min']}")
        elif spec.mode == "geodesic":
            s = run_geodesic(spec)
            print(f"relative energy drift {s['relative_drift']:.3g} over {s['steps_completed']} steps")
        else:
            table = run_metric_field(spec)
            print(f"wrote {table.shape[0]} metric rows")
    except UsageError as exc:
        print(f"mongelmc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RunFailure as exc:
        print(f"mongelmc: run failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
