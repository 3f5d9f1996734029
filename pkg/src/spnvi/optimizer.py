"""Multi-restart gradient ascent on the exact ELBO."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .circuit import Circuit
from .elbo import ElboObjective
from .polynomial import Polynomial

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptConfig:
    """Adam hyper-parameters and stopping rules.

    ``tol`` stops a restart once the mean ELBO of the last ``window``
    iterations differs from the mean of the window before it by at most
    ``tol`` relative.  Comparing window means rather than the running best
    keeps an oscillating Adam trajectory going until it has settled.  ``time_budget``
    (seconds) caps the whole fit, across restarts.
    """

    iters: int = 1000
    restarts: int = 1
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    tol: float = 1e-7
    window: int = 50
    time_budget: float | None = None
    seed: int = 0
    init_scale: float = 0.5

    def __post_init__(self):
        if self.iters < 1 or self.restarts < 1:
            raise ValueError("iters and restarts must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.tol < 0:
            raise ValueError("tol must be non-negative")
        if self.window < 1:
            raise ValueError("window must be >= 1")


@dataclass
class RestartTrace:
    restart: int
    seed: int
    iters: list[int] = field(default_factory=list)
    elbos: list[float] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)
    best_elbo: float = -math.inf
    aborted: str | None = None


@dataclass
class FitResult:
    best_params: np.ndarray | None
    best_elbo: float
    traces: list[RestartTrace]
    wall_time: float
    seed: int
    best_restart: int | None = None

    @property
    def finite(self) -> bool:
        return math.isfinite(self.best_elbo)

    def write_trace_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["restart", "iter", "elbo", "wall_ms"])
            for tr in self.traces:
                for it, e, ms in zip(tr.iters, tr.elbos, tr.wall_ms):
                    writer.writerow([tr.restart, it, f"{e:.17g}", f"{ms:.3f}"])


def fit(
    structure: Circuit,
    poly: Polynomial,
    offset: float = 0.0,
    config: OptConfig = OptConfig(),
) -> FitResult:
    """Maximize the ELBO over the logits of ``structure``; report the best value seen.

    Each restart draws fresh logits from ``N(0, init_scale)`` seeded with
    ``config.seed + restart``.  Every evaluated ELBO is a valid bound, so the
    result tracks the running maximum over all iterations and restarts.
    A restart that produces a non-finite value or gradient is abandoned.
    """
    objective = ElboObjective(structure, poly, offset)
    start = time.perf_counter()
    deadline = None if config.time_budget is None else start + config.time_budget
    best_elbo, best_params, best_restart = -math.inf, None, None
    traces = []

    for r in range(config.restarts):
        if deadline is not None and r > 0 and time.perf_counter() >= deadline:
            log.info("time budget exhausted after %d restarts", r)
            break
        seed = config.seed + r
        trace = RestartTrace(restart=r, seed=seed)
        traces.append(trace)
        theta = np.random.default_rng(seed).normal(0.0, config.init_scale, structure.num_params)
        m = np.zeros_like(theta)
        v = np.zeros_like(theta)
        window_sums = [0.0]  # prefix sums of this restart's ELBO trace
        for it in range(config.iters):
            with np.errstate(over="ignore", invalid="ignore"):  # non-finite results are handled below
                value, grad = objective.value_and_grad(theta)
            if not (math.isfinite(value) and np.all(np.isfinite(grad))):
                trace.aborted = f"non-finite ELBO or gradient at iteration {it}"
                log.warning("restart %d aborted: %s", r, trace.aborted)
                break
            trace.iters.append(it)
            trace.elbos.append(value)
            trace.wall_ms.append(1e3 * (time.perf_counter() - start))
            if value > trace.best_elbo:
                trace.best_elbo = value
                if value > best_elbo:
                    best_elbo, best_params, best_restart = value, theta.copy(), r
            window_sums.append(window_sums[-1] + value)

            w = config.window
            if it + 1 >= 2 * w:
                recent = (window_sums[-1] - window_sums[-1 - w]) / w
                before = (window_sums[-1 - w] - window_sums[-1 - 2 * w]) / w
                if abs(recent - before) <= config.tol * abs(recent):
                    break
            if deadline is not None and time.perf_counter() >= deadline:
                break

            m = config.beta1 * m + (1 - config.beta1) * grad
            v = config.beta2 * v + (1 - config.beta2) * grad * grad
            m_hat = m / (1 - config.beta1 ** (it + 1))
            v_hat = v / (1 - config.beta2 ** (it + 1))
            theta = theta + config.lr * m_hat / (np.sqrt(v_hat) + config.eps)
        log.debug("restart %d: best %.6f after %d iterations", r, trace.best_elbo, len(trace.iters))

    return FitResult(
        best_params=best_params,
        best_elbo=best_elbo,
        traces=traces,
        wall_time=time.perf_counter() - start,
        seed=config.seed,
        best_restart=best_restart,
    )


def importance_estimate(
    circuit: Circuit, poly: Polynomial, samples: int, seed=None, offset: float = 0.0
) -> tuple[float, float]:
    """Monte Carlo ``ln Z`` estimate with ``q`` as the proposal.

    Returns ``(log_z, standard_error)``, the standard error being the
    delta-method error of ``ln`` of the sample mean.  A diagnostic, not a
    bound.

    Raises:
        ValueError: the circuit does not put mass on every assignment.
    """
    full = circuit.num_vars * math.log(2.0)
    if not math.isclose(circuit.support_log_count(), full, rel_tol=1e-9, abs_tol=1e-9):
        raise ValueError("importance estimate needs a proposal with full support")
    X = circuit.sample_many(samples, seed)
    log_w = poly.evaluate_many(X[:, : poly.num_vars]) - circuit.log_evaluate_many(X)
    log_z = float(logsumexp(log_w) - math.log(samples)) - offset
    scaled = np.exp(log_w - log_w.max())
    se = float(scaled.std(ddof=1) / (math.sqrt(samples) * scaled.mean())) if samples > 1 else math.inf
    return log_z, se
