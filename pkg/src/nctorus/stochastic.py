"""Monte Carlo realization of the stochastic flows and their vacuum expectations.

The unperturbed flow acts on the monomial ``n`` by the Brownian phase
``exp(i n.w(t))``; its mean is ``exp(t lambda0(n))`` with
``lambda0(n) = -|n|^2 / 2``. The magnetic flow adds the diagonal gauge
correction ``tau = t0_symbol(cfg, n)``.

Two magnetic schemes are available:

- ``multiplicative`` (default): ``f = j * g`` with the drift factor
  ``g_{k+1} = g_k (1 + tau dt)``. The flow stays a phase character up to the
  scalar ``g`` and its mean converges to ``exp(t (lambda0 + tau))``.
- ``additive``: the literal Euler scheme ``f_{k+1} = f_k + (j_{k+1} - j_k) + f_k tau dt``
  whose exact mean solves ``m' = lambda0 exp(lambda0 t) + tau m``.

In both schemes ``f = j + F`` holds per path, with ``F`` the running
correction.

Paths are generated in fixed blocks of ``BLOCK_PATHS`` from Philox streams
keyed by ``SeedSequence(seed, spawn_key=(block,))``, so path ``i`` does not
depend on the ensemble size. Reductions fold blocks in index order.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, List, Literal, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_simpson

from .algebra import TorusElement
from .exceptions import InvertibilityError, ValidationError
from .gauge import GaugeConfig, t0_symbol
from .operators import LatticeWindow, Perturbation, assemble_Lm
from .spectral import Spectrum, hermitian_eigen
from .utils import validate_positive_float, validate_required_int

logger = logging.getLogger(__name__)

PhaseConvention = Literal["natural", "two_pi"]
FlowScheme = Literal["multiplicative", "additive"]
Mode = Tuple[int, int]

BLOCK_PATHS = 1024
PICARD_MAX_ITERATIONS = 200
PICARD_TOL = 1e-15


# ---------------------------------------------------------------------------
# Brownian driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """One 2-d Brownian path given by its ``(2, steps)`` increments."""

    dt: float
    steps: int
    increments: np.ndarray
    seed: int
    index: int

    @property
    def positions(self) -> np.ndarray:
        """``w(k dt)`` for ``k = 0..steps``, shape ``(2, steps + 1)``."""
        out = np.zeros((2, self.steps + 1))
        np.cumsum(self.increments, axis=1, out=out[:, 1:])
        return out


def brownian_block(dt: float, steps: int, seed: int, block: int) -> np.ndarray:
    """Increments of paths ``block*BLOCK_PATHS ...``, shape ``(BLOCK_PATHS, 2, steps)``."""
    stream = np.random.SeedSequence(seed, spawn_key=(block,))
    generator = np.random.Generator(np.random.Philox(stream))
    return generator.standard_normal((BLOCK_PATHS, 2, steps)) * math.sqrt(dt)


def iter_brownian_blocks(
    dt: float, steps: int, n_paths: int, seed: int
) -> Iterator[Tuple[int, np.ndarray]]:
    """Yield ``(first_path_index, increments)`` block by block."""
    dt = validate_positive_float(dt, "dt")
    steps = validate_required_int(steps, "steps")
    n_paths = validate_required_int(n_paths, "n_paths")
    n_blocks = -(-n_paths // BLOCK_PATHS)
    for block in range(n_blocks):
        start = block * BLOCK_PATHS
        count = min(BLOCK_PATHS, n_paths - start)
        yield start, brownian_block(dt, steps, seed, block)[:count]


def sample_brownian(dt: float, steps: int, n_paths: int, seed: int) -> List[BrownianPath]:
    """Deterministic ensemble of Brownian paths."""
    paths: List[BrownianPath] = []
    for start, block in iter_brownian_blocks(dt, steps, n_paths, seed):
        for offset, increments in enumerate(block):
            paths.append(
                BrownianPath(dt=dt, steps=steps, increments=increments, seed=seed, index=start + offset)
            )
    return paths


# ---------------------------------------------------------------------------
# Flows
# ---------------------------------------------------------------------------


def phase_scale(convention: PhaseConvention) -> float:
    if convention == "natural":
        return 1.0
    if convention == "two_pi":
        return 2 * math.pi
    raise ValidationError(f"unknown phase convention: {convention!r}")


def unperturbed_eigenvalue(mode: Mode, convention: PhaseConvention = "natural") -> float:
    """Generator eigenvalue matching the Brownian phase convention."""
    c = phase_scale(convention)
    return -0.5 * c * c * (mode[0] ** 2 + mode[1] ** 2)


def _phases(mode: Mode, increments: np.ndarray, convention: PhaseConvention) -> np.ndarray:
    """Phases for a batch of paths; ``increments`` has shape ``(paths, 2, steps)``."""
    c = phase_scale(convention)
    steps = increments.shape[-1]
    w = np.zeros(increments.shape[:-1] + (steps + 1,))
    np.cumsum(increments, axis=-1, out=w[..., 1:])
    return np.exp(1j * c * (mode[0] * w[..., 0, :] + mode[1] * w[..., 1, :]))


def flow_unperturbed(
    mode: Mode, path: BrownianPath, phase_convention: PhaseConvention = "natural"
) -> np.ndarray:
    """``exp(i n.w(t))`` at every step of the path (``steps + 1`` values)."""
    return _phases(mode, path.increments[None, ...], phase_convention)[0]


def _corrections(j: np.ndarray, tau: complex, dt: float, scheme: FlowScheme) -> np.ndarray:
    """Running correction ``F`` for a batch of unperturbed flows ``j`` (paths, steps+1)."""
    if tau == 0:
        return np.zeros_like(j)
    if scheme == "multiplicative":
        factor = np.cumprod(np.full(j.shape[-1] - 1, 1 + tau * dt, dtype=complex))
        drift = np.concatenate([[1.0 + 0j], factor])
        return j * (drift - 1)
    if scheme == "additive":
        F = np.zeros_like(j)
        for k in range(j.shape[-1] - 1):
            F[..., k + 1] = F[..., k] + (j[..., k] + F[..., k]) * (tau * dt)
        return F
    raise ValidationError(f"unknown flow scheme: {scheme!r}")


@dataclass(frozen=True, eq=False)
class FlowSample:
    """Unperturbed phases ``path_values`` and correction ``F`` of one path."""

    mode: Mode
    path_values: np.ndarray
    correction: np.ndarray
    dt: float
    tau: complex = 0j
    scheme: FlowScheme = "multiplicative"

    @property
    def values(self) -> np.ndarray:
        """Magnetic flow ``f = j + F``."""
        return self.path_values + self.correction


def flow_magnetic(
    mode: Mode,
    cfg: GaugeConfig,
    path: BrownianPath,
    *,
    phase_convention: PhaseConvention = "natural",
    scheme: FlowScheme = "multiplicative",
) -> FlowSample:
    """Magnetic flow on one path with ``tau = t0_symbol(cfg, mode)``."""
    tau = complex(t0_symbol(cfg, mode))
    j = flow_unperturbed(mode, path, phase_convention)
    F = _corrections(j[None, :], tau, path.dt, scheme)[0]
    return FlowSample(mode=tuple(mode), path_values=j, correction=F, dt=path.dt, tau=tau, scheme=scheme)


def vacuum_expectation(samples: Sequence[FlowSample], t: float) -> Tuple[complex, float]:
    """Sample mean and standard error of ``f`` at time ``t``."""
    if not samples:
        raise ValidationError("vacuum expectation needs a nonempty ensemble.")
    t = validate_positive_float(t, "t", allow_zero=True)
    dt = samples[0].dt
    k = int(round(t / dt))
    if k >= samples[0].path_values.size:
        raise ValidationError(f"t={t} lies beyond the simulated horizon.")
    values = np.array([s.values[k] for s in samples])
    mean = complex(values.mean())
    if values.size < 2:
        return mean, 0.0
    spread = float(np.sum(np.abs(values - mean) ** 2)) / (values.size - 1)
    return mean, math.sqrt(spread / values.size)


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------


@dataclass
class _MomentAccumulator:
    """Ordered merge of block means and second moments (complex samples)."""

    count: int = 0
    mean: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    m2: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def merge(self, block: np.ndarray) -> None:
        n_b = block.shape[0]
        mean_b = block.mean(axis=0)
        m2_b = np.sum(np.abs(block - mean_b) ** 2, axis=0)
        if self.count == 0:
            self.count, self.mean, self.m2 = n_b, mean_b, m2_b
            return
        total = self.count + n_b
        delta = mean_b - self.mean
        self.mean = self.mean + delta * (n_b / total)
        self.m2 = self.m2 + m2_b + np.abs(delta) ** 2 * (self.count * n_b / total)
        self.count = total

    @property
    def stderr(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.m2)
        return np.sqrt(self.m2 / (self.count - 1) / self.count)


@dataclass(frozen=True)
class FlowEnsemble:
    """Ensemble statistics of one mode at the recorded times."""

    mode: Mode
    times: Tuple[float, ...]
    n_paths: int
    dt: float
    tau: complex
    scheme: FlowScheme
    phase_convention: PhaseConvention
    unperturbed_mean: Tuple[complex, ...]
    unperturbed_stderr: Tuple[float, ...]
    magnetic_mean: Tuple[complex, ...]
    magnetic_stderr: Tuple[float, ...]
    correction_mean: Tuple[complex, ...]
    max_unit_modulus_defect: float
    max_telescoping_defect: float

    def unperturbed_reference(self) -> Tuple[complex, ...]:
        lam0 = unperturbed_eigenvalue(self.mode, self.phase_convention)
        return tuple(complex(math.exp(t * lam0)) for t in self.times)

    def magnetic_reference(self) -> Tuple[complex, ...]:
        lam0 = unperturbed_eigenvalue(self.mode, self.phase_convention)
        return tuple(magnetic_mean_oracle(lam0, self.tau, t, self.scheme) for t in self.times)


def magnetic_mean_oracle(lam0: float, tau: complex, t: float, scheme: FlowScheme) -> complex:
    """Exact mean of the continuous-time magnetic flow."""
    if scheme == "multiplicative":
        return complex(np.exp(t * (lam0 + tau)))
    if tau == lam0:
        return complex(np.exp(lam0 * t) * (1 + lam0 * t))
    return complex(
        np.exp(tau * t) + lam0 * (np.exp(lam0 * t) - np.exp(tau * t)) / (lam0 - tau)
    )


def discrete_mean(lam0: float, tau: complex, dt: float, k: int, scheme: FlowScheme) -> complex:
    """Exact mean of the Euler scheme after ``k`` steps (no time-discretization bias)."""
    if scheme == "multiplicative":
        return complex(math.exp(lam0 * k * dt) * (1 + tau * dt) ** k)
    mean = 1.0 + 0j
    for i in range(k):
        mean = mean * (1 + tau * dt) + (math.exp(lam0 * (i + 1) * dt) - math.exp(lam0 * i * dt))
    return mean


def simulate_ensemble(
    mode: Mode,
    cfg: Optional[GaugeConfig],
    *,
    dt: float,
    steps: int,
    n_paths: int,
    seed: int,
    record_times: Sequence[float],
    phase_convention: PhaseConvention = "natural",
    scheme: FlowScheme = "multiplicative",
) -> FlowEnsemble:
    """Run the flows block by block and fold the statistics in path order."""
    tau = complex(t0_symbol(cfg, mode)) if cfg is not None else 0j
    record = sorted(float(t) for t in record_times)
    indices = [int(round(t / dt)) for t in record]
    if not indices or indices[-1] > steps:
        raise ValidationError("record times must lie within the simulated horizon.")
    acc_j, acc_f, acc_F = _MomentAccumulator(), _MomentAccumulator(), _MomentAccumulator()
    modulus_defect = 0.0
    telescoping = 0.0
    for start, block in iter_brownian_blocks(dt, steps, n_paths, seed):
        j = _phases(mode, block, phase_convention)
        F = _corrections(j, tau, dt, scheme)
        f = j + F
        modulus_defect = max(modulus_defect, float(np.abs(np.abs(j) - 1).max()))
        telescoping = max(telescoping, float(np.abs((f - j) - F).max()))
        acc_j.merge(j[:, indices])
        acc_f.merge(f[:, indices])
        acc_F.merge(F[:, indices])
        logger.debug("Flow block starting at path %d done", start)
    return FlowEnsemble(
        mode=(int(mode[0]), int(mode[1])),
        times=tuple(record),
        n_paths=n_paths,
        dt=dt,
        tau=tau,
        scheme=scheme,
        phase_convention=phase_convention,
        unperturbed_mean=tuple(complex(v) for v in acc_j.mean),
        unperturbed_stderr=tuple(float(v) for v in acc_j.stderr),
        magnetic_mean=tuple(complex(v) for v in acc_f.mean),
        magnetic_stderr=tuple(float(v) for v in acc_f.stderr),
        correction_mean=tuple(complex(v) for v in acc_F.mean),
        max_unit_modulus_defect=modulus_defect,
        max_telescoping_defect=telescoping,
    )


def drift_convergence(tau: complex, t: float, dt: float) -> Tuple[float, float, float]:
    """Euler drift-factor error at ``dt`` and ``dt/2`` and their ratio.

    The multiplicative scheme's mean is ``E j(t) (1 + tau dt)^(t/dt)``, so
    its bias is carried entirely by this deterministic factor.
    """
    exact = np.exp(tau * t)

    def error(step: float) -> float:
        k = int(round(t / step))
        return float(abs((1 + tau * step) ** k - exact))

    coarse, fine = error(dt), error(dt / 2)
    return coarse, fine, coarse / fine if fine else float("inf")


def perturbed_expectation(
    cfg: GaugeConfig,
    r: Perturbation,
    x: TorusElement,
    w: LatticeWindow,
    t: float,
    *,
    spectrum: Optional[Spectrum] = None,
) -> TorusElement:
    """``exp(t Lm) x`` through the eigenbasis of the assembled ``Lm``."""
    if not cfg.is_hermitian:
        raise ValidationError("perturbed expectation needs hermitian mode.")
    t = validate_positive_float(t, "t", allow_zero=True)
    if t == 0:
        return x
    if spectrum is None:
        spectrum = hermitian_eigen(assemble_Lm(cfg, r, w), vectors=True, source="Lm")
    evolved = spectrum.apply(lambda lam: np.exp(t * lam), w.vector(x))
    return w.element(x.theta, evolved)


# ---------------------------------------------------------------------------
# Scalar-mode moments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentReport:
    """Per-time estimates next to their closed-form reference.

    ``mc_stderr`` is the sampling error for Monte Carlo estimates and the
    step-halving error estimate for quadrature estimates; it is kept strictly
    positive.
    """

    order: int
    times: Tuple[float, ...]
    values: Tuple[float, ...]
    reference: Tuple[float, ...]
    mc_stderr: Tuple[float, ...]

    @property
    def max_deviation(self) -> float:
        return max((abs(v - r) for v, r in zip(self.values, self.reference)), default=0.0)


def _fine_grid(times: Sequence[float], substeps: int) -> Tuple[np.ndarray, np.ndarray]:
    knots = [0.0] + [float(t) for t in times]
    pieces = [np.array([0.0])]
    for a, b in zip(knots[:-1], knots[1:]):
        if b > a:
            pieces.append(np.linspace(a, b, substeps + 1)[1:])
    grid = np.concatenate(pieces)
    where = np.searchsorted(grid, np.asarray(times, dtype=float))
    return grid, where


def _recursion_on_grid(order: int, lam: float, grid: np.ndarray) -> np.ndarray:
    ones = np.ones_like(grid)
    if lam == 0:
        return ones
    current = ones.copy()
    for _ in range(PICARD_MAX_ITERATIONS):
        nxt = ones + lam * cumulative_simpson(current, x=grid, initial=0.0)
        converged = np.max(np.abs(nxt - current)) <= PICARD_TOL * np.max(np.abs(nxt))
        current = nxt
        if converged:
            break
    else:
        logger.warning("Picard iteration for lambda=%g did not converge", lam)
    for _ in range(order - 1):
        current = ones + lam * cumulative_simpson(current, x=grid, initial=0.0)
    return current


def _check_times(t_grid: Sequence[float]) -> List[float]:
    times = [float(t) for t in t_grid]
    if not times:
        raise ValidationError("t_grid must not be empty.")
    if any(t < 0 for t in times) or any(b <= a for a, b in zip(times, times[1:])):
        raise ValidationError("t_grid must be nonnegative and strictly increasing.")
    return times


def moment_recursion(
    r_order: int, lam: float, t_grid: Sequence[float], *, substeps: int = 200
) -> MomentReport:
    """Scalar-mode moments ``E h^(r)(t) = 1 + lam * int_0^t E h^(r-1)(s) ds``.

    Order one is the fixed point of the recursion (``exp(t lam)``); each higher
    order applies one more integral step to the previous one, so every order
    has the reference ``exp(t lam)``. Integrals use cumulative Simpson
    quadrature on a grid that refines each ``t_grid`` interval ``substeps`` times.
    """
    r_order = validate_required_int(r_order, "r_order", minimum=1)
    if lam > 0:
        raise ValidationError("lambda must be <= 0.")
    times = _check_times(t_grid)
    grid, where = _fine_grid(times, substeps)
    coarse_grid, coarse_where = _fine_grid(times, max(2, substeps // 2))
    fine = _recursion_on_grid(r_order, lam, grid)[where]
    coarse = _recursion_on_grid(r_order, lam, coarse_grid)[coarse_where]
    eps = np.finfo(float).eps
    return MomentReport(
        order=r_order,
        times=tuple(times),
        values=tuple(float(v) for v in fine),
        reference=tuple(math.exp(t * lam) for t in times),
        mc_stderr=tuple(
            max(abs(f - c), eps * max(1.0, abs(f))) for f, c in zip(fine, coarse)
        ),
    )


@dataclass(frozen=True)
class VarianceReport(MomentReport):
    """Recursion-route variance (``values``) next to the printed-formula reading (``reference``)."""

    second_moment: Tuple[float, ...] = ()
    printed_second_moment: Tuple[float, ...] = ()

    @property
    def discrepancy(self) -> Tuple[float, ...]:
        return tuple(v - r for v, r in zip(self.values, self.reference))


def variance_report(lam: float, t_grid: Sequence[float], *, substeps: int = 200) -> VarianceReport:
    """Variance ``E h^(2) - (E h^(1))^2`` and the printed closed form, side by side.

    The printed formula reads ``e^{t lam} - 1 - e^{2 t lam}`` in scalar mode; the
    recursion gives ``e^{t lam} - e^{2 t lam}``.
    The second moment is reported the same way: ``e^{t lam}`` from the
    recursion against the printed ``e^{t lam} - 1``.
    """
    if lam == 0:
        raise InvertibilityError("variance formula needs an invertible generator (lambda != 0).")
    first = moment_recursion(1, lam, t_grid, substeps=substeps)
    second = moment_recursion(2, lam, t_grid, substeps=substeps)
    values = tuple(m2 - m1 * m1 for m1, m2 in zip(first.values, second.values))
    printed = tuple(
        (1.0 / lam) * math.exp(t * lam) * lam * (1 - math.exp(-t * lam) - math.exp(t * lam))
        for t in first.times
    )
    stderr = tuple(a + 2 * abs(m1) * b for a, b, m1 in zip(second.mc_stderr, first.mc_stderr, first.values))
    report = VarianceReport(
        order=2,
        times=first.times,
        values=values,
        reference=printed,
        mc_stderr=stderr,
        second_moment=second.values,
        printed_second_moment=tuple(math.expm1(t * lam) for t in first.times),
    )
    logger.info(
        "Variance routes for lambda=%g differ by up to %.3e",
        lam,
        max(abs(d) for d in report.discrepancy),
    )
    return report


@dataclass(frozen=True)
class VarianceDecomposition:
    times: Tuple[float, ...]
    var_unperturbed: Tuple[float, ...]
    m_y: Tuple[float, ...]
    var_magnetic: Tuple[float, ...]


def variance_decomposition(
    lam0: float, tau: float, t_grid: Sequence[float]
) -> VarianceDecomposition:
    """``Var h = Var j - m(y)`` with ``m(y) = y^2 + 2 y (E j + 1)``.

    ``y = exp(t (lam0 + tau)) - exp(t lam0)`` is the gauge correction to the mean.
    """
    times = _check_times(t_grid)
    var_j, m_y, var_h = [], [], []
    for t in times:
        mean_j = math.exp(t * lam0)
        vj = mean_j - mean_j * mean_j
        y = math.exp(t * (lam0 + tau)) - mean_j
        my = y * y + 2 * y * (mean_j + 1)
        var_j.append(vj)
        m_y.append(my)
        var_h.append(vj - my)
    return VarianceDecomposition(tuple(times), tuple(var_j), tuple(m_y), tuple(var_h))
