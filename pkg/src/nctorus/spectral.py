"""Spectra, heat traces and Weyl-asymptotic estimators.

Hermitian operators on the lattice window split into many small blocks (the
gauge-free parts are diagonal, inner derivations only couple modes that differ
by the support of ``r``). ``hermitian_eigen`` finds the connected components of
the sparsity graph and runs a dense Hermitian solver per component, which keeps
the ``N = 48`` windows tractable.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .algebra import TorusElement
from .exceptions import ValidationError
from .gauge import GaugeConfig
from .operators import (
    DiracOperator,
    LatticeWindow,
    MatrixOperator,
    Perturbation,
    SpinorOperator,
    _spinor_left_mul,
    assemble_dirac,
    assemble_L0m,
    assemble_Lm,
    commutator_with_element,
    magnetic_commutator,
    spinor_interior,
    spinor_norm,
)
from .utils import validate_positive_float

logger = logging.getLogger(__name__)

T_MAX = 0.1
KERNEL_RTOL = 1e-8
DEFAULT_RESIDUAL_THRESHOLD = 1e-6


# ---------------------------------------------------------------------------
# Eigendecomposition
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EigenBlock:
    """Eigenpairs of one connected component.

    ``vectors`` is ``None`` for a diagonal block (unit eigenvectors).
    """

    indices: np.ndarray
    eigenvalues: np.ndarray
    vectors: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    source: str
    dim: int
    blocks: Tuple[EigenBlock, ...] = ()
    reconstruction_error: float = 0.0
    boundary_flags: int = 0

    @property
    def has_vectors(self) -> bool:
        return bool(self.blocks)

    def apply(self, fn: Callable[[np.ndarray], np.ndarray], vector: np.ndarray) -> np.ndarray:
        """``f(M) v`` through the stored eigenbasis."""
        if not self.blocks:
            raise ValidationError("spectrum was computed without eigenvectors.")
        out = np.zeros(self.dim, dtype=complex)
        for block in self.blocks:
            v = vector[block.indices]
            if block.vectors is None:
                out[block.indices] = fn(block.eigenvalues) * v
            else:
                V = block.vectors
                out[block.indices] = V @ (fn(block.eigenvalues) * (V.conj().T @ v))
        return out


def _is_diagonal(matrix: sp.csr_matrix) -> bool:
    coo = matrix.tocoo()
    return bool(np.all(coo.row == coo.col))


def hermitian_eigen(
    M: MatrixOperator,
    *,
    vectors: bool = False,
    tol: float = 1e-9,
    source: Optional[str] = None,
) -> Spectrum:
    """Full real spectrum of a Hermitian operator, optionally with eigenvectors."""
    if not M.hermitian:
        raise ValidationError(f"{M.label or 'operator'} is not flagged Hermitian.")
    matrix = M.matrix.tocsr()
    dim = matrix.shape[0]
    label = source or M.label or "operator"
    scale = max(float(np.abs(matrix.data).max()) if matrix.nnz else 0.0, 1e-300)
    started = time.perf_counter()

    if _is_diagonal(matrix):
        diag = np.real(matrix.diagonal())
        blocks = (EigenBlock(np.arange(dim), diag, None),) if vectors else ()
        spectrum = Spectrum(np.sort(diag, kind="stable"), label, dim, blocks)
        logger.debug("Diagonal spectrum for %s (dim=%d)", label, dim)
        return spectrum

    pattern = abs(matrix) + sp.identity(dim, format="csr")
    n_components, labels = connected_components(pattern, directed=False)
    order = np.argsort(labels, kind="stable")
    bounds = np.flatnonzero(np.diff(labels[order])) + 1
    groups = np.split(order, bounds)

    values: List[np.ndarray] = []
    blocks: List[EigenBlock] = []
    worst = 0.0
    for idx in groups:
        if idx.size == 1:
            lam = np.array([matrix[idx[0], idx[0]].real])
            values.append(lam)
            if vectors:
                blocks.append(EigenBlock(idx, lam, np.ones((1, 1), dtype=complex)))
            continue
        dense = matrix[idx][:, idx].toarray()
        if vectors:
            lam, V = la.eigh(dense)
            recon = np.abs(dense - (V * lam) @ V.conj().T).max()
            worst = max(worst, float(recon))
            blocks.append(EigenBlock(idx, lam, V))
        else:
            lam = la.eigh(dense, eigvals_only=True)
        values.append(lam)

    eigenvalues = np.sort(np.concatenate(values), kind="stable")
    relative = worst / scale
    if relative > tol:
        logger.warning(
            "Eigen reconstruction for %s exceeds tolerance: %.3e > %.1e", label, relative, tol
        )
    logger.info(
        "Eigendecomposition of %s: dim=%d blocks=%d (%.2fs)",
        label,
        dim,
        n_components,
        time.perf_counter() - started,
    )
    return Spectrum(eigenvalues, label, dim, tuple(blocks), relative)


def dirac_matrix(D: DiracOperator) -> SpinorOperator:
    """The full Dirac matrix as a (Hermitian-flagged) spinor operator."""
    return SpinorOperator(D.matrix, D.window, hermitian=D.hermitian, label="D")


# ---------------------------------------------------------------------------
# Heat traces and Weyl asymptotics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HeatTraceSeries:
    samples: Tuple[Tuple[float, float], ...]
    window_N: int

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.samples])

    @property
    def traces(self) -> np.ndarray:
        return np.array([v for _, v in self.samples])

    def is_decreasing(self) -> bool:
        traces = self.traces
        return bool(np.all(traces > 0) and np.all(np.diff(traces) <= 0))


@dataclass(frozen=True)
class AsymptoticFit:
    volume: float
    curvature: float
    fit_window: Tuple[float, float]
    residual: float
    volume_stderr: float = 0.0
    curvature_stderr: float = 0.0
    n_samples: int = 0
    reliable: bool = True


def validity_window(N: int) -> Tuple[float, float]:
    """``(t_min, t_max)`` where the truncated trace is trustworthy."""
    return 46.0 / (N * N), T_MAX


def heat_trace(spec: Spectrum, t: float) -> float:
    """``sum_k exp(t lambda_k)`` over the truncated spectrum."""
    t = validate_positive_float(t, "t")
    return math.fsum(np.exp(t * spec.eigenvalues).tolist())


def heat_trace_series(spec: Spectrum, t_grid: Iterable[float], window_N: int) -> HeatTraceSeries:
    times = sorted(float(t) for t in t_grid)
    return HeatTraceSeries(tuple((t, heat_trace(spec, t)) for t in times), window_N)


def fit_weyl_asymptotics(
    series: HeatTraceSeries,
    *,
    t_min: Optional[float] = None,
    t_max: Optional[float] = None,
    residual_threshold: float = DEFAULT_RESIDUAL_THRESHOLD,
) -> AsymptoticFit:
    """Least-squares fit ``trace(t) ~ V/t + c``; curvature is ``c / 6``.

    Samples outside ``[t_min, t_max]`` are ignored; the default window is the
    validity window of the series' truncation. A residual above the threshold
    marks the fit unreliable instead of raising.
    """
    default_min, default_max = validity_window(series.window_N)
    lo = default_min if t_min is None else t_min
    hi = default_max if t_max is None else t_max
    selected = [(t, v) for t, v in series.samples if lo - 1e-15 <= t <= hi + 1e-15]
    if len(selected) < 4:
        raise ValidationError(
            f"need at least 4 samples in [{lo:.6g}, {hi:.6g}], got {len(selected)}."
        )
    t = np.array([s[0] for s in selected])
    y = np.array([s[1] for s in selected])
    A = np.column_stack([1.0 / t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fitted = A @ coef
    residual = float(np.max(np.abs(y - fitted) / np.abs(y)))
    dof = len(selected) - 2
    sigma2 = float(np.sum((y - fitted) ** 2)) / dof if dof > 0 else 0.0
    cov = sigma2 * np.linalg.inv(A.T @ A)
    fit = AsymptoticFit(
        volume=float(coef[0]),
        curvature=float(coef[1]) / 6.0,
        fit_window=(float(t.min()), float(t.max())),
        residual=residual,
        volume_stderr=float(math.sqrt(max(cov[0, 0], 0.0))),
        curvature_stderr=float(math.sqrt(max(cov[1, 1], 0.0))) / 6.0,
        n_samples=len(selected),
        reliable=residual <= residual_threshold,
    )
    if not fit.reliable:
        logger.warning(
            "Weyl fit residual %.3e exceeds threshold %.1e", fit.residual, residual_threshold
        )
    return fit


@dataclass(frozen=True)
class InvarianceReport:
    unperturbed: AsymptoticFit
    perturbed: AsymptoticFit
    delta_volume_rel: float
    delta_curvature: float
    curvature_uncertainty: float
    series_unperturbed: HeatTraceSeries
    series_perturbed: HeatTraceSeries

    @property
    def curvature_shift_detected(self) -> bool:
        return abs(self.delta_curvature) > self.curvature_uncertainty


def compare_fits(
    series0: HeatTraceSeries,
    series1: HeatTraceSeries,
    *,
    t_min: Optional[float] = None,
    t_max: Optional[float] = None,
    residual_threshold: float = DEFAULT_RESIDUAL_THRESHOLD,
) -> InvarianceReport:
    window = {"t_min": t_min, "t_max": t_max, "residual_threshold": residual_threshold}
    fit0 = fit_weyl_asymptotics(series0, **window)
    fit1 = fit_weyl_asymptotics(series1, **window)
    return InvarianceReport(
        unperturbed=fit0,
        perturbed=fit1,
        delta_volume_rel=(fit1.volume - fit0.volume) / fit0.volume,
        delta_curvature=fit1.curvature - fit0.curvature,
        curvature_uncertainty=math.hypot(fit0.curvature_stderr, fit1.curvature_stderr),
        series_unperturbed=series0,
        series_perturbed=series1,
    )


def invariance_report(
    cfg: GaugeConfig,
    r: Perturbation,
    w: LatticeWindow,
    t_grid: Sequence[float],
    *,
    residual_threshold: float = DEFAULT_RESIDUAL_THRESHOLD,
) -> InvarianceReport:
    """Volume and curvature fits for ``L0m`` and ``Lm`` on the same window and grid."""
    if not cfg.is_hermitian:
        raise ValidationError("invariance report needs hermitian mode.")
    spec0 = hermitian_eigen(assemble_L0m(cfg, w), source="L0m")
    if r[0].is_zero() and r[1].is_zero():
        spec1 = spec0
    else:
        spec1 = hermitian_eigen(assemble_Lm(cfg, r, w), source="Lm")
    return compare_fits(
        heat_trace_series(spec0, t_grid, w.N),
        heat_trace_series(spec1, t_grid, w.N),
        residual_threshold=residual_threshold,
    )


# ---------------------------------------------------------------------------
# Dixmier volume forms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DixmierEstimate:
    partial_sums: Tuple[Tuple[int, float], ...]
    extrapolated: float
    uncertainty: float
    kernel_dimension: int = 0


def log_cesaro_estimate(
    mu: np.ndarray,
    cutoffs: Sequence[int],
    *,
    weight: float = 1.0,
    kernel_dimension: int = 0,
) -> DixmierEstimate:
    """``weight * sum_{k<=R} mu_k / log R`` at each cutoff, extrapolated in ``1/log R``."""
    mu = np.asarray(mu)
    cut = sorted({int(R) for R in cutoffs})
    if not cut or cut[0] < 2:
        raise ValidationError("cutoffs must be integers >= 2.")
    if cut[-1] > mu.size:
        raise ValidationError(f"cutoff {cut[-1]} exceeds the {mu.size} available terms.")
    cumulative = np.cumsum(np.real(mu))
    values = np.array([weight * cumulative[R - 1] / math.log(R) for R in cut])
    partial = tuple((R, float(v)) for R, v in zip(cut, values))
    if len(cut) == 1:
        return DixmierEstimate(partial, float(values[0]), float("inf"), kernel_dimension)
    A = np.column_stack([np.ones(len(cut)), 1.0 / np.log(np.array(cut, dtype=float))])
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    if len(cut) > 2:
        resid = values - A @ coef
        sigma2 = float(resid @ resid) / (len(cut) - 2)
        uncertainty = math.sqrt(max(sigma2 * np.linalg.inv(A.T @ A)[0, 0], 0.0))
    else:
        uncertainty = abs(float(coef[0]) - float(values[-1]))
    return DixmierEstimate(partial, float(coef[0]), float(uncertainty), kernel_dimension)


def default_cutoffs(abs_eigenvalues: np.ndarray, radius: float, count: int = 10) -> List[int]:
    """Geometric cutoffs up to the number of eigenvalues below ``radius``."""
    K = int(np.searchsorted(abs_eigenvalues, radius, side="right"))
    if K < 4:
        raise ValidationError("window too small for a Dixmier estimate.")
    lo = max(4, K // 64)
    return sorted({int(round(R)) for R in np.geomspace(lo, K, count)})


def dixmier_volume_form(
    D: DiracOperator,
    x: TorusElement,
    w: Optional[LatticeWindow] = None,
    cutoffs: Optional[Sequence[int]] = None,
    *,
    spectrum: Optional[Spectrum] = None,
) -> DixmierEstimate:
    """Estimate ``1/2 Tr_w(x |D|^{-2} P)`` by log-Cesaro partial sums.

    ``mu_k = <phi_k, (x (x) I) phi_k> / lambda_k^2`` in the eigenbasis of ``D``,
    ordered by ascending ``|lambda_k|``; kernel modes (``|lambda| < 1e-8 ||D||``)
    are projected out. Default cutoffs stay inside the radius where the window
    truncation does not distort the spectrum.
    """
    w = D.window if w is None else w
    if w != D.window:
        D = D.on_window(w)
    spectrum = spectrum or hermitian_eigen(dirac_matrix(D), vectors=True, source="D")
    norm = float(np.abs(spectrum.eigenvalues).max()) if spectrum.eigenvalues.size else 0.0
    lx = _spinor_left_mul(x, w)
    is_identity = x.coeffs == {(0, 0): 1 + 0j}

    lam_all: List[np.ndarray] = []
    expect_all: List[np.ndarray] = []
    for block in spectrum.blocks:
        if block.vectors is None:
            V = None
            diag = lx.diagonal()[block.indices]
        else:
            V = block.vectors
        if is_identity:
            expect = np.ones(block.eigenvalues.size)
        elif V is None:
            expect = diag
        else:
            sub = lx[block.indices][:, block.indices]
            expect = np.einsum("ij,ij->j", V.conj(), sub @ V)
        lam_all.append(block.eigenvalues)
        expect_all.append(expect)
    lam = np.concatenate(lam_all)
    expect = np.concatenate(expect_all)

    nonkernel = np.abs(lam) >= KERNEL_RTOL * norm
    kernel_dimension = int(np.count_nonzero(~nonkernel))
    lam, expect = lam[nonkernel], expect[nonkernel]
    order = np.lexsort((lam, np.abs(lam)))
    lam, expect = lam[order], expect[order]
    mu = expect / lam**2

    if x.is_zero():
        mu = np.zeros_like(mu)
    if cutoffs is None:
        G = max(abs(g) for g in D.cfg.gauge)
        radius = 0.9 * w.N - 2 * math.pi * G - 2 * D.r.max_mode() - x.max_mode()
        cutoffs = default_cutoffs(np.abs(lam), radius)
    return log_cesaro_estimate(mu, cutoffs, weight=0.5, kernel_dimension=kernel_dimension)


# ---------------------------------------------------------------------------
# Spectral-triple diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralTripleReport:
    anticommutation: float
    grading_square: float
    grading_selfadjoint: float
    square_offdiagonal: float
    hermiticity_defect: float
    kernel_dimension: int
    smallest_nonzero: float
    square_block_deviation: Optional[float] = None


def spectral_triple_report(D: DiracOperator, spectrum: Optional[Spectrum] = None) -> SpectralTripleReport:
    """Grading, block structure, kernel and Hermiticity diagnostics of ``D``."""
    M = D.matrix
    Gm = D.grading
    dim = D.window.dim
    eye = sp.identity(2 * dim, format="csr")

    def max_abs(m) -> float:
        m = sp.csr_matrix(m)
        return float(np.abs(m.data).max()) if m.nnz else 0.0

    square = D.squared()
    offdiag = max(max_abs(square[:dim, dim:]), max_abs(square[dim:, :dim]))
    block_dev: Optional[float] = None
    if D.cfg.is_hermitian and D.r.is_zero() and np.allclose(D.cfg.metric_array, -0.5 * np.eye(2)):
        target = (-2.0 * assemble_L0m(D.cfg, D.window).matrix).tocsr()
        block_dev = max(max_abs(square[:dim, :dim] - target), max_abs(square[dim:, dim:] - target))

    kernel = 0
    smallest = 0.0
    if D.hermitian:
        spectrum = spectrum or hermitian_eigen(dirac_matrix(D), source="D")
        abs_lam = np.abs(spectrum.eigenvalues)
        norm = float(abs_lam.max()) if abs_lam.size else 0.0
        mask = abs_lam < KERNEL_RTOL * norm
        kernel = int(np.count_nonzero(mask))
        smallest = float(abs_lam[~mask].min()) if np.any(~mask) else 0.0

    return SpectralTripleReport(
        anticommutation=max_abs(Gm @ M + M @ Gm),
        grading_square=max_abs(Gm @ Gm - eye),
        grading_selfadjoint=max_abs(Gm - Gm.conj().transpose()),
        square_offdiagonal=offdiag,
        hermiticity_defect=max_abs(M - M.conj().transpose()),
        kernel_dimension=kernel,
        smallest_nonzero=smallest,
        square_block_deviation=block_dev,
    )


def commutator_norm_sweep(
    D: DiracOperator, x: TorusElement, sizes: Sequence[int] = (8, 16, 32)
) -> List[Tuple[int, float]]:
    """``||[D, x]||`` on growing windows (boundedness proxy)."""
    out = []
    for N in sizes:
        comm = commutator_with_element(D.on_window(LatticeWindow(N)), x)
        out.append((int(N), spinor_norm(comm)))
    return out


def gauge_commutator_deviation(D: DiracOperator, x: TorusElement) -> Tuple[float, float]:
    """Deviations behind the magnetic commutator identity on interior rows.

    Returns ``max|[D^m, x] - [D, x]|`` (``D`` being the gauge-free operator with
    the same perturbation) and ``max|magnetic_commutator(D^m, 1) - G|``.
    """
    free = assemble_dirac(D.cfg.model_copy(update={"beta": (0.0, 0.0)}), D.r, D.window)
    comm_m = commutator_with_element(D, x)
    comm_free = commutator_with_element(free, x)
    interior = spinor_interior(D.window, 2 * max(x.max_mode(), D.r.max_mode()))
    diff = (comm_m.matrix - comm_free.matrix).tocsr()[interior][:, interior]
    independence = float(np.abs(diff.data).max()) if diff.nnz else 0.0

    unit = magnetic_commutator(D, TorusElement.identity(D.cfg.theta)).matrix
    block = sp.kron(sp.csr_matrix(D.gauge), sp.identity(D.window.dim, format="csr"), format="csr")
    gap = (unit - block).tocsr()
    return independence, float(np.abs(gap.data).max()) if gap.nnz else 0.0
