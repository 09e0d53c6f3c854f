"""Truncated matrix representations on a finite lattice window.

Operators act on the monomial basis of L^2(phi) restricted to the square
window ``|n1|, |n2| <= N``. Products of operators with off-diagonal support
are composed on a padded window and restricted afterwards, so every entry of a
restricted two-factor product equals the compression of the exact operator.
Matrices are kept in SciPy CSR form; at ``N = 48`` a dense complex matrix would
need more than a gigabyte.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .algebra import (
    TorusElement,
    adjoint,
    canonical_derivation,
    inner_derivation,
    is_self_adjoint,
)
from .exceptions import ValidationError
from .gauge import GaugeConfig, gamma_constant, l0_symbol, l0m_symbol
from .utils import validate_direction, validate_required_int

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-12
DENSE_NORM_LIMIT = 4096

Perturbation = Tuple[TorusElement, TorusElement]


# ---------------------------------------------------------------------------
# Lattice window
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticeWindow:
    """Square window of modes, ordered row-major in ``(n1, n2)``."""

    N: int

    def __post_init__(self) -> None:
        validate_required_int(self.N, "N", minimum=1)

    @property
    def side(self) -> int:
        return 2 * self.N + 1

    @property
    def dim(self) -> int:
        return self.side * self.side

    @cached_property
    def modes(self) -> Tuple[np.ndarray, np.ndarray]:
        axis = np.arange(-self.N, self.N + 1)
        return np.repeat(axis, self.side), np.tile(axis, self.side)

    @cached_property
    def sup_norm(self) -> np.ndarray:
        n1, n2 = self.modes
        return np.maximum(np.abs(n1), np.abs(n2))

    def contains(self, n1, n2):
        return (np.abs(n1) <= self.N) & (np.abs(n2) <= self.N)

    def index(self, n1: int, n2: int) -> int:
        if not self.contains(n1, n2):
            raise ValidationError(f"mode ({n1}, {n2}) lies outside the window N={self.N}.")
        return int((n1 + self.N) * self.side + (n2 + self.N))

    def indices(self, n1: np.ndarray, n2: np.ndarray) -> np.ndarray:
        return (n1 + self.N) * self.side + (n2 + self.N)

    def mode(self, index: int) -> Tuple[int, int]:
        return int(index // self.side - self.N), int(index % self.side - self.N)

    def interior(self, pad: int) -> np.ndarray:
        """Indices of modes at sup-distance ``>= pad`` from the boundary."""
        return np.flatnonzero(self.sup_norm <= self.N - pad)

    def padded(self, pad: int) -> "LatticeWindow":
        return LatticeWindow(self.N + pad)

    def embedding(self, outer: "LatticeWindow") -> np.ndarray:
        """Indices of this window's modes inside a larger window."""
        if outer.N < self.N:
            raise ValidationError("outer window must be at least as large.")
        n1, n2 = self.modes
        return outer.indices(n1, n2)

    def vector(self, x: TorusElement) -> np.ndarray:
        """Coefficient vector of ``x`` (modes outside the window are rejected)."""
        out = np.zeros(self.dim, dtype=complex)
        for (n1, n2), c in x.coeffs.items():
            out[self.index(n1, n2)] = c
        return out

    def element(self, theta: float, vector: np.ndarray) -> TorusElement:
        n1, n2 = self.modes
        coeffs = {
            (int(n1[i]), int(n2[i])): complex(vector[i]) for i in np.flatnonzero(vector)
        }
        return TorusElement(theta, coeffs)


# ---------------------------------------------------------------------------
# Matrix operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MatrixOperator:
    """Sparse complex matrix on a lattice window with a Hermiticity flag."""

    matrix: sp.csr_matrix
    window: LatticeWindow
    hermitian: bool = False
    label: str = ""

    @classmethod
    def create(
        cls,
        matrix,
        window: LatticeWindow,
        *,
        hermitian: bool = False,
        label: str = "",
        tol: float = HERMITIAN_TOL,
    ) -> "MatrixOperator":
        csr = sp.csr_matrix(matrix, dtype=complex)
        if csr.shape != (window.dim, window.dim):
            raise ValidationError(
                f"matrix shape {csr.shape} does not match window dimension {window.dim}."
            )
        csr.sum_duplicates()
        csr.eliminate_zeros()
        if hermitian:
            scale = max(1.0, _max_abs(csr))
            defect = _max_abs(csr - csr.conj().transpose())
            if defect > tol * scale:
                raise ValidationError(
                    f"{label or 'operator'} is not Hermitian (max|M - M^H| = {defect:.3e})."
                )
            csr = ((csr + csr.conj().transpose()) * 0.5).tocsr()
            csr.eliminate_zeros()
        csr.sort_indices()
        return cls(matrix=csr, window=window, hermitian=hermitian, label=label)

    @property
    def dim(self) -> int:
        return self.window.dim

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def max_abs(self) -> float:
        return _max_abs(self.matrix)

    def hermiticity_defect(self) -> float:
        return _max_abs(self.matrix - self.matrix.conj().transpose())

    def adjoint(self) -> "MatrixOperator":
        return MatrixOperator.create(
            self.matrix.conj().transpose(), self.window, label=f"{self.label}*"
        )

    def apply(self, vector: np.ndarray) -> np.ndarray:
        return self.matrix @ vector

    def column(self, n1: int, n2: int) -> np.ndarray:
        return self.matrix[:, self.window.index(n1, n2)].toarray().ravel()

    def restrict(self, window: LatticeWindow) -> "MatrixOperator":
        idx = window.embedding(self.window)
        return MatrixOperator.create(
            self.matrix[idx][:, idx], window, hermitian=self.hermitian, label=self.label
        )

    def __add__(self, other: "MatrixOperator") -> "MatrixOperator":
        _same_window(self, other)
        return MatrixOperator(self.matrix + other.matrix, self.window)

    def __sub__(self, other: "MatrixOperator") -> "MatrixOperator":
        _same_window(self, other)
        return MatrixOperator(self.matrix - other.matrix, self.window)

    def __matmul__(self, other: "MatrixOperator") -> "MatrixOperator":
        _same_window(self, other)
        return MatrixOperator((self.matrix @ other.matrix).tocsr(), self.window)

    def scaled(self, factor: complex) -> "MatrixOperator":
        return MatrixOperator(self.matrix * factor, self.window)

    def to_triplets(self) -> List[Tuple[int, int, float, float]]:
        """``(row, col, re, im)`` of the stored entries, lexicographic."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [
            (int(coo.row[i]), int(coo.col[i]), float(coo.data[i].real), float(coo.data[i].imag))
            for i in order
        ]


def _max_abs(matrix) -> float:
    if matrix.nnz == 0:
        return 0.0
    return float(np.abs(matrix.data).max())


def _same_window(a: MatrixOperator, b: MatrixOperator) -> None:
    if a.window != b.window:
        raise ValidationError(
            f"window mismatch: N={a.window.N} vs N={b.window.N}"
        )


def max_deviation(
    a: MatrixOperator, b: MatrixOperator, rows: Optional[np.ndarray] = None
) -> float:
    """Max elementwise |a - b|, optionally on a subset of rows and columns."""
    _same_window(a, b)
    diff = (a.matrix - b.matrix).tocsr()
    if rows is not None:
        diff = diff[rows][:, rows]
    return _max_abs(diff)


def operator_norm(op: MatrixOperator) -> float:
    """Spectral norm (largest singular value)."""
    if op.matrix.nnz == 0:
        return 0.0
    if op.dim <= DENSE_NORM_LIMIT:
        return float(np.linalg.norm(op.to_dense(), ord=2))
    v0 = np.random.default_rng(0).standard_normal(op.dim)
    sigma = spla.svds(op.matrix, k=1, return_singular_vectors=False, v0=v0, tol=1e-10)
    return float(sigma[0])


# ---------------------------------------------------------------------------
# Elementary matrices
# ---------------------------------------------------------------------------


def identity_matrix(w: LatticeWindow, scale: complex = 1.0) -> MatrixOperator:
    return MatrixOperator(sp.identity(w.dim, dtype=complex, format="csr") * scale, w)


def _diagonal(values: np.ndarray, w: LatticeWindow) -> sp.csr_matrix:
    return sp.diags(np.asarray(values, dtype=complex), format="csr")


def _multiplication_matrix(r: TorusElement, w: LatticeWindow, *, left: bool) -> sp.csr_matrix:
    n1, n2 = w.modes
    cols = np.arange(w.dim)
    rows_all: List[np.ndarray] = []
    cols_all: List[np.ndarray] = []
    data_all: List[np.ndarray] = []
    for (m1, m2), c in r.coeffs.items():
        t1, t2 = n1 + m1, n2 + m2
        mask = w.contains(t1, t2)
        if left:
            phase = np.exp(-2j * math.pi * r.theta * m2 * n1[mask])
        else:
            phase = np.exp(-2j * math.pi * r.theta * n2[mask] * m1)
        rows_all.append(w.indices(t1[mask], t2[mask]))
        cols_all.append(cols[mask])
        data_all.append(c * phase)
    if not rows_all:
        return sp.csr_matrix((w.dim, w.dim), dtype=complex)
    return sp.coo_matrix(
        (np.concatenate(data_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(w.dim, w.dim),
    ).tocsr()


def matrix_of_left_mul(r: TorusElement, w: LatticeWindow) -> MatrixOperator:
    """Matrix of ``a -> r a``; products leaving the window are dropped."""
    return MatrixOperator.create(_multiplication_matrix(r, w, left=True), w, label="left_mul")


def matrix_of_right_mul(r: TorusElement, w: LatticeWindow) -> MatrixOperator:
    """Matrix of ``a -> a r``."""
    return MatrixOperator.create(_multiplication_matrix(r, w, left=False), w, label="right_mul")


def matrix_of_derivation(j: int, w: LatticeWindow) -> MatrixOperator:
    """Diagonal matrix of ``d_j`` (entry ``n_j`` at mode ``n``)."""
    j = validate_direction(j)
    return MatrixOperator.create(
        _diagonal(w.modes[j - 1].astype(float), w), w, hermitian=True, label=f"d{j}"
    )


def matrix_of_inner_derivation(r: TorusElement, w: LatticeWindow) -> MatrixOperator:
    """Matrix of ``d_r = [r, .]``; Hermitian whenever ``r = r*``."""
    matrix = _multiplication_matrix(r, w, left=True) - _multiplication_matrix(r, w, left=False)
    return MatrixOperator.create(
        matrix, w, hermitian=is_self_adjoint(r), label="inner_derivation"
    )


def required_pad(r: Iterable[TorusElement]) -> int:
    """Padding that makes restricted two-factor products exact."""
    return 2 * max((element.max_mode() for element in r), default=0)


def _check_perturbation(cfg: GaugeConfig, r: Perturbation) -> Perturbation:
    r1, r2 = r
    for label, element in (("r1", r1), ("r2", r2)):
        if element.theta != cfg.theta:
            raise ValidationError(
                f"{label} has theta={element.theta!r}, gauge has theta={cfg.theta!r}."
            )
        if cfg.is_hermitian and not is_self_adjoint(element):
            raise ValidationError(f"{label} must be self-adjoint in hermitian mode.")
    return r1, r2


def zero_perturbation(theta: float) -> Perturbation:
    return TorusElement.zero(theta), TorusElement.zero(theta)


# ---------------------------------------------------------------------------
# Magnetic Laplacians
# ---------------------------------------------------------------------------


def assemble_L0(cfg: GaugeConfig, w: LatticeWindow) -> MatrixOperator:
    """Diagonal gauge-free Laplacian ``L0``."""
    return MatrixOperator.create(
        _diagonal(l0_symbol(cfg, w.modes), w), w, hermitian=cfg.is_hermitian, label="L0"
    )


def assemble_L0m(cfg: GaugeConfig, w: LatticeWindow) -> MatrixOperator:
    """Diagonal unperturbed magnetic Laplacian, entries ``l0m_symbol(cfg, n)``."""
    return MatrixOperator.create(
        _diagonal(l0m_symbol(cfg, w.modes), w), w, hermitian=cfg.is_hermitian, label="L0m"
    )


def assemble_T0(cfg: GaugeConfig, w: LatticeWindow) -> MatrixOperator:
    """Diagonal gauge correction ``T0 = L0m - L0``."""
    values = l0m_symbol(cfg, w.modes) - l0_symbol(cfg, w.modes)
    return MatrixOperator.create(_diagonal(values, w), w, hermitian=cfg.is_hermitian, label="T0")


def _laplacian_form(
    cfg: GaugeConfig,
    delta: Sequence[MatrixOperator],
    w: LatticeWindow,
) -> MatrixOperator:
    """``sum g^{jk} (delta_j - s_j)(delta_k - s_k)`` (hermitian) or the printed literal form."""
    g = cfg.metric_array
    eye = identity_matrix(w)
    shifted = [delta[j] - eye.scaled(cfg.shift(j + 1)) for j in range(2)]
    if cfg.is_hermitian:
        total = MatrixOperator(sp.csr_matrix((w.dim, w.dim), dtype=complex), w)
        for j in range(2):
            for k in range(2):
                total = total + (shifted[j] @ shifted[k]).scaled(g[j, k])
        return total

    G = cfg.gauge
    total = (delta[0] @ delta[0] + delta[1] @ delta[1]).scaled(0.5)
    for j in range(2):
        total = total + delta[j].scaled(1j * math.pi * G[j])
        total = total + eye.scaled(2 * math.pi**2 * G[j] ** 2)
    total = total + (shifted[0] @ shifted[1]).scaled(g[0, 1])
    total = total + (shifted[1] @ shifted[0]).scaled(g[1, 0])
    return total + eye.scaled(gamma_constant(cfg))


def compose_L0m(cfg: GaugeConfig, w: LatticeWindow) -> MatrixOperator:
    """``L0m`` rebuilt from derivation and gauge matrices rather than from the symbol."""
    delta = [matrix_of_derivation(1, w), matrix_of_derivation(2, w)]
    return MatrixOperator.create(
        _laplacian_form(cfg, delta, w).matrix, w, hermitian=cfg.is_hermitian, label="L0m"
    )


def _perturbed_derivations(
    r: Perturbation, big: LatticeWindow
) -> Tuple[List[MatrixOperator], List[MatrixOperator]]:
    d = [matrix_of_derivation(1, big), matrix_of_derivation(2, big)]
    R = [matrix_of_inner_derivation(r[0], big), matrix_of_inner_derivation(r[1], big)]
    return d, R


def assemble_Lm(
    cfg: GaugeConfig,
    r: Perturbation,
    w: LatticeWindow,
    pad: Optional[int] = None,
) -> MatrixOperator:
    """Perturbed magnetic Laplacian with ``delta_j = d_j + d_{r_j}``.

    Composed on the window ``N + pad`` and restricted to ``w``.
    """
    r = _check_perturbation(cfg, r)
    pad = required_pad(r) if pad is None else pad
    if r[0].is_zero() and r[1].is_zero():
        return assemble_L0m(cfg, w)
    big = w.padded(pad)
    d, R = _perturbed_derivations(r, big)
    delta = [d[0] + R[0], d[1] + R[1]]
    full = _laplacian_form(cfg, delta, big)
    restricted = MatrixOperator(full.matrix[w.embedding(big)][:, w.embedding(big)], w)
    logger.debug("Assembled Lm on N=%d (pad=%d, nnz=%d)", w.N, pad, restricted.matrix.nnz)
    return MatrixOperator.create(
        restricted.matrix, w, hermitian=cfg.is_hermitian, label="Lm"
    )


@dataclass(frozen=True, eq=False)
class SplittingTerms:
    """Bounded part ``T1`` and relatively compact part ``T2`` of ``Lm - L0m``.

    ``t1``/``t2`` keep the symmetric ``d_r d + d d_r`` form; ``t1_alt``/``t2_alt``
    move the commutator ``d_{d_j(r_j)}`` into the bounded part.
    """

    t1: MatrixOperator
    t2: MatrixOperator
    t1_alt: MatrixOperator
    t2_alt: MatrixOperator
    t1_printed: MatrixOperator


def assemble_splitting(
    cfg: GaugeConfig,
    r: Perturbation,
    w: LatticeWindow,
    pad: Optional[int] = None,
) -> SplittingTerms:
    r = _check_perturbation(cfg, r)
    pad = required_pad(r) if pad is None else pad
    big = w.padded(pad)
    idx = w.embedding(big)
    d, R = _perturbed_derivations(r, big)
    g = cfg.metric_array
    G = cfg.gauge
    s = [cfg.shift(1), cfg.shift(2)]
    if cfg.is_hermitian:
        a = [g[0, 0], g[1, 1]]
        b = [-2 * g[0, 0] * s[0], -2 * g[1, 1] * s[1]]
    else:
        a = [0.5, 0.5]
        b = [1j * math.pi * G[0], 1j * math.pi * G[1]]

    zero = MatrixOperator(sp.csr_matrix((big.dim, big.dim), dtype=complex), big)
    t1, t2, t2_alt, commutators, printed = zero, zero, zero, zero, zero
    for j in range(2):
        t1 = t1 + (R[j] @ R[j]).scaled(a[j]) + R[j].scaled(b[j])
        t2 = t2 + (R[j] @ d[j] + d[j] @ R[j]).scaled(a[j])
        t2_alt = t2_alt + (R[j] @ d[j]).scaled(2 * a[j])
        dr = canonical_derivation(j + 1, r[j])
        commutators = commutators + matrix_of_inner_derivation(dr, big).scaled(a[j])
        printed = printed + (R[j] @ R[j] - R[j].scaled(2j * math.pi * G[j])).scaled(g[j, j])
    for j, k in ((0, 1), (1, 0)):
        t1 = t1 - (R[j].scaled(s[k]) + R[k].scaled(s[j])).scaled(g[j, k])
        printed = printed - (
            R[j].scaled(2j * math.pi * G[k]) + R[k].scaled(2j * math.pi * G[j])
        ).scaled(g[j, k])
        cross = (d[j] @ R[k] + R[j] @ d[k] + R[j] @ R[k]).scaled(g[j, k])
        t2 = t2 + cross
        t2_alt = t2_alt + cross
    t1_alt = t1 + commutators

    def cut(op: MatrixOperator, label: str) -> MatrixOperator:
        return MatrixOperator.create(op.matrix[idx][:, idx], w, label=label)

    return SplittingTerms(
        t1=cut(t1, "T1"),
        t2=cut(t2, "T2"),
        t1_alt=cut(t1_alt, "T1_alt"),
        t2_alt=cut(t2_alt, "T2_alt"),
        t1_printed=cut(printed, "T1_printed"),
    )


def assemble_T1_T2(
    cfg: GaugeConfig,
    r: Perturbation,
    w: LatticeWindow,
    pad: Optional[int] = None,
) -> Tuple[MatrixOperator, MatrixOperator]:
    """``(T1, T2)`` with ``Lm = L0m + T1 + T2`` on the window."""
    terms = assemble_splitting(cfg, r, w, pad)
    return terms.t1, terms.t2


def relative_compactness_sweep(
    cfg: GaugeConfig,
    r: Perturbation,
    w: LatticeWindow,
    shifts: Sequence[int] = (2, 4, 8, 16),
) -> List[Tuple[int, float]]:
    """``||T2 (-L0m + n^2)^{-1}||`` for each shift ``n`` (hermitian mode)."""
    if not cfg.is_hermitian:
        raise ValidationError("relative compactness sweep needs hermitian mode.")
    _, t2 = assemble_T1_T2(cfg, r, w)
    symbols = np.real(l0m_symbol(cfg, w.modes))
    out = []
    for n in shifts:
        resolvent = sp.diags(1.0 / (-symbols + float(n) ** 2), format="csr")
        out.append((int(n), operator_norm(MatrixOperator(t2.matrix @ resolvent, w))))
    return out


# ---------------------------------------------------------------------------
# Dirac operators
# ---------------------------------------------------------------------------

GAMMA1 = np.array([[0, 1], [1, 0]], dtype=complex)
GAMMA2 = np.array([[0, -1j], [1j, 0]], dtype=complex)


def gauge_block(cfg: GaugeConfig) -> np.ndarray:
    """Constant 2x2 gauge part of the Dirac operator."""
    G1, G2 = cfg.gauge
    if cfg.is_hermitian:
        s1, s2 = 2 * math.pi * G1, 2 * math.pi * G2
        return -np.array([[0, s1 + 1j * s2], [s1 - 1j * s2, 0]], dtype=complex)
    return -2j * math.pi * (G1 * GAMMA1 + 1j * G2 * GAMMA2)


@dataclass(frozen=True, eq=False)
class DiracOperator:
    """Off-diagonal block operator on two copies of the window.

    ``upper`` maps the lower spinor component to the upper one; ``lower`` the
    reverse. ``gauge`` is the constant 2x2 block already folded into both.
    """

    cfg: GaugeConfig
    r: TorusElement
    window: LatticeWindow
    upper: MatrixOperator
    lower: MatrixOperator
    gauge: np.ndarray = field(repr=False)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return sp.bmat(
            [[None, self.upper.matrix], [self.lower.matrix, None]], format="csr", dtype=complex
        )

    @cached_property
    def grading(self) -> sp.csr_matrix:
        dim = self.window.dim
        return sp.diags(
            np.concatenate([np.ones(dim), -np.ones(dim)]).astype(complex), format="csr"
        )

    @property
    def dim(self) -> int:
        return 2 * self.window.dim

    @property
    def hermitian(self) -> bool:
        return _max_abs(self.matrix - self.matrix.conj().transpose()) <= HERMITIAN_TOL * max(
            1.0, _max_abs(self.matrix)
        )

    def on_window(self, w: LatticeWindow) -> "DiracOperator":
        return assemble_dirac(self.cfg, self.r, w)

    def squared(self) -> sp.csr_matrix:
        return (self.matrix @ self.matrix).tocsr()


def _dirac_blocks(
    cfg: GaugeConfig, r: TorusElement, w: LatticeWindow
) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    d1 = matrix_of_derivation(1, w).matrix
    d2 = matrix_of_derivation(2, w).matrix
    eye = sp.identity(w.dim, dtype=complex, format="csr")
    block = gauge_block(cfg)
    if cfg.is_hermitian:
        upper = d1 + 1j * d2 + eye * block[0, 1]
        lower = d1 - 1j * d2 + eye * block[1, 0]
    else:
        upper = 1j * d1 + d2 + eye * block[0, 1]
        lower = 1j * d1 - d2 + eye * block[1, 0]
    if not r.is_zero():
        upper = upper + matrix_of_inner_derivation(r, w).matrix
        lower = lower + matrix_of_inner_derivation(adjoint(r), w).matrix
    return upper.tocsr(), lower.tocsr()


def assemble_dirac(
    cfg: GaugeConfig,
    r: Optional[TorusElement],
    w: LatticeWindow,
) -> DiracOperator:
    """Magnetic Dirac operator, perturbed by ``[[0, d_r], [d_{r*}, 0]]`` when ``r`` is given."""
    r = TorusElement.zero(cfg.theta) if r is None else r
    if r.theta != cfg.theta:
        raise ValidationError("perturbation theta does not match the gauge configuration.")
    upper, lower = _dirac_blocks(cfg, r, w)
    return DiracOperator(
        cfg=cfg,
        r=r,
        window=w,
        upper=MatrixOperator.create(upper, w, label="D_upper"),
        lower=MatrixOperator.create(lower, w, label="D_lower"),
        gauge=gauge_block(cfg),
    )


def _spinor_left_mul(x: TorusElement, w: LatticeWindow) -> sp.csr_matrix:
    lx = _multiplication_matrix(x, w, left=True)
    return sp.block_diag((lx, lx), format="csr")


def _spinor_restriction(w: LatticeWindow, big: LatticeWindow) -> np.ndarray:
    idx = w.embedding(big)
    return np.concatenate([idx, idx + big.dim])


def commutator_with_element(
    D: DiracOperator, x: TorusElement, w: Optional[LatticeWindow] = None
) -> MatrixOperator:
    """``[D, x (x) I]`` on the doubled window, as a matrix on ``2 (2N+1)^2`` rows.

    The returned ``MatrixOperator`` lives on the window itself with the spinor
    components stacked; its ``window`` field records the lattice window.
    """
    w = D.window if w is None else w
    big = w.padded(2 * x.max_mode())
    dirac = D.on_window(big)
    lx = _spinor_left_mul(x, big)
    comm = (dirac.matrix @ lx - lx @ dirac.matrix).tocsr()
    idx = _spinor_restriction(w, big)
    return SpinorOperator(comm[idx][:, idx], w)


def magnetic_commutator(
    D: DiracOperator, x: TorusElement, w: Optional[LatticeWindow] = None
) -> MatrixOperator:
    """``[D_free, x] + G x``: the gauge block acting next to the commutator.

    For ``x = 1`` this is the constant gauge block itself.
    """
    w = D.window if w is None else w
    comm = commutator_with_element(D, x, w)
    lx = _spinor_left_mul(x, w)
    gauge = sp.kron(sp.csr_matrix(D.gauge), sp.identity(w.dim, format="csr"), format="csr")
    return SpinorOperator((comm.matrix + gauge @ lx).tocsr(), w)


@dataclass(frozen=True, eq=False)
class SpinorOperator(MatrixOperator):
    """Operator on two stacked copies of a lattice window."""

    @property
    def dim(self) -> int:
        return 2 * self.window.dim

    def __post_init__(self) -> None:
        if self.matrix.shape != (2 * self.window.dim, 2 * self.window.dim):
            raise ValidationError("spinor operator shape does not match the window.")


def spinor_interior(w: LatticeWindow, pad: int) -> np.ndarray:
    inner = w.interior(pad)
    return np.concatenate([inner, inner + w.dim])


def spinor_norm(op: MatrixOperator) -> float:
    if op.matrix.nnz == 0:
        return 0.0
    if op.matrix.shape[0] <= DENSE_NORM_LIMIT:
        return float(np.linalg.norm(op.matrix.toarray(), ord=2))
    v0 = np.random.default_rng(0).standard_normal(op.matrix.shape[1])
    return float(spla.svds(op.matrix, k=1, return_singular_vectors=False, v0=v0, tol=1e-10)[0])


# ---------------------------------------------------------------------------
# Connection and curvature 2-form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvatureFormReport:
    """Deviations of the curvature identities on interior rows."""

    shift_identity_deviation: float
    flatness_deviation: float
    unperturbed_deviation: float
    pad: int
    interior_size: int


def curvature_two_form_check(
    cfg: GaugeConfig,
    r: Perturbation,
    w: LatticeWindow,
) -> CurvatureFormReport:
    """Compare ``R(delta^m_1, delta^m_2)`` with ``R(d^m_1, d^m_2) + 2 pi i (G2 nabla_r1 - G1 nabla_r2)``.

    The module is the free rank-one module with ``nabla_j = d_j`` and
    ``C_{d_r} nabla = nabla_r = d_r``. The contraction of the magnetic bracket
    ``[delta1, delta2] + 2 pi i (G2 delta1 - G1 delta2 + psi21)`` drops the
    scalar ``psi21`` part. Evaluated in the literal convention.
    """
    lit = cfg.with_mode("literal")
    r1, r2 = r
    for element in (r1, r2):
        if element.theta != cfg.theta:
            raise ValidationError("perturbation theta does not match the gauge configuration.")
    pad = max(required_pad((r1, r2)), 1)
    big = w.padded(pad)
    idx = w.embedding(big)
    G1, G2 = lit.gauge
    twopi_i = 2j * math.pi
    eye = identity_matrix(big)
    d, R = _perturbed_derivations((r1, r2), big)

    rho = (
        canonical_derivation(1, r2)
        - canonical_derivation(2, r1)
        + inner_derivation(r1, r2)
    )
    R_rho = matrix_of_inner_derivation(rho, big)

    C1 = d[0] + R[0] - eye.scaled(twopi_i * G1)
    C2 = d[1] + R[1] - eye.scaled(twopi_i * G2)
    bracket = R_rho + (d[0] + R[0]).scaled(twopi_i * G2) - (d[1] + R[1]).scaled(twopi_i * G1)
    lhs = bracket - (C1 @ C2 - C2 @ C1)

    dm1 = d[0] - eye.scaled(twopi_i * G1)
    dm2 = d[1] - eye.scaled(twopi_i * G2)
    curvature_free = (d[0].scaled(twopi_i * G2) - d[1].scaled(twopi_i * G1)) - (
        dm1 @ dm2 - dm2 @ dm1
    )
    rhs = curvature_free + R[0].scaled(twopi_i * G2) - R[1].scaled(twopi_i * G1)

    flat_lhs = R_rho - ((d[0] + R[0]) @ (d[1] + R[1]) - (d[1] + R[1]) @ (d[0] + R[0]))
    free_curvature_expected = d[0].scaled(twopi_i * G2) - d[1].scaled(twopi_i * G1)

    def cut(op: MatrixOperator) -> MatrixOperator:
        return MatrixOperator(op.matrix[idx][:, idx].tocsr(), w)

    interior = w.interior(pad)
    zero = MatrixOperator(sp.csr_matrix((w.dim, w.dim), dtype=complex), w)
    report = CurvatureFormReport(
        shift_identity_deviation=max_deviation(cut(lhs), cut(rhs), interior),
        flatness_deviation=max_deviation(cut(flat_lhs), zero, interior),
        unperturbed_deviation=max_deviation(cut(curvature_free), cut(free_curvature_expected), interior),
        pad=pad,
        interior_size=int(interior.size),
    )
    logger.debug("Curvature 2-form check on N=%d: %s", w.N, report)
    return report
