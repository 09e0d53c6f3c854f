"""Identity checks for the torus algebra on random elements."""

from __future__ import annotations

import cmath
import math
from typing import List, Sequence

import numpy as np

from ..algebra import (
    TorusElement,
    adjoint,
    canonical_derivation,
    inner_derivation,
    inner_product,
    max_abs_difference,
    random_element,
    trace_phi,
    weyl_mul,
)
from ..config import ExperimentConfig
from ..exceptions import ValidationError
from ..reporting import Check, ExperimentResult, Table
from ..runner import ComputationRunner
from ..utils import validate_required_int

GOLDEN_FRACTION = (math.sqrt(5) - 1) / 2
DEFAULT_THETAS = (0.0, 0.3, GOLDEN_FRACTION)
ALGEBRA_TOL = 1e-12
MAX_SAMPLES = 10_000


def _worst_case(theta: float, samples: int, seed: int) -> dict:
    """Largest deviation of each identity over ``samples`` random 5-term triples."""
    rng = np.random.default_rng(seed)
    worst = {
        "associativity": 0.0,
        "trace_property": 0.0,
        "integration_by_parts": 0.0,
        "involution": 0.0,
        "antimultiplicative": 0.0,
        "leibniz": 0.0,
        "inner_product_positivity": 0.0,
    }
    for _ in range(samples):
        a, b, c = (random_element(rng, theta, terms=5, max_mode=3) for _ in range(3))
        ab = weyl_mul(a, b)
        scale = max(1.0, max(abs(v) for v in ab.coeffs.values()) if ab.coeffs else 1.0)
        worst["associativity"] = max(
            worst["associativity"],
            max_abs_difference(weyl_mul(ab, c), weyl_mul(a, weyl_mul(b, c))) / scale,
        )
        worst["trace_property"] = max(
            worst["trace_property"], abs(trace_phi(ab) - trace_phi(weyl_mul(b, a)))
        )
        for j in (1, 2):
            # phi(d_j(a) b) = -phi(a d_j(b))
            lhs = trace_phi(weyl_mul(canonical_derivation(j, a), b))
            rhs = -trace_phi(weyl_mul(a, canonical_derivation(j, b)))
            worst["integration_by_parts"] = max(worst["integration_by_parts"], abs(lhs - rhs))
            leibniz = max_abs_difference(
                canonical_derivation(j, ab),
                weyl_mul(canonical_derivation(j, a), b) + weyl_mul(a, canonical_derivation(j, b)),
            )
            worst["leibniz"] = max(worst["leibniz"], leibniz / scale)
        inner = inner_derivation(c, ab)
        inner_leibniz = max_abs_difference(
            inner, weyl_mul(inner_derivation(c, a), b) + weyl_mul(a, inner_derivation(c, b))
        )
        worst["leibniz"] = max(worst["leibniz"], inner_leibniz / scale)
        worst["involution"] = max(worst["involution"], max_abs_difference(adjoint(adjoint(a)), a))
        worst["antimultiplicative"] = max(
            worst["antimultiplicative"],
            max_abs_difference(adjoint(ab), weyl_mul(adjoint(b), adjoint(a))),
        )
        norm2 = sum(abs(v) ** 2 for v in a.coeffs.values())
        worst["inner_product_positivity"] = max(
            worst["inner_product_positivity"], abs(inner_product(a, a) - norm2)
        )
    return worst


def commutation_phase_defect(theta: float) -> float:
    """``|X Y - e^{2 pi i theta} Y X|`` plus the group-commutator phase defect."""
    X, Y = TorusElement.x(theta), TorusElement.y(theta)
    q = cmath.exp(2j * math.pi * theta)
    relation = max_abs_difference(weyl_mul(X, Y), weyl_mul(Y, X) * q)
    commutator = weyl_mul(weyl_mul(weyl_mul(X, Y), adjoint(X)), adjoint(Y))
    group = max_abs_difference(commutator, TorusElement.identity(theta) * q)
    return max(relation, group)


class AlgebraApi:
    """Random-sample identity suite for the twisted product, involution, trace and derivations."""

    def algebra_suite(
        self,
        thetas: Sequence[float] = DEFAULT_THETAS,
        samples: int = 200,
        seed: int = 0,
    ) -> ExperimentResult:
        """Run the identity suite synchronously.

        **Parameters**
        - `thetas`: deformation parameters to sample at.
        - `samples` (`int`): random triples per theta, at most 10000.
        - `seed` (`int`): generator seed; theta ``k`` uses ``seed + k``.

        **Returns**
        - `ExperimentResult` with one check per identity and theta, and a table of deviations.
        """
        samples = validate_required_int(samples, "samples")
        if samples > MAX_SAMPLES:
            raise ValidationError(f"samples must be <= {MAX_SAMPLES}.")
        result = ExperimentResult(kind="algebra")
        table = Table(("theta", "identity", "max_deviation"))
        summary: List[dict] = []
        for k, theta in enumerate(thetas):
            worst = _worst_case(float(theta), samples, seed + k)
            worst["commutation_phase"] = commutation_phase_defect(float(theta))
            for name, value in worst.items():
                table.add(float(theta), name, value)
                result.checks.append(
                    Check.at_most(f"{name}[theta={theta:.6g}]", value, ALGEBRA_TOL)
                )
            summary.append({"theta": float(theta), **worst})
        result.tables["algebra"] = table
        result.values = {"samples": samples, "per_theta": summary}
        return result

    async def suite(
        self, runner: ComputationRunner, config: ExperimentConfig
    ) -> ExperimentResult:
        """Identity suite at theta in {0, 0.3, golden fraction} and at the config's theta."""
        thetas = list(DEFAULT_THETAS)
        if config.gauge.theta not in thetas:
            thetas.append(config.gauge.theta)
        return await runner.run_blocking(self.algebra_suite, thetas, 200, config.mc.seed)
