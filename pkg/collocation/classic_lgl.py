"""Classic LGL pseudospectral scheme: square differentiation matrix, collocation at all nodes."""

from dataclasses import dataclass

import numpy as np

from collocation.lgl_basis import QuadratureRule, differentiation_matrix
from collocation.transcription import FORM_CLASSIC, Mesh, NlpProblem, OcpDefinition


@dataclass(frozen=True)
class ClassicLglOperators:
    """Differentiation matrix of degree N-1 interpolants at the N LGL points."""

    rule: QuadratureRule
    D_classic: np.ndarray

    @property
    def rank(self) -> int:
        return int(np.linalg.matrix_rank(self.D_classic))


def build_classic_operators(rule: QuadratureRule) -> ClassicLglOperators:
    D = differentiation_matrix(rule.nodes)
    D.setflags(write=False)
    return ClassicLglOperators(rule=rule, D_classic=D)


def transcribe_classic(ocp: OcpDefinition, rule: QuadratureRule) -> NlpProblem:
    """
    Single-interval classic transcription: F_i - (2/Delta)(D X)_i = 0 at all N nodes.

    The KKT system is rank deficient; multipliers are not unique.
    """
    return NlpProblem(ocp, Mesh.single(rule.n), FORM_CLASSIC)


def classic_costate(multipliers: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """
    Costate Lambda_i = M_i / w_i from unscaled multipliers (N, n_x).
    """
    multipliers = np.asarray(multipliers, dtype=float)
    return multipliers / rule.weights.reshape((-1,) + (1,) * (multipliers.ndim - 1))
