"""Eigensystems of the spatial operator, quadrature, and truncated series.

Every solver in the package works in the orthonormal eigenbasis of the
operator ``A``. Functions on the spatial interval are handled as callables
sampled at quadrature nodes; their spectral coefficients live in a
:class:`SpectralVector`.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "BasisKind",
    "EigenSystem",
    "SpectralVector",
    "QuadratureRule",
    "eigenvalue",
    "eval_basis",
    "basis_matrix",
    "project",
    "synthesize",
    "gauss_legendre",
    "default_space_rule",
]

DEFAULT_SPACE_ORDER = 32
_NEWTON_TOL = 1e-14
_X_SLACK = 1e-12


class BasisKind(str, enum.Enum):
    """Boundary conditions of ``A = -d^2/dx^2`` and the resulting basis."""

    DIRICHLET_SINE = "dirichlet-sine"  # u(0) = u(L) = 0
    MIXED_COSINE = "mixed-cosine"  # u'(0) = 0, u(L) = 0


@dataclass(frozen=True)
class EigenSystem:
    """Eigenpairs of ``-d^2/dx^2`` on ``[0, domain_length]``, truncated to N modes.

    Only ``domain_length = pi`` yields the textbook spectra ``p^2`` and
    ``(p - 1/2)^2``; other lengths rescale frequencies by ``pi / L``.
    """

    kind: BasisKind
    n_modes: int = 3
    domain_length: float = np.pi

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError(f"n_modes must be >= 1, got {self.n_modes}")
        if not self.domain_length > 0:
            raise ValueError(f"domain_length must be positive, got {self.domain_length}")
        object.__setattr__(self, "kind", BasisKind(self.kind))

    @property
    def frequencies(self) -> np.ndarray:
        """sqrt(lambda_p) for p = 1..N."""
        p = np.arange(1, self.n_modes + 1, dtype=float)
        scale = np.pi / self.domain_length
        if self.kind is BasisKind.DIRICHLET_SINE:
            return p * scale
        return (p - 0.5) * scale

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.frequencies**2

    @property
    def lambda_1(self) -> float:
        return float(self.eigenvalues[0])


def eigenvalue(sys: EigenSystem, p: int) -> float:
    """Return lambda_p (1-based index)."""
    if not 1 <= p <= sys.n_modes:
        raise IndexError(f"mode index {p} outside 1..{sys.n_modes}")
    return float(sys.eigenvalues[p - 1])


def _check_domain(sys: EigenSystem, x: np.ndarray) -> None:
    if np.any(x < -_X_SLACK) or np.any(x > sys.domain_length + _X_SLACK):
        raise ValueError(f"x outside [0, {sys.domain_length}]")


def basis_matrix(sys: EigenSystem, xs) -> np.ndarray:
    """Matrix ``B[r, p-1] = phi_p(x_r)`` of shape ``(len(xs), N)``."""
    x = np.atleast_1d(np.asarray(xs, dtype=float))
    _check_domain(sys, x)
    arg = np.outer(x, sys.frequencies)
    amp = np.sqrt(2.0 / sys.domain_length)
    if sys.kind is BasisKind.DIRICHLET_SINE:
        return amp * np.sin(arg)
    return amp * np.cos(arg)


def eval_basis(sys: EigenSystem, p: int, x: float) -> float:
    """Evaluate the orthonormal eigenfunction phi_p at x."""
    if not 1 <= p <= sys.n_modes:
        raise IndexError(f"mode index {p} outside 1..{sys.n_modes}")
    return float(basis_matrix(sys, [x])[0, p - 1])


@dataclass(frozen=True, eq=False)
class SpectralVector:
    """Coefficients ``<w, phi_p>``, p = 1..N, of a function in ``sys``'s basis."""

    coeffs: np.ndarray
    system: EigenSystem = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.shape[0] != self.system.n_modes:
            raise ValueError(
                f"expected {self.system.n_modes} coefficients, got {c.shape[0]}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, system: EigenSystem) -> "SpectralVector":
        return cls(np.zeros(system.n_modes), system)

    def norm(self) -> float:
        """Truncated Parseval norm sqrt(sum c_p^2)."""
        return float(np.sqrt(np.sum(self.coeffs**2)))

    def _other(self, other: "SpectralVector") -> np.ndarray:
        if other.system != self.system:
            raise ValueError("spectral vectors live in different eigensystems")
        return other.coeffs

    def __add__(self, other):
        return SpectralVector(self.coeffs + self._other(other), self.system)

    def __sub__(self, other):
        return SpectralVector(self.coeffs - self._other(other), self.system)

    def __mul__(self, scalar):
        return SpectralVector(self.coeffs * float(scalar), self.system)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralVector(-self.coeffs, self.system)

    def __len__(self):
        return self.coeffs.shape[0]


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    a: float = -1.0
    b: float = 1.0

    @property
    def order(self) -> int:
        return int(self.nodes.shape[0])

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def _legendre_with_derivative(n: int, x: np.ndarray):
    p_prev = np.ones_like(x)
    p = x.copy()
    for j in range(2, n + 1):
        p_prev, p = p, ((2 * j - 1) * x * p - (j - 1) * p_prev) / j
    # P_n'(x) = n (x P_n - P_{n-1}) / (x^2 - 1)
    return p, n * (x * p - p_prev) / (x * x - 1.0)


def gauss_legendre(order: int, a: float = -1.0, b: float = 1.0) -> QuadratureRule:
    """Gauss-Legendre rule with ``order`` points on ``[a, b]``.

    Roots of P_n are found by Newton iteration from Chebyshev-like initial
    guesses, using the three-term recurrence for P_n and its derivative.
    """
    if int(order) != order or order < 1:
        raise ValueError(f"quadrature order must be a positive integer, got {order}")
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    n = int(order)
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(100):
        pn, dp = _legendre_with_derivative(n, x)
        dx = pn / dp
        x = x - dx
        if np.max(np.abs(dx)) < _NEWTON_TOL:
            break
    _, dp = _legendre_with_derivative(n, x)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    x = x[::-1]
    w = w[::-1]
    half = 0.5 * (b - a)
    return QuadratureRule(half * x + 0.5 * (a + b), half * w, float(a), float(b))


def default_space_rule(sys: EigenSystem, order: int = DEFAULT_SPACE_ORDER) -> QuadratureRule:
    return gauss_legendre(order, 0.0, sys.domain_length)


def project(
    sys: EigenSystem,
    w: Callable[[np.ndarray], np.ndarray],
    quad: QuadratureRule | None = None,
) -> SpectralVector:
    """Coefficients ``<w, phi_p>`` by quadrature over ``[0, domain_length]``."""
    if quad is None:
        quad = default_space_rule(sys)
    if abs(quad.a) > _X_SLACK or abs(quad.b - sys.domain_length) > _X_SLACK:
        raise ValueError("quadrature rule must live on [0, domain_length]")
    vals = np.broadcast_to(np.asarray(w(quad.nodes), dtype=float), quad.nodes.shape)
    return SpectralVector(project_values(sys, vals, quad), sys)


def project_values(sys: EigenSystem, values: np.ndarray, quad: QuadratureRule) -> np.ndarray:
    """Project samples at ``quad.nodes`` (last axis) onto the basis.

    Leading axes are batch axes: ``values`` of shape ``(..., order)`` gives
    coefficients of shape ``(..., N)``.
    """
    B = basis_matrix(sys, quad.nodes)
    return (np.asarray(values) * quad.weights) @ B


def synthesize(v: SpectralVector, xs: Sequence[float]) -> np.ndarray:
    """Evaluate ``sum_p c_p phi_p(x)`` at each x."""
    return basis_matrix(v.system, xs) @ v.coeffs
