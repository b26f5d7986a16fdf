"""Dimension- and beta-derived constants and regime classification.

The evolution is ``u_t = (1/m) Lap(u^m)`` with ``m = (N-2)/(N+2)``. With this
diffusion coefficient the cylinder ``(C*(T-t)/r^2)^(1/n)`` and the Barenblatt
family are exact solutions with ``C* = N - 2``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Optional

from .errors import DegenerateRoots, DomainError, EmptyRegime, OscillatoryRegime

# relative tolerance used to decide beta == beta0 or beta == beta1
BETA_RTOL = 1e-10


class Regime(enum.Enum):
    SLOW_NEGATIVE_TAIL = "SlowNegativeTail"
    SLOW_POSITIVE_TAIL = "SlowPositiveTail"
    FAST_BARENBLATT = "FastBarenblatt"
    OSCILLATORY = "Oscillatory"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True)
class ModelParams:
    """Constants that depend on the dimension only."""

    N: int
    m: float
    n: float
    p: float
    alphaBar: float
    cStar: float
    kappa: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SimilarityParams:
    """Constants for one choice of (N, beta).

    Optional fields are ``None`` outside the regime where they are defined.
    """

    model: ModelParams
    beta: float
    alpha: float
    beta0: float
    beta1: float
    theta: float
    gamma1: Optional[float] = None
    gamma2: Optional[float] = None
    A1: Optional[float] = None
    A2: Optional[float] = None
    CN: Optional[float] = None
    p0: Optional[float] = None
    p1: Optional[float] = None
    p2: Optional[float] = None

    @property
    def N(self) -> int:
        return self.model.N

    @property
    def regime(self) -> Regime:
        return regime_classify(self.model.N, self.beta)

    @property
    def decay_rate(self) -> float:
        """L1 decay exponent ``beta*N - alpha`` of the left-rescaled flow."""
        return self.beta * self.model.N - self.alpha

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "model"}
        d.update(self.model.to_dict())
        d["regime"] = self.regime.value
        return d


def _check_dim(N) -> int:
    if isinstance(N, bool) or int(N) != N:
        raise DomainError("dimension must be an integer")
    N = int(N)
    if N < 3:
        raise DomainError("dimension must be ≥ 3")
    return N


def c_star_exact(N: int) -> Fraction:
    """``C* = 2((1-m)N - 2)/n`` in rational arithmetic."""
    N = _check_dim(N)
    m = Fraction(N - 2, N + 2)
    n = 1 - m
    return 2 * ((1 - m) * N - 2) / n


def derive_exponents(N: int) -> ModelParams:
    """Return the dimension-dependent constants.

    Examples
    --------
    >>> mp = derive_exponents(3)
    >>> mp.m, mp.cStar
    (0.2, 1.0)
    """
    N = _check_dim(N)
    m = (N - 2) / (N + 2)
    n = 4 / (N + 2)
    return ModelParams(
        N=N,
        m=m,
        n=n,
        p=(N + 2) / (N - 2),
        alphaBar=(N - 2) ** 2 / 4,
        cStar=float(c_star_exact(N)),
        kappa=1 / m,
    )


def _beta0(N: int) -> float:
    return 2 / math.sqrt(N - 2)


def _beta1(N: int) -> float:
    return (N + 2) / (2 * (N - 2))


def _is_close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=BETA_RTOL, abs_tol=0.0)


def characteristic_exponents(N: int, beta: float) -> tuple[float, float]:
    """Real roots ``gamma1 <= gamma2`` of ``g^2 - beta(N-2) g + (N-2) = 0``.

    The roots are the decay rates in log-radius of the linearization
    around the cylinder. Uses the cancellation-free form for ``gamma1``.
    """
    N = _check_dim(N)
    b0 = _beta0(N)
    if beta < b0 and not _is_close(beta, b0):
        raise OscillatoryRegime(f"beta={beta} < beta0={b0}: complex exponents")
    s = beta * (N - 2)
    disc = s * s - 4 * (N - 2)
    if disc <= 0 or _is_close(beta, b0):
        g = math.sqrt(N - 2)
        return g, g
    root = math.sqrt(disc)
    g2 = 0.5 * (s + root)
    g1 = (N - 2) / g2
    return g1, g2


def _weighted_exponents(N: int, beta: float, m: float) -> tuple[float, float]:
    root = math.sqrt(beta * beta - 4 / (N - 2))
    return m * (1 - beta - root), m * (1 - beta + root)


def weight_drift_coefficient(N: int, beta: float, p: float) -> float:
    """Quadratic ``K_N(p)`` whose sign decides weighted contraction.

    Its roots are ``p1`` and ``p2``; it is nonpositive between them.
    """
    num = (
        -4
        - 2 * beta * (N - 2) ** 2
        + N * N
        + 2 * (beta - 1) * (N * N - 4) * p
        + (N + 2) ** 2 * p * p
    )
    return num / (4 * (N - 2))


def similarity_params(mp: ModelParams, beta: float) -> SimilarityParams:
    """Collect every beta-dependent constant for the dimension in ``mp``."""
    if not beta > 0:
        raise DomainError("beta must be positive")
    N = mp.N
    beta = float(beta)
    alpha = (1 + 2 * beta) / mp.n
    b0, b1 = _beta0(N), _beta1(N)
    fields = dict(
        model=mp,
        beta=beta,
        alpha=alpha,
        beta0=b0,
        beta1=b1,
        theta=alpha / beta,
    )
    if beta >= b0 or _is_close(beta, b0):
        g1, g2 = characteristic_exponents(N, beta)
        fields.update(gamma1=g1, gamma2=g2)
        a = mp.p / (mp.p - 1)
        fields.update(A1=a - beta * g1, A2=a - beta * g2)
        if g2 > g1:
            fields["CN"] = (N - 2) / (mp.p * (g2 - g1))
    if b0 < beta < b1 and not (_is_close(beta, b0) or _is_close(beta, b1)):
        p1, p2 = _weighted_exponents(N, beta, mp.m)
        fields.update(p0=p2, p1=p1, p2=p2)
    return SimilarityParams(**fields)


def linearization_coefficients(sp: SimilarityParams) -> tuple[float, float, float]:
    """Return ``(A1, A2, CN)``."""
    if sp.gamma1 is None:
        raise OscillatoryRegime("linearization coefficients need beta >= beta0")
    if sp.CN is None:
        raise DegenerateRoots("gamma1 == gamma2 at beta == beta0")
    return sp.A1, sp.A2, sp.CN


def regime_classify(N: int, beta: float) -> Regime:
    """Classify ``(N, beta)`` into the tail regimes of the smooth shrinkers."""
    N = _check_dim(N)
    if not beta > 0:
        raise DomainError("beta must be positive")
    b0, b1 = _beta0(N), _beta1(N)
    if _is_close(beta, b1) and N <= 6:
        return Regime.FAST_BARENBLATT
    if _is_close(beta, b0):
        return Regime.DEGENERATE
    if beta < b0:
        return Regime.OSCILLATORY
    g1, _ = characteristic_exponents(N, beta)
    A1 = (N + 2) / 4 - beta * g1
    if A1 > 0:
        return Regime.SLOW_NEGATIVE_TAIL
    if A1 < 0:
        return Regime.SLOW_POSITIVE_TAIL
    return Regime.FAST_BARENBLATT


@dataclass(frozen=True)
class WeightedContraction:
    p0: float
    p1: float
    p2: float
    KN: float


def weighted_contraction_params(N: int, beta: float) -> WeightedContraction:
    """Exponents of the weight ``C(y)^p0`` for the weighted L1 contraction.

    ``KN`` is the drift coefficient evaluated at ``p0 = p2``, which is zero up
    to rounding.
    """
    N = _check_dim(N)
    b0, b1 = _beta0(N), _beta1(N)
    if N <= 6:
        raise EmptyRegime(f"no beta with beta0 < beta < beta1 is available for N={N}")
    if not (b0 < beta < b1) or _is_close(beta, b0) or _is_close(beta, b1):
        raise EmptyRegime(f"beta={beta} outside ({b0}, {b1})")
    m = (N - 2) / (N + 2)
    p1, p2 = _weighted_exponents(N, beta, m)
    return WeightedContraction(p0=p2, p1=p1, p2=p2, KN=weight_drift_coefficient(N, beta, p2))
