"""Random complex matrices with i.i.d. entries on the sector ``|arg z| <= alpha``.

An entry is ``r * exp(i*phi)`` where ``r`` has density ``2 r exp(-r^2)`` on
``r >= 0`` and ``phi`` is uniform on ``[-alpha, alpha]``. At ``alpha = 0``
the entries are non-negative reals; at ``alpha = pi`` the moments up to
order four coincide with those of a standard circular complex Gaussian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from ._validation import check_angle
from .exceptions import DomainError, UnsupportedMomentError

QUADRATURE_RADIUS = 8.0


@dataclass(frozen=True)
class EnsembleSpec:
    """Parameters of a reproducible family of random matrices.

    ``stream`` extends the seed key, so that for instance each alpha of a
    sweep gets its own independent family while sharing one user seed.
    """

    alpha: float
    n: int
    seed: int
    count: int = 1
    stream: tuple[int, ...] = field(default=())

    def __post_init__(self):
        check_angle(self.alpha)
        if self.n < 1:
            raise DomainError("n must be at least 1")
        if self.count < 1:
            raise DomainError("count must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """Philox generator keyed by ``(seed, *key)``.

    The key is a pure function of its arguments, so a stream can be rebuilt
    on any worker in any order.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def sample_entries(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Draw an array of i.i.d. entries; two uniforms are consumed per entry."""
    alpha = check_angle(alpha)
    shape = (size,) if np.isscalar(size) else tuple(size)
    u = rng.random(shape + (2,))
    r = np.sqrt(-np.log1p(-u[..., 0]))
    if alpha == 0.0:
        return r.astype(np.complex128)
    phi = alpha * (2.0 * u[..., 1] - 1.0)
    return r * np.exp(1j * phi)


def sample_entry(alpha: float, rng: np.random.Generator) -> complex:
    """A single entry, radius by inverse CDF ``r = sqrt(-ln(1 - U))``."""
    return complex(sample_entries(alpha, 1, rng)[0])


def sample_matrix(spec: EnsembleSpec, index: int) -> np.ndarray:
    """The ``index``-th matrix of the family described by ``spec``."""
    if not 0 <= index < spec.count:
        raise IndexError(f"index {index} outside [0, {spec.count})")
    rng = stream_rng(spec.seed, *spec.stream, index)
    return sample_entries(spec.alpha, (spec.n, spec.n), rng)


def _angular_factor(k: int, alpha: float) -> float:
    # (1 / 2 alpha) * integral_{-alpha}^{alpha} exp(i k phi) dphi
    if k == 0 or alpha == 0.0:
        return 1.0
    return math.sin(k * alpha) / (k * alpha)


def moment_closed_form(p: int, q: int, alpha: float) -> complex:
    """``E[theta^p conj(theta)^q]`` for ``0 <= p, q <= 2``."""
    alpha = check_angle(alpha)
    if not (0 <= p <= 2 and 0 <= q <= 2):
        raise UnsupportedMomentError((p, q))
    if p < q:
        return complex(np.conj(moment_closed_form(q, p, alpha)))
    s = math.sqrt(math.pi)
    if (p, q) == (0, 0):
        value = 1.0
    elif (p, q) == (1, 0):
        value = s / 2 * _angular_factor(1, alpha)
    elif (p, q) == (1, 1):
        value = 1.0
    elif (p, q) == (2, 0):
        value = _angular_factor(2, alpha)
    elif (p, q) == (2, 1):
        value = 3 * s / 4 * _angular_factor(1, alpha)
    else:
        value = 2.0
    return complex(value)


def moment_quadrature(p: int, q: int, alpha: float) -> complex:
    """Numerical moment: adaptive radial quadrature times the exact angular factor."""
    alpha = check_angle(alpha)
    if p < 0 or q < 0 or p + q > 6:
        raise DomainError("quadrature supports p, q >= 0 with p + q <= 6")
    d = p + q
    radial, err = integrate.quad(
        lambda r: 2.0 * r ** (d + 1) * math.exp(-r * r),
        0.0,
        QUADRATURE_RADIUS,
        epsabs=1e-10,
        epsrel=1e-12,
        limit=200,
    )
    if not err < 1e-10:
        raise ArithmeticError(f"radial quadrature reached only {err:.3g}")
    return complex(radial * _angular_factor(p - q, alpha))


class MomentTable:
    """Moments ``mu[p, q] = E[theta^p conj(theta)^q]`` for ``0 <= p, q <= 2``."""

    def __init__(self, mu):
        mu = np.array(mu, dtype=np.complex128)
        if mu.shape != (3, 3):
            raise DomainError("moment table must be 3x3")
        if mu[0, 0] != 1:
            raise DomainError("mu[0, 0] must equal 1")
        if not np.allclose(mu, mu.T.conj(), rtol=0, atol=1e-12):
            raise DomainError("moment table must satisfy mu[q, p] = conj(mu[p, q])")
        self.mu = mu

    def __getitem__(self, pq) -> complex:
        p, q = pq
        return complex(self.mu[p, q])

    def __repr__(self):
        return f"MomentTable({self.mu.tolist()!r})"

    @classmethod
    def from_dict(cls, values: dict) -> "MomentTable":
        """Build from ``{(p, q): value}`` with ``p >= q``; the rest follow by symmetry."""
        mu = np.zeros((3, 3), dtype=np.complex128)
        mu[0, 0] = 1
        for (p, q), v in values.items():
            mu[p, q] = v
            mu[q, p] = np.conj(v)
        return cls(mu)

    @classmethod
    def for_alpha(cls, alpha: float) -> "MomentTable":
        return cls([[moment_closed_form(p, q, alpha) for q in range(3)] for p in range(3)])

    @classmethod
    def gaussian(cls) -> "MomentTable":
        """Standard circular complex Gaussian, ``E|theta|^2 = 1``."""
        return cls.from_dict({(1, 1): 1, (2, 2): 2})

    @classmethod
    def real_gaussian(cls) -> "MomentTable":
        """Real standard normal entries."""
        return cls.from_dict({(1, 1): 1, (2, 0): 1, (2, 2): 3})

    @classmethod
    def all_ones(cls) -> "MomentTable":
        """The degenerate distribution concentrated at 1."""
        return cls(np.ones((3, 3)))
