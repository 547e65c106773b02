"""Sum-product algorithm on the double-edge factor graph N_DE(theta, eps).

Every edge ``(i, j)`` carries four directed 2x2 messages:

* ``to_left``    edge -> left check ``i``  (left-going on the left half-edge)
* ``from_left``  left check ``i`` -> edge  (right-going on the left half-edge)
* ``from_right`` right check ``j`` -> edge (left-going on the right half-edge)
* ``to_right``   edge -> right check ``j`` (right-going on the right half-edge)

Messages are indexed by ``(x, x')`` and kept as ``(m00, m01, m10, m11,
delta)`` with ``delta = m00 m11 - m01 m10``. After every update a message is
divided by ``m00``; when ``|m00|`` is below ``1e-12`` of the trace it is divided
by the trace instead. Check-node outputs use ratio sums plus a directly
propagated determinant, so ``m11 = delta + m01 m10`` is only formed after
normalization and rank-1 messages keep ``delta == 0`` exactly.

One flooding round updates all check outputs from the previous incoming
messages, then all edge outputs from the new check outputs. Every fresh
message is blended with its previous value in ``(m01, m10, delta)``
coordinates (``m00 = 1``): ``new = damping * fresh + (1 - damping) * old``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.stats import unitary_group

from ._validation import as_square_matrix
from .ensembles import stream_rng
from .exceptions import (
    BranchCutWarning,
    DegenerateBeliefError,
    DomainError,
    InfiniteEnergyError,
    NumericalDegeneracyError,
)
from .factorgraph import DenfgModel, build_denfg

M00_REL_TOL = 1e-12
M00_ABS_MIN = 1e-300
ZERO_PERTURBATION = 1e-12
BLEND_M00_MIN = 1e-150


class InitMode(Enum):
    RANDOM_PSD_RANK2 = "rank2"
    RANK1 = "rank1"
    DIAGONAL = "diagonal"


class Degeneracy(Enum):
    RANK1 = "RANK1"
    DIAGONAL = "DIAGONAL"
    GENERIC = "GENERIC"


@dataclass(frozen=True)
class SpaConfig:
    max_iters: int = 2000
    conv_tol: float = 1e-10
    damping: float = 0.5
    init_mode: InitMode = InitMode.RANDOM_PSD_RANK2
    seed: int = 0
    stream: tuple[int, ...] = field(default=())
    rank1_tol: float = 1e-6
    diag_tol: float = 1e-6
    perturb_zeros: bool = False

    def __post_init__(self):
        if not 0.0 <= self.damping <= 1.0:
            raise DomainError(f"damping must lie in [0, 1], got {self.damping}")
        if not self.conv_tol > 0:
            raise DomainError("conv_tol must be positive")
        if self.max_iters < 1:
            raise DomainError("max_iters must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if not isinstance(self.init_mode, InitMode):
            object.__setattr__(self, "init_mode", InitMode(self.init_mode))


@dataclass(frozen=True)
class Message:
    """One 2x2 message per edge; every field has shape ``(n, n)``."""

    m00: np.ndarray
    m01: np.ndarray
    m10: np.ndarray
    m11: np.ndarray
    delta: np.ndarray

    @classmethod
    def from_matrix(cls, M) -> "Message":
        M = np.asarray(M, dtype=np.complex128)
        m00, m01, m10, m11 = M[..., 0, 0], M[..., 0, 1], M[..., 1, 0], M[..., 1, 1]
        return cls(m00.copy(), m01.copy(), m10.copy(), m11.copy(), m00 * m11 - m01 * m10)

    def matrix(self) -> np.ndarray:
        out = np.empty(self.m00.shape + (2, 2), dtype=np.complex128)
        out[..., 0, 0] = self.m00
        out[..., 0, 1] = self.m01
        out[..., 1, 0] = self.m10
        out[..., 1, 1] = self.m11
        return out

    def scaled(self, s: float) -> "Message":
        return Message(s * self.m00, s * self.m01, s * self.m10, s * self.m11, s * s * self.delta)

    def normalized(self) -> "Message":
        tr = self.m00 + self.m11
        ratio = np.abs(self.m00) >= M00_REL_TOL * (np.abs(self.m00) + np.abs(self.m11))
        if np.any(~ratio & (tr == 0)):
            i, j = np.argwhere(~ratio & (tr == 0))[0]
            raise NumericalDegeneracyError(f"message on edge ({i}, {j}) vanished", edge=(int(i), int(j)))
        s = np.where(ratio, self.m00, tr)
        m01, m10, delta = self.m01 / s, self.m10 / s, self.delta / (s * s)
        m00 = np.where(ratio, 1.0 + 0j, self.m00 / s)
        m11 = np.where(ratio, delta + m01 * m10, self.m11 / s)
        return Message(m00, m01, m10, m11, delta)


@dataclass(frozen=True)
class MessageState:
    to_left: Message
    from_left: Message
    from_right: Message
    to_right: Message
    iteration: int = 0

    def families(self) -> tuple[Message, Message, Message, Message]:
        return (self.to_left, self.from_left, self.from_right, self.to_right)


@dataclass(frozen=True)
class Beliefs:
    bL: np.ndarray  # (n, n, n): bL[i][l, k]
    bR: np.ndarray  # (n, n, n): bR[j][l, k]
    be: np.ndarray  # (n, n, 2, 2)


@dataclass(frozen=True)
class BetheEnergy:
    U: float
    H: float
    F: float
    imag_residue: float = 0.0

    def __iter__(self):
        return iter((self.U, self.H, self.F))


@dataclass(frozen=True)
class SpaResult:
    zb_spa: float
    log_zb_spa: float
    converged: bool
    iterations: int
    degeneracy: Degeneracy
    beliefs: Beliefs
    energy: BetheEnergy
    consistency_residual: float
    state: MessageState
    final_metric: float


# message updates


def _check_update(msg: Message, axis: int) -> Message:
    # axis 1: left checks (sum over columns j' != j); axis 0: right checks
    n = msg.m00.shape[0]
    if n > 1:
        small = np.abs(msg.m00) < M00_ABS_MIN
        if np.any(small):
            i, j = np.argwhere(small)[0]
            raise NumericalDegeneracyError(
                f"m00 of the message on edge ({i}, {j}) is below {M00_ABS_MIN:g}", edge=(int(i), int(j))
            )
    if n == 1:
        # no other edges: the check forces (1, 1) on the only one
        a = b = d = np.zeros_like(msg.m00)
    else:
        a = msg.m01 / msg.m00
        b = msg.m10 / msg.m00
        d = msg.delta / (msg.m00 * msg.m00)
    off = 1.0 - np.eye(n)
    if axis == 1:
        Sa, Sb, Sd = a @ off, b @ off, d @ off
    else:
        Sa, Sb, Sd = off @ a, off @ b, off @ d
    one = np.ones_like(Sa)
    return Message(Sd + Sb * Sa, Sb, Sa, one, Sd).normalized()


def _edge_update(msg: Message, model: DenfgModel) -> Message:
    th = model.theta
    t2 = np.abs(th) ** 2
    eps = model.epsilon
    if np.any(eps):
        delta = t2 * msg.delta + eps * msg.m00 * msg.m11
    else:
        delta = t2 * msg.delta
    out = Message(msg.m00, th.conj() * msg.m01, th * msg.m10, (t2 + eps) * msg.m11, delta)
    return out.normalized()


def _trace_normalized(msg: Message) -> np.ndarray:
    M = msg.matrix()
    tr = msg.m00 + msg.m11
    fro = np.linalg.norm(M, axis=(-2, -1))
    s = np.where(np.abs(tr) > 1e-300, tr, np.where(fro > 0, fro, 1.0))
    return M / s[..., None, None]


def _blend(old: Message, fresh: Message, damping: float) -> Message:
    if damping == 1.0:
        return fresh
    if damping == 0.0:
        return old
    keep = 1.0 - damping

    def usable(m):
        return np.abs(m.m00) > BLEND_M00_MIN * (np.abs(m.m00) + np.abs(m.m11))

    ratio = usable(old) & usable(fresh)
    with np.errstate(divide="ignore", invalid="ignore"):
        o0 = np.where(ratio, old.m00, 1.0)
        f0 = np.where(ratio, fresh.m00, 1.0)
        m01 = damping * fresh.m01 / f0 + keep * old.m01 / o0
        m10 = damping * fresh.m10 / f0 + keep * old.m10 / o0
        delta = damping * fresh.delta / (f0 * f0) + keep * old.delta / (o0 * o0)
    out = Message(np.ones_like(m01), m01, m10, delta + m01 * m10, delta)
    if not np.all(ratio):
        # messages with a vanishing m00 are blended as trace-normalized matrices
        T = damping * _trace_normalized(fresh) + keep * _trace_normalized(old)
        alt = Message.from_matrix(T)
        fields = [np.where(ratio, getattr(out, f), getattr(alt, f)) for f in ("m00", "m01", "m10", "m11", "delta")]
        out = Message(*fields)
    return out.normalized()


def _distance(a: Message, b: Message) -> float:
    return float(np.linalg.norm(_trace_normalized(a) - _trace_normalized(b), axis=(-2, -1)).max())


def _haar_psd(rng: np.random.Generator, count: int, mode: InitMode) -> tuple[np.ndarray, np.ndarray]:
    U = unitary_group.rvs(2, size=count, random_state=rng).reshape(count, 2, 2)
    D = rng.exponential(size=(count, 2))
    if mode is InitMode.RANK1:
        D[:, 1] = 0.0
    if mode is InitMode.DIAGONAL:
        U = np.broadcast_to(np.eye(2), (count, 2, 2))
    M = np.einsum("kab,kb,kcb->kac", U, D, U.conj())
    return M, D[:, 0] * D[:, 1]


def _random_message(rng: np.random.Generator, n: int, mode: InitMode) -> Message:
    M, det = _haar_psd(rng, n * n, mode)
    M = M.reshape(n, n, 2, 2)
    if mode is InitMode.DIAGONAL:
        M[..., 0, 1] = 0.0
        M[..., 1, 0] = 0.0
    msg = Message.from_matrix(M)
    # the determinant is known exactly from the eigenvalues
    msg = replace(msg, delta=det.reshape(n, n).astype(np.complex128))
    return msg.normalized()


def init_messages(model: DenfgModel, config: SpaConfig, rng: np.random.Generator) -> MessageState:
    """Random Hermitian PSD left-going messages; right-going ones follow by one update."""
    n = model.n
    to_left = _random_message(rng, n, config.init_mode)
    from_right = _random_message(rng, n, config.init_mode)
    from_left = _check_update(to_left, axis=1)
    to_right = _edge_update(from_left, model)
    return MessageState(to_left, from_left, from_right, to_right, 0)


def spa_step(state: MessageState, model: DenfgModel, config: SpaConfig) -> tuple[MessageState, float]:
    """One damped flooding round; returns the new state and the change metric."""
    d = config.damping
    tl, fl, fr, tr = (m.normalized() for m in state.families())
    new_fl = _blend(fl, _check_update(tl, axis=1), d)
    new_fr = _blend(fr, _check_update(tr, axis=0), d)
    new_tl = _blend(tl, _edge_update(new_fr, model), d)
    new_tr = _blend(tr, _edge_update(new_fl, model), d)
    new = MessageState(new_tl, new_fl, new_fr, new_tr, state.iteration + 1)
    metric = max(_distance(a, b) for a, b in zip((tl, fl, fr, tr), new.families()))
    return new, metric


# beliefs and free energy


def _normalize_belief(b: np.ndarray, what: str) -> np.ndarray:
    s = b.sum(axis=(-2, -1), keepdims=True)
    if np.any(np.abs(s) < 1e-300):
        raise DegenerateBeliefError(f"{what} belief sums to zero")
    return b / s


def _check_beliefs(M: np.ndarray) -> np.ndarray:
    # M[c, j] is the 2x2 message between check c and its j-th edge
    n = M.shape[0]
    eye = np.eye(n, dtype=np.int64)
    X = np.broadcast_to(eye[:, None, :], (n, n, n))
    Xp = np.broadcast_to(eye[None, :, :], (n, n, n))
    J = np.broadcast_to(np.arange(n), (n, n, n))
    return np.prod(M[:, J, X, Xp], axis=-1)


def beliefs_from_messages(state: MessageState, model: DenfgModel) -> Beliefs:
    """Check-node beliefs from incoming messages, edge beliefs ``W * mu_L * mu_R``."""
    tl = state.to_left.normalized().matrix()
    tr = state.to_right.normalized().matrix()
    bL = _normalize_belief(_check_beliefs(tl), "left check")
    bR = _normalize_belief(_check_beliefs(np.swapaxes(tr, 0, 1)), "right check")
    be = model.W * state.from_left.normalized().matrix() * state.from_right.normalized().matrix()
    be = _normalize_belief(be, "edge")
    return Beliefs(bL=bL, bR=bR, be=be)


def _edge_marginals(b: np.ndarray) -> np.ndarray:
    # b[c, l, k] -> m[c, j, x, x'] summing over l, k with [j = l] = x, [j = k] = x'
    n = b.shape[0]
    off = 1.0 - np.eye(n)
    out = np.empty((n, n, 2, 2), dtype=np.complex128)
    out[..., 1, 1] = np.diagonal(b, axis1=1, axis2=2)
    out[..., 1, 0] = np.einsum("cjk,jk->cj", b, off)
    out[..., 0, 1] = np.einsum("clj,lj->cj", b, off)
    out[..., 0, 0] = np.einsum("clk,lj,kj->cj", b, off, off)
    return out


def consistency_residual(beliefs: Beliefs) -> float:
    """Largest violation of the edge-consistency (marginalization) constraints."""
    left = _edge_marginals(beliefs.bL)
    right = np.swapaxes(_edge_marginals(beliefs.bR), 0, 1)
    return float(max(np.abs(left - beliefs.be).max(), np.abs(right - beliefs.be).max()))


def _paired_xlogy(X: np.ndarray, Y: np.ndarray) -> complex:
    """``sum X * log(Y)`` over stacks of square matrices with ``0 log 0 = 0``.

    Entries below the diagonal use the conjugate of the log of their mirror
    entry, so Hermitian ``X`` and ``Y`` give an exactly real sum even when an
    entry sits on the negative real axis.
    """
    if np.any((X != 0) & (Y == 0)):
        raise InfiniteEnergyError("belief mass on a zero weight entry")
    m = X.shape[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        L = np.where(Y != 0, np.log(np.where(Y != 0, Y, 1.0)), 0.0)
    Lt = np.conj(np.swapaxes(L, -1, -2))
    Yt = np.swapaxes(Y, -1, -2)
    lower = np.tril(np.ones((m, m), dtype=bool), k=-1)
    Ls = np.where(lower & (Yt != 0), Lt, L)
    return complex(np.where(X != 0, X * Ls, 0.0).sum())


def bethe_free_energy(beliefs: Beliefs, model: DenfgModel) -> BetheEnergy:
    """``U_B``, ``H_B`` and ``F_B = U_B - H_B`` with principal logarithms."""
    U = -_paired_xlogy(beliefs.be, model.W)
    H = (
        -_paired_xlogy(beliefs.bL, beliefs.bL)
        - _paired_xlogy(beliefs.bR, beliefs.bR)
        + _paired_xlogy(beliefs.be, beliefs.be)
    )
    F = U - H
    residue = abs(U.imag) + abs(H.imag)
    if residue > 1e-7 * (1 + abs(F)):
        warnings.warn(f"Bethe free energy has imaginary residue {residue:.3g}", BranchCutWarning, stacklevel=2)
    return BetheEnergy(U=U.real, H=H.real, F=F.real, imag_residue=residue)


def classify_degeneracy(state: MessageState, rank1_tol: float = 1e-6, diag_tol: float = 1e-6) -> Degeneracy:
    """RANK1 if every message is numerically rank 1, else DIAGONAL if every
    message is numerically diagonal, else GENERIC."""
    rank1 = True
    diag = True
    for msg in state.families():
        m = msg.normalized()
        fro2 = np.abs(m.m00) ** 2 + np.abs(m.m01) ** 2 + np.abs(m.m10) ** 2 + np.abs(m.m11) ** 2
        off = np.sqrt(np.abs(m.m01) ** 2 + np.abs(m.m10) ** 2)
        rank1 &= bool(np.all(np.abs(m.delta) < rank1_tol * fro2))
        diag &= bool(np.all(off < diag_tol * np.sqrt(fro2)))
    if rank1:
        return Degeneracy.RANK1
    if diag:
        return Degeneracy.DIAGONAL
    return Degeneracy.GENERIC


def _checked_model(model: DenfgModel, perturb: bool) -> DenfgModel:
    bad = (model.theta == 0) & (model.epsilon <= 0)
    if not np.any(bad):
        return model
    if not perturb:
        i, j = np.argwhere(bad)[0]
        raise DomainError(
            f"theta[{i}, {j}] = 0 with epsilon = 0 makes ln W undefined; set perturb_zeros to replace it"
        )
    return build_denfg(np.where(bad, ZERO_PERTURBATION, model.theta), model.epsilon)


def run_spa(
    model: DenfgModel,
    config: SpaConfig | None = None,
    state: MessageState | None = None,
    rng: np.random.Generator | None = None,
) -> SpaResult:
    """Iterate :func:`spa_step` to a fixed point and evaluate ``Z_B,SPA``.

    Starts from ``state`` when given, else from :func:`init_messages` with
    ``rng`` (default: the stream keyed by ``config.seed`` and
    ``config.stream``). A converged run gets one final undamped round before
    the beliefs are read off. Non-convergence is reported, not raised.
    """
    config = config or SpaConfig()
    model = _checked_model(model, config.perturb_zeros)
    if state is None:
        rng = rng if rng is not None else stream_rng(config.seed, *config.stream)
        state = init_messages(model, config, rng)
    converged = False
    metric = math.inf
    iterations = 0
    for iterations in range(1, config.max_iters + 1):
        state, metric = spa_step(state, model, config)
        if metric < config.conv_tol:
            converged = True
            break
    if converged and config.damping != 1.0:
        state, _ = spa_step(state, model, replace(config, damping=1.0))
    beliefs = beliefs_from_messages(state, model)
    energy = bethe_free_energy(beliefs, model)
    return SpaResult(
        zb_spa=math.exp(-energy.F) if -energy.F < 709 else math.inf,
        log_zb_spa=-energy.F,
        converged=converged,
        iterations=iterations,
        degeneracy=classify_degeneracy(state, config.rank1_tol, config.diag_tol),
        beliefs=beliefs,
        energy=energy,
        consistency_residual=consistency_residual(beliefs),
        state=state,
        final_metric=metric,
    )


# scalar SPA on N(theta)


def _vec_normalized(v: np.ndarray) -> np.ndarray:
    ratio = np.abs(v[..., 0]) >= M00_REL_TOL * (np.abs(v[..., 0]) + np.abs(v[..., 1]))
    s = np.where(ratio, v[..., 0], v[..., 0] + v[..., 1])
    out = v / s[..., None]
    out[..., 0] = np.where(ratio, 1.0, out[..., 0])
    return out


def _vec_check(v: np.ndarray, axis: int) -> np.ndarray:
    n = v.shape[0]
    if n > 1 and np.any(np.abs(v[..., 0]) < M00_ABS_MIN):
        i, j = np.argwhere(np.abs(v[..., 0]) < M00_ABS_MIN)[0]
        raise NumericalDegeneracyError(f"ratio update on edge ({i}, {j}) is singular", edge=(int(i), int(j)))
    lam = v[..., 1] / v[..., 0] if n > 1 else np.zeros_like(v[..., 0])
    off = 1.0 - np.eye(n)
    S = lam @ off if axis == 1 else off @ lam
    return _vec_normalized(np.stack([S, np.ones_like(S)], axis=-1))


def _vec_edge(v: np.ndarray, th: np.ndarray) -> np.ndarray:
    return _vec_normalized(np.stack([v[..., 0], th * v[..., 1]], axis=-1))


def _vec_blend(old: np.ndarray, fresh: np.ndarray, d: float) -> np.ndarray:
    if d == 1.0:
        return fresh
    if d == 0.0:
        return old

    def usable(v):
        return np.abs(v[..., 0]) > BLEND_M00_MIN * (np.abs(v[..., 0]) + np.abs(v[..., 1]))

    ratio = usable(old) & usable(fresh)
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = d * fresh[..., 1] / fresh[..., 0] + (1 - d) * old[..., 1] / old[..., 0]
        lin = np.stack([np.ones_like(lam), lam], axis=-1)
    alt = d * fresh / fresh.sum(axis=-1, keepdims=True) + (1 - d) * old / old.sum(axis=-1, keepdims=True)
    return _vec_normalized(np.where(ratio[..., None], lin, alt))


def _vec_distance(a: np.ndarray, b: np.ndarray) -> float:
    def proj(v):
        P = v[..., :, None] * np.conj(v[..., None, :])
        return P / (np.abs(v) ** 2).sum(axis=-1)[..., None, None]

    return float(np.linalg.norm(proj(a) - proj(b), axis=(-2, -1)).max())


def _xlogx(p: np.ndarray) -> complex:
    with np.errstate(divide="ignore", invalid="ignore"):
        return complex(np.where(p != 0, p * np.log(np.where(p != 0, p, 1.0)), 0.0).sum())


def spa_nfg_scalar(theta, config: SpaConfig | None = None) -> complex:
    """``exp(-F_B)`` at the scalar SPA fixed point on N(theta).

    Messages are ratios ``lambda = mu(1) / mu(0)`` with the same flooding
    schedule and damping as :func:`spa_step`; the initial messages are the
    RANK1 draws of :func:`init_messages`, so a RANK1 double-edge run follows
    the same trajectory. Returns a complex number; for non-negative ``theta``
    it is the classical Bethe permanent.
    """
    config = config or SpaConfig()
    th = as_square_matrix(theta, "theta")
    if np.any(th == 0):
        raise DomainError("spa_nfg_scalar requires nonzero theta entries")
    n = th.shape[0]
    rng = stream_rng(config.seed, *config.stream)

    def draw():
        return _random_message(rng, n, InitMode.RANK1)

    to_l, fr_r = draw(), draw()
    tl = _vec_normalized(np.stack([to_l.m00, to_l.m10], axis=-1))
    fr = _vec_normalized(np.stack([fr_r.m00, fr_r.m10], axis=-1))
    fl = _vec_check(tl, axis=1)
    tr = _vec_edge(fl, th)

    def step(tl, fl, fr, tr, d):
        nfl = _vec_blend(fl, _vec_check(tl, 1), d)
        nfr = _vec_blend(fr, _vec_check(tr, 0), d)
        ntl = _vec_blend(tl, _vec_edge(nfr, th), d)
        ntr = _vec_blend(tr, _vec_edge(nfl, th), d)
        metric = max(_vec_distance(a, b) for a, b in zip((tl, fl, fr, tr), (ntl, nfl, nfr, ntr)))
        return ntl, nfl, nfr, ntr, metric

    converged = False
    for _ in range(config.max_iters):
        tl, fl, fr, tr, metric = step(tl, fl, fr, tr, config.damping)
        if metric < config.conv_tol:
            converged = True
            break
    if converged and config.damping != 1.0:
        tl, fl, fr, tr, _ = step(tl, fl, fr, tr, 1.0)
    if not converged:
        warnings.warn("scalar SPA did not converge", RuntimeWarning, stacklevel=2)

    eye = np.eye(n, dtype=np.int64)
    J = np.broadcast_to(np.arange(n), (n, n))
    bL = np.prod(tl[:, J, eye], axis=-1)
    bR = np.prod(np.swapaxes(tr, 0, 1)[:, J, eye], axis=-1)
    be = np.stack([fl[..., 0] * fr[..., 0], th * fl[..., 1] * fr[..., 1]], axis=-1)
    bL = bL / bL.sum(axis=-1, keepdims=True)
    bR = bR / bR.sum(axis=-1, keepdims=True)
    be = be / be.sum(axis=-1, keepdims=True)
    U = -complex((be[..., 1] * np.log(th)).sum())
    H = -_xlogx(bL) - _xlogx(bR) + _xlogx(be)
    return complex(np.exp(-(U - H)))
