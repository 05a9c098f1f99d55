"""Discrete-time linear state-space blocks used as controllers and filters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .spectral import DimensionError, as_matrix

__all__ = [
    "LinearBlock",
    "SignalRange",
    "block_step",
    "batch_step",
    "realize_toy_controller",
    "build_pi",
    "build_lag",
    "delay_filter",
    "passthrough_filter",
]


@dataclass(frozen=True)
class SignalRange:
    """Closed interval of admissible broadcast signals."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or not self.lo < self.hi:
            raise ValueError(f"signal range needs finite lo < hi, got [{self.lo}, {self.hi}]")

    def clamp(self, v: float) -> float:
        return min(max(v, self.lo), self.hi)

    def grid(self, n: int = 1001) -> np.ndarray:
        return np.linspace(self.lo, self.hi, n)


@dataclass(eq=False)
class LinearBlock:
    """State-space system ``x+ = A x + B u``, ``y = C x + D u``.

    With ``update_period = q > 1`` the block is a zero-order hold: at steps
    ``k`` with ``k % q == 0`` it computes a new output and advances its
    state; at all other steps it returns ``held_output`` and leaves the
    state untouched.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    x: Optional[np.ndarray] = None
    update_period: int = 1
    held_output: Optional[np.ndarray] = None
    name: str = ""
    _stacked: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.A = _mat(self.A, "A")
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionError(f"{self.label}: A must be square, got {self.A.shape}")
        self.B = _mat(self.B, "B", rows=n)
        self.C = _mat(self.C, "C", cols=n)
        m, p = self.B.shape[1], self.C.shape[0]
        self.D = _mat(self.D, "D", rows=p, cols=m)
        if self.B.shape[0] != n or self.C.shape[1] != n or self.D.shape != (p, m):
            raise DimensionError(
                f"{self.label}: incompatible shapes A{self.A.shape} B{self.B.shape} "
                f"C{self.C.shape} D{self.D.shape}"
            )
        if int(self.update_period) < 1:
            raise ValueError(f"{self.label}: update_period must be a positive integer")
        self.update_period = int(self.update_period)
        self.x = np.zeros(n) if self.x is None else np.array(self.x, dtype=float).reshape(n)
        self.held_output = np.zeros(p) if self.held_output is None else np.array(self.held_output, dtype=float).reshape(p)
        self._stacked = np.block([[self.A, self.B], [self.C, self.D]])

    @property
    def label(self) -> str:
        return self.name or "block"

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def reset(self, x0=None, held_output=None) -> None:
        self.x = np.zeros(self.n) if x0 is None else np.array(x0, dtype=float).reshape(self.n)
        self.held_output = np.zeros(self.p) if held_output is None else np.array(held_output, dtype=float).reshape(self.p)

    def copy(self) -> "LinearBlock":
        return LinearBlock(self.A, self.B, self.C, self.D, self.x.copy(), self.update_period,
                           self.held_output.copy(), self.name)

    def step(self, u, k: int) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(-1)
        if u.shape[0] != self.m:
            raise DimensionError(f"{self.label}: input has dimension {u.shape[0]}, expected {self.m}")
        if k % self.update_period:
            return self.held_output
        z = self._stacked @ np.concatenate((self.x, u))
        self.x = z[:self.n]
        self.held_output = z[self.n:]
        return self.held_output


def _mat(a, name, rows=None, cols=None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        if rows is not None and cols is not None:
            arr = arr.reshape(rows, cols)
        elif rows is not None:
            arr = arr.reshape(rows, -1) if arr.size else arr.reshape(rows, 0)
        else:
            arr = arr.reshape(1, -1)
    return as_matrix(arr, name)


def block_step(block: LinearBlock, input, k: int) -> np.ndarray:
    """Advance ``block`` by one step ``k`` and return a copy of its output."""
    return block.step(input, k).copy()


def batch_step(block: LinearBlock, X: np.ndarray, held: np.ndarray, U: np.ndarray, k: int):
    """Step ``R`` independent copies of ``block`` at once.

    ``X`` is ``(R, n)``, ``held`` ``(R, p)`` and ``U`` ``(R, m)``; returns the
    new ``(X, held)``. Products are accumulated column by column so each row
    is computed exactly as it would be with ``R = 1``.
    """
    if k % block.update_period:
        return X, held
    S = block._stacked
    V = np.concatenate((X, U), axis=1)
    if V.shape[1] == 0:
        Z = np.zeros((V.shape[0], S.shape[0]))
    else:
        Z = S[None, :, 0] * V[:, 0, None]
        for j in range(1, V.shape[1]):
            Z = Z + S[None, :, j] * V[:, j, None]
    return Z[:, :block.n], Z[:, block.n:]


def realize_toy_controller(alpha: float, beta: float, kappa: float, period: int = 1) -> LinearBlock:
    """Two-state realization of ``pi(k) = beta pi(k-1) + kappa (e(k) - alpha e(k-1))``.

    The state is ``[pi(k-1), e(k-1)]``; the state matrix is upper
    triangular with eigenvalues ``{beta, 0}``.
    """
    ka = -kappa * alpha
    return LinearBlock(
        A=[[beta, ka], [0.0, 0.0]],
        B=[[kappa], [1.0]],
        C=[[beta, ka]],
        D=[[kappa]],
        update_period=period,
        name="toy_controller",
    )


def build_pi(Kp: float, Ki: float, period: int = 1) -> LinearBlock:
    """PI controller ``pi = Kp e + Ki (x + e)`` with integrator ``x+ = x + e``.

    The state matrix is ``[1]`` so the block is never Schur.
    """
    return LinearBlock(A=[[1.0]], B=[[1.0]], C=[[Ki]], D=[[Kp + Ki]], update_period=period, name="pi_controller")


def build_lag(Kp: float, Ki: float, rho: float, period: int = 1) -> LinearBlock:
    """Lag approximant of the PI controller: ``pi = Kp e + Ki (rho x + e)``, ``x+ = rho x + e``."""
    if not abs(rho) < 1.0:
        raise ValueError(
            f"lag pole rho={rho} must satisfy |rho| < 1: certification requires a stable "
            "(Schur) controller state matrix, and |rho| >= 1 reproduces the PI integrator"
        )
    return LinearBlock(A=[[rho]], B=[[1.0]], C=[[Ki * rho]], D=[[Kp + Ki]], update_period=period, name="lag_controller")


def delay_filter() -> LinearBlock:
    """``yhat(k) = y(k-1)``: the default filter when a scenario omits one."""
    return LinearBlock(A=[[0.0]], B=[[1.0]], C=[[1.0]], D=[[0.0]], name="delay_filter")


def passthrough_filter() -> LinearBlock:
    """Stateless filter ``yhat(k) = y(k)``."""
    return LinearBlock(A=np.zeros((0, 0)), B=np.zeros((0, 1)), C=np.zeros((1, 0)), D=[[1.0]], name="passthrough_filter")

