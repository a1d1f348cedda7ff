"""Finite-dimensional operator calculus: inner derivations, matrix-function
Frechet derivatives via divided differences, second-order operator Taylor
expansion, and midpoint (Stratonovich-style) discrete products.

All derivative formulas are evaluated in the eigenbasis of a hermitian
matrix; the divided-difference (Daleckii-Krein) representation replaces the
integral definition, which the tests keep only as a finite-difference oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import expm

__all__ = [
    "OperatorFunction",
    "inner_derivation",
    "frechet_derivative",
    "operator_taylor",
    "strat_product",
    "constant_commutator_defect",
    "apply_exp_derivation",
    "poly_of_shifted_derivation",
    "hermitian_matrix_function",
]

_DEGENERACY_REL_TOL = 1e-12


@dataclass(frozen=True)
class OperatorFunction:
    """Scalar map f with first and second derivatives, plus a matrix
    realization usable on general (non-hermitian) square matrices."""

    label: str
    fn: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]
    matrix_fn: Callable[[np.ndarray], np.ndarray] = field(compare=False, default=None)

    @classmethod
    def polynomial(cls, coefficients, label: str | None = None) -> "OperatorFunction":
        c = np.asarray(coefficients, dtype=float)
        c1 = np.polynomial.polynomial.polyder(c) if len(c) > 1 else np.zeros(1)
        c2 = np.polynomial.polynomial.polyder(c1) if len(c1) > 1 else np.zeros(1)
        pv = np.polynomial.polynomial.polyval

        def matrix_poly(a: np.ndarray) -> np.ndarray:
            out = c[-1] * np.eye(a.shape[0], dtype=complex)
            for k in range(len(c) - 2, -1, -1):
                out = out @ a + c[k] * np.eye(a.shape[0])
            return out

        return cls(
            label=label or f"poly{list(c)}",
            fn=lambda x: pv(x, c),
            d1=lambda x: pv(x, c1),
            d2=lambda x: pv(x, c2),
            matrix_fn=matrix_poly,
        )

    @classmethod
    def monomial(cls, n: int) -> "OperatorFunction":
        coeff = np.zeros(n + 1)
        coeff[n] = 1.0
        return cls.polynomial(coeff, label=f"x^{n}")

    @classmethod
    def exponential(cls, scale: float = 1.0) -> "OperatorFunction":
        s = float(scale)
        return cls(
            label=f"exp({s}x)",
            fn=lambda x: np.exp(s * x),
            d1=lambda x: s * np.exp(s * x),
            d2=lambda x: s * s * np.exp(s * x),
            matrix_fn=lambda a: expm(s * a),
        )

    def __add__(self, other: "OperatorFunction") -> "OperatorFunction":
        return OperatorFunction(
            label=f"({self.label}+{other.label})",
            fn=lambda x: self.fn(x) + other.fn(x),
            d1=lambda x: self.d1(x) + other.d1(x),
            d2=lambda x: self.d2(x) + other.d2(x),
            matrix_fn=(
                None
                if self.matrix_fn is None or other.matrix_fn is None
                else lambda a: self.matrix_fn(a) + other.matrix_fn(a)
            ),
        )

    def d1_function(self) -> "OperatorFunction":
        """The derivative as an OperatorFunction (second derivative of the
        result is not tracked)."""
        return OperatorFunction(
            label=f"d({self.label})",
            fn=self.d1,
            d1=self.d2,
            d2=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
            matrix_fn=None,
        )


def _check_square_pair(a: np.ndarray, c: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if a.shape != c.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {c.shape}")


def _check_hermitian(a: np.ndarray, tol: float = 1e-10) -> None:
    scale = max(np.linalg.norm(a), 1.0)
    if np.linalg.norm(a - a.conj().T) > tol * scale:
        raise ValueError("matrix is not hermitian")


def inner_derivation(a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Commutator map C -> [A, C]."""
    a = np.asarray(a)
    c = np.asarray(c)
    _check_square_pair(a, c)
    return a @ c - c @ a


def hermitian_matrix_function(a: np.ndarray, f: OperatorFunction) -> np.ndarray:
    """f(A) for hermitian A via eigendecomposition."""
    _check_hermitian(np.asarray(a))
    w, u = np.linalg.eigh(a)
    return (u * f.fn(w)) @ u.conj().T


def _loewner_matrix(w: np.ndarray, f: OperatorFunction) -> np.ndarray:
    """First divided differences f[w_i, w_j] with the confluent limit on
    (near-)degenerate pairs."""
    diff = w[:, None] - w[None, :]
    scale = max(np.max(np.abs(w)), 1.0)
    degenerate = np.abs(diff) < _DEGENERACY_REL_TOL * scale
    fd = f.fn(w)[:, None] - f.fn(w)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        dd = np.where(degenerate, 0.0, fd) / np.where(degenerate, 1.0, diff)
    mid = 0.5 * (w[:, None] + w[None, :])
    return np.where(degenerate, f.d1(mid), dd)


def frechet_derivative(a: np.ndarray, c: np.ndarray, f: OperatorFunction) -> np.ndarray:
    """Directional derivative of the matrix function f at hermitian A along
    C: the first-order coefficient of f(A + hC) in h."""
    a = np.asarray(a, dtype=complex)
    c = np.asarray(c, dtype=complex)
    _check_square_pair(a, c)
    _check_hermitian(a)
    w, u = np.linalg.eigh(a)
    c_eig = u.conj().T @ c @ u
    return u @ (_loewner_matrix(w, f) * c_eig) @ u.conj().T


def _second_divided_difference(w: np.ndarray, f: OperatorFunction) -> np.ndarray:
    """Tensor f[w_i, w_k, w_j] of second divided differences, degenerate
    arguments handled by confluent limits."""
    n = len(w)
    scale = max(np.max(np.abs(w)), 1.0)
    tol = _DEGENERACY_REL_TOL * scale

    dd1 = _loewner_matrix(w, f)

    out = np.empty((n, n, n), dtype=float)
    for i in range(n):
        for k in range(n):
            for j in range(n):
                wi, wk, wj = w[i], w[k], w[j]
                if abs(wi - wj) >= tol:
                    out[i, k, j] = (dd1[i, k] - dd1[k, j]) / (wi - wj)
                elif abs(wi - wk) >= tol:
                    # symmetric reorder (j, i, k): outer pair j,k separated
                    out[i, k, j] = (dd1[j, i] - dd1[i, k]) / (wj - wk)
                else:
                    out[i, k, j] = 0.5 * float(f.d2((wi + wk + wj) / 3.0))
    return out


def operator_taylor(
    a: np.ndarray, c: np.ndarray, f: OperatorFunction, order: int
) -> np.ndarray:
    """Taylor expansion of f(A + C) about hermitian A through the requested
    order (1 or 2); the quadratic term is assembled from nested divided
    differences in the eigenbasis."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    a = np.asarray(a, dtype=complex)
    c = np.asarray(c, dtype=complex)
    _check_square_pair(a, c)
    _check_hermitian(a)

    w, u = np.linalg.eigh(a)
    c_eig = u.conj().T @ c @ u
    total = np.diag(f.fn(w)).astype(complex)
    total += _loewner_matrix(w, f) * c_eig
    if order == 2:
        dd2 = _second_divided_difference(w, f)
        # sum_k f[w_i, w_k, w_j] C_ik C_kj  (includes the 1/2! factor)
        total += np.einsum("ikj,ik,kj->ij", dd2, c_eig, c_eig)
    return u @ total @ u.conj().T


def strat_product(f_t: np.ndarray, f_next: np.ndarray, increment) -> np.ndarray:
    """Midpoint-rule product: the endpoint average of the integrand times the
    increment (scalar or conformable matrix, applied on the right)."""
    f_t = np.asarray(f_t)
    f_next = np.asarray(f_next)
    if f_t.shape != f_next.shape:
        raise ValueError("endpoint matrices must share a shape")
    mid = 0.5 * (f_t + f_next)
    if np.isscalar(increment) or np.asarray(increment).ndim == 0:
        return mid * increment
    inc = np.asarray(increment)
    if mid.ndim == 2 and inc.shape[0] != mid.shape[1]:
        raise ValueError("increment not conformable")
    return mid @ inc


def symmetrized_product(da: np.ndarray, g: np.ndarray) -> np.ndarray:
    """(dA - 1/2 delta_dA) applied to g with the midpoint product: reduces to
    the anticommutator average (da g + g da)/2."""
    return 0.5 * (da @ g + g @ da)


def constant_commutator_defect(
    a: np.ndarray,
    da: np.ndarray,
    f: OperatorFunction,
    n_keep: int | None = None,
) -> float:
    """Residual of the constant-commutator product identity

        (df/dA) dA  =  (dA - 1/2 delta_dA) f'(A)   (midpoint products)

    measured in spectral norm on the leading n_keep x n_keep block.  Exact
    (up to roundoff) whenever [A, dA] is proportional to the identity there.
    """
    a = np.asarray(a, dtype=complex)
    da = np.asarray(da, dtype=complex)
    _check_square_pair(a, da)
    lhs = frechet_derivative(a, da, f)
    rhs = symmetrized_product(da, hermitian_matrix_function(a, f.d1_function()))
    defect = lhs - rhs
    if n_keep is not None:
        defect = defect[:n_keep, :n_keep]
    return float(np.linalg.norm(defect, 2))


def apply_exp_derivation(
    a: np.ndarray, c: np.ndarray, scale: float, tol: float = 1e-15, max_terms: int = 80
) -> np.ndarray:
    """exp(scale * delta_A) applied to C, by summing nested commutators.

    Equals e^(scale A) C e^(-scale A); the closed form is what the tests
    compare against.
    """
    a = np.asarray(a, dtype=complex)
    term = np.asarray(c, dtype=complex)
    _check_square_pair(a, term)
    total = term.copy()
    ref = max(np.linalg.norm(term), 1.0)
    for n in range(1, max_terms + 1):
        term = (scale / n) * inner_derivation(a, term)
        total += term
        if np.linalg.norm(term) < tol * ref:
            return total
    raise RuntimeError("exp-derivation series did not converge; reduce |scale|")


def poly_of_shifted_derivation(coefficients, a: np.ndarray, c: np.ndarray) -> np.ndarray:
    """f(A - delta_A) C for polynomial f, expanded with the binomial series in
    delta_A (left multiplication by A commutes with delta_A, so the binomial
    expansion is exact)."""
    a = np.asarray(a, dtype=complex)
    c = np.asarray(c, dtype=complex)
    _check_square_pair(a, c)
    coeffs = np.asarray(coefficients, dtype=float)
    n_max = len(coeffs) - 1

    # delta_A^k C for k = 0..n_max
    nested = [c.copy()]
    for _ in range(n_max):
        nested.append(inner_derivation(a, nested[-1]))

    # powers of A applied on the left
    out = np.zeros_like(c)
    from math import comb

    for n, cn in enumerate(coeffs):
        if cn == 0.0:
            continue
        for k in range(n + 1):
            term = nested[k]
            for _ in range(n - k):
                term = a @ term
            out = out + cn * comb(n, k) * (-1.0) ** k * term
    return out
