"""Small helper layer for affine semidefinite programs.

The exploration design boils down to a handful of linear matrix
inequalities that are affine in a vector of real decision scalars
(amplitudes, multipliers, entries of symmetric slack matrices).  This
module keeps that bookkeeping honest:

* AffineLMI stores one inequality  constant + sum_i x[i] C_i >= 0  with
  Hermitian coefficient matrices (dense or scipy.sparse);
* complex-valued inequalities are mapped to equivalent real symmetric ones
  with the standard [[Re, -Im], [Im, Re]] embedding before being handed to
  the solver;
* LmiProgram names scalar variables, assembles the cvxpy problem, solves it
  (CLARABEL first, SCS as fallback), re-checks every inequality numerically
  at the returned point, and turns infeasibility into a diagnosis that
  names the most violated inequality.
"""

from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from .errors import ConstructionError, InfeasibleDesignError, SolverFailureError

HERMITIAN_TOL = 1e-10
# A solution is accepted only if every inequality has min eigenvalue
# >= -VERIFY_TOL * scale at the returned point.
VERIFY_TOL = 1e-6
# Slack below this (after diagnosis) means "numerically on the feasibility
# boundary" rather than genuinely infeasible.
SLACK_TOL = 1e-7
DEFAULT_SOLVERS = ("CLARABEL", "SCS")


def _is_complex(M) -> bool:
    return np.issubdtype(M.dtype, np.complexfloating)


def _max_abs(M) -> float:
    if sp.issparse(M):
        return float(np.abs(M.data).max()) if M.nnz else 0.0
    return float(np.abs(M).max()) if M.size else 0.0


def _check_hermitian(M, what: str):
    dev = _max_abs(M - M.conj().T)
    if dev > HERMITIAN_TOL * max(1.0, _max_abs(M)):
        raise ConstructionError(f"{what} is not Hermitian (deviation {dev:.3e})")


def hermitian_to_real(M: np.ndarray) -> np.ndarray:
    """Real symmetric embedding [[Re, -Im], [Im, Re]] of a Hermitian matrix.

    The embedding is positive semidefinite exactly when the input is; every
    eigenvalue of the input appears twice in the embedding.
    """
    M = np.asarray(M)
    _check_hermitian(M, "matrix")
    Re = M.real
    Im = M.imag if _is_complex(M) else np.zeros_like(Re)
    return np.block([[Re, -Im], [Im, Re]])


def mirror_unitary(perm) -> sp.csr_matrix:
    """Unitary U with conj(U) = P @ U for an involutive permutation P.

    perm is the index form of P (perm[perm[i]] == i).  Fixed points keep
    their basis vector; each pair (i < j) contributes the symmetric
    combination (e_i + e_j)/sqrt(2) in column i and the antisymmetric
    combination 1j*(e_i - e_j)/sqrt(2) in column j.
    """
    perm = np.asarray(perm, dtype=int)
    m = perm.size
    if np.any(perm[perm] != np.arange(m)):
        raise ConstructionError("mirror permutation must be an involution")
    rows, cols, vals = [], [], []
    s = 1.0 / np.sqrt(2.0)
    for i in range(m):
        j = int(perm[i])
        if j == i:
            rows.append(i)
            cols.append(i)
            vals.append(1.0 + 0.0j)
        elif i < j:
            rows += [i, j, i, j]
            cols += [i, i, j, j]
            vals += [s, s, 1j * s, -1j * s]
    return sp.csr_matrix((vals, (rows, cols)), shape=(m, m))


def mirror_realify(lmi: "AffineLMI", perm, tol: float = 1e-9) -> "AffineLMI | None":
    """Same-size real form of a complex LMI with conj(M(x)) = P M(x) P^T.

    When every data matrix of the inequality satisfies the conjugation/
    permutation symmetry, the congruence by `mirror_unitary(perm)` makes
    them all real symmetric, halving the dimension the solver would
    otherwise need for the [[Re, -Im], [Im, Re]] embedding while keeping
    the spectrum of every evaluation identical.  Returns None when some
    matrix fails the symmetry check (caller keeps the complex original).
    """
    U = mirror_unitary(perm)
    if U.shape[0] != lmi.size:
        raise ConstructionError(
            f"permutation size {U.shape[0]} does not match LMI size {lmi.size}"
        )
    UH = U.conj().T
    Ud = U.toarray()

    def transform(M):
        if sp.issparse(M):
            out = (UH @ M @ U).tocoo()
            scale = max(1.0, _max_abs(M))
            if out.nnz and np.abs(out.data.imag).max() > tol * scale:
                return None
            real = out.copy()
            real.data = out.data.real.copy()
            return real
        M = np.asarray(M, dtype=complex)
        out = Ud.conj().T @ M @ Ud
        scale = max(1.0, _max_abs(M))
        if np.abs(out.imag).max() > tol * scale:
            return None
        return np.ascontiguousarray(out.real)

    constant = transform(lmi.constant)
    if constant is None:
        return None
    coeffs = {}
    for idx, C in lmi.coeffs.items():
        Ct = transform(C)
        if Ct is None:
            return None
        coeffs[idx] = Ct
    return AffineLMI(lmi.name, constant, coeffs)


class AffineLMI:
    """One inequality: constant + sum_i x[i] * coeffs[i] is PSD.

    Coefficients may be dense arrays or scipy sparse matrices; every matrix
    must be Hermitian and of the same square shape.
    """

    def __init__(self, name: str, constant, coeffs: dict):
        self.name = name
        constant = np.asarray(constant)
        if constant.ndim != 2 or constant.shape[0] != constant.shape[1]:
            raise ConstructionError(f"LMI {name!r}: constant must be square")
        _check_hermitian(constant, f"LMI {name!r} constant")
        self.constant = constant
        self.coeffs = {}
        for idx, C in coeffs.items():
            if not sp.issparse(C):
                C = np.asarray(C)
            if C.shape != constant.shape:
                raise ConstructionError(
                    f"LMI {name!r}: coefficient {idx} has shape {C.shape}, "
                    f"expected {constant.shape}"
                )
            _check_hermitian(C, f"LMI {name!r} coefficient {idx}")
            self.coeffs[int(idx)] = C

    @property
    def size(self) -> int:
        return self.constant.shape[0]

    @property
    def is_complex(self) -> bool:
        if _is_complex(self.constant):
            return True
        return any(_is_complex(C) for C in self.coeffs.values())

    def evaluate(self, x) -> np.ndarray:
        """Hermitian value of the inequality's left-hand side at x."""
        x = np.asarray(x, dtype=float)
        M = np.zeros(self.constant.shape, dtype=complex if self.is_complex else float)
        M += self.constant
        for idx, C in self.coeffs.items():
            v = x[idx]
            if v == 0.0:
                continue
            M += v * (C.toarray() if sp.issparse(C) else C)
        return (M + M.conj().T) / 2

    def min_eigenvalue(self, x) -> float:
        return float(np.linalg.eigvalsh(self.evaluate(x))[0])

    def scaled_margin(self, x) -> float:
        """Min eigenvalue divided by max(1, spectral norm) at x."""
        w = np.linalg.eigvalsh(self.evaluate(x))
        scale = max(1.0, float(np.abs(w).max()))
        return float(w[0]) / scale


@dataclass
class LmiSolution:
    x: np.ndarray
    objective: float
    status: str
    solver: str
    residuals: dict  # LMI name -> scaled min-eigenvalue margin at x


def _solver_opts(solver: str) -> dict:
    if solver == "SCS":
        return {"eps_abs": 1e-8, "eps_rel": 1e-8, "max_iters": 50_000}
    return {}


class LmiProgram:
    """Registry of scalar variables plus a list of affine LMIs."""

    def __init__(self):
        self._var_names: list[str] = []
        self._nonneg: set[int] = set()
        self.lmis: list[AffineLMI] = []

    @property
    def n_vars(self) -> int:
        return len(self._var_names)

    def variable_name(self, idx: int) -> str:
        return self._var_names[idx]

    def new_var(self, name: str, nonneg: bool = False) -> int:
        idx = len(self._var_names)
        self._var_names.append(name)
        if nonneg:
            self._nonneg.add(idx)
        return idx

    def new_vars(self, name: str, count: int, nonneg: bool = False) -> np.ndarray:
        return np.array(
            [self.new_var(f"{name}[{i}]", nonneg=nonneg) for i in range(count)]
        )

    def new_symmetric(self, name: str, n: int) -> np.ndarray:
        """Index matrix of a symmetric n x n matrix variable (shared entries)."""
        idx = np.empty((n, n), dtype=int)
        for i in range(n):
            for j in range(i, n):
                k = self.new_var(f"{name}[{i},{j}]")
                idx[i, j] = idx[j, i] = k
        return idx

    def add_lmi(self, name: str, constant, coeffs: dict) -> AffineLMI:
        for idx in coeffs:
            if not 0 <= int(idx) < self.n_vars:
                raise ConstructionError(
                    f"LMI {name!r} references unknown variable index {idx}"
                )
        lmi = AffineLMI(name, constant, coeffs)
        self.lmis.append(lmi)
        return lmi

    # -- cvxpy bridge ------------------------------------------------------

    def _real_vec_system(self, lmi: AffineLMI):
        """Real-embedded, F-order vectorized form of one LMI.

        Returns (K0, A) with K0 the (possibly embedded) constant matrix and
        A sparse of shape (me*me, n_vars) so that the LMI value at x is
        reshape(A @ x + vec(K0)).
        """
        m = lmi.size
        cplx = lmi.is_complex
        me = 2 * m if cplx else m
        K0 = hermitian_to_real(lmi.constant) if cplx else np.asarray(
            lmi.constant, dtype=float
        )
        rows, cols, vals = [], [], []
        for idx, C in lmi.coeffs.items():
            coo = sp.coo_matrix(C)
            for r, c, v in zip(coo.row, coo.col, coo.data):
                r = int(r)
                c = int(c)
                if cplx:
                    re = float(np.real(v))
                    im = float(np.imag(v))
                    if re != 0.0:
                        rows += [r + me * c, (r + m) + me * (c + m)]
                        cols += [idx, idx]
                        vals += [re, re]
                    if im != 0.0:
                        rows += [r + me * (c + m), (r + m) + me * c]
                        cols += [idx, idx]
                        vals += [-im, im]
                else:
                    rows.append(r + me * c)
                    cols.append(idx)
                    vals.append(float(np.real(v)))
        A = sp.csc_matrix((vals, (rows, cols)), shape=(me * me, self.n_vars))
        return K0, A

    def _cvxpy_constraints(self, xvar):
        cons = [xvar[i] >= 0 for i in sorted(self._nonneg)]
        exprs = []
        for lmi in self.lmis:
            K0, A = self._real_vec_system(lmi)
            me = K0.shape[0]
            expr = cp.reshape(A @ xvar + K0.ravel(order="F"), (me, me), order="F")
            sym = (expr + expr.T) / 2
            exprs.append(sym)
            cons.append(sym >> 0)
        return cons, exprs

    def _verify(self, x, verify_tol: float):
        residuals = {}
        ok = True
        for lmi in self.lmis:
            margin = lmi.scaled_margin(x)
            residuals[lmi.name] = margin
            if margin < -verify_tol:
                ok = False
        return ok, residuals

    def solve(
        self,
        minimize,
        solver_order=DEFAULT_SOLVERS,
        verify_tol: float = VERIFY_TOL,
    ) -> LmiSolution:
        """Minimize a linear objective subject to all registered LMIs.

        minimize is either a variable index or a full cost vector.  The
        returned point is re-verified numerically; a solver answer that does
        not satisfy every LMI to within verify_tol is discarded and the next
        solver is tried.
        """
        if self.n_vars == 0:
            raise ConstructionError("program has no variables")
        if not self.lmis:
            raise ConstructionError("program has no inequalities")
        c = np.zeros(self.n_vars)
        if np.isscalar(minimize) or isinstance(minimize, (int, np.integer)):
            c[int(minimize)] = 1.0
        else:
            c = np.asarray(minimize, dtype=float)
            if c.shape != (self.n_vars,):
                raise ConstructionError("cost vector has wrong length")

        xvar = cp.Variable(self.n_vars)
        cons, _ = self._cvxpy_constraints(xvar)
        problem = cp.Problem(cp.Minimize(c @ xvar), cons)

        last_status = None
        infeasible_claimed = False
        for solver in solver_order:
            try:
                problem.solve(solver=solver, **_solver_opts(solver))
            except cp.SolverError:
                continue
            last_status = problem.status
            if problem.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
                if xvar.value is None:
                    continue
                x = np.asarray(xvar.value, dtype=float).ravel()
                ok, residuals = self._verify(x, verify_tol)
                if ok:
                    return LmiSolution(
                        x=x,
                        objective=float(c @ x),
                        status=problem.status,
                        solver=solver,
                        residuals=residuals,
                    )
                continue
            if problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
                infeasible_claimed = True
                break
            if problem.status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
                raise ConstructionError(
                    "LMI program objective is unbounded below; the design "
                    "inequalities cannot all be active"
                )

        if infeasible_claimed:
            slacks = self.slack_diagnosis(solver_order=solver_order)
            finite = {k: v for k, v in slacks.items() if np.isfinite(v)}
            if finite:
                worst = max(finite, key=finite.get)
                if finite[worst] > SLACK_TOL:
                    raise InfeasibleDesignError(
                        "LMI program is infeasible; largest violation in "
                        f"inequality {worst!r} (slack {finite[worst]:.3e})",
                        failing_lmi=worst,
                    )
                raise SolverFailureError(
                    "solver reported infeasibility but the slack diagnosis "
                    f"found at most {max(finite.values()):.3e}; the program "
                    "sits on the feasibility boundary"
                )
            raise InfeasibleDesignError(
                "LMI program reported infeasible and the slack diagnosis "
                "could not be solved"
            )
        raise SolverFailureError(
            f"no solver produced a verifiable solution (last status: {last_status})"
        )

    def slack_diagnosis(self, solver_order=DEFAULT_SOLVERS) -> dict:
        """Smallest identity shift making each LMI feasible simultaneously.

        Solves min sum_k s_k subject to LMI_k + s_k I >= 0, s_k >= 0.  A
        large s_k pinpoints the inequality that cannot be satisfied.
        """
        xvar = cp.Variable(self.n_vars)
        svar = cp.Variable(len(self.lmis), nonneg=True)
        cons = [xvar[i] >= 0 for i in sorted(self._nonneg)]
        for k, lmi in enumerate(self.lmis):
            K0, A = self._real_vec_system(lmi)
            me = K0.shape[0]
            expr = cp.reshape(A @ xvar + K0.ravel(order="F"), (me, me), order="F")
            sym = (expr + expr.T) / 2
            cons.append(sym + svar[k] * np.eye(me) >> 0)
        problem = cp.Problem(cp.Minimize(cp.sum(svar)), cons)
        for solver in solver_order:
            try:
                problem.solve(solver=solver, **_solver_opts(solver))
            except cp.SolverError:
                continue
            if problem.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) and (
                svar.value is not None
            ):
                return {
                    lmi.name: float(s) for lmi, s in zip(self.lmis, svar.value)
                }
        return {lmi.name: float("nan") for lmi in self.lmis}
