# Matrix-free conjugate gradient for symmetric positive definite systems
# Copyright (C) 2014 Ingo Ruhnke <grumbel@gmail.com>
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.


import logging

import numpy as np
import scipy.sparse.linalg


class NonConvergenceError(RuntimeError):

    def __init__(self, msg, iterations, residual):
        super().__init__(msg)
        self.iterations = iterations
        self.residual = residual


class IndefiniteOperatorError(RuntimeError):

    def __init__(self, msg, curvature):
        super().__init__(msg)
        self.curvature = curvature


class CGConfig:

    def __init__(self, rel_tolerance=1e-6, max_iterations=500, x0=None, preconditioner=None, callback=None):
        if not rel_tolerance > 0:
            raise ValueError("CG tolerance must be > 0, got %s" % rel_tolerance)

        self.rel_tolerance = rel_tolerance
        self.max_iterations = max_iterations

        # None means a zero initial guess, otherwise a warm-start vector
        self.x0 = x0

        # optional Jacobi preconditioner: the diagonal of A
        self.preconditioner = preconditioner

        # callback(x) with the current iterate after every iteration
        self.callback = callback


def image_operator(shape, apply_fn):
    """Wraps an image -> image map into a LinearOperator on flattened images"""
    n = int(np.prod(shape))

    def matvec(v):
        return apply_fn(np.reshape(v, shape)).ravel()

    return scipy.sparse.linalg.LinearOperator((n, n), matvec=matvec, dtype=np.float64)


def check_symmetric(A, probes=3, tolerance=1e-8, seed=0):
    """Checks <Au, v> = <u, Av> on random probes, returns the worst relative mismatch"""
    A = scipy.sparse.linalg.aslinearoperator(A)
    rng = np.random.default_rng(seed)
    n = A.shape[0]
    worst = 0.0
    for _ in range(probes):
        u = rng.standard_normal(n)
        v = rng.standard_normal(n)
        lhs = np.dot(A.matvec(u), v)
        rhs = np.dot(u, A.matvec(v))
        scale = max(abs(lhs), abs(rhs), 1.0)
        worst = max(worst, abs(lhs - rhs) / scale)

    if worst > tolerance:
        raise ValueError("operator is not symmetric, relative mismatch %g" % worst)
    return worst


def _apply(A, p):
    if p.ndim == 1:
        return A.matvec(p)
    else:
        return A.matmat(p)


def conjugate_gradient(A, b, cfg=None):
    """Solves Ax = b for SPD ``A`` (anything scipy's aslinearoperator accepts).

    ``b`` is either a vector or an (n, k) matrix whose columns are solved
    independently.  Returns (x, iterations, relative residual), the residual
    being the largest ||Ax - b|| / ||b|| over the columns.
    """

    cfg = cfg or CGConfig()
    A = scipy.sparse.linalg.aslinearoperator(A)
    b = np.asarray(b, dtype=np.float64)

    n = A.shape[0]
    if b.shape[0] != n:
        raise ValueError("right-hand side has %d rows, operator dimension is %d" % (b.shape[0], n))

    single = b.ndim == 1
    B = b[:, None] if single else b

    if cfg.x0 is None:
        X = np.zeros_like(B)
        R = B.copy()
    else:
        X = np.array(cfg.x0, dtype=np.float64).reshape(B.shape)
        R = B - _apply(A, X)

    if cfg.preconditioner is not None:
        Minv = 1.0 / np.asarray(cfg.preconditioner, dtype=np.float64).reshape(n, 1)
    else:
        Minv = None

    bnorm = np.linalg.norm(B, axis=0)
    bnorm[bnorm == 0] = 1.0
    threshold = cfg.rel_tolerance * bnorm

    def precondition(R):
        return R * Minv if Minv is not None else R

    def finish(iterations):
        residual = float(np.max(np.linalg.norm(R, axis=0) / bnorm))
        x = X[:, 0] if single else X
        return x, iterations, residual

    active = np.linalg.norm(R, axis=0) > threshold
    if not active.any():
        return finish(0)

    Z = precondition(R)
    P = Z.copy()
    rz = np.sum(R * Z, axis=0)

    iterations = 0
    while iterations < cfg.max_iterations:
        iterations += 1

        AP = _apply(A, P)
        curvature = np.sum(P * AP, axis=0)
        if np.any(curvature[active] <= 0):
            worst = float(np.min(curvature[active]))
            raise IndefiniteOperatorError("negative curvature p^T A p = %g in CG iteration %d" %
                                          (worst, iterations), worst)

        step = np.where(active, rz / np.where(active, curvature, 1.0), 0.0)
        X += step * P
        R -= step * AP
        if cfg.callback is not None:
            cfg.callback(X[:, 0].copy() if single else X.copy())

        rnorm = np.linalg.norm(R, axis=0)
        done = active & (rnorm <= threshold)
        if done.any():
            # confirm against the true residual, the recursive one drifts
            R_true = B - _apply(A, X)
            true_norm = np.linalg.norm(R_true, axis=0)
            R[:, done] = R_true[:, done]
            drifted = done & (true_norm > threshold)
            active = active & ~(done & ~drifted)
            if drifted.any():
                logging.debug("CG: restarting %d column(s) after residual drift", int(drifted.sum()))

            if not active.any():
                logging.debug("CG: converged in %d iterations", iterations)
                return finish(iterations)

            Z = precondition(R)
            rz_new = np.sum(R * Z, axis=0)
            # restart drifted columns from steepest descent
            beta = np.where(drifted | ~active, 0.0, rz_new / np.where(rz == 0, 1.0, rz))
            P = np.where(active, Z + beta * P, 0.0)
            rz = rz_new
            continue

        Z = precondition(R)
        rz_new = np.sum(R * Z, axis=0)
        beta = np.where(active, rz_new / np.where(rz == 0, 1.0, rz), 0.0)
        P = np.where(active, Z + beta * P, 0.0)
        rz = rz_new

        if iterations % 50 == 0:
            logging.debug("CG: iteration %d, max relative residual %g",
                          iterations, float(np.max(rnorm / bnorm)))

    x, iterations, residual = finish(iterations)
    raise NonConvergenceError("CG didn't converge in %d iterations, relative residual %g > %g" %
                              (iterations, residual, cfg.rel_tolerance), iterations, residual)


# EOF #
