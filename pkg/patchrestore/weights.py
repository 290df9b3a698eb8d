# Nadaraya-Watson and kernel ridge regression weight estimators
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
import math

import numpy as np
import scipy.sparse.linalg

from .linsolve import CGConfig, conjugate_gradient


NW = "nw"
KRR = "krr"
ESTIMATORS = [NW, KRR]

KRR_TOLERANCE = 1e-10

# similarity sums below this count as numerically vanished
UNDERFLOW = 1e-300


def nw_weights(v, fallback=True):
    """alpha = v / sum(v), nonnegative and summing to one"""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or len(v) == 0:
        raise ValueError("NW weights need a non-empty kernel vector")

    total = v.sum()
    if total > UNDERFLOW:
        return v / total
    elif fallback:
        logging.warning("NW: all %d similarities vanished, falling back to uniform weights", len(v))
        return np.full(len(v), 1.0 / len(v))
    else:
        raise ValueError("NW: all %d similarities vanished" % len(v))


def nw_weights_batch(V, fallback=True):
    """Row-wise NW normalization of a (N, m) stack of kernel vectors"""
    V = np.asarray(V, dtype=np.float64)
    m = V.shape[1]
    if m == 0:
        raise ValueError("NW weights need a non-empty kernel vector")

    totals = V.sum(axis=1)
    vanished = ~(totals > UNDERFLOW)
    if vanished.any():
        if not fallback:
            raise ValueError("NW: similarities vanished for %d queries" % int(vanished.sum()))
        logging.warning("NW: similarities vanished for %d of %d queries, using uniform weights",
                        int(vanished.sum()), len(V))

    alphas = V / np.where(vanished, 1.0, totals)[:, None]
    alphas[vanished] = 1.0 / m
    return alphas


def krr_system(K, lam, m=None):
    """The SPD operator K + m*lambda*I as a LinearOperator"""
    K = np.asarray(K, dtype=np.float64)
    if m is None:
        m = K.shape[0]
    shift = m * lam

    def matmat(X):
        return K @ X + shift * X

    return scipy.sparse.linalg.LinearOperator(K.shape, matvec=matmat, matmat=matmat, dtype=np.float64)


def krr_weights(K, v, lam, m=None, cfg=None):
    """Solves (K + m*lambda*I) alpha = v by CG; ``v`` may hold one query per column"""
    if not lam > 0:
        raise ValueError("KRR regularization must be > 0, got %s" % lam)

    K = np.asarray(K, dtype=np.float64)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError("kernel matrix must be square, got %s" % (K.shape,))

    cfg = cfg or CGConfig(rel_tolerance=KRR_TOLERANCE, max_iterations=max(500, 10 * K.shape[0]))
    A = krr_system(K, lam, m)
    alpha, iterations, residual = conjugate_gradient(A, v, cfg)
    logging.debug("KRR: %d CG iterations, relative residual %g", iterations, residual)
    return alpha


def krr_lambda(r, m, q, num_patches, n):
    """Regularization rule lambda = r * (1/m + q/(|P| n))^(1/2)"""
    if m < 1 or num_patches < 1 or n < 1:
        raise ValueError("m, |P| and n must be >= 1")
    if q < 0 or not r > 0:
        raise ValueError("need q >= 0 and r > 0")
    return r * math.sqrt(1.0 / m + q / (num_patches * n))


# EOF #
