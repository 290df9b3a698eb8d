# Patch-prior restoration: closed-form MSE solve and half-quadratic splitting
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


import csv
import logging

import numpy as np
import scipy.spatial.distance

from .dataset import CLEAN, DEGRADED, operator_factor
from .degrade import apply, apply_adjoint
from .features import DEFAULT_KERNEL_SCALE, dct_features_batch, kernel_from_dataset, kernel_matrix, kernel_vectors
from .image import PatchGrid, bicubic_resize, coverage_counts, extract_patches, format_psnr, psnr, scatter_patches_add
from .linsolve import CGConfig, conjugate_gradient, image_operator
from .sdca import sdca_patches, target_vectors
from .weights import KRR, NW, krr_lambda, krr_weights, nw_weights_batch


WEIGHT_CHUNK = 256

SWITCH_TO_CLEAN = "switch-to-clean"
ALWAYS_DEGRADED = "always-degraded"


class PatchWeights:

    """Weight vectors alpha(query_p) of every patch against a training
    population, evaluated lazily in blocks of patches"""

    def __init__(self, queries, features, model, estimator=NW, lam=None):
        self.queries = np.asarray(queries, dtype=np.float64)
        self.features = np.asarray(features, dtype=np.float64)
        self.model = model
        self.estimator = estimator
        self.lam = lam

        if estimator == KRR:
            if lam is None:
                raise ValueError("KRR weights need a regularization lambda")
            self.gram = kernel_matrix(self.features, model)
        elif estimator != NW:
            raise ValueError("unknown weight estimator '%s'" % estimator)

    def __len__(self):
        return len(self.queries)

    def __call__(self, start, stop):
        V = kernel_vectors(self.queries[start:stop], self.features, self.model)
        if self.estimator == NW:
            return nw_weights_batch(V)
        else:
            return krr_weights(self.gram, V.T, self.lam).T

    def matrix(self):
        return self(0, len(self))


def _weight_block(weights, start, stop):
    if callable(weights):
        return weights(start, stop)
    else:
        return np.asarray(weights)[start:stop]


def weight_moments(weights, targets, num_patches, chunk=WEIGHT_CHUNK):
    """a_p = sum_i alpha_i and w_p = sum_i alpha_i x_i for every patch"""
    a = np.empty(num_patches)
    w = np.empty((num_patches, targets.shape[1]))
    for start in range(0, num_patches, chunk):
        stop = min(start + chunk, num_patches)
        A = _weight_block(weights, start, stop)
        a[start:stop] = A.sum(axis=1)
        w[start:stop] = A @ targets
    return a, w


def patch_features(image, patch_size, drop_dc=False):
    grid = PatchGrid.for_image(image, patch_size)
    return dct_features_batch(extract_patches(image, grid), drop_dc)


def degraded_queries(observed, grid, factor, degraded_size, drop_dc=False):
    """Features of the observation patch paired with every patch of
    ``grid``: patch (r, c) reads the observation at (r // factor, c // factor),
    clipped to the observation's grid"""

    lo = PatchGrid.for_image(observed, degraded_size)
    features = patch_features(observed, degraded_size, drop_dc)
    rows = np.minimum(np.arange(grid.rows) // factor, lo.rows - 1)
    cols = np.minimum(np.arange(grid.cols) // factor, lo.cols - 1)
    return features[(rows[:, None] * lo.cols + cols[None, :]).ravel()]


def compute_weights(queries, population, scale=DEFAULT_KERNEL_SCALE, estimator=NW, lam=None,
                    bandwidth_features=None):
    """Weights of ``queries`` against ``population``, the kernel bandwidth
    taken from ``bandwidth_features`` when given, else from the population"""
    if bandwidth_features is None:
        bandwidth_features = population
    model = kernel_from_dataset(bandwidth_features, scale)
    return PatchWeights(queries, population, model, estimator, lam)


def observation_weights(y, grid, data, factor=1, scale=DEFAULT_KERNEL_SCALE, estimator=NW, lam=None,
                        drop_dc=False, bandwidth_population=DEGRADED):
    """Weights from degraded observation patches against degraded training patches.

    ``bandwidth_population`` picks the training patches, degraded or
    clean, whose feature spread sets the kernel bandwidth.
    """
    if data.degraded_size * factor != grid.patch_size:
        raise ValueError("dataset pairs %dx%d with %dx%d patches, expected a factor of %d" %
                         (data.patch_size, data.patch_size, data.degraded_size, data.degraded_size, factor))
    queries = degraded_queries(y, grid, factor, data.degraded_size, drop_dc)
    return compute_weights(queries, data.features(DEGRADED, drop_dc), scale, estimator, lam,
                           data.features(bandwidth_population, drop_dc))


def estimate_weights(x, grid, data, scale=DEFAULT_KERNEL_SCALE, estimator=NW, lam=None, drop_dc=False):
    """Weights from patches of a clean estimate against clean training patches"""
    queries = dct_features_batch(extract_patches(x, grid), drop_dc)
    return compute_weights(queries, data.features(CLEAN, drop_dc), scale, estimator, lam)



def resolve_lambda(cfg, data, grid):
    if cfg.krr_lambda is not None:
        return cfg.krr_lambda
    n = max(1, len(data.image_names))
    return krr_lambda(1.0, data.m, cfg.krr_q, grid.num_patches, n)


def solve_mse(y, op, data, weights, gamma, grid=None, cfg=None):
    """Solves (gamma B^T B + sum_p a_p R_p^T R_p) x = gamma B^T y + sum_p R_p^T w_p"""
    grid = grid or PatchGrid(op.input_shape[0], op.input_shape[1], data.patch_size)
    d = grid.patch_size
    n = grid.num_patches

    a, w = weight_moments(weights, target_vectors(data), n)

    diagonal = scatter_patches_add(np.zeros(grid.shape), grid, np.broadcast_to(a[:, None, None], (n, d, d)))
    rhs = scatter_patches_add(np.zeros(grid.shape), grid, w.reshape(n, d, d))
    if gamma != 0:
        rhs += gamma * apply_adjoint(op, y)

    def normal(x):
        if gamma != 0:
            return gamma * op.normal(x) + diagonal * x
        else:
            return diagonal * x

    cfg = cfg or CGConfig(rel_tolerance=1e-6, max_iterations=2000)
    x, iterations, residual = conjugate_gradient(image_operator(grid.shape, normal), rhs.ravel(), cfg)
    logging.debug("MSE solve: %d CG iterations, relative residual %g", iterations, residual)
    return x.reshape(grid.shape)


def x_update(z, y, op, beta, gamma, grid, cfg=None):
    """Solves (beta sum_p R_p^T R_p + gamma B^T B) x = beta sum_p R_p^T z_p + gamma B^T y"""
    d = grid.patch_size
    z = np.asarray(z, dtype=np.float64).reshape(grid.num_patches, d, d)
    counts = coverage_counts(grid)

    rhs = beta * scatter_patches_add(np.zeros(grid.shape), grid, z)
    if gamma != 0:
        rhs += gamma * apply_adjoint(op, y)

    def normal(x):
        if gamma != 0:
            return beta * counts * x + gamma * op.normal(x)
        else:
            return beta * counts * x

    cfg = cfg or CGConfig(rel_tolerance=1e-6, max_iterations=2000)
    x, iterations, residual = conjugate_gradient(image_operator(grid.shape, normal), rhs.ravel(), cfg)
    logging.debug("x-update: %d CG iterations, relative residual %g", iterations, residual)
    return x.reshape(grid.shape)


def fidelity(x, y, op, gamma):
    residual = y - apply(op, x)
    return 0.5 * gamma * float(np.sum(residual * residual))


def energy_l2(x, y, op, data, weights, gamma, grid=None, chunk=WEIGHT_CHUNK):
    """sum_p sum_i alpha_i(y_p) |x_p - x_i| + gamma/2 |y - Bx|^2"""
    grid = grid or PatchGrid.for_image(x, data.patch_size)
    patches = extract_patches(x, grid).reshape(grid.num_patches, -1)
    targets = target_vectors(data)

    total = 0.0
    for start in range(0, grid.num_patches, chunk):
        stop = min(start + chunk, grid.num_patches)
        A = _weight_block(weights, start, stop)
        total += float(np.sum(A * scipy.spatial.distance.cdist(patches[start:stop], targets)))

    return total + fidelity(x, y, op, gamma)


def splitting_energy(x, z, y, op, regularizer, beta, gamma, grid):
    """regularizer + beta/2 sum_p |z_p - R_p x|^2 + gamma/2 |y - Bx|^2, the
    regularizer being the summed patch losses of the z_p"""
    patches = extract_patches(x, grid).reshape(grid.num_patches, -1)
    diff = np.asarray(z).reshape(grid.num_patches, -1) - patches
    return regularizer + 0.5 * beta * float(np.sum(diff * diff)) + fidelity(x, y, op, gamma)


def initial_estimate(y, op):
    """y itself, or its bicubic upsample when the operator changes resolution"""
    if tuple(op.output_shape) == tuple(op.input_shape):
        return np.array(y, dtype=np.float64)
    else:
        return bicubic_resize(y, op.input_shape[0], op.input_shape[1])


class TraceEntry:

    def __init__(self, iteration, beta, energy_start, energy_z, energy_x, gap, psnr=None):
        self.iteration = iteration
        self.beta = beta
        self.energy_start = energy_start
        self.energy_z = energy_z
        self.energy_x = energy_x
        self.gap = gap
        self.psnr = psnr

    @property
    def energy(self):
        return self.energy_x


class HQSState:

    def __init__(self, x, beta):
        self.iteration = 0
        self.x = x
        self.z = None
        self.beta = beta
        self.weights = None
        self.trace = []


def hqs_restore(y, op, data, cfg=None, reference=None, progress_cb=None, workers=None):
    """Half-quadratic splitting on the Euclidean-loss energy.

    Returns (x, trace) where trace holds one TraceEntry per iteration.
    ``progress_cb(state)`` is called after every iteration.

    Iteration 1 weighs the patches of y against the degraded training
    patches.  Later iterations use the patches of the current estimate
    against the clean training patches (switch-to-clean), or degrade the
    current estimate again and compare it to the degraded training
    patches (always-degraded).
    """

    if cfg is None:
        from .config import SolverConfig
        cfg = SolverConfig()

    if cfg.estimator != NW:
        raise ValueError("the l2 HQS solver needs NW weights, '%s' weights can be negative" % cfg.estimator)

    y = np.asarray(y, dtype=np.float64)
    if y.shape != tuple(op.output_shape):
        raise ValueError("observation is %s, operator produces %s" % (y.shape, op.output_shape))

    grid = PatchGrid(op.input_shape[0], op.input_shape[1], data.patch_size)
    factor = operator_factor(op)
    sdca_cfg = cfg.sdca_config(workers)
    targets = target_vectors(data)

    state = HQSState(initial_estimate(y, op), cfg.beta0)
    first_weights = observation_weights(y, grid, data, factor, cfg.kernel_scale, drop_dc=cfg.drop_dc,
                                        bandwidth_population=cfg.bandwidth_population)
    duals = None

    for t in range(1, cfg.iterations + 1):
        state.iteration = t
        beta = state.beta
        x = state.x

        if t == 1 or not cfg.recompute_alpha:
            state.weights = first_weights
        elif cfg.alpha_schedule == SWITCH_TO_CLEAN:
            state.weights = estimate_weights(x, grid, data, cfg.kernel_scale, drop_dc=cfg.drop_dc)
        else:
            # always-degraded: features of B x, the estimate degraded again, not of y
            state.weights = observation_weights(apply(op, x), grid, data, factor, cfg.kernel_scale,
                                                drop_dc=cfg.drop_dc, bandwidth_population=cfg.bandwidth_population)

        anchors = extract_patches(x, grid).reshape(grid.num_patches, -1)
        result = sdca_patches(anchors, state.weights, targets, beta, sdca_cfg, iteration=t, duals=duals)
        if cfg.warm_start_duals:
            duals = result.duals

        data_term = fidelity(x, y, op, cfg.gamma)
        energy_start = float(result.start_primal.sum()) + data_term
        energy_z = float(result.primal.sum()) + data_term

        diff = result.z - anchors
        regularizer = float(result.primal.sum()) - 0.5 * beta * float(np.sum(diff * diff))

        x_new = x_update(result.z, y, op, beta, cfg.gamma, grid, cfg.cg_config(x0=x.ravel()))
        energy_x = splitting_energy(x_new, result.z, y, op, regularizer, beta, cfg.gamma, grid)

        if energy_x > energy_z + 1e-8 * abs(energy_z):
            logging.warning("HQS %d: x-step raised the energy from %.10g to %.10g", t, energy_z, energy_x)

        value = psnr(np.clip(x_new, 0.0, 1.0), reference) if reference is not None else None
        entry = TraceEntry(t, beta, energy_start, energy_z, energy_x, float(result.gaps.sum()), value)
        state.trace.append(entry)

        logging.info("HQS %d/%d: beta %g, energy %.6g -> %.6g -> %.6g, gap %.3g%s",
                     t, cfg.iterations, beta, energy_start, energy_z, energy_x, entry.gap,
                     ", PSNR %s" % format_psnr(value) if value is not None else "")

        state.x = x_new
        state.z = result.z
        if progress_cb is not None:
            progress_cb(state)
        state.beta = beta * cfg.delta

    return state.x, state.trace


def mse_restore(y, op, data, cfg=None):
    """Closed-form estimator with weights from the degraded observation"""
    if cfg is None:
        from .config import SolverConfig
        cfg = SolverConfig()

    y = np.asarray(y, dtype=np.float64)
    grid = PatchGrid(op.input_shape[0], op.input_shape[1], data.patch_size)
    lam = resolve_lambda(cfg, data, grid) if cfg.estimator == KRR else None
    weights = observation_weights(y, grid, data, operator_factor(op), cfg.kernel_scale, cfg.estimator, lam,
                                  cfg.drop_dc, cfg.bandwidth_population)
    x0 = initial_estimate(y, op)
    return solve_mse(y, op, data, weights, cfg.gamma, grid, cfg.cg_config(x0=x0.ravel()))


def restore(y, op, data, solver, cfg=None, reference=None, progress_cb=None, workers=None):
    """Returns (x, trace), the trace being empty for the MSE solver"""
    if solver == "mse":
        return mse_restore(y, op, data, cfg), []
    elif solver == "l2-hqs":
        return hqs_restore(y, op, data, cfg, reference, progress_cb, workers)
    else:
        raise ValueError("unknown solver '%s'" % solver)


def write_trace(trace, filename):
    with open(filename, "wt", newline="") as fout:
        writer = csv.writer(fout)
        writer.writerow(["iter", "beta", "energy", "psnr"])
        for entry in trace:
            writer.writerow([entry.iteration, "%.6g" % entry.beta, "%.10g" % entry.energy,
                             "" if entry.psnr is None else format_psnr(entry.psnr, 4)])


# EOF #
