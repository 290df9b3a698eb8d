# Stochastic dual coordinate ascent for the weighted Euclidean z-subproblem
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


"""Minimizes, for every patch anchor x,

    P(z) = sum_i alpha_i |z - x_i|_2 + beta/2 |z - x|^2

over z by coordinate ascent on the dual

    D(mu) = -(beta/2) |sum_i mu_i / beta|^2 - (sum_i mu_i)^T x + sum_i mu_i^T x_i

subject to |mu_i| <= alpha_i, with z = x + sum_i mu_i / beta.
"""


from concurrent.futures import ThreadPoolExecutor
import logging

import numpy as np
import scipy.spatial.distance

from .util import worker_count


GAP = "gap"
GREEDY = "greedy"
UNIFORM = "uniform"
SELECTIONS = [GAP, GREEDY, UNIFORM]

FEASIBILITY_TOLERANCE = 1e-12


class ConvergedError(ValueError):
    pass


class SDCAConfig:

    def __init__(self, max_steps=500, gap_tolerance=None, recompute_period=25,
                 selection=GAP, center=True, chunk_size=32, seed=0, workers=None,
                 warm_start=False):
        self.max_steps = max_steps

        # None means 1e-4 * m
        self.gap_tolerance = gap_tolerance

        self.recompute_period = recompute_period
        self.selection = selection
        self.center = center
        self.chunk_size = chunk_size
        self.seed = seed
        self.workers = workers

        # reuse the duals of the previous call, projected onto the new
        # weight balls; costs chunk_size * (slots) * D floats per chunk
        self.warm_start = warm_start

        if selection not in SELECTIONS:
            raise ValueError("unknown SDCA selection '%s', expected one of %s" % (selection, SELECTIONS))
        if recompute_period < 1 or chunk_size < 1 or max_steps < 0:
            raise ValueError("SDCA period, chunk size and step budget must be positive")

    def tolerance(self, m):
        if self.gap_tolerance is None:
            return 1e-4 * m
        else:
            return self.gap_tolerance


class DualState:

    """Dense dual variables (m, D) of a single patch and the primal iterate z"""

    def __init__(self, mu, z):
        self.mu = np.asarray(mu, dtype=np.float64)
        self.z = np.asarray(z, dtype=np.float64)

    @classmethod
    def cold(cls, x_p, m):
        x_p = np.ravel(np.asarray(x_p, dtype=np.float64))
        return cls(np.zeros((m, len(x_p))), x_p.copy())

    def sync(self, x_p, beta):
        """Re-establishes z = x_p + sum(mu) / beta"""
        self.z = np.ravel(x_p) + self.mu.sum(axis=0) / beta

    def link_error(self, x_p, beta):
        return float(np.max(np.abs(self.z - (np.ravel(x_p) + self.mu.sum(axis=0) / beta))))

    def check_feasible(self, alpha):
        norms = np.linalg.norm(self.mu, axis=1)
        excess = norms - np.asarray(alpha)
        worst = float(np.max(excess)) if len(excess) else 0.0
        if worst > FEASIBILITY_TOLERANCE * max(1.0, float(np.max(np.abs(alpha)))):
            raise ValueError("infeasible dual state: |mu_i| exceeds alpha_i by %g" % worst)


def target_vectors(data):
    """Flattened (m, D) target patches of a PatchDataset or an array"""
    if hasattr(data, "clean_vectors"):
        return data.clean_vectors
    data = np.asarray(data, dtype=np.float64)
    return data.reshape(len(data), -1)


def center(vectors):
    """Subtracts the per-row mean, returns (centered, means)"""
    vectors = np.asarray(vectors, dtype=np.float64)
    means = vectors.mean(axis=-1, keepdims=True)
    return vectors - means, means


def check_weights(alpha):
    alpha = np.asarray(alpha, dtype=np.float64)
    if np.any(alpha < 0):
        raise ValueError("SDCA needs nonnegative weights, got min %g; use NW weights" % float(alpha.min()))
    return alpha


def primal_objective(z, x_p, alpha, targets, beta):
    z = np.ravel(z)
    dist = np.linalg.norm(z[None, :] - targets, axis=1)
    diff = z - np.ravel(x_p)
    return float(np.dot(alpha, dist) + 0.5 * beta * np.dot(diff, diff))


def dual_objective(mu, x_p, targets, beta):
    total = mu.sum(axis=0)
    return float(-0.5 / beta * np.dot(total, total) - np.dot(total, np.ravel(x_p)) + np.sum(mu * targets))


def compute_dual_gaps(z, x_p, mu, alpha, targets, beta):
    """g_i = alpha_i |z - x_i| + mu_i^T (z - x_i)"""
    residual = np.ravel(z)[None, :] - targets
    return alpha * np.linalg.norm(residual, axis=1) + np.sum(mu * residual, axis=1)


def dual_gap(state, x_p, alpha, data, beta):
    """Returns (total gap, per-sample gaps) of a feasible DualState"""
    targets = target_vectors(data)
    alpha = np.asarray(alpha, dtype=np.float64)
    state.check_feasible(alpha)
    gaps = compute_dual_gaps(state.z, x_p, state.mu, alpha, targets, beta)
    return float(gaps.sum()), gaps


def dual_step(z, mu_old, target, radius, beta):
    """Exact maximization of the dual over one mu_i, a projection onto the
    ball of the given radius; rows of a batch are independent.

    Returns (mu_new, z_new) with z_new = z + (mu_new - mu_old) / beta.
    """
    b = z - mu_old / beta - target
    bn = np.linalg.norm(b, axis=-1)
    scale = np.where(bn * beta > radius, radius / np.where(bn > 0, bn, 1.0), beta)
    mu_new = -b * scale[..., None]
    return mu_new, z + (mu_new - mu_old) / beta


def coordinate_step(state, i, alpha, targets, beta):
    mu_new, z_new = dual_step(state.z, state.mu[i], targets[i], alpha[i], beta)
    state.mu[i] = mu_new
    state.z = z_new


def gap_sample(gaps, rng=None, greedy=False, size=None):
    """Draws index i with probability g_i / sum(g); ``greedy`` takes the
    largest gap, ties going to the lowest index"""

    gaps = np.asarray(gaps, dtype=np.float64)
    if np.any(gaps < -FEASIBILITY_TOLERANCE):
        raise ValueError("negative dual gap %g" % float(gaps.min()))
    gaps = np.maximum(gaps, 0.0)

    total = gaps.sum()
    if not total > 0:
        raise ConvergedError("all dual gaps are zero, nothing left to sample")

    if greedy:
        return int(np.argmax(gaps))

    rng = rng if rng is not None else np.random.default_rng()
    cdf = np.cumsum(gaps) / total
    cdf[-1] = 1.0
    idx = np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), len(gaps) - 1)
    return int(idx) if size is None else idx


class ChunkDuals:

    """Dual variables of a chunk of patches, stored by slot: slot s of patch b
    holds mu for training sample slot_idx[b, s], -1 marking free slots"""

    def __init__(self, slot_idx, slot_mu, n_slots):
        self.slot_idx = slot_idx
        self.slot_mu = slot_mu
        self.n_slots = n_slots

    @classmethod
    def empty(cls, batch, capacity, dim):
        return cls(np.full((batch, capacity), -1, dtype=np.int64),
                   np.zeros((batch, capacity, dim)),
                   np.zeros(batch, dtype=np.int64))

    def grow(self, extra):
        batch, capacity, dim = self.slot_mu.shape
        needed = int(self.n_slots.max()) + extra
        if needed > capacity:
            pad = needed - capacity
            self.slot_idx = np.concatenate([self.slot_idx, np.full((batch, pad), -1, dtype=np.int64)], axis=1)
            self.slot_mu = np.concatenate([self.slot_mu, np.zeros((batch, pad, dim))], axis=1)

    def project(self, alphas):
        """Scales every mu_i back into its ball |mu_i| <= alpha_i"""
        valid = self.slot_idx >= 0
        rows, cols = np.nonzero(valid)
        radius = alphas[rows, self.slot_idx[rows, cols]]
        norms = np.linalg.norm(self.slot_mu[rows, cols], axis=1)
        scale = np.where(norms > radius, radius / np.where(norms > 0, norms, 1.0), 1.0)
        self.slot_mu[rows, cols] *= scale[:, None]

    def total(self):
        return self.slot_mu.sum(axis=1)

    def against(self, targets):
        """sum_i mu_i^T x_i per patch"""
        idx = np.maximum(self.slot_idx, 0)
        return np.einsum("bcd,bcd->b", self.slot_mu, targets[idx])


class SDCAResult:

    def __init__(self, z, gaps, primal, start_primal, steps, duals=None):
        self.z = z
        self.gaps = gaps
        self.primal = primal
        self.start_primal = start_primal
        self.steps = steps
        self.duals = duals


def _row_sampler(weights, rng):
    """Vectorized inverse-CDF sampling, one index per row of ``weights``"""
    n, m = weights.shape
    totals = weights.sum(axis=1)
    uniform = ~(totals > 0)
    weights = np.where(uniform[:, None], 1.0, weights)
    totals = np.where(uniform, float(m), totals)
    cdf = np.cumsum(weights, axis=1) / totals[:, None]
    cdf[:, -1] = 1.0
    offsets = np.arange(n)
    flat = (cdf + offsets[:, None]).ravel()

    def sample():
        idx = np.searchsorted(flat, rng.random(n) + offsets, side="right") - offsets * m
        return np.clip(idx, 0, m - 1)

    return sample


def solve_chunk(anchors, alphas, targets, beta, cfg, rng, duals=None):
    """SDCA on a batch of anchors (B, D) sharing the targets (m, D).

    Every patch stops once its certified gap P(z_best) - D(mu) is below the
    tolerance or the step budget is spent.  z_best is the best primal
    iterate seen at a gap checkpoint, the anchor itself being the first.
    """

    batch, dim = anchors.shape
    m = len(targets)
    eps = cfg.tolerance(m)
    budget = cfg.max_steps

    if duals is None:
        duals = ChunkDuals.empty(batch, budget, dim)
    else:
        duals.project(alphas)
        duals.grow(budget)

    slot_of = np.full((batch, m), -1, dtype=np.int64)
    rows, cols = np.nonzero(duals.slot_idx >= 0)
    slot_of[rows, duals.slot_idx[rows, cols]] = cols

    start_primal = np.sum(alphas * scipy.spatial.distance.cdist(anchors, targets), axis=1)
    best_primal = start_primal.copy()
    best_z = anchors.copy()
    gap = np.full(batch, np.inf)
    done = np.zeros(batch, dtype=bool)
    steps = np.zeros(batch, dtype=np.int64)

    k = 0
    while True:
        # resync the primal-dual link
        total = duals.total()
        z = anchors + total / beta

        dist = scipy.spatial.distance.cdist(z, targets)
        diff = z - anchors
        primal = np.sum(alphas * dist, axis=1) + 0.5 * beta * np.sum(diff * diff, axis=1)
        dual = (-0.5 / beta * np.sum(total * total, axis=1)
                - np.sum(total * anchors, axis=1)
                + duals.against(targets))

        improved = primal < best_primal
        best_primal[improved] = primal[improved]
        best_z[improved] = z[improved]

        gap = np.maximum(best_primal - dual, 0.0)
        done |= gap <= eps
        if done.all() or k >= budget:
            break

        # individual gaps of the patches still running
        active = np.nonzero(~done)[0]
        gaps = alphas[active] * dist[active]
        srows, scols = np.nonzero(duals.slot_idx[active] >= 0)
        sidx = duals.slot_idx[active][srows, scols]
        gaps[srows, sidx] += np.sum(duals.slot_mu[active][srows, scols] * (z[active][srows] - targets[sidx]), axis=1)
        gaps = np.maximum(gaps, 0.0)

        if cfg.selection == GAP:
            sample = _row_sampler(gaps, rng)
        elif cfg.selection == UNIFORM:
            def sample():
                return rng.integers(0, m, size=len(active))

        za = z[active]
        alpha_a = alphas[active]
        ar = np.arange(len(active))
        n = min(cfg.recompute_period, budget - k)
        for _ in range(n):
            if cfg.selection == GREEDY:
                i = np.argmax(gaps, axis=1)
            else:
                i = sample()

            s = slot_of[active, i]
            new = s < 0
            if new.any():
                s[new] = duals.n_slots[active[new]]
                slot_of[active[new], i[new]] = s[new]
                duals.slot_idx[active[new], s[new]] = i[new]
                duals.n_slots[active[new]] += 1

            a = alpha_a[ar, i]
            mu_new, za = dual_step(za, duals.slot_mu[active, s], targets[i], a, beta)
            duals.slot_mu[active, s] = mu_new

            if cfg.selection == GREEDY:
                r = za - targets[i]
                gaps[ar, i] = np.maximum(a * np.linalg.norm(r, axis=1) + np.sum(mu_new * r, axis=1), 0.0)

        steps[active] += n
        k += n

    return SDCAResult(best_z, gap, best_primal, start_primal, steps, duals)


def _alpha_block(weights, start, stop):
    if callable(weights):
        return check_weights(weights(start, stop))
    else:
        return check_weights(weights[start:stop])


def sdca_patches(anchors, weights, data, beta, cfg=None, iteration=0, duals=None):
    """Runs the z-update for every anchor patch (N, D).

    ``weights`` is either an (N, m) array or a callable (start, stop) ->
    weights of anchors start..stop, so that only one chunk of weights is
    held per worker.  Chunks run on a thread pool with generators seeded
    from (cfg.seed, iteration, chunk index).
    """

    if not beta > 0:
        raise ValueError("beta must be > 0, got %s" % beta)

    cfg = cfg or SDCAConfig()
    anchors = np.asarray(anchors, dtype=np.float64)
    targets = target_vectors(data)

    if cfg.center:
        anchors, means = center(anchors)
        targets, _ = center(targets)
    else:
        means = np.zeros((len(anchors), 1))

    n = len(anchors)
    bounds = [(start, min(start + cfg.chunk_size, n)) for start in range(0, n, cfg.chunk_size)]
    if duals is None:
        duals = [None] * len(bounds)

    def run(chunk):
        start, stop = bounds[chunk]
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, iteration, chunk]))
        return solve_chunk(anchors[start:stop], _alpha_block(weights, start, stop),
                           targets, beta, cfg, rng, duals[chunk])

    workers = cfg.workers or worker_count()
    if workers == 1 or len(bounds) == 1:
        results = [run(chunk) for chunk in range(len(bounds))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(run, range(len(bounds))))

    result = SDCAResult(np.concatenate([r.z for r in results]) + means,
                        np.concatenate([r.gaps for r in results]),
                        np.concatenate([r.primal for r in results]),
                        np.concatenate([r.start_primal for r in results]),
                        np.concatenate([r.steps for r in results]),
                        [r.duals for r in results] if cfg.warm_start else None)

    eps = cfg.tolerance(len(targets))
    unconverged = int(np.sum(result.gaps > eps))
    if unconverged:
        logging.warning("SDCA: %d of %d patches used the full %d step budget, max gap %g > %g",
                        unconverged, n, cfg.max_steps, float(result.gaps.max()), eps)
    logging.debug("SDCA: beta %g, %d patches, total gap %g, mean steps %.1f",
                  beta, n, float(result.gaps.sum()), float(result.steps.mean()))
    return result


def z_update_sdca(x_p, alpha, data, beta, cfg=None, rng=None):
    """Single-patch z-update, returns (z_p, final gap)"""
    cfg = cfg or SDCAConfig()
    x_p = np.asarray(x_p, dtype=np.float64)
    alpha = check_weights(np.ravel(alpha))
    targets = target_vectors(data)

    if len(alpha) != len(targets):
        raise ValueError("%d weights for %d training patches" % (len(alpha), len(targets)))
    if not beta > 0:
        raise ValueError("beta must be > 0, got %s" % beta)

    anchor = x_p.reshape(1, -1)
    if cfg.center:
        anchor, mean = center(anchor)
        targets, _ = center(targets)
    else:
        mean = 0.0

    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    result = solve_chunk(anchor, alpha[None, :], targets, beta, cfg, rng)
    return (result.z[0] + mean).reshape(x_p.shape), float(result.gaps[0])


# EOF #
