# Patch correlation constants and formation-model bounds
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


from concurrent.futures import ThreadPoolExecutor
import csv
import logging
import math
import os

import numpy as np
import scipy.spatial.distance

from .dataset import CLEAN
from .features import dct_features_batch, kernel_from_dataset, kernel_vectors
from .image import PatchGrid, extract_patches, save_image
from .util import worker_count


MC_BLOCK = 2500
EXHAUSTIVE_LIMIT = 32


class QEstimate:

    def __init__(self, q, stderr, mc_pairs, seed):
        self.q = q
        self.stderr = stderr
        self.mc_pairs = mc_pairs
        self.seed = seed

    def __repr__(self):
        return "QEstimate(q=%g, stderr=%g, mc_pairs=%d, seed=%d)" % (self.q, self.stderr, self.mc_pairs, self.seed)


def _check_corpus(images, grid):
    if len(images) < 2:
        raise ValueError("q needs at least 2 images, got %d" % len(images))
    for idx, image in enumerate(images):
        if image.shape != grid.shape:
            raise ValueError("image %d is %dx%d, expected %dx%d" %
                             (idx, image.shape[1], image.shape[0], grid.width, grid.height))


def _gather_features(images, grid, image_idx, patch_idx):
    d = grid.patch_size
    rows, cols = np.divmod(patch_idx, grid.cols)
    patches = np.empty((len(image_idx), d, d))
    for n, (i, r, c) in enumerate(zip(image_idx, rows, cols)):
        patches[n] = images[i][r:r + d, c:c + d]
    return dct_features_batch(patches)


def _sq_kernel(model, f1, f2):
    diff = f1 - f2
    return model.from_sqdist(np.sum(diff * diff, axis=1)) ** 2


def _mc_block(images, model, grid, count, rng):
    """Symmetrized samples of k(y_p, y_p')^2 - k(y_p, y'_p')^2"""
    n = len(images)
    i = rng.integers(0, n, size=count)
    j = (i + rng.integers(1, n, size=count)) % n
    p = rng.integers(0, grid.num_patches, size=count)
    pp = rng.integers(0, grid.num_patches, size=count)

    fi_p = _gather_features(images, grid, i, p)
    fi_pp = _gather_features(images, grid, i, pp)
    fj_p = _gather_features(images, grid, j, p)
    fj_pp = _gather_features(images, grid, j, pp)

    forward = _sq_kernel(model, fi_p, fi_pp) - _sq_kernel(model, fi_p, fj_pp)
    swapped = _sq_kernel(model, fj_p, fj_pp) - _sq_kernel(model, fj_p, fi_pp)
    return 0.5 * (forward + swapped)


def estimate_q(images, model, grid, mc_pairs=10000, seed=0, exhaustive=False, workers=None):
    """q = 1/(|P| r^2) sum_{p,p'} E[k(y_p, y_p')^2 - k(y_p, y'_p')^2]

    y and y' are two different images of the corpus.  The double sum is
    Monte-Carlo sampled over (image pair, p, p') unless ``exhaustive``.
    """

    images = [np.asarray(image, dtype=np.float64) for image in images]
    _check_corpus(images, grid)
    scale = grid.num_patches / model.r2

    if exhaustive:
        return _exhaustive_q(images, model, grid, seed)

    if mc_pairs < 1:
        raise ValueError("mc_pairs must be >= 1, got %d" % mc_pairs)

    blocks = [(b, min(MC_BLOCK, mc_pairs - b * MC_BLOCK)) for b in range((mc_pairs + MC_BLOCK - 1) // MC_BLOCK)]

    def run(block):
        index, count = block
        rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
        return _mc_block(images, model, grid, count, rng)

    with ThreadPoolExecutor(max_workers=workers or worker_count()) as executor:
        samples = np.concatenate(list(executor.map(run, blocks)))

    q = scale * float(samples.mean())
    stderr = scale * float(samples.std(ddof=1)) / math.sqrt(len(samples)) if len(samples) > 1 else math.inf
    logging.info("q = %g +- %g from %d pairs", q, stderr, len(samples))
    return QEstimate(q, stderr, mc_pairs, seed)


def _exhaustive_q(images, model, grid, seed):
    if max(grid.height, grid.width) > EXHAUSTIVE_LIMIT:
        raise ValueError("exhaustive q is limited to %dx%d images, got %dx%d" %
                         (EXHAUSTIVE_LIMIT, EXHAUSTIVE_LIMIT, grid.width, grid.height))

    features = [dct_features_batch(extract_patches(image, grid)) for image in images]

    def sq_kernels(a, b):
        return model.from_sqdist(scipy.spatial.distance.cdist(a, b, "sqeuclidean")) ** 2

    n = len(images)
    same = sum(sq_kernels(f, f) for f in features) / n
    cross = sum(sq_kernels(features[i], features[j]) for i in range(n) for j in range(n) if i != j) / (n * (n - 1))

    q = float(np.sum(same - cross)) / (grid.num_patches * model.r2)
    return QEstimate(q, 0.0, grid.num_patches ** 2, seed)


def write_q_csv(estimate, filename):
    """Appends one row, writing the header for a new file"""
    new = not os.path.exists(filename) or os.path.getsize(filename) == 0
    with open(filename, "at", newline="") as fout:
        writer = csv.writer(fout)
        if new:
            writer.writerow(["q", "stderr", "mc_pairs", "seed"])
        writer.writerow(["%.8g" % estimate.q, "%.8g" % estimate.stderr, estimate.mc_pairs, estimate.seed])


def corpus_kernel(images, patch_size, scale, max_samples=10000, seed=0):
    """Kernel with the bandwidth heuristic over (a sample of) all corpus patches"""
    features = []
    for image in images:
        grid = PatchGrid.for_image(image, patch_size)
        features.append(dct_features_batch(extract_patches(image, grid)))
    features = np.concatenate(features)
    if len(features) > max_samples:
        rng = np.random.default_rng(seed)
        features = features[rng.choice(len(features), size=max_samples, replace=False)]
    return kernel_from_dataset(features, scale)


class CorrelationMap:

    def __init__(self, values, reference):
        self.values = values
        self.reference = reference

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    @property
    def center(self):
        return self.values[self.reference]

    def outside_window(self, window=5):
        """Values farther than window // 2 from the reference in either direction"""
        r, c = self.reference
        half = window // 2
        mask = np.ones(self.values.shape, dtype=bool)
        mask[max(0, r - half):r + half + 1, max(0, c - half):c + half + 1] = False
        return self.values[mask]

    def decay_fraction(self, window=5, threshold=0.01):
        """Share of out-of-window values below threshold * center"""
        outside = self.outside_window(window)
        if len(outside) == 0:
            return 1.0
        return float(np.mean(outside < threshold * self.center))


def correlation_map(image, model, grid, reference=None, drop_dc=False):
    """k(features(x_ref), features(x_p)) for every patch p, normalized so the
    reference patch is 1; the reference defaults to the central patch"""

    image = np.asarray(image, dtype=np.float64)
    p = grid.center_index() if reference is None else reference
    position = grid.position(p)

    features = dct_features_batch(extract_patches(image, grid), drop_dc)
    values = kernel_vectors(features[p:p + 1], features, model)[0]
    values = values / values[p]
    return CorrelationMap(values.reshape(grid.rows, grid.cols), position)


def mean_correlation_map(images, model, grid, reference=None):
    maps = [correlation_map(image, model, grid, reference) for image in images]
    if not maps:
        raise ValueError("no images to average")
    return CorrelationMap(np.mean([m.values for m in maps], axis=0), maps[0].reference)


def iterate_correlation_maps(y, op, data, cfg, reference=None, workers=None):
    """Correlation maps over HQS: the degraded input first, then every
    iterate, each with the kernel of the population it is compared to"""

    from .restore import hqs_restore

    grid_y = PatchGrid.for_image(y, data.degraded_size)
    first_model = kernel_from_dataset(data.features(cfg.bandwidth_population, cfg.drop_dc), cfg.kernel_scale)
    maps = [correlation_map(y, first_model, grid_y, reference, cfg.drop_dc)]
    clean_model = kernel_from_dataset(data.features(CLEAN, cfg.drop_dc), cfg.kernel_scale)

    def on_iteration(state):
        grid = PatchGrid.for_image(state.x, data.patch_size)
        maps.append(correlation_map(state.x, clean_model, grid, reference, cfg.drop_dc))

    hqs_restore(y, op, data, cfg, progress_cb=on_iteration, workers=workers)
    return maps


def save_correlation_map(cmap, filename):
    """Writes the map as a grayscale heatmap, 1 being white"""
    save_image(np.clip(cmap.values, 0.0, 1.0), filename)


class Denoising:

    def __init__(self, sigma, diameter=None, num_pixels=None):
        if diameter is None:
            if num_pixels is None:
                raise ValueError("denoising bound needs the diameter or the pixel count")
            diameter = math.sqrt(num_pixels)
        self.sigma = sigma
        self.diameter = diameter


class Inpainting:

    def __init__(self, keep_fraction):
        self.keep_fraction = keep_fraction


class Downsampling:

    def __init__(self, factor):
        self.factor = factor


def c_bound(problem):
    """Closed-form bound on the ratio of constraint-set to image-space diameter"""
    if isinstance(problem, Denoising):
        if problem.sigma < 0 or not problem.diameter > 0:
            raise ValueError("need sigma >= 0 and a positive diameter")
        return min(problem.sigma / problem.diameter, 1.0)
    elif isinstance(problem, Inpainting):
        if not 0.0 <= problem.keep_fraction <= 1.0:
            raise ValueError("keep fraction must be in [0,1], got %s" % problem.keep_fraction)
        return math.sqrt(problem.keep_fraction)
    elif isinstance(problem, Downsampling):
        if problem.factor < 1 or int(problem.factor) != problem.factor:
            raise ValueError("downsampling factor must be a positive integer, got %s" % problem.factor)
        return problem.factor ** -0.5
    else:
        raise ValueError("unknown problem %r" % (problem,))


# EOF #
