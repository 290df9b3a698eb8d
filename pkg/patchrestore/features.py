# DCT patch features and the Gaussian similarity kernel
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
import scipy.fft
import scipy.spatial.distance


DEFAULT_KERNEL_SCALE = 0.2


def dct_features(patch, drop_dc=False):
    """Orthonormal 2-D DCT-II of a square patch, row-major frequency order"""
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim != 2 or patch.shape[0] != patch.shape[1]:
        raise ValueError("expected a square patch, got shape %s" % (patch.shape,))

    coeffs = scipy.fft.dctn(patch, type=2, norm="ortho").ravel()
    if drop_dc:
        return coeffs[1:]
    else:
        return coeffs


def dct_features_batch(patches, drop_dc=False):
    """Features of a (N, d, d) patch stack as a (N, d*d) matrix"""
    patches = np.asarray(patches, dtype=np.float64)
    n = patches.shape[0]
    coeffs = scipy.fft.dctn(patches, type=2, norm="ortho", axes=(1, 2)).reshape(n, -1)
    if drop_dc:
        return coeffs[:, 1:]
    else:
        return coeffs


class KernelModel:

    """Gaussian kernel k(f1, f2) = exp(-|f1 - f2|^2 / (2 bandwidth^2))

    ``r2`` is sup_y k(y, y), which is 1 for the Gaussian kernel.
    """

    r2 = 1.0

    def __init__(self, bandwidth, scale=DEFAULT_KERNEL_SCALE):
        if not bandwidth > 0:
            raise ValueError("kernel bandwidth must be > 0, got %s" % bandwidth)
        self.bandwidth = float(bandwidth)
        self.scale = scale

    @property
    def r(self):
        return np.sqrt(self.r2)

    def from_sqdist(self, sqdist):
        return np.exp(-sqdist / (2.0 * self.bandwidth ** 2))

    def __repr__(self):
        return "KernelModel(bandwidth=%g, scale=%g)" % (self.bandwidth, self.scale)


def bandwidth_from_dataset(features, scale=DEFAULT_KERNEL_SCALE):
    """scale * |(std_1, ..., std_D)|_2 with population standard deviations"""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise ValueError("bandwidth needs at least 2 feature vectors, got %d" % len(features))

    std = features.std(axis=0)
    bandwidth = scale * np.linalg.norm(std)
    if not bandwidth > 0:
        raise ValueError("all feature coordinates have zero variance, bandwidth would be 0")

    logging.debug("kernel bandwidth %g from %d features (scale %g)", bandwidth, len(features), scale)
    return bandwidth


def kernel_from_dataset(features, scale=DEFAULT_KERNEL_SCALE):
    return KernelModel(bandwidth_from_dataset(features, scale), scale)


def kernel_eval(f1, f2, model):
    f1 = np.asarray(f1, dtype=np.float64)
    f2 = np.asarray(f2, dtype=np.float64)
    if f1.shape != f2.shape:
        raise ValueError("feature length mismatch: %s vs %s" % (f1.shape, f2.shape))
    diff = f1 - f2
    return float(model.from_sqdist(np.dot(diff, diff)))


def kernel_vector(query, features, model):
    """v_i = k(query, features_i)"""
    features = np.asarray(features, dtype=np.float64)
    if len(features) == 0:
        return np.zeros(0)
    return kernel_vectors(np.asarray(query, dtype=np.float64)[None, :], features, model)[0]


def kernel_vectors(queries, features, model):
    """Kernel vectors of many queries at once, shape (len(queries), len(features))"""
    queries = np.asarray(queries, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    if len(features) == 0:
        return np.zeros((len(queries), 0))
    if queries.shape[1] != features.shape[1]:
        raise ValueError("feature length mismatch: %d vs %d" % (queries.shape[1], features.shape[1]))

    sqdist = scipy.spatial.distance.cdist(queries, features, "sqeuclidean")
    return model.from_sqdist(sqdist)


def kernel_matrix(features, model):
    """K_ij = k(features_i, features_j), symmetric with unit diagonal"""
    features = np.asarray(features, dtype=np.float64)
    sqdist = scipy.spatial.distance.squareform(scipy.spatial.distance.pdist(features, "sqeuclidean"))
    K = model.from_sqdist(sqdist)
    np.fill_diagonal(K, 1.0)
    return K


# EOF #
