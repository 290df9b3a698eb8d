# Linear degradation operators and noisy forward simulation
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


DEFAULT_ANTIALIAS_SIGMA = 0.8


def gaussian_kernel(sigma):
    """Separable Gaussian truncated at +-3 sigma, renormalized to sum 1"""
    if sigma < 0:
        raise ValueError("negative sigma: %s" % sigma)
    elif sigma == 0:
        return np.ones((1, 1))

    radius = int(math.ceil(3.0 * sigma))
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-t ** 2 / (2.0 * sigma ** 2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def normalize_kernel(kernel):
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 2:
        raise ValueError("blur kernel must be 2-D, got shape %s" % (kernel.shape,))

    kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("blur kernel must have odd side lengths, got %dx%d" % (kh, kw))

    total = kernel.sum()
    if not np.isfinite(total) or abs(total) < 1e-12:
        raise ValueError("blur kernel coefficients sum to %s, can't normalize" % total)

    return kernel / total


def kernel_otf(kernel, shape):
    """Transfer function of a centered kernel under periodic boundaries"""
    kh, kw = kernel.shape
    h, w = shape
    psf = np.zeros(shape)
    rows = (np.arange(kh) - kh // 2) % h
    cols = (np.arange(kw) - kw // 2) % w
    # kernels larger than the image wrap around
    np.add.at(psf, (rows[:, None], cols[None, :]), kernel)
    return np.fft.rfft2(psf)


def circular_convolve(image, otf):
    return np.fft.irfft2(np.fft.rfft2(image) * otf, s=image.shape)


def circular_correlate(image, otf):
    return np.fft.irfft2(np.fft.rfft2(image) * np.conj(otf), s=image.shape)


class DegradationOperator:

    """Linear map B from input_shape images to output_shape images"""

    kind = None

    def __init__(self, input_shape, output_shape):
        self.input_shape = tuple(input_shape)
        self.output_shape = tuple(output_shape)

    def forward(self, x):
        raise NotImplementedError()

    def adjoint(self, v):
        raise NotImplementedError()

    def normal(self, x):
        """B^T B x"""
        return self.adjoint(self.forward(x))

    def __repr__(self):
        return "%s(%s -> %s)" % (self.__class__.__name__, self.input_shape, self.output_shape)


class Identity(DegradationOperator):

    kind = "identity"

    def __init__(self, shape):
        super().__init__(shape, shape)

    def forward(self, x):
        return x.copy()

    def adjoint(self, v):
        return v.copy()


class Blur(DegradationOperator):

    """Periodic 2-D convolution with a normalized odd-sized kernel"""

    kind = "blur"

    def __init__(self, shape, kernel):
        super().__init__(shape, shape)
        self.kernel = normalize_kernel(kernel)
        self.otf = kernel_otf(self.kernel, self.input_shape)

    def forward(self, x):
        return circular_convolve(x, self.otf)

    def adjoint(self, v):
        return circular_correlate(v, self.otf)


class Downsample(DegradationOperator):

    """Periodic Gaussian anti-aliasing followed by keeping every k-th pixel"""

    kind = "downsample"

    def __init__(self, shape, factor, antialias_sigma=DEFAULT_ANTIALIAS_SIGMA):
        if factor < 1 or int(factor) != factor:
            raise ValueError("downsampling factor must be a positive integer, got %s" % factor)

        h, w = shape
        factor = int(factor)
        super().__init__(shape, (-(-h // factor), -(-w // factor)))
        self.factor = factor
        self.antialias_sigma = antialias_sigma
        self.kernel = gaussian_kernel(antialias_sigma)
        self.otf = kernel_otf(self.kernel, self.input_shape)

    def forward(self, x):
        k = self.factor
        return circular_convolve(x, self.otf)[::k, ::k].copy()

    def adjoint(self, v):
        k = self.factor
        upsampled = np.zeros(self.input_shape)
        upsampled[::k, ::k] = v
        return circular_correlate(upsampled, self.otf)


class Mask(DegradationOperator):

    kind = "mask"

    def __init__(self, bitmap):
        bitmap = np.asarray(bitmap, dtype=bool)
        super().__init__(bitmap.shape, bitmap.shape)
        self.bitmap = bitmap
        self.weights = bitmap.astype(np.float64)

    @classmethod
    def random(cls, shape, keep_fraction, seed=0):
        if not 0.0 <= keep_fraction <= 1.0:
            raise ValueError("keep fraction must be in [0,1], got %s" % keep_fraction)
        rng = np.random.default_rng(seed)
        return cls(rng.random(shape) < keep_fraction)

    def forward(self, x):
        return x * self.weights

    def adjoint(self, v):
        return v * self.weights


class NoiseModel:

    def __init__(self, sigma=0.0, seed=0):
        if sigma < 0:
            raise ValueError("noise sigma must be >= 0, got %s" % sigma)
        self.sigma = sigma
        self.seed = seed


def apply(op, x):
    if x.shape != op.input_shape:
        raise ValueError("%s: input is %s, expected %s" % (op, x.shape, op.input_shape))
    return op.forward(x)


def apply_adjoint(op, v):
    if v.shape != op.output_shape:
        raise ValueError("%s: adjoint input is %s, expected %s" % (op, v.shape, op.output_shape))
    return op.adjoint(v)


def degrade(op, x, noise):
    """y = Bx + eps with eps ~ N(0, sigma^2) drawn from a PCG64 stream seeded by ``noise.seed``"""
    y = apply(op, x)
    if noise.sigma > 0:
        rng = np.random.default_rng(noise.seed)
        y = y + rng.normal(0.0, noise.sigma, size=y.shape)
    logging.debug("%s: degraded with noise sigma %g (seed %d)", op, noise.sigma, noise.seed)
    return y


def load_kernel(filename):
    """Reads a blur kernel: first line ``h w``, then h*w coefficients"""
    with open(filename, "rt") as fin:
        tokens = fin.read().split()

    if len(tokens) < 2:
        raise ValueError("%s: missing kernel header" % filename)

    try:
        h, w = int(tokens[0]), int(tokens[1])
        values = [float(t) for t in tokens[2:]]
    except ValueError as e:
        raise ValueError("%s: malformed kernel file: %s" % (filename, e))

    if len(values) != h * w:
        raise ValueError("%s: expected %d coefficients, got %d" % (filename, h * w, len(values)))

    return normalize_kernel(np.array(values).reshape(h, w))


def save_kernel(kernel, filename):
    h, w = kernel.shape
    with open(filename, "wt") as fout:
        fout.write("%d %d\n" % (h, w))
        for row in kernel:
            fout.write(" ".join("%.10g" % v for v in row))
            fout.write("\n")


# EOF #
