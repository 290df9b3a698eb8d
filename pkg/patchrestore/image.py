# Grayscale images, overlapping patches and image file I/O
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


from PIL import Image
import logging
import math
import os

import numpy as np


class ImageFormatError(RuntimeError):
    pass


class PatchGrid:

    """All d x d windows of a height x width image at stride 1, no padding.

    Patch ``p`` sits at row ``p // cols`` and column ``p % cols`` of
    the grid, patches are read row-major.
    """

    def __init__(self, height, width, patch_size):
        if patch_size < 1 or patch_size > min(height, width):
            raise ValueError("patch size %d doesn't fit into %dx%d image" % (patch_size, width, height))

        self.height = height
        self.width = width
        self.patch_size = patch_size
        self.stride = 1
        self.rows = height - patch_size + 1
        self.cols = width - patch_size + 1

    @classmethod
    def for_image(cls, image, patch_size):
        height, width = image.shape
        return cls(height, width, patch_size)

    @property
    def shape(self):
        return (self.height, self.width)

    @property
    def num_patches(self):
        return self.rows * self.cols

    def __len__(self):
        return self.num_patches

    def position(self, p):
        if not 0 <= p < self.num_patches:
            raise IndexError("patch index %d out of range [0, %d)" % (p, self.num_patches))
        return divmod(int(p), self.cols)

    def index(self, row, col):
        return row * self.cols + col

    def center_index(self):
        return self.index(self.rows // 2, self.cols // 2)

    def check(self, image):
        if image.shape != self.shape:
            raise ValueError("image is %dx%d, grid expects %dx%d" %
                             (image.shape[1], image.shape[0], self.width, self.height))


def extract_patch(image, grid, p):
    """R_p: returns a copy of the d x d window of patch ``p``"""
    grid.check(image)
    r, c = grid.position(p)
    d = grid.patch_size
    return image[r:r + d, c:c + d].copy()


def scatter_patch_add(accum, grid, p, patch):
    """R_p^T: adds ``patch`` into the window of patch ``p`` of ``accum`` (in place)"""
    grid.check(accum)
    d = grid.patch_size
    if patch.shape != (d, d):
        raise ValueError("patch has shape %s, expected %dx%d" % (patch.shape, d, d))

    r, c = grid.position(p)
    accum[r:r + d, c:c + d] += patch
    return accum


def extract_patches(image, grid):
    """Returns all patches as a (|P|, d, d) array in patch index order"""
    grid.check(image)
    d = grid.patch_size
    windows = np.lib.stride_tricks.sliding_window_view(image, (d, d))
    return windows.reshape(grid.num_patches, d, d).copy()


def scatter_patches_add(accum, grid, patches):
    """Sum of R_p^T over all patches, accumulated into ``accum`` (in place)"""
    grid.check(accum)
    d = grid.patch_size
    if patches.shape != (grid.num_patches, d, d):
        raise ValueError("expected %d patches of %dx%d, got %s" % (grid.num_patches, d, d, patches.shape))

    stack = patches.reshape(grid.rows, grid.cols, d, d)
    for i in range(d):
        for j in range(d):
            accum[i:i + grid.rows, j:j + grid.cols] += stack[:, :, i, j]
    return accum


def coverage_counts(grid):
    """Number of patches covering each pixel, the diagonal of sum_p R_p^T R_p"""
    counts = np.zeros(grid.shape)
    d = grid.patch_size
    return scatter_patches_add(counts, grid, np.ones((grid.num_patches, d, d)))


def psnr(a, b, peak=1.0):
    if a.shape != b.shape:
        raise ValueError("can't compare %s image with %s image" % (a.shape, b.shape))

    mse = np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2)
    if mse == 0:
        return math.inf
    else:
        return 10.0 * math.log10(peak * peak / mse)


def format_psnr(value, digits=2):
    if math.isinf(value):
        return "inf"
    else:
        return "%.*f" % (digits, value)


def load_image(filename):
    """Loads an 8-bit grayscale PGM (P2/P5) or PNG, intensities mapped to [0,1]"""
    try:
        with Image.open(filename) as img:
            img.load()
            mode = img.mode
            if mode == "P" and img.palette is not None and img.palette.mode == "L":
                img = img.convert("L")
                mode = img.mode

            if mode == "1":
                img = img.convert("L")
            elif mode != "L":
                raise ImageFormatError("%s: unsupported image mode %s, only 8-bit grayscale is supported" %
                                       (filename, mode))

            data = np.asarray(img, dtype=np.float64)
    except ImageFormatError:
        raise
    except FileNotFoundError:
        raise
    except (OSError, SyntaxError, ValueError) as e:
        raise ImageFormatError("%s: couldn't read image: %s" % (filename, e))

    logging.debug("%s: loaded %dx%d image", filename, data.shape[1], data.shape[0])
    return data / 255.0


def quantize(image):
    """Clamps to [0,1] and rounds half-up to 8-bit levels"""
    return np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(image, filename, plain=False):
    """Saves ``image`` as PNG or PGM depending on the extension, ``plain``
    selects the ASCII P2 encoding for .pgm files"""

    data = quantize(image)
    ext = os.path.splitext(filename)[1].lower()

    if ext in [".pgm", ".pnm"]:
        if plain:
            height, width = data.shape
            with open(filename, "wt") as fout:
                fout.write("P2\n%d %d\n255\n" % (width, height))
                for row in data:
                    fout.write(" ".join("%d" % v for v in row))
                    fout.write("\n")
        else:
            Image.fromarray(data).save(filename, format="PPM")
    elif ext == ".png":
        Image.fromarray(data).save(filename, format="PNG")
    else:
        raise ImageFormatError("%s: unsupported output format '%s'" % (filename, ext))

    logging.debug("%s: saved %dx%d image", filename, data.shape[1], data.shape[0])


def bicubic_resize(image, height, width):
    """Bicubic interpolation of an unclamped float image to height x width"""
    img = Image.fromarray(np.asarray(image, dtype=np.float32))
    result = img.resize((width, height), Image.BICUBIC)
    return np.asarray(result, dtype=np.float64)


def synthetic_image(height, width, seed=0):
    """Deterministic piecewise-smooth test image with edges and texture"""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)

    img = 0.25 + 0.3 * (xx / max(width - 1, 1)) * (yy / max(height - 1, 1))

    for _ in range(6):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        radius = rng.uniform(0.1, 0.35) * min(height, width)
        level = rng.uniform(-0.3, 0.3)
        img += level * ((yy - cy) ** 2 + (xx - cx) ** 2 < radius ** 2)

    for _ in range(3):
        fy, fx = rng.uniform(0.05, 0.4, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        img += 0.05 * np.sin(fy * yy + fx * xx + phase)

    return np.clip(img, 0.0, 1.0)


# EOF #
