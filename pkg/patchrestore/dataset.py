# Training patch datasets: sampling and the PRD1 binary format
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
import os
import struct

import numpy as np

from .degrade import NoiseModel, degrade
from .features import dct_features_batch


prd_magic = b"PRD1"
prd_header = struct.Struct("<4sIII")
prd_trailer = struct.Struct("<Q")

SAMPLING = "with-replacement"

CLEAN = "clean"
DEGRADED = "degraded"


class DatasetFormatError(RuntimeError):
    pass


class PatchDataset:

    """m aligned pairs of clean (d x d) and degraded (e x e) training patches

    ``sources`` is an (m, 3) integer array of (image index, row, col) of
    the clean patch, ``image_names`` maps image indices to file names.
    """

    def __init__(self, clean, degraded, seed=0, sources=None, image_names=None):
        clean = np.asarray(clean, dtype=np.float64)
        degraded = np.asarray(degraded, dtype=np.float64)

        if clean.ndim != 3 or clean.shape[1] != clean.shape[2]:
            raise ValueError("clean patches must be a (m, d, d) stack, got %s" % (clean.shape,))
        if degraded.ndim != 3 or degraded.shape[1] != degraded.shape[2]:
            raise ValueError("degraded patches must be a (m, e, e) stack, got %s" % (degraded.shape,))
        if len(clean) != len(degraded):
            raise ValueError("%d clean patches but %d degraded patches" % (len(clean), len(degraded)))
        if len(clean) < 1:
            raise ValueError("a dataset needs at least one patch pair")

        self.clean = clean
        self.degraded = degraded
        self.seed = seed
        self.sources = sources
        self.image_names = image_names or []

        self._clean_features = None
        self._degraded_features = None

    @property
    def m(self):
        return len(self.clean)

    def __len__(self):
        return self.m

    @property
    def patch_size(self):
        return self.clean.shape[1]

    @property
    def degraded_size(self):
        return self.degraded.shape[1]

    @property
    def clean_vectors(self):
        """Clean patches flattened to (m, d*d)"""
        return self.clean.reshape(self.m, -1)

    @property
    def clean_features(self):
        if self._clean_features is None:
            self._clean_features = dct_features_batch(self.clean)
        return self._clean_features

    @property
    def degraded_features(self):
        if self._degraded_features is None:
            self._degraded_features = dct_features_batch(self.degraded)
        return self._degraded_features

    def features(self, population=DEGRADED, drop_dc=False):
        """DCT features of the clean or degraded patches, optionally without
        the DC coefficient"""
        if population == CLEAN:
            features = self.clean_features
        elif population == DEGRADED:
            features = self.degraded_features
        else:
            raise ValueError("unknown patch population '%s'" % population)
        return features[:, 1:] if drop_dc else features

    def __repr__(self):
        return "PatchDataset(m=%d, d=%d, degraded=%d, seed=%d)" % (
            self.m, self.patch_size, self.degraded_size, self.seed)


def operator_factor(op):
    """Resolution ratio between input and output of ``op``"""
    return getattr(op, "factor", 1)


def degraded_patch_size(d, factor):
    if d % factor != 0:
        raise ValueError("patch size %d is not divisible by the downsampling factor %d" % (d, factor))
    return d // factor


TRAINING_STREAM = 0
TEST_STREAM = 1


def image_seed(seed, index, stream=TRAINING_STREAM):
    """Per-image seed derived from the run seed.

    Training and test images draw from separate streams, so a test
    observation never shares noise or mask with a training image.
    """
    return int(np.random.SeedSequence([seed, stream, index]).generate_state(1)[0])


def _location_counts(shape, d, factor):
    h, w = shape
    if h < d or w < d:
        raise ValueError("image of %dx%d is smaller than the %dx%d patch" % (w, h, d, d))
    return ((h - d) // factor + 1, (w - d) // factor + 1)


def sample_patch_dataset(images, op_factory, noise, m, d, seed=0, image_names=None):
    """Degrades every image once and draws m patch pairs uniformly, with
    replacement, from the union of patch locations of all images.

    ``op_factory(shape, seed)`` builds the degradation operator for an
    image of the given shape.
    """

    if m < 1:
        raise ValueError("m must be >= 1, got %d" % m)
    if not images:
        raise ValueError("no training images")

    degraded_images = []
    counts = []
    factor = None
    for idx, image in enumerate(images):
        image = np.asarray(image, dtype=np.float64)
        op = op_factory(image.shape, image_seed(seed, idx))
        if factor is None:
            factor = operator_factor(op)
        elif factor != operator_factor(op):
            raise ValueError("operators disagree on the downsampling factor")

        noise_i = NoiseModel(noise.sigma, image_seed(seed, idx))
        degraded_images.append(degrade(op, image, noise_i))

        rows, cols = _location_counts(image.shape, d, factor)
        counts.append((rows, cols))

    e = degraded_patch_size(d, factor)
    totals = np.array([rows * cols for rows, cols in counts], dtype=np.int64)
    offsets = np.cumsum(totals)

    rng = np.random.default_rng(seed)
    draws = rng.integers(0, offsets[-1], size=m)
    image_idx = np.searchsorted(offsets, draws, side="right")
    local = draws - np.concatenate([[0], offsets[:-1]])[image_idx]

    clean = np.empty((m, d, d))
    degraded = np.empty((m, e, e))
    sources = np.empty((m, 3), dtype=np.int64)
    for i in range(m):
        j = int(image_idx[i])
        cols = counts[j][1]
        r = int(local[i] // cols) * factor
        c = int(local[i] % cols) * factor
        clean[i] = images[j][r:r + d, c:c + d]
        lr, lc = r // factor, c // factor
        degraded[i] = degraded_images[j][lr:lr + e, lc:lc + e]
        sources[i] = (j, r, c)

    logging.info("sampled %d patch pairs (%dx%d / %dx%d) from %d images",
                 m, d, d, e, e, len(images))

    # stored as float32, keep the in-memory copy identical to a reloaded one
    clean = clean.astype(np.float32).astype(np.float64)
    degraded = degraded.astype(np.float32).astype(np.float64)

    return PatchDataset(clean, degraded, seed, sources, image_names)


def save_dataset(data, filename):
    with open(filename, "wb") as fout:
        fout.write(prd_header.pack(prd_magic, data.m, data.patch_size, data.degraded_size))
        fout.write(data.clean.astype("<f4").tobytes())
        fout.write(data.degraded.astype("<f4").tobytes())
        fout.write(prd_trailer.pack(data.seed))

    if data.sources is not None:
        save_provenance(data, provenance_filename(filename))


def load_dataset(filename):
    with open(filename, "rb") as fin:
        blob = fin.read()

    if len(blob) < prd_header.size + prd_trailer.size:
        raise DatasetFormatError("%s: file too short for a PRD1 dataset" % filename)

    magic, m, d, e = prd_header.unpack_from(blob, 0)
    if magic != prd_magic:
        raise DatasetFormatError("%s: unknown dataset signature: %s" % (filename, magic))
    if m < 1 or d < 1 or e < 1:
        raise DatasetFormatError("%s: invalid header m=%d d=%d e=%d" % (filename, m, d, e))

    clean_bytes = 4 * m * d * d
    degraded_bytes = 4 * m * e * e
    expected = prd_header.size + clean_bytes + degraded_bytes + prd_trailer.size
    if len(blob) != expected:
        raise DatasetFormatError("%s: expected %d bytes, got %d" % (filename, expected, len(blob)))

    offset = prd_header.size
    clean = np.frombuffer(blob, dtype="<f4", count=m * d * d, offset=offset)
    offset += clean_bytes
    degraded = np.frombuffer(blob, dtype="<f4", count=m * e * e, offset=offset)
    offset += degraded_bytes
    seed, = prd_trailer.unpack_from(blob, offset)

    data = PatchDataset(clean.reshape(m, d, d).astype(np.float64),
                        degraded.reshape(m, e, e).astype(np.float64),
                        seed)

    provenance = provenance_filename(filename)
    if os.path.exists(provenance):
        data.sources, data.image_names = load_provenance(provenance)

    logging.debug("%s: loaded %s", filename, data)
    return data


def provenance_filename(filename):
    return filename + ".provenance.csv"


def save_provenance(data, filename):
    with open(filename, "wt", newline="") as fout:
        fout.write("# sampling=%s\n" % SAMPLING)
        fout.write("# seed=%d\n" % data.seed)
        for idx, name in enumerate(data.image_names):
            fout.write("# image %d %s\n" % (idx, name))

        writer = csv.writer(fout)
        writer.writerow(["image", "row", "col"])
        writer.writerows(data.sources.tolist())


def load_provenance(filename):
    image_names = []
    rows = []
    with open(filename, "rt", newline="") as fin:
        for line in fin:
            if line.startswith("# image "):
                image_names.append(line.rstrip("\n").split(" ", 3)[3])
            elif line.startswith("#") or line.startswith("image,"):
                continue
            elif line.strip():
                try:
                    rows.append([int(v) for v in line.split(",")])
                except ValueError:
                    raise DatasetFormatError("%s: malformed provenance row: %s" % (filename, line.strip()))

    return np.array(rows, dtype=np.int64).reshape(-1, 3), image_names


# EOF #
