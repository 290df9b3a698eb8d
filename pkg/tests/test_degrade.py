#!/usr/bin/env python3

# patchrestore test cases
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


import os
import shutil
import tempfile
import unittest

import numpy as np
import numpy.testing

import patchrestore.degrade
from patchrestore.degrade import Blur, Downsample, Identity, Mask, NoiseModel


KERNEL_DIR = os.path.join(os.path.dirname(__file__), "..", "data", "kernels")


class DegradeTestCase(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(7)
        self.tmpdir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def assertAdjoint(self, op, trials=100):
        for _ in range(trials):
            x = self.rng.standard_normal(op.input_shape)
            v = self.rng.standard_normal(op.output_shape)
            lhs = np.sum(patchrestore.degrade.apply(op, x) * v)
            rhs = np.sum(x * patchrestore.degrade.apply_adjoint(op, v))
            self.assertAlmostEqual(lhs, rhs, delta=1e-10 * max(1.0, abs(lhs)))

    def test_identity_adjoint(self):
        self.assertAdjoint(Identity((10, 12)))

    def test_blur_adjoint(self):
        kernel = patchrestore.degrade.load_kernel(os.path.join(KERNEL_DIR, "kernel1_17x17.txt"))
        self.assertAdjoint(Blur((32, 30), kernel))

    def test_blur_kernel_larger_than_image(self):
        kernel = patchrestore.degrade.load_kernel(os.path.join(KERNEL_DIR, "kernel2_19x19.txt"))
        self.assertAdjoint(Blur((12, 12), kernel), trials=10)

    def test_downsample_adjoint(self):
        self.assertAdjoint(Downsample((32, 30), 2, 0.8))
        self.assertAdjoint(Downsample((15, 17), 3, 0.8), trials=10)

    def test_mask_adjoint(self):
        self.assertAdjoint(Mask.random((20, 20), 0.5, seed=1))

    def test_downsample_shape(self):
        self.assertEqual(Downsample((15, 17), 2).output_shape, (8, 9))
        self.assertEqual(Downsample((16, 16), 4).output_shape, (4, 4))
        with self.assertRaises(ValueError):
            Downsample((16, 16), 0)

    def test_blur_preserves_constants(self):
        kernel = patchrestore.degrade.load_kernel(os.path.join(KERNEL_DIR, "kernel1_17x17.txt"))
        result = Blur((24, 24), kernel).forward(np.full((24, 24), 0.3))
        numpy.testing.assert_allclose(result, 0.3, atol=1e-12)

    def test_blur_shift(self):
        # a kernel with its mass one pixel right of the center shifts the image
        kernel = np.zeros((3, 3))
        kernel[1, 2] = 1.0
        x = self.rng.standard_normal((8, 8))
        result = Blur((8, 8), kernel).forward(x)
        numpy.testing.assert_allclose(result, np.roll(x, 1, axis=1), atol=1e-12)

    def test_mask_keep_fraction(self):
        mask = Mask.random((100, 100), 0.25, seed=3)
        self.assertAlmostEqual(mask.bitmap.mean(), 0.25, delta=0.02)
        with self.assertRaises(ValueError):
            Mask.random((4, 4), 1.5)

    def test_degrade_noise(self):
        op = Identity((16, 16))
        x = self.rng.random((16, 16))

        numpy.testing.assert_array_equal(patchrestore.degrade.degrade(op, x, NoiseModel(0.0, 1)), x)

        a = patchrestore.degrade.degrade(op, x, NoiseModel(0.1, 5))
        b = patchrestore.degrade.degrade(op, x, NoiseModel(0.1, 5))
        c = patchrestore.degrade.degrade(op, x, NoiseModel(0.1, 6))
        numpy.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))
        self.assertAlmostEqual(np.std(a - x), 0.1, delta=0.02)

        with self.assertRaises(ValueError):
            NoiseModel(-1.0)

    def test_dimension_mismatch(self):
        op = Downsample((16, 16), 2)
        with self.assertRaises(ValueError):
            patchrestore.degrade.apply(op, np.zeros((8, 8)))
        with self.assertRaises(ValueError):
            patchrestore.degrade.apply_adjoint(op, np.zeros((16, 16)))

    def test_kernel_files(self):
        for name, size in [("kernel1_17x17.txt", 17), ("kernel2_19x19.txt", 19)]:
            kernel = patchrestore.degrade.load_kernel(os.path.join(KERNEL_DIR, name))
            self.assertEqual(kernel.shape, (size, size))
            self.assertAlmostEqual(kernel.sum(), 1.0, places=12)

    def test_kernel_roundtrip(self):
        kernel = patchrestore.degrade.gaussian_kernel(1.0)
        filename = os.path.join(self.tmpdir, "gauss.txt")
        patchrestore.degrade.save_kernel(kernel, filename)
        numpy.testing.assert_allclose(patchrestore.degrade.load_kernel(filename), kernel, atol=1e-9)

    def test_invalid_kernels(self):
        with self.assertRaises(ValueError):
            patchrestore.degrade.normalize_kernel(np.ones((2, 3)))
        with self.assertRaises(ValueError):
            patchrestore.degrade.normalize_kernel(np.zeros((3, 3)))

        filename = os.path.join(self.tmpdir, "short.txt")
        with open(filename, "wt") as fout:
            fout.write("3 3\n1 2 3\n")
        with self.assertRaises(ValueError):
            patchrestore.degrade.load_kernel(filename)


if __name__ == '__main__':
    unittest.main()


# EOF #
