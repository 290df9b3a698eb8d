#!/usr/bin/env python3

# PSNR between two grayscale images
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


import argparse

import patchrestore


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description='PSNR between two 8-bit grayscale images')
    parser.add_argument('IMAGE1', action='store', type=str,
                        help='first image (PGM or PNG)')
    parser.add_argument('IMAGE2', action='store', type=str,
                        help='second image (PGM or PNG)')
    parser.add_argument('--peak', type=float, default=1.0,
                        help="peak value on the [0,1] intensity scale")
    args = parser.parse_args()

    a = patchrestore.load_image(args.IMAGE1)
    b = patchrestore.load_image(args.IMAGE2)
    print(patchrestore.format_psnr(patchrestore.psnr(a, b, args.peak)))


# EOF #
