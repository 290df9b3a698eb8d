#!/usr/bin/env python3

# patchrestore
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


from setuptools import setup

setup(name='patchrestore',
      version='0.1.0',
      description='Patch-based image restoration from pairs of clean and degraded training patches',
      scripts=[
          "degradetool.py",
          "patchtool.py",
          "psnrtool.py",
      ],
      packages=['patchrestore'],
      python_requires='>=3.8',
      install_requires=['numpy', 'scipy', 'Pillow>=9.2'])


# EOF #
