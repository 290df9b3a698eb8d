# Utility functions
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


import hashlib
import logging
import os


image_extensions = [".pgm", ".pnm", ".png"]


def find_files(directory, ext=None):
    """Traverses a directory and returns all files contained within, if
    ``ext`` is given, only files whose extension is in ``ext`` are
    returned, sorted for reproducible ordering"""

    if isinstance(ext, str):
        ext = [ext]

    results = []
    for path, dirs, files in os.walk(directory):
        dirs.sort()
        for fname in sorted(files):
            if ext is None or os.path.splitext(fname)[1].lower() in ext:
                results.append(os.path.join(path, fname))

    return results


def expand_image_paths(paths):
    """Files are taken as is, directories are searched for images"""
    files = []
    for path in paths:
        if os.path.isdir(path):
            found = find_files(path, image_extensions)
            if not found:
                logging.warning("%s: no images found", path)
            files += found
        else:
            files.append(path)
    return files


def worker_count(env="PATCHRESTORE_THREADS"):
    """Worker limit for thread pools, capped by the environment"""
    value = os.environ.get(env)
    if value:
        try:
            count = int(value)
        except ValueError:
            raise ValueError("%s must be an integer, got '%s'" % (env, value))
        return max(1, count)
    else:
        return os.cpu_count() or 1


def sha1_text(text):
    return hashlib.sha1(text.encode("utf-8")).hexdigest()


# EOF #
