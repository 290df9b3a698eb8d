# Benchmark runs: degrade, restore and score a set of test images
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
import logging
import math
import os

import numpy as np

from .config import ConfigError, config_hash
from .dataset import TEST_STREAM, image_seed, load_dataset, sample_patch_dataset
from .degrade import Blur, Downsample, Identity, Mask, NoiseModel, degrade, load_kernel
from .image import bicubic_resize, load_image, psnr, quantize, save_image
from .restore import restore, write_trace
from .util import expand_image_paths, worker_count


REPORT_COLUMNS = ["image", "psnr_degraded", "psnr_restored", "psnr_bicubic"]


class StageError(RuntimeError):

    """A failure tagged with the pipeline stage it happened in"""

    def __init__(self, stage, msg):
        super().__init__(msg)
        self.stage = stage


def operator_factory(cfg):
    """Returns factory(shape, seed) -> DegradationOperator for cfg.task"""
    if cfg.task == "deblur":
        kernel = load_kernel(cfg.kernel)
        return lambda shape, seed: Blur(shape, kernel)
    elif cfg.task == "upsample":
        return lambda shape, seed: Downsample(shape, cfg.factor, cfg.antialias_sigma)
    elif cfg.task == "inpaint":
        return lambda shape, seed: Mask.random(shape, cfg.keep_fraction, seed)
    elif cfg.task == "denoise":
        return lambda shape, seed: Identity(shape)
    else:
        raise ConfigError("unknown task '%s'" % cfg.task)


def load_training_set(cfg, factory=None):
    """The PRD1 file named by cfg.dataset, or a fresh sample of cfg.train_images"""
    if cfg.dataset is not None:
        return load_dataset(cfg.dataset)
    elif cfg.train_images is not None:
        files = expand_image_paths([cfg.train_images])
        if not files:
            raise ConfigError("%s: no training images" % cfg.train_images)
        images = [load_image(filename) for filename in files]
        factory = factory or operator_factory(cfg)
        return sample_patch_dataset(images, factory, NoiseModel(cfg.noise_sigma, cfg.seed),
                                    cfg.num_samples, cfg.patch_size, cfg.seed, files)
    else:
        raise ConfigError("neither 'dataset' nor 'train_images' is set")


def quantized_psnr(image, reference):
    return psnr(quantize(image) / 255.0, reference)


class BenchItem:

    def __init__(self, name, psnr_degraded, psnr_restored, psnr_bicubic=None, trace=None):
        self.name = name
        self.psnr_degraded = psnr_degraded
        self.psnr_restored = psnr_restored
        self.psnr_bicubic = psnr_bicubic
        self.trace = trace or []


def observation_seed(cfg, index):
    """Seed of the noise and mask of test image ``index``"""
    return image_seed(cfg.seed, index, TEST_STREAM)


def restore_image(index, filename, data, cfg, factory, outdir, workers=None):
    name = os.path.splitext(os.path.basename(filename))[0]
    seed = observation_seed(cfg, index)

    try:
        clean = load_image(filename)
    except Exception as e:
        raise StageError("load", "%s: %s" % (filename, e))

    try:
        op = factory(clean.shape, seed)
        y = degrade(op, clean, NoiseModel(cfg.noise_sigma, seed))
    except Exception as e:
        raise StageError("degrade", "%s: %s" % (name, e))

    try:
        x, trace = restore(y, op, data, cfg.solver, cfg.solver_cfg, reference=clean, workers=workers)
    except Exception as e:
        raise StageError("restore", "%s: %s" % (name, e))

    if op.output_shape != op.input_shape:
        bicubic = quantized_psnr(bicubic_resize(y, clean.shape[0], clean.shape[1]), clean)
        degraded = bicubic
    else:
        bicubic = None
        degraded = quantized_psnr(y, clean)

    item = BenchItem(name, degraded, quantized_psnr(x, clean), bicubic, trace)

    try:
        save_image(x, os.path.join(outdir, "restored", name + ".png"))
        if trace:
            write_trace(trace, os.path.join(outdir, "trace_%s.csv" % name))
    except OSError as e:
        raise StageError("write", "%s: %s" % (name, e))

    logging.info("%s: PSNR %.2f dB -> %.2f dB", name, item.psnr_degraded, item.psnr_restored)
    return item


def _format(value):
    if value is None:
        return ""
    elif math.isinf(value):
        return "inf"
    else:
        return "%.4f" % value


def _mean(values):
    values = [v for v in values if v is not None]
    if not values:
        return None
    return float(np.mean(values))


def report_header(cfg):
    from . import __version__
    return "# patchrestore %s\n# config-sha1 %s\n" % (__version__, config_hash(cfg))


def write_report(items, cfg, filename):
    with open(filename, "wt") as fout:
        fout.write(report_header(cfg))
        fout.write(",".join(REPORT_COLUMNS) + "\n")
        for item in items:
            fout.write(",".join([item.name, _format(item.psnr_degraded),
                                 _format(item.psnr_restored), _format(item.psnr_bicubic)]) + "\n")


def write_summary(items, cfg, filename):
    with open(filename, "wt") as fout:
        fout.write(report_header(cfg))
        fout.write("images,psnr_degraded,psnr_restored,psnr_bicubic\n")
        fout.write(",".join(["%d" % len(items),
                             _format(_mean([i.psnr_degraded for i in items])),
                             _format(_mean([i.psnr_restored for i in items])),
                             _format(_mean([i.psnr_bicubic for i in items]))]) + "\n")


def run(cfg, files, data=None):
    """Restores every test image and writes the reports into cfg.output_dir.

    Images run concurrently up to the worker limit, each restoration then
    using a single worker for its own patch chunks.
    """

    cfg.validate()
    files = expand_image_paths(files)
    if not files:
        raise StageError("load", "no test images")

    outdir = cfg.output_dir
    os.makedirs(os.path.join(outdir, "restored"), exist_ok=True)

    factory = operator_factory(cfg)
    if data is None:
        try:
            data = load_training_set(cfg, factory)
        except ConfigError:
            raise
        except Exception as e:
            raise StageError("sample", str(e))
    logging.info("training set: %s", data)

    workers = min(cfg.solver_cfg.workers or worker_count(), len(files))
    inner = 1 if workers > 1 else None

    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(restore_image, idx, filename, data, cfg, factory, outdir, inner)
                   for idx, filename in enumerate(files)]

    items = []
    for future in futures:
        try:
            items.append(future.result())
        except StageError as e:
            logging.error("%s: %s", e.stage, e)
            raise

    write_report(items, cfg, os.path.join(outdir, "report.csv"))
    write_summary(items, cfg, os.path.join(outdir, "summary.csv"))

    logging.info("mean PSNR over %d images: %.2f dB -> %.2f dB", len(items),
                 _mean([i.psnr_degraded for i in items]), _mean([i.psnr_restored for i in items]))
    return items


# EOF #
