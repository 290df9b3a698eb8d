# Command line front end
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
import logging
import sys

import numpy as np

from .bench import StageError, load_training_set, operator_factory, run
from .config import ConfigError, build_config, read_config_file
from .dataset import sample_patch_dataset, save_dataset
from .degrade import NoiseModel, degrade
from .image import PatchGrid, format_psnr, load_image, psnr, save_image
from .restore import restore, write_trace
from .theory import Denoising, Downsampling, Inpainting, c_bound, corpus_kernel, estimate_q, \
    iterate_correlation_maps, mean_correlation_map, save_correlation_map, write_q_csv
from .util import expand_image_paths
from .weights import krr_lambda


LOG_FORMAT = "%(levelname)s: %(message)s"

# command line flag -> config key
FLAG_KEYS = [
    ("task", "task"),
    ("kernel", "kernel"),
    ("factor", "factor"),
    ("antialias_sigma", "antialias_sigma"),
    ("keep_fraction", "keep_fraction"),
    ("noise", "noise_sigma"),
    ("solver", "solver"),
    ("dataset", "dataset"),
    ("train_images", "train_images"),
    ("num_samples", "num_samples"),
    ("patch_size", "patch_size"),
    ("seed", "seed"),
    ("output_dir", "output_dir"),
]


def setup_logging(args):
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.ERROR
    else:
        level = logging.INFO

    logging.basicConfig(level=logging.DEBUG if args.log_file else level, format=LOG_FORMAT, force=True)
    logging.getLogger().handlers[0].setLevel(level)

    if args.log_file:
        handler = logging.FileHandler(args.log_file, mode='w')
        handler.setLevel(logging.DEBUG)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logging.getLogger().addHandler(handler)


def config_from_args(args):
    """Config file first, then the explicit flags, then -D overrides"""
    pairs = []
    if getattr(args, "config", None):
        pairs += read_config_file(args.config)

    for flag, key in FLAG_KEYS:
        value = getattr(args, flag, None)
        if value is not None:
            pairs.append((key, str(value)))

    for define in getattr(args, "define", None) or []:
        if "=" not in define:
            raise ConfigError("-D expects key=value, got '%s'" % define)
        key, value = define.split("=", 1)
        pairs.append((key.strip(), value.strip()))

    return build_config(pairs)


def add_experiment_options(parser, solver=True):
    group = parser.add_argument_group("experiment")
    group.add_argument('-c', '--config', metavar="FILE",
                       help="read settings from a key=value file")
    group.add_argument('-D', '--define', metavar="KEY=VALUE", action='append',
                       help="override a config setting")
    group.add_argument('--task', choices=["deblur", "upsample", "inpaint", "denoise"],
                       help="degradation model")
    group.add_argument('--kernel', metavar="FILE",
                       help="blur kernel file for deblurring")
    group.add_argument('--factor', type=int,
                       help="downsampling factor for upsampling")
    group.add_argument('--antialias-sigma', type=float,
                       help="Gaussian anti-aliasing sigma of the downsampling")
    group.add_argument('--keep-fraction', type=float,
                       help="fraction of pixels kept for inpainting")
    group.add_argument('--noise', type=float,
                       help="noise standard deviation on the [0,1] scale")
    group.add_argument('--seed', type=int,
                       help="seed for noise, masks and sampling")
    if solver:
        group.add_argument('--solver', choices=["mse", "l2-hqs"],
                           help="restoration energy")
        group.add_argument('--dataset', metavar="FILE",
                           help="training patch dataset (PRD1)")
        group.add_argument('--train-images', metavar="DIR",
                           help="sample the training set from these images instead")


def sample_cmd(args):
    cfg = config_from_args(args)
    cfg.validate()
    files = expand_image_paths(args.IMAGES)
    if not files:
        raise StageError("sample", "no training images")
    images = [load_image(filename) for filename in files]
    data = sample_patch_dataset(images, operator_factory(cfg), NoiseModel(cfg.noise_sigma, cfg.seed),
                                cfg.num_samples, cfg.patch_size, cfg.seed, files)
    save_dataset(data, args.output)
    logging.info("%s: wrote %s", args.output, data)


def degrade_cmd(args):
    cfg = config_from_args(args)
    cfg.validate()
    clean = load_image(args.INPUT)
    op = operator_factory(cfg)(clean.shape, cfg.seed)
    y = degrade(op, clean, NoiseModel(cfg.noise_sigma, cfg.seed))
    save_image(y, args.OUTPUT, plain=args.plain)


def restore_cmd(args):
    cfg = config_from_args(args)
    cfg.validate()
    y = load_image(args.INPUT)

    if cfg.task == "upsample":
        if args.size:
            width, height = [int(v) for v in args.size.lower().split("x")]
        else:
            height, width = y.shape[0] * cfg.factor, y.shape[1] * cfg.factor
        shape = (height, width)
    else:
        shape = y.shape

    op = operator_factory(cfg)(shape, cfg.seed)
    try:
        data = load_training_set(cfg)
    except (OSError, ValueError) as e:
        raise StageError("sample", str(e))

    reference = load_image(args.reference) if args.reference else None
    try:
        x, trace = restore(y, op, data, cfg.solver, cfg.solver_cfg, reference=reference)
    except (ValueError, RuntimeError) as e:
        raise StageError("restore", str(e))

    save_image(x, args.OUTPUT)
    if args.trace and trace:
        write_trace(trace, args.trace)
    if reference is not None:
        print(format_psnr(psnr(np.clip(x, 0.0, 1.0), reference)))


def psnr_cmd(args):
    a = load_image(args.IMAGE1)
    b = load_image(args.IMAGE2)
    print(format_psnr(psnr(a, b)))


def bench_cmd(args):
    cfg = config_from_args(args)
    items = run(cfg, args.IMAGES)
    for item in items:
        print("%s %s %s" % (item.name, format_psnr(item.psnr_degraded), format_psnr(item.psnr_restored)))


def c_bound_cmd(args):
    if args.inpaint is not None:
        problem = Inpainting(args.inpaint)
    elif args.downsample is not None:
        problem = Downsampling(args.downsample)
    else:
        problem = Denoising(args.denoise, diameter=args.diameter, num_pixels=args.pixels)
    print("%.2f" % c_bound(problem))


def q_cmd(args):
    files = expand_image_paths(args.IMAGES)
    images = [load_image(filename) for filename in files]
    if not images:
        raise StageError("theory", "no images")
    grid = PatchGrid.for_image(images[0], args.patch_size)
    model = corpus_kernel(images, args.patch_size, args.scale, seed=args.seed)
    estimate = estimate_q(images, model, grid, args.pairs, args.seed, args.exhaustive)
    print("q = %.6g +- %.2g" % (estimate.q, estimate.stderr))
    if args.output:
        write_q_csv(estimate, args.output)


def correlation_cmd(args):
    if args.hqs:
        cfg = config_from_args(args)
        cfg.validate()
        y = load_image(args.IMAGES[0])
        op = operator_factory(cfg)(y.shape, cfg.seed)
        data = load_training_set(cfg)
        maps = iterate_correlation_maps(y, op, data, cfg.solver_cfg, args.reference)
        for t, cmap in enumerate(maps, start=1):
            print("iteration %d: %.4f of the values outside the %dx%d window below 1%%" %
                  (t, cmap.decay_fraction(args.window), args.window, args.window))
            if args.output:
                save_correlation_map(cmap, "%s_%d.pgm" % (args.output, t))
    else:
        images = [load_image(filename) for filename in expand_image_paths(args.IMAGES)]
        if not images:
            raise StageError("theory", "no images")
        grid = PatchGrid.for_image(images[0], args.patch_size)
        model = corpus_kernel(images, args.patch_size, args.scale)
        cmap = mean_correlation_map(images, model, grid, args.reference)
        print("%.4f of the values outside the %dx%d window below 1%%" %
              (cmap.decay_fraction(args.window), args.window, args.window))
        if args.output:
            save_correlation_map(cmap, args.output + ".pgm")


def lambda_cmd(args):
    print("%.6g" % krr_lambda(args.r, args.m, args.q, args.patches, args.n))


def build_parser():
    parser = argparse.ArgumentParser(description='Patch-based image restoration')
    parser.add_argument('-v', '--verbose', action='store_true', default=False,
                        help="be more verbose")
    parser.add_argument('-q', '--quiet', action='store_true', default=False,
                        help="only report errors")
    parser.add_argument('--log-file', metavar="FILE",
                        help="write a debug log to FILE")
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("sample", help="sample a training patch dataset")
    p.add_argument('IMAGES', nargs='+', help="clean training images or directories")
    p.add_argument('-o', '--output', required=True, metavar="FILE", help="dataset file to write")
    p.add_argument('-m', '--num-samples', type=int, help="number of patch pairs")
    p.add_argument('-d', '--patch-size', type=int, help="patch side length")
    add_experiment_options(p, solver=False)
    p.set_defaults(func=sample_cmd)

    p = subparsers.add_parser("degrade", help="simulate an observation")
    p.add_argument('INPUT', help="clean image")
    p.add_argument('OUTPUT', help="degraded image (.png or .pgm)")
    p.add_argument('--plain', action='store_true', default=False, help="write ASCII PGM")
    add_experiment_options(p, solver=False)
    p.set_defaults(func=degrade_cmd)

    p = subparsers.add_parser("restore", help="restore a degraded image")
    p.add_argument('INPUT', help="degraded image")
    p.add_argument('OUTPUT', help="restored image")
    p.add_argument('--reference', metavar="FILE", help="clean image, prints the PSNR")
    p.add_argument('--trace', metavar="FILE", help="write the HQS energy trace as CSV")
    p.add_argument('--size', metavar="WxH", help="output size for upsampling")
    p.add_argument('-d', '--patch-size', type=int, help="patch side length")
    p.add_argument('-m', '--num-samples', type=int, help="patch pairs when sampling")
    add_experiment_options(p)
    p.set_defaults(func=restore_cmd)

    p = subparsers.add_parser("psnr", help="PSNR between two images")
    p.add_argument('IMAGE1')
    p.add_argument('IMAGE2')
    p.set_defaults(func=psnr_cmd)

    p = subparsers.add_parser("bench", help="degrade, restore and score a set of images")
    p.add_argument('IMAGES', nargs='+', help="clean test images or directories")
    p.add_argument('-o', '--output-dir', metavar="DIR", help="report directory")
    p.add_argument('-d', '--patch-size', type=int, help="patch side length")
    p.add_argument('-m', '--num-samples', type=int, help="patch pairs when sampling")
    add_experiment_options(p)
    p.set_defaults(func=bench_cmd)

    p = subparsers.add_parser("theory", help="correlation constants and bounds")
    theory = p.add_subparsers(dest="theory_command", required=True)

    t = theory.add_parser("c-bound", help="closed-form diameter ratio bound")
    group = t.add_mutually_exclusive_group(required=True)
    group.add_argument('--inpaint', type=float, metavar="S", help="kept pixel fraction")
    group.add_argument('--downsample', type=int, metavar="K", help="downsampling factor")
    group.add_argument('--denoise', type=float, metavar="SIGMA", help="noise level")
    t.add_argument('--diameter', type=float, help="image-space diameter for --denoise")
    t.add_argument('--pixels', type=int, default=64, help="pixel count for --denoise (default: 64)")
    t.set_defaults(func=c_bound_cmd)

    t = theory.add_parser("q", help="estimate the patch correlation constant")
    t.add_argument('IMAGES', nargs='+')
    t.add_argument('-d', '--patch-size', type=int, default=8)
    t.add_argument('--scale', type=float, default=0.2, help="kernel bandwidth scale")
    t.add_argument('--pairs', type=int, default=10000, help="Monte-Carlo samples")
    t.add_argument('--seed', type=int, default=0)
    t.add_argument('--exhaustive', action='store_true', default=False,
                   help="sum over all patch pairs (images up to 32x32)")
    t.add_argument('-o', '--output', metavar="CSV", help="append the estimate to CSV")
    t.set_defaults(func=q_cmd)

    t = theory.add_parser("correlation", help="patch correlation maps")
    t.add_argument('IMAGES', nargs='+')
    t.add_argument('-d', '--patch-size', type=int, default=8)
    t.add_argument('--scale', type=float, default=0.2, help="kernel bandwidth scale")
    t.add_argument('--reference', type=int, help="reference patch index (default: center)")
    t.add_argument('--window', type=int, default=5)
    t.add_argument('--hqs', action='store_true', default=False,
                   help="maps of the HQS iterates of the first image")
    t.add_argument('-o', '--output', metavar="PREFIX", help="write PGM heatmaps")
    add_experiment_options(t)
    t.set_defaults(func=correlation_cmd)

    t = theory.add_parser("lambda", help="KRR regularization from q")
    t.add_argument('--r', type=float, default=1.0, help="kernel bound r")
    t.add_argument('-m', type=int, required=True, help="number of training patches")
    t.add_argument('--q', type=float, required=True)
    t.add_argument('--patches', type=int, required=True, help="|P|")
    t.add_argument('-n', type=int, default=1, help="number of training images")
    t.set_defaults(func=lambda_cmd)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args)

    try:
        args.func(args)
    except StageError as e:
        stage, err = e.stage, e
    except ConfigError as e:
        stage, err = "config", e
    except Exception as e:
        stage, err = args.command, e
    else:
        return 0

    logging.debug("%s failed", stage, exc_info=True)
    sys.stderr.write("error: %s: %s\n" % (stage, err))
    return 1


# EOF #
