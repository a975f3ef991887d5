"""Command-line front end.

Subcommands::

    design      lattice matrices, gain ratio, sample counts, gain curve
    gain-curve  gain ratio versus band limit
    support     single-point spectra E_x and support-set containment
    scan        simulate standard and interlaced scans
    filter      resample the interlaced scan onto the uniform grid
    recon       reconstruct both scans and the ground truth
    compare     MSE / SSIM table for both paths

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

import argparse
import csv
import os
import shutil
import sys
import tempfile
from contextlib import contextmanager

import numpy as np
import scipy.fft

from . import pipeline
from .config import PRESETS, ConfigError, load_config, load_preset
from .filterbank import ResamplingError
from .lattice import count_lattice_points, efficient_dual, gain_ratio, gain_ratio_det, scan_box
from .metrics import format_table, write_metrics_csv
from .recon import ReconstructionError, ground_truth_volume, read_volume, write_volume
from .scan import read_sinogram, write_sinogram
from .spectral import FrequencySupportSet, QuadratureError, SupportParams, ex_grid, in_set_energy_fraction

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


class DataError(RuntimeError):
    """Missing or inconsistent input files."""


@contextmanager
def _staged(out_dir):
    """Directory whose files are moved into ``out_dir`` only on success."""
    os.makedirs(out_dir, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".staging-", dir=out_dir)
    try:
        yield tmp
        for name in sorted(os.listdir(tmp)):
            os.replace(os.path.join(tmp, name), os.path.join(out_dir, name))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _fmt_wv(wv):
    return f"{wv:g}".replace("-", "m").replace(".", "p")


def _require(path):
    if not os.path.exists(path):
        raise DataError(f"missing input {path}; run the upstream command first")
    return path


def _gain_curve(cfg):
    s = cfg.sampling
    geom = cfg.geom()
    omegas = np.linspace(s.gain_omega_min, s.gain_omega_max, s.gain_points)
    rows = []
    for om in omegas:
        g = gain_ratio(SupportParams.from_geometry(geom, om))
        rows.append((float(om), g, 1 - 1 / g))
    return rows


def cmd_design(cfg, args, out):
    geom = cfg.geom()
    params = SupportParams.from_geometry(geom, cfg.sampling.omega)
    dsg = pipeline.design(cfg)
    t = dsg.interlaced.matrix
    u = dsg.uniform.matrix
    dual = efficient_dual(params)
    rows = [
        ("omega", float(params.Omega)),
        ("K", int(params.K)),
        ("W_v", float(params.Wv)),
        ("D(0)", float(params.D0)),
        ("D(W_v)", float(params.DWv)),
        ("D", float(params.D)),
        ("gain_ratio", float(gain_ratio(params))),
        ("gain_ratio_det", float(gain_ratio_det(params))),
        ("density_reduction", float(dsg.density_reduction)),
    ]
    for basis in ("fan", "full"):
        box = scan_box(geom, basis)
        nt = count_lattice_points(dsg.interlaced, box)
        nu = count_lattice_points(dsg.uniform, box)
        rows += [
            (f"count_interlaced_{basis}", nt),
            (f"count_uniform_{basis}", nu),
            (f"count_reduction_{basis}", 1 - nt / nu),
        ]
    write_metrics_csv(os.path.join(out, "design_report.csv"), rows)
    mat_rows = []
    for name, m in (("interlaced", t), ("uniform", u), ("dual", dual)):
        for i in range(3):
            mat_rows.append((name, i, *(float(x) for x in m[i])))
    _write_rows(os.path.join(out, "matrices.csv"), ("matrix", "row", "c0", "c1", "c2"), mat_rows)
    _write_rows(os.path.join(out, "gain_curve.csv"), ("omega", "gain_ratio", "reduction"), _gain_curve(cfg))
    print(format_table(rows))


def cmd_gain_curve(cfg, args, out):
    rows = _gain_curve(cfg)
    _write_rows(os.path.join(out, "gain_curve.csv"), ("omega", "gain_ratio", "reduction"), rows)
    g = np.array([r[1] for r in rows])
    print(format_table([("points", len(rows)), ("gain_min", float(g.min())), ("gain_max", float(g.max()))]))


def cmd_support(cfg, args, out):
    geom = cfg.geom()
    s = cfg.sampling
    support = FrequencySupportSet(SupportParams.from_geometry(geom, s.omega))
    omega_vs = args.omega_v if args.omega_v is not None else s.omega_v
    ms = np.arange(-s.ex_m, s.ex_m)
    wbs = np.linspace(-s.ex_beta_max, s.ex_beta_max, s.ex_beta_points)
    step = 2 * geom.B / s.ex_quadrature
    summary = []
    for wv in omega_vs:
        if abs(wv) > support.params.Wv:
            raise ConfigError(f"--omega-v {wv} exceeds W_v = {support.params.Wv:.6g}")
        poly = support.cross_section(wv)
        _write_rows(os.path.join(out, f"polygon_wv{_fmt_wv(wv)}.csv"), ("m", "omega_beta"), poly.tolist())
        mm, bb = np.meshgrid(ms, wbs, indexing="ij")
        inside = support.contains(mm, bb, wv)
        for i, x in enumerate(s.ex_points):
            try:
                e = ex_grid(x, ms, wbs, wv, geom, quadrature_step=step)
            except QuadratureError as exc:
                raise ConfigError(f"sampling.ex_quadrature: {exc}") from None
            frac = in_set_energy_fraction(e, ms, wbs, wv, support)
            summary.append((i, *x, wv, frac, int(frac >= 0.98)))
            rows = zip(mm.ravel(), bb.ravel(), np.full(mm.size, wv), e.real.ravel(), e.imag.ravel(), inside.ravel().astype(int))
            _write_rows(
                os.path.join(out, f"ex_p{i}_wv{_fmt_wv(wv)}.csv"),
                ("m", "omega_beta", "omega_v", "re", "im", "inside"),
                ([int(a), float(b), float(c), float(d), float(f), int(g)] for a, b, c, d, f, g in rows),
            )
    _write_rows(
        os.path.join(out, "containment.csv"),
        ("point", "x", "y", "z", "omega_v", "in_set_fraction", "pass"),
        summary,
    )
    print(format_table([(f"p{r[0]} wv={r[4]:g}", r[5]) for r in summary], header=("probe", "in-set energy")))


def cmd_scan(cfg, args, out):
    geom = cfg.geom()
    phantom = pipeline.build_phantom(cfg)
    dsg = pipeline.design(cfg, phantom)
    sigma = cfg.sampling.noise_sigma
    std = pipeline.acquire_standard(phantom, geom, dsg, sigma, args.seed)
    write_sinogram(os.path.join(out, "standard.hcbs"), std, matrix=dsg.uniform.matrix)
    n_std = len(std)
    del std
    sp = pipeline.acquire_sparse(phantom, geom, dsg, sigma, args.seed)
    write_sinogram(os.path.join(out, "sparse.hcbs"), sp, matrix=dsg.interlaced.matrix)
    rows = [
        ("standard_samples", n_std),
        ("sparse_samples", len(sp)),
        ("sample_reduction", 1 - len(sp) / n_std),
        ("density_reduction", float(dsg.density_reduction)),
    ]
    write_metrics_csv(os.path.join(out, "scan_report.csv"), rows)
    print(format_table(rows))


def cmd_filter(cfg, args, out):
    dsg = pipeline.design(cfg)
    sp, matrix = read_sinogram(_require(os.path.join(args.out_dir, "sparse.hcbs")))
    if matrix is None or not np.allclose(matrix, dsg.interlaced.matrix, rtol=1e-12, atol=0):
        raise DataError("sparse.hcbs was not sampled on this configuration's interlaced lattice")
    grid, info = pipeline.sparse_to_grid(sp, dsg, cfg.sampling.resample_pad, return_info=True)
    write_sinogram(os.path.join(out, "sparse_filtered.hcbs"), grid, matrix=dsg.uniform.matrix)
    polys = []
    for wv in np.linspace(0, dsg.support.params.Wv, 5):
        for m, wb in dsg.support.cross_section(wv):
            polys.append((float(wv), float(m), float(wb)))
    _write_rows(os.path.join(out, "mask_cross_sections.csv"), ("omega_v", "m", "omega_beta"), polys)
    rows = [
        ("samples", info.n_samples),
        ("fft_bins", info.n_bins),
        ("kept_bins", info.n_kept),
        ("kept_energy_fraction", info.kept_energy_fraction),
        ("group_shape", "x".join(str(d) for d in info.group_shape)),
    ]
    write_metrics_csv(os.path.join(out, "filter_report.csv"), rows)
    print(format_table(rows))


def cmd_recon(cfg, args, out):
    vspec = pipeline.volume_spec(cfg)
    dsg = pipeline.design(cfg)
    axes = dsg.uniform_axes
    for name, src in (("standard", "standard.hcbs"), ("sparse", "sparse_filtered.hcbs")):
        sino, _ = read_sinogram(_require(os.path.join(args.out_dir, src)))
        if not sino.is_grid or tuple(len(a) for a in sino.axes) != tuple(len(a) for a in axes):
            raise DataError(f"{src} does not match the uniform grid of this configuration")
        write_volume(os.path.join(out, f"{name}.hcbv"), pipeline.reconstruct(sino, cfg, vspec))
        del sino
    truth = ground_truth_volume(pipeline.build_phantom(cfg), vspec)
    write_volume(os.path.join(out, "truth.hcbv"), truth)
    print(format_table([("volume_dims", "x".join(map(str, vspec.dims))), ("written", "standard, sparse, truth")]))


def cmd_compare(cfg, args, out):
    vols = {n: read_volume(_require(os.path.join(args.out_dir, f"{n}.hcbv"))) for n in ("standard", "sparse", "truth")}
    dims = {v.dims for v in vols.values()}
    if len(dims) != 1:
        raise DataError(f"volume dimensions differ: {sorted(dims)}")
    rows = []
    for name in ("standard", "sparse"):
        for key, val in pipeline.slice_metrics(vols[name], vols["truth"], cfg.recon.region).items():
            rows.append((f"{name}_{key}", val))
    m = dict(rows)
    rows.append(("mse_rel_diff", (m["sparse_mse_slice"] - m["standard_mse_slice"]) / m["standard_mse_slice"]))
    rows.append(("ssim_diff", m["sparse_ssim_slice"] - m["standard_ssim_slice"]))
    write_metrics_csv(os.path.join(out, "metrics.csv"), rows)
    print(format_table(rows))


COMMANDS = {
    "design": cmd_design,
    "gain-curve": cmd_gain_curve,
    "support": cmd_support,
    "scan": cmd_scan,
    "filter": cmd_filter,
    "recon": cmd_recon,
    "compare": cmd_compare,
}


def _omega_list(text):
    try:
        return tuple(float(s) for s in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def build_parser():
    p = argparse.ArgumentParser(prog="helisparse", description="Sparse sampling for helical cone-beam CT.")
    p.add_argument("command", choices=sorted(COMMANDS))
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="INI configuration file")
    src.add_argument("--preset", choices=PRESETS, help="shipped configuration")
    p.add_argument("--out-dir", default=".", help="directory for inputs and outputs (default: .)")
    p.add_argument("--seed", type=int, default=0, help="noise seed (default: 0)")
    p.add_argument("--omega-v", type=_omega_list, default=None, help="comma-separated omega_v values for 'support'")
    return p


def _threads():
    raw = os.environ.get("HELISPARSE_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"HELISPARSE_THREADS: not an integer: {raw!r}") from None
    if n < 1:
        raise ConfigError("HELISPARSE_THREADS: must be at least 1")
    return n


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            cfg = load_config(args.config)
        else:
            cfg = load_preset(args.preset or "exp2")
        with scipy.fft.set_workers(_threads()), _staged(args.out_dir) as out:
            COMMANDS[args.command](cfg, args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ReconstructionError, ResamplingError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
