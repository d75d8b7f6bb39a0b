"""Command-line front end: design, verify, simulate, sweep, and export.

Frequencies on the command line are in cycles/sample (the band centre f0 and
the test tone ftest); they are converted to radians/sample internally.  The
lowpass band edge is pi/OSR.  Exit codes: 0 success, 1 usage or input error,
2 infeasible design, 3 numerical trouble.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from .design import (
    BandSpec,
    DesignResult,
    DesignSpec,
    ZeroAssignment,
    design,
    load_design,
    save_design,
)
from .lti import (
    FirFilter,
    band_max,
    cascade_error_filter,
    fir_power,
    freq_response,
    hinf_norm,
)
from .metrics import (
    Spectrum,
    snr_pp,
    snr_sweep,
    spectrum,
    summary_lines,
    write_spectrum_csv,
    write_sweep_csv,
)
from .sdp import NUMERICAL_MESSAGE, INFEASIBLE, OPTIMAL
from .sim import UniformQuantizer, simulate_cascade, write_trace_csv
from .stability import build_report, save_report

__all__ = ["RunConfig", "main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_NUMERICAL = 3

_ZERO_TOL = 1e-6
_VERIFY_SLACK = 1e-2


@dataclass
class RunConfig:
    """Resolved run parameters; config-file keys carry these exact names."""

    subcommand: str = ""
    order: int = 32
    osr: int = 32
    hinf: float = 1.5
    f0: float = 0.0
    zeros: bool = False
    multiband: list | None = None
    halfwidth: float | None = None
    cascade: int = 1
    levels: int = 4
    delta: float = 0.5
    length: int = 65536
    amplitude: float = 0.5
    ftest: float | None = None
    amin_db: float = -80.0
    amax_db: float = 0.0
    astep_db: float = 1.0
    outdir: str = "."
    design_file: str | None = None
    seed: int = 0
    plot: bool = False


def _parse_config_value(name: str, raw: str):
    raw = raw.strip()
    if name in ("zeros", "plot"):
        return raw.lower() in ("1", "true", "yes", "on")
    if name == "multiband":
        return [float(tok) for tok in raw.split(",") if tok.strip()]
    if name in ("order", "osr", "cascade", "levels", "length", "seed"):
        return int(raw)
    if name in ("subcommand", "outdir", "design_file"):
        return raw
    return float(raw)


def read_config_file(path: str) -> dict:
    """Flat ``key: value`` lines; keys must be RunConfig field names."""
    known = {f.name for f in fields(RunConfig)}
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key: value'")
            key, raw = line.split(":", 1)
            key = key.strip()
            if key not in known:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            out[key] = _parse_config_value(key, raw)
    return out


def _merge_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, value in read_config_file(args.config).items():
            setattr(cfg, key, value)
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    cfg.subcommand = args.subcommand
    return cfg


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract wants 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _build_parser() -> _Parser:
    parser = _Parser(prog="dsmx", description=__doc__)
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p):
        p.add_argument("--config", help="flat key: value config file")
        p.add_argument("--out", dest="outdir", help="output directory")
        p.add_argument("--seed", type=int, help="recorded in the run summary")
        p.add_argument("--plot", action="store_const", const=True, default=None,
                       help="render figures next to the delimited output")

    def design_flags(p):
        p.add_argument("--order", type=int, help="FIR feedback order N")
        p.add_argument("--osr", type=int, help="oversampling ratio; band edge pi/OSR")
        p.add_argument("--hinf", type=float, help="per-stage H-infinity cap (> 1)")
        p.add_argument("--f0", type=float,
                       help="band centre, cycles/sample in [0, 1/2); 0 = lowpass")
        p.add_argument("--zeros", action="store_const", const=True, default=None,
                       help="pin NTF zeros at the band centres")
        p.add_argument("--multiband", type=_parse_multiband,
                       help="comma-separated band centres, cycles/sample")
        p.add_argument("--halfwidth", type=float,
                       help="half-width for --multiband, cycles/sample")
        p.add_argument("--cascade", type=int, help="number of cascaded stages")

    def quant_flags(p):
        p.add_argument("--levels", type=int, help="quantizer output count (even)")
        p.add_argument("--delta", type=float, help="quantizer half step")
        p.add_argument("--design", dest="design_file", help="design file to load")
        p.add_argument("--cascade", type=int, help="stage count override")

    p = sub.add_parser("design", help="solve for the loop filter and report")
    design_flags(p)
    common(p)

    p = sub.add_parser("simulate", help="run the modulator on a test tone")
    quant_flags(p)
    p.add_argument("--amplitude", type=float, help="tone amplitude")
    p.add_argument("--ftest", type=float, help="tone frequency, cycles/sample")
    p.add_argument("--length", type=int, help="number of samples")
    common(p)

    p = sub.add_parser("sweep", help="SNR versus input amplitude")
    quant_flags(p)
    p.add_argument("--ftest", type=float, help="tone frequency, cycles/sample")
    p.add_argument("--length", type=int, help="samples per sweep point")
    p.add_argument("--amin-db", dest="amin_db", type=float, help="lowest amplitude (dB)")
    p.add_argument("--amax-db", dest="amax_db", type=float, help="highest amplitude (dB)")
    p.add_argument("--astep-db", dest="astep_db", type=float, help="amplitude step (dB)")
    common(p)

    p = sub.add_parser("stability", help="recompute the stability report")
    quant_flags(p)
    common(p)

    p = sub.add_parser("verify", help="re-check a stored design against its bands")
    p.add_argument("--design", dest="design_file", help="design file to load")
    common(p)
    return parser


def _parse_multiband(raw: str) -> list:
    return [float(tok) for tok in raw.split(",") if tok.strip()]


def _atomic_write(path: str, writer) -> None:
    """Write via temp-and-rename so readers never see partial files.

    The extension is kept on the temp name; some writers infer format from it.
    """
    root, ext = os.path.splitext(path)
    tmp = root + ".tmp" + ext
    writer(tmp)
    os.replace(tmp, path)


def _bands_from_config(cfg: RunConfig) -> list:
    if cfg.multiband:
        if cfg.halfwidth is None:
            raise ValueError("--multiband requires --halfwidth")
        hw = 2.0 * math.pi * cfg.halfwidth
        return [BandSpec(2.0 * math.pi * f, hw) for f in cfg.multiband]
    if not (0.0 <= cfg.f0 < 0.5):
        raise ValueError("f0 must lie in [0, 1/2) cycles/sample")
    if cfg.osr < 2:
        raise ValueError("osr must be at least 2")
    hw = math.pi / cfg.osr
    if cfg.f0 == 0.0:
        return [BandSpec(0.0, hw)]
    return [BandSpec(2.0 * math.pi * cfg.f0, hw)]


def _zeros_from_config(cfg: RunConfig, bands) -> list:
    if not cfg.zeros:
        return []
    return [ZeroAssignment(b.center) for b in bands]


def _design_path(cfg: RunConfig) -> str:
    if cfg.design_file:
        return cfg.design_file
    return os.path.join(cfg.outdir, "design.txt")


def _load_design_or_fail(cfg: RunConfig):
    path = _design_path(cfg)
    if not os.path.exists(path):
        raise ValueError(f"design file not found: {path}")
    result, extra = load_design(path)
    if result.r is None:
        raise ValueError(f"design file {path} holds no usable coefficients")
    return result, extra


def _effective_m(cfg: RunConfig, args_cascade, extra: dict) -> int:
    if args_cascade is not None:
        return args_cascade
    if "cascade" in extra:
        return int(float(extra["cascade"]))
    return 1


def _resolve_ftest(cfg: RunConfig, result: DesignResult) -> float:
    """Cycles/sample; default is the first band centre, or half the lowpass
    band edge for a lowpass design."""
    if cfg.ftest is not None:
        if not (0.0 <= cfg.ftest < 0.5):
            raise ValueError("ftest must lie in [0, 1/2) cycles/sample")
        return 2.0 * math.pi * cfg.ftest
    band = result.bands[0].band
    if band.lowpass:
        return 0.5 * band.halfwidth
    return band.center


def _measure_band(result: DesignResult, omega_tone: float):
    for rep in result.bands:
        lo, hi = rep.band.interval()
        if lo <= omega_tone <= hi:
            return (lo, hi)
    return result.bands[0].band.interval()


def _ntf_response_spectrum(ntf_eff: FirFilter) -> Spectrum:
    omega = np.linspace(0.0, math.pi, 4097)
    mag = np.abs(freq_response(ntf_eff, omega))
    return Spectrum(omega=omega, magnitude=mag, window="none", length=omega.size)


def _write_stability(cfg: RunConfig, result: DesignResult, m: int) -> None:
    q = UniformQuantizer(cfg.delta, cfg.levels).spec
    r_eff = cascade_error_filter(result.r, m)
    report = build_report(FirFilter([1.0]), r_eff, q)
    _atomic_write(
        os.path.join(cfg.outdir, "stability.txt"),
        lambda p: save_report(report, q, p),
    )


def cmd_design(cfg: RunConfig) -> int:
    bands = _bands_from_config(cfg)
    zeros = _zeros_from_config(cfg, bands)
    cap = cfg.hinf if cfg.hinf and cfg.hinf > 0 else None
    spec = DesignSpec(order=cfg.order, bands=bands, hinf_cap=cap, zeros=zeros)
    result = design(spec)
    if result.status == INFEASIBLE:
        print(f"design infeasible: {result.message}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if result.status != OPTIMAL:
        print(f"{NUMERICAL_MESSAGE}: {result.message}", file=sys.stderr)
        return EXIT_NUMERICAL
    os.makedirs(cfg.outdir, exist_ok=True)
    extra = {
        "cascade": str(cfg.cascade),
        "seed": str(cfg.seed),
        "levels": str(cfg.levels),
        "delta": repr(cfg.delta),
    }
    _atomic_write(
        os.path.join(cfg.outdir, "design.txt"),
        lambda p: save_design(result, p, extra=extra),
    )
    ntf_eff = fir_power(result.ntf, cfg.cascade)
    spec_resp = _ntf_response_spectrum(ntf_eff)
    _atomic_write(
        os.path.join(cfg.outdir, "ntf_response.csv"),
        lambda p: write_spectrum_csv(spec_resp, p),
    )
    _write_stability(cfg, result, cfg.cascade)
    if cfg.plot:
        from .report import plot_ntf

        _atomic_write(
            os.path.join(cfg.outdir, "ntf_response.png"),
            lambda p: plot_ntf(
                ntf_eff,
                p,
                bands=[rep.band for rep in result.bands],
                gamma=result.gamma**cfg.cascade,
            ),
        )
    gamma_db = 20.0 * math.log10(result.gamma)
    print(f"status: {result.status}")
    print(f"gamma: {result.gamma:.8f} ({gamma_db:.3f} dB per stage)")
    if cfg.cascade > 1:
        print(f"cascaded in-band max: {cfg.cascade * gamma_db:.3f} dB")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, args_cascade) -> int:
    result, extra = _load_design_or_fail(cfg)
    if cfg.length < 16:
        raise ValueError("length must be at least 16 samples")
    m = _effective_m(cfg, args_cascade, extra)
    q = UniformQuantizer(cfg.delta, cfg.levels)
    omega_tone = _resolve_ftest(cfg, result)
    k = np.arange(cfg.length)
    u = cfg.amplitude * np.sin(omega_tone * k)
    trace = simulate_cascade(FirFilter([1.0]), result.r, m, q, u)
    band = _measure_band(result, omega_tone)
    value_pp = snr_pp(trace, u, band)
    ntf_eff = fir_power(result.ntf, m)
    max_ntf_db = 20.0 * math.log10(band_max(ntf_eff, band))
    os.makedirs(cfg.outdir, exist_ok=True)
    _atomic_write(
        os.path.join(cfg.outdir, "trace.csv"),
        lambda p: write_trace_csv(trace, p),
    )
    spec_y = spectrum(trace.y)
    _atomic_write(
        os.path.join(cfg.outdir, "spectrum.csv"),
        lambda p: write_spectrum_csv(spec_y, p),
    )
    lines = summary_lines(ntf_max_db=max_ntf_db, snr_pp_db=value_pp)
    lines.append(f"overloads: {int(trace.overload.sum())}")
    lines.append(f"seed: {cfg.seed}")
    _atomic_write(
        os.path.join(cfg.outdir, "summary.txt"),
        lambda p: _write_lines(p, lines),
    )
    if cfg.plot:
        from .report import plot_spectrum

        _atomic_write(
            os.path.join(cfg.outdir, "spectrum.png"),
            lambda p: plot_spectrum(spec_y, p, band=band),
        )
    for line in lines:
        print(line)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args_cascade) -> int:
    result, extra = _load_design_or_fail(cfg)
    if cfg.length < 16:
        raise ValueError("length must be at least 16 samples")
    if cfg.astep_db <= 0 or cfg.amax_db < cfg.amin_db:
        raise ValueError("amplitude grid must be increasing with positive step")
    m = _effective_m(cfg, args_cascade, extra)
    q = UniformQuantizer(cfg.delta, cfg.levels)
    omega_tone = _resolve_ftest(cfg, result)
    n_steps = int(round((cfg.amax_db - cfg.amin_db) / cfg.astep_db))
    amps_db = cfg.amin_db + cfg.astep_db * np.arange(n_steps + 1)
    amps = 10.0 ** (amps_db / 20.0)
    sweep = snr_sweep(result, q, amps, omega_tone, cfg.length, m=m)
    os.makedirs(cfg.outdir, exist_ok=True)
    _atomic_write(
        os.path.join(cfg.outdir, "sweep.csv"),
        lambda p: write_sweep_csv(sweep, p),
    )
    ntf_eff = fir_power(result.ntf, m)
    band = _measure_band(result, omega_tone)
    max_ntf_db = 20.0 * math.log10(band_max(ntf_eff, band))
    lines = summary_lines(ntf_max_db=max_ntf_db, peak_snr_db=sweep.peak_snr_db)
    lines.append(f"peak_amplitude: {sweep.peak_amplitude:.6g}")
    lines.append(f"stability_bound: {sweep.stability_bound:.6g}")
    lines.append(f"seed: {cfg.seed}")
    _atomic_write(
        os.path.join(cfg.outdir, "summary.txt"),
        lambda p: _write_lines(p, lines),
    )
    if cfg.plot:
        from .report import plot_sweep

        _atomic_write(
            os.path.join(cfg.outdir, "sweep.png"),
            lambda p: plot_sweep(sweep, p),
        )
    for line in lines:
        print(line)
    return EXIT_OK


def cmd_stability(cfg: RunConfig, args_cascade) -> int:
    result, extra = _load_design_or_fail(cfg)
    m = _effective_m(cfg, args_cascade, extra)
    os.makedirs(cfg.outdir, exist_ok=True)
    _write_stability(cfg, result, m)
    print(f"stability report written for {m} stage(s)")
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    result, extra = _load_design_or_fail(cfg)
    ok = True
    for i, rep in enumerate(result.bands):
        achieved = band_max(result.ntf, rep.band.interval())
        good = achieved <= rep.gamma * (1.0 + _VERIFY_SLACK)
        ok = ok and good
        print(f"{'ok' if good else 'FAIL'} band {i}: grid max {achieved:.8g} vs gamma {rep.gamma:.8g}")
    for i, z in enumerate(result.zeros):
        mag = abs(freq_response(result.ntf, z.frequency))
        good = mag < _ZERO_TOL
        ok = ok and good
        print(f"{'ok' if good else 'FAIL'} zero {i}: |T| = {mag:.3g} at {z.frequency:.6g}")
    if result.hinf_cap is not None:
        peak = hinf_norm(result.ntf)
        good = peak <= result.hinf_cap * (1.0 + _VERIFY_SLACK)
        ok = ok and good
        print(f"{'ok' if good else 'FAIL'} cap: peak {peak:.8g} vs {result.hinf_cap:.8g}")
    return EXIT_OK if ok else EXIT_USAGE


def _write_lines(path: str, lines) -> None:
    with open(path, "w") as fh:
        for line in lines:
            fh.write(line + "\n")


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = _merge_config(args)
        if cfg.subcommand == "design":
            return cmd_design(cfg)
        if cfg.subcommand == "simulate":
            return cmd_simulate(cfg, getattr(args, "cascade", None))
        if cfg.subcommand == "sweep":
            return cmd_sweep(cfg, getattr(args, "cascade", None))
        if cfg.subcommand == "stability":
            return cmd_stability(cfg, getattr(args, "cascade", None))
        if cfg.subcommand == "verify":
            return cmd_verify(cfg)
        raise ValueError(f"unknown subcommand {cfg.subcommand!r}")
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"{NUMERICAL_MESSAGE}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
