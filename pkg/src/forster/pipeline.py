"""Orchestration behind the CLI subcommands: compute, write tables, return summaries."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig
from .detection import DetectionChain, extract_params, interaction_histogram, observed_signals
from .io import read_spectrum, write_columns, write_metadata, write_spectrum, write_table
from .lineshape import LineshapeError, baseline, detuning_to_field, field_to_detuning, fwhm, lorentz_fit, peak_amplitude
from .montecarlo import Spectrum, simulate_spectrum

log = logging.getLogger(__name__)

FIG2_ATOMS = (2, 3, 4, 5)


@dataclass
class RunResult:
    command: str
    out: Path
    files: list[Path] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def add(self, path: Path) -> Path:
        self.files.append(Path(path))
        return path

    def finish(self, cfg: RunConfig) -> "RunResult":
        meta = {
            "artifact": "forster",
            "version": __version__,
            "command": self.command,
            "config": cfg.as_dict(),
            "files": sorted(p.name for p in self.files),
            "summary": self.summary,
        }
        write_metadata(self.out / f"{self.command}.meta.json", meta)
        return self


def _ext(cfg: RunConfig) -> str:
    return cfg.format


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def compute_rho(cfg: RunConfig, atom_counts) -> dict[int, Spectrum]:
    return {i: simulate_spectrum(cfg.request(i), workers=cfg.workers) for i in atom_counts}


def load_rho(directory, atom_counts, fmt: str = "csv") -> dict[int, Spectrum]:
    directory = Path(directory)
    rho = {}
    for i in atom_counts:
        path = directory / f"rho_{i}.{fmt}"
        if not path.exists():
            raise ConfigError(f"input: missing {path}")
        rho[i] = read_spectrum(path, meta={"kind": "rho", "i": i, "source": str(path)})
    grids = [s.detunings for s in rho.values()]
    if any(g.shape != grids[0].shape or not np.array_equal(g, grids[0]) for g in grids):
        raise ConfigError(f"input: spectra in {directory} do not share one detuning grid")
    return rho


def obtain_rho(cfg: RunConfig, atom_counts) -> dict[int, Spectrum]:
    if cfg.input is not None:
        return load_rho(cfg.input, atom_counts, cfg.format)
    return compute_rho(cfg, atom_counts)


def _safe(metric, spec) -> float:
    try:
        return metric(spec)
    except LineshapeError:
        return float("nan")


def write_rho(result: RunResult, cfg: RunConfig, rho: dict[int, Spectrum]) -> None:
    ext = _ext(cfg)
    for i, spec in rho.items():
        result.add(write_spectrum(result.out / f"rho_{i}.{ext}", spec, "rho", fmt=ext))
    grid = next(iter(rho.values())).detunings
    columns = {"detuning_mhz": grid}
    for i, spec in rho.items():
        columns[f"rho_{i}"] = spec.values
        columns[f"stderr_{i}"] = spec.stderr
    result.add(write_columns(result.out / f"spectra.{ext}", columns, ext))


def cmd_spectrum(cfg: RunConfig) -> RunResult:
    result = RunResult("spectrum", _outdir(cfg))
    rho = compute_rho(cfg, cfg.i)
    write_rho(result, cfg, rho)
    result.summary = {
        f"rho_{i}": {"rho0": s.value_at(0.0)[0], "stderr0": s.value_at(0.0)[1], "fwhm_mhz": _safe(fwhm, s)}
        for i, s in rho.items()
    }
    return result.finish(cfg)


def histogram_rows(chain: DetectionChain):
    ks = list(range(2, chain.i_max + 1))
    header = ["n_detected", "none"] + [f"k{k}" for k in ks] + ["tail", "k2_resonant_share"]
    rows = []
    for N in range(1, chain.i_max + 1):
        h = interaction_histogram(chain, N)
        rows.append([N, h.weights["none"], *(h.weights[k] for k in ks), h.tail_mass, h.resonant_share(2)])
    return header, rows


def cmd_histogram(cfg: RunConfig) -> RunResult:
    result = RunResult("histogram", _outdir(cfg))
    header, rows = histogram_rows(cfg.chain)
    result.add(write_table(result.out / f"histogram.{_ext(cfg)}", header, rows, _ext(cfg)))
    result.summary = {"k2_resonant_share": {int(r[0]): r[-1] for r in rows}}
    return result.finish(cfg)


def _detect_into(result: RunResult, cfg: RunConfig, rho: dict[int, Spectrum]) -> dict[int, Spectrum]:
    ext = _ext(cfg)
    chain = cfg.chain
    signals = observed_signals(rho, chain)
    for N, s in signals.items():
        result.add(write_spectrum(result.out / f"s_{N}.{ext}", s, "s_n", with_stderr=False, fmt=ext))
    rows = []
    for N, s in signals.items():
        width = _safe(fwhm, s)
        rows.append([N, peak_amplitude(s), width, 1000.0 * width / abs(cfg.slope), s.meta["tail_mass"]])
    result.add(
        write_table(result.out / f"summary.{ext}", ["n_detected", "amplitude", "fwhm_mhz", "fwhm_mvcm", "tail_mass"], rows, ext)
    )
    header, hrows = histogram_rows(chain)
    result.add(write_table(result.out / f"histogram.{ext}", header, hrows, ext))
    result.summary.update(
        {
            "amplitude": {int(r[0]): r[1] for r in rows},
            "fwhm_mhz": {int(r[0]): r[2] for r in rows},
            "tail_mass": {int(r[0]): r[4] for r in rows},
            "k2_resonant_share": {int(r[0]): r[-1] for r in hrows},
        }
    )
    return signals


def cmd_detect(cfg: RunConfig) -> RunResult:
    result = RunResult("detect", _outdir(cfg))
    rho = obtain_rho(cfg, range(2, cfg.imax + 1))
    _detect_into(result, cfg, rho)
    return result.finish(cfg)


def field_scan(signals: dict[int, Spectrum], cfg: RunConfig) -> dict[int, Spectrum]:
    """Resample S_N onto the electric-field grid through the linear Stark map."""
    fields_vcm = cfg.fields_vcm
    deltas = field_to_detuning(fields_vcm, cfg.stark)
    out = {}
    for N, s in signals.items():
        lo, hi = s.detunings[0], s.detunings[-1]
        if deltas.min() < lo - 1e-9 or deltas.max() > hi + 1e-9:
            raise ConfigError(f"field_max: field grid maps to detunings beyond [{lo}, {hi}] MHz")
        values = np.interp(deltas, s.detunings, s.values)
        stderr = np.interp(deltas, s.detunings, s.stderr)
        out[N] = Spectrum(fields_vcm, values, stderr, meta={"kind": "s_n_field", "N": N})
    return out


def _fieldscan_into(result: RunResult, cfg: RunConfig, signals: dict[int, Spectrum]) -> None:
    ext = _ext(cfg)
    scans = field_scan(signals, cfg)
    rows = []
    for N, s in scans.items():
        result.add(write_columns(result.out / f"fieldscan_s_{N}.{ext}", {"field_vcm": s.detunings, "s_n": s.values}, ext))
        width = _safe(fwhm, s)
        rows.append([N, float(s.detunings[int(np.argmax(s.values))]), 1000.0 * width, peak_amplitude(s)])
    result.add(
        write_table(result.out / f"fieldscan_summary.{ext}", ["n_detected", "peak_field_vcm", "fwhm_mvcm", "amplitude"], rows, ext)
    )
    result.summary.update(
        {"peak_field_vcm": {int(r[0]): r[1] for r in rows}, "fwhm_mvcm": {int(r[0]): r[2] for r in rows}}
    )


def _load_signals(directory: Path, cfg: RunConfig) -> dict[int, Spectrum] | None:
    paths = {N: directory / f"s_{N}.{cfg.format}" for N in range(1, cfg.imax + 1)}
    if not all(p.exists() for p in paths.values()):
        return None
    return {N: read_spectrum(p, meta={"kind": "s_n", "N": N}) for N, p in paths.items()}


def cmd_fieldscan(cfg: RunConfig) -> RunResult:
    result = RunResult("fieldscan", _outdir(cfg))
    signals = _load_signals(Path(cfg.input), cfg) if cfg.input is not None else None
    if signals is None:
        signals = observed_signals(obtain_rho(cfg, range(2, cfg.imax + 1)), cfg.chain)
    _fieldscan_into(result, cfg, signals)
    return result.finish(cfg)


def lineshape_report(spec: Spectrum) -> tuple[dict, object]:
    fit = lorentz_fit(spec)
    held = lorentz_fit(spec, offset=baseline(spec.values))
    return {
        "fwhm_mhz": fwhm(spec),
        "amplitude": peak_amplitude(spec),
        "lorentz_amplitude": fit.amplitude,
        "lorentz_gamma_mhz": fit.gamma,
        "lorentz_center_mhz": fit.center,
        "lorentz_offset": fit.offset,
        "lorentz_sse": fit.sse,
        "wing_residual_3gamma": fit.wing_residual(spec.detunings, 3.0),
        "held_offset_gamma_mhz": held.gamma,
        "held_offset_wing_residual_3gamma": held.wing_residual(spec.detunings, 3.0),
    }, fit


def _write_fit(result: RunResult, cfg: RunConfig, name: str, spec: Spectrum, fit) -> None:
    ext = _ext(cfg)
    result.add(
        write_columns(
            result.out / f"{name}.{ext}",
            {"detuning_mhz": spec.detunings, "data": spec.values, "lorentz": fit(spec.detunings), "residual": fit.residuals},
            ext,
        )
    )


def cmd_lineshape(cfg: RunConfig) -> RunResult:
    if cfg.input is None or not Path(cfg.input).is_file():
        raise ConfigError("input: lineshape needs --input pointing to a spectrum table")
    result = RunResult("lineshape", _outdir(cfg))
    spec = read_spectrum(cfg.input)
    report, fit = lineshape_report(spec)
    _write_fit(result, cfg, f"lorentz_{Path(cfg.input).stem}", spec, fit)
    result.summary = report
    return result.finish(cfg)


def cmd_calibrate(alpha: float, n_bar_T: float) -> str:
    n_bar, T = extract_params(alpha, n_bar_T)
    return (
        f"alpha = {alpha:g}, mean detected count = {n_bar_T:g}\n"
        f"mean excited count n_bar = {n_bar:.4f}\n"
        f"detection efficiency T = {T:.4f}\n"
    )


def _fig2(result: RunResult, cfg: RunConfig) -> dict[int, Spectrum]:
    rho = obtain_rho(cfg, FIG2_ATOMS)
    write_rho(result, cfg, rho)
    rows = []
    for i, s in rho.items():
        rho0, se0 = s.value_at(0.0)
        rows.append([i, rho0, se0, peak_amplitude(s), _safe(fwhm, s)])
    result.add(write_table(result.out / f"fig2_summary.{_ext(cfg)}", ["i", "rho0", "stderr0", "amplitude", "fwhm_mhz"], rows, _ext(cfg)))
    report, fit = lineshape_report(rho[2])
    _write_fit(result, cfg, "lorentz_rho_2", rho[2], fit)
    result.summary.update(
        {
            "rho0": {int(r[0]): r[1] for r in rows},
            "stderr0": {int(r[0]): r[2] for r in rows},
            "fwhm_rho_mhz": {int(r[0]): r[4] for r in rows},
            "lorentz_rho_2": report,
        }
    )
    return rho


def reproduce_fig2(cfg: RunConfig) -> RunResult:
    result = RunResult("reproduce-fig2", _outdir(cfg))
    _fig2(result, replace(cfg, i=FIG2_ATOMS))
    return result.finish(cfg)


def reproduce_fig3(cfg: RunConfig) -> RunResult:
    result = RunResult("reproduce-fig3", _outdir(cfg))
    rho = _fig2(result, replace(cfg, i=FIG2_ATOMS))
    rho.update(obtain_rho(cfg, [i for i in range(2, cfg.imax + 1) if i not in rho]))
    signals = _detect_into(result, cfg, rho)
    _fieldscan_into(result, cfg, signals)
    return result.finish(cfg)
