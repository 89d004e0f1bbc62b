"""Command-line front end: ``smi simulate|sweep|replicate-study|report --config <path>``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from smi import svg
from smi.config import RNG_NAME, RunConfig, load_config
from smi.errors import ConfigError, ContractError, DataValidationError, SelectionError, SmiError
from smi.eval import ClosedFormSampler, EtaSweepTable, ExactElpdScorer, WaicScorer, eta_sweep, select_eta
from smi.gaussian import GaussianSuffStats, gaussian_data, gaussian_model, simulate_dataset
from smi.study import StudyConfig, StudyReport, replicate_study
from smi.zoo import HpvData, custom_model, hpv_model, hpv_simulate

logger = logging.getLogger("smi")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_ALL_FAILED = 0, 1, 2, 3


class AllRowsFailed(SmiError):
    pass


def _write_json(path: Path, doc: dict) -> Path:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "effective_config.json", cfg.effective())
    except OSError as exc:
        raise OSError(f"cannot write to output directory {out}: {exc.strerror or exc}") from None
    return out


def write_values(path: Path, values) -> Path:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["value"])
        writer.writerows([repr(float(v))] for v in values)
    return path


def read_values(path: Path) -> np.ndarray:
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["value"]:
            raise DataValidationError(f"{path}: expected a single 'value' header column")
        try:
            values = np.array([float(row[0]) for row in reader if row])
        except (ValueError, IndexError) as exc:
            raise DataValidationError(f"{path}: {exc}") from None
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise DataValidationError(f"{path}: need at least one finite value")
    return values


def _gaussian_vectors(cfg: RunConfig):
    if "simulate" in cfg.data:
        sim = cfg.data["simulate"]
        z, y, _ = simulate_dataset(cfg.gaussian_truth(), cfg.gaussian_hyper(), int(sim.get("n", 25)),
                                   int(sim.get("m", 50)), cfg.seed)
        return z, y
    return read_values(cfg.path("z_csv")), read_values(cfg.path("y_csv"))


def _hpv_data(cfg: RunConfig) -> HpvData:
    if "simulate" in cfg.data:
        sim = cfg.data["simulate"]
        if "T" not in sim or "N" not in sim:
            raise ConfigError("hpv simulate spec needs T and N lists")
        return hpv_simulate(cfg.hpv_truth(), sim["T"], sim["N"], cfg.seed)
    return HpvData.from_csv(cfg.path("csv"))


def cmd_simulate(cfg: RunConfig) -> dict:
    if cfg.model == "custom" or "simulate" not in cfg.data:
        raise ConfigError("simulate needs a [data] simulate spec for a built-in model")
    out = _prepare_out(cfg)
    manifest = {"command": "simulate", "model": cfg.model, "seed": cfg.seed, "rng": RNG_NAME}
    if cfg.model == "gaussian-biased":
        z, y = _gaussian_vectors(cfg)
        files = [write_values(out / "z.csv", z), write_values(out / "y.csv", y)]
        stats = GaussianSuffStats.from_data(z, y)
        manifest.update(truth=cfg.effective()["truth"], hyper=cfg.effective()["hyper"],
                        n=stats.n, m=stats.m, z_bar=stats.z_bar, y_bar=stats.y_bar)
    else:
        files = [_hpv_data(cfg).to_csv(out / "hpv.csv")]
        manifest.update(truth=cfg.truth, hyper=cfg.effective()["hyper"])
    manifest["files"] = [f.name for f in files]
    _write_json(out / "manifest.json", manifest)
    return manifest


def _sweep_inputs(cfg: RunConfig):
    if cfg.model == "gaussian-biased":
        hyper = cfg.gaussian_hyper()
        z, y = _gaussian_vectors(cfg)
        stats = GaussianSuffStats.from_data(z, y)
        model, data = gaussian_model(hyper), gaussian_data(z, y)
        sampler = None
        if cfg.scorer.sampler == "closed-form":
            sampler = ClosedFormSampler(stats, hyper, cfg.scorer.n_draws, cfg.seed)
        if cfg.scorer.kind == "exact":
            scorer = ExactElpdScorer(stats, hyper, cfg.gaussian_truth(), cfg.scorer.n_mc, cfg.seed)
        else:
            scorer = WaicScorer(cfg.scorer.target)
        return model, data, scorer, sampler
    if cfg.model == "hpv":
        hpv = _hpv_data(cfg)
        model, data = hpv_model(hpv, cfg.hpv_prior()), hpv.module_data()
    else:
        model, data = custom_model(cfg.custom["factory"], dict(cfg.custom.get("options", {})))
    return model, data, WaicScorer(cfg.scorer.target), None


def render_sweep(table: EtaSweepTable, out: Path, smoothing=None, window=3) -> dict:
    eta_star, curve = select_eta(table, smoothing, window)
    ok = np.array([r.ok for r in table.rows])
    etas = table.etas[ok]
    series = {"-elpd": -table.elpd[ok]}
    if smoothing:
        series["-elpd (smoothed)"] = -curve
    content = svg.line_plot(etas, series, "Estimated -elpd across eta", "eta", "-elpd",
                            band={"-elpd": table.se[ok]}, marker=eta_star)
    svg.write_svg(out / "sweep.svg", content)
    selection = {"eta_star": eta_star, "smoothing": smoothing or "none", "window": window,
                 "failed_rows": int((~ok).sum())}
    _write_json(out / "selection.json", selection)
    return selection


def cmd_sweep(cfg: RunConfig) -> dict:
    out = _prepare_out(cfg)
    model, data, scorer, sampler = _sweep_inputs(cfg)
    table = eta_sweep(model, data, cfg.grid, cfg.chain, scorer, sampler=sampler, workers=cfg.threads)
    table.to_csv(out / "sweep.csv")
    if not any(r.ok for r in table.rows):
        raise AllRowsFailed("every eta row failed; see the status column of sweep.csv")
    selection = render_sweep(table, out, cfg.smoothing, cfg.window)
    _write_json(out / "manifest.json", {"command": "sweep", "model": cfg.model, "seed": cfg.seed, "rng": RNG_NAME,
                                        "files": ["sweep.csv", "sweep.svg", "selection.json"], **selection})
    return selection


def study_config(cfg: RunConfig) -> StudyConfig:
    if cfg.model != "gaussian-biased":
        raise ConfigError("replicate-study runs the closed-form gaussian-biased model only")
    sim = cfg.data.get("simulate")
    if sim is None:
        raise ConfigError("replicate-study needs a [data] simulate spec")
    return StudyConfig(hyper=cfg.gaussian_hyper(), truth=cfg.gaussian_truth(), n=int(sim.get("n", 25)),
                       m=int(sim.get("m", 50)), grid=tuple(cfg.grid), replicates=cfg.replicates,
                       n_mc=cfg.scorer.n_mc, seed=cfg.seed, smoothing=cfg.smoothing, window=cfg.window)


def render_study(report: StudyReport, out: Path) -> list:
    good = report.good
    mse = report.mse
    plots = {
        "study_neg_elpd.svg": svg.line_plot(report.etas, {"average -elpd": report.mean_neg_elpd},
                                            "Average -elpd across replicates", "eta", "-elpd"),
        "study_mse.svg": svg.line_plot(report.etas, {"MSE phi": mse[:, 0], "MSE theta": mse[:, 1],
                                                     "MSE theta_tilde": mse[:, 2]},
                                       "Average posterior squared error", "eta", "MSE"),
        "eta_star_hist.svg": svg.histogram(report.eta_star, "Selected eta* across replicates", "eta*",
                                           bins=np.linspace(-0.025, 1.025, 22)),
        "se_diff_smi_cut.svg": svg.histogram([r.se_phi_star - r.se_phi_cut for r in good],
                                             "SE(phi) at eta* minus SE(phi) of cut", "difference"),
        "se_diff_cut_bayes.svg": svg.histogram([r.se_phi_cut - r.se_phi_bayes for r in good],
                                               "SE(phi) of cut minus SE(phi) of full Bayes", "difference"),
    }
    for name, content in plots.items():
        svg.write_svg(out / name, content)
    return sorted(plots)


def cmd_replicate_study(cfg: RunConfig) -> dict:
    study = study_config(cfg)
    out = _prepare_out(cfg)
    report = replicate_study(study, workers=cfg.threads)
    paths = report.write(out)
    plots = render_study(report, out)
    files = sorted(p.name for p in paths.values()) + plots
    _write_json(out / "manifest.json", {"command": "replicate-study", "seed": cfg.seed, "rng": RNG_NAME,
                                        "files": files})
    return report.summary()


def cmd_report(cfg: RunConfig) -> dict:
    """Re-render plots and summaries from CSV outputs already present in the output directory."""
    out = Path(cfg.out)
    found = {}
    if (out / "sweep.csv").is_file():
        found["sweep"] = render_sweep(EtaSweepTable.from_csv(out / "sweep.csv"), out, cfg.smoothing, cfg.window)
    if (out / "replicates.csv").is_file():
        report = StudyReport.load(out)
        report.write(out)
        render_study(report, out)
        found["study"] = report.summary()
    if not found:
        raise ConfigError(f"no sweep.csv or replicates.csv found in {out}")
    return found


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "replicate-study": cmd_replicate_study,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smi", description="Semi-modular inference experiments.")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="TOML run configuration")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("--seed", type=int, help="master seed, unsigned 64-bit (overrides the config)")
    parser.add_argument("--threads", type=int, help="worker threads (overrides the config)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out, threads=args.threads)
        result = COMMANDS[args.command](cfg)
    except AllRowsFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ALL_FAILED
    except (ConfigError, DataValidationError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SmiError, SelectionError, OSError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
