"""Command-line interface.

Subcommands:
  simulate  --config PATH --out DIR [--workers N]
  infer     --model {reg,reg-split,pca} --data PATH --loading PATH
            --ranks r1,r2,r3 [--alpha A] [--sigma S] [--init PATH]
  diagnose  --tensor PATH --ranks r1,r2,r3 --loading PATH --regime R

Exit codes: 0 success, 2 config or file error, 3 experiment failure-rate
breach, 4 degenerate alignment. The environment variable TENSOR_INFER_SEED
overrides the seed from config files.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import read_tnsr
from .errors import (
    AlignmentDegenerateError,
    ConfigError,
    ExperimentFailure,
    ShapeError,
)
from .factorize import hosvd, spectral_summary
from .manifold import ALIGNMENT_REGIMES, alignment_check, incoherence_ratio, variance_component
from .montecarlo import (
    ExperimentConfig,
    SimulationReport,
    histogram_csv_lines,
    report_csv_lines,
    run_experiment,
    summary_lines,
    write_histogram_plot,
)
from .pca import PcaObservation, infer_pca, snr_check
from .regression import infer_no_split, infer_split, naive_init, read_treg

_CONFIG_KEYS = {
    "model": str,
    "p1": int,
    "p2": int,
    "p3": int,
    "p": int,
    "r1": int,
    "r2": int,
    "r3": int,
    "r": int,
    "loading": str,
    "signal": str,
    "grid": str,
    "kappa": float,
    "lambda_lo": float,
    "coherent": str,
    "reps": int,
    "alpha": float,
    "seed": int,
    "xi_scale": float,
    "init_mode": str,
}


def parse_config(path) -> dict[str, str]:
    """Flat key=value file; '#' starts a comment, blank lines ignored."""
    mapping = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in mapping:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        mapping[key] = value
    return mapping


def _parse_bool(value: str) -> bool:
    if value.lower() in ("true", "1", "yes"):
        return True
    if value.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {value!r}")


def _triple(mapping, base: str, default=None) -> tuple[int, int, int]:
    if base in mapping:
        v = int(mapping[base])
        return (v, v, v)
    keys = [f"{base}{i}" for i in (1, 2, 3)]
    if all(k in mapping for k in keys):
        return tuple(int(mapping[k]) for k in keys)
    if default is not None:
        return default
    raise ConfigError(f"config must set {base} or {', '.join(keys)}")


def experiment_from_mapping(mapping: dict[str, str]) -> ExperimentConfig:
    unknown = sorted(set(mapping) - set(_CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for required in ("model", "loading", "grid", "reps"):
        if required not in mapping:
            raise ConfigError(f"config is missing required key {required!r}")
    try:
        grid = tuple(float(v) for v in mapping["grid"].split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad grid: {exc}") from None
    seed = int(mapping.get("seed", 0))
    env_seed = os.environ.get("TENSOR_INFER_SEED")
    if env_seed is not None:
        seed = int(env_seed)
    try:
        return ExperimentConfig(
            model=mapping["model"],
            dims=_triple(mapping, "p"),
            ranks=_triple(mapping, "r"),
            loading=mapping["loading"],
            grid=grid,
            signal=mapping.get("signal", "tucker"),
            kappa=float(mapping.get("kappa", 1.0)),
            lambda_lo=float(mapping.get("lambda_lo", 1.0)),
            coherent=_parse_bool(mapping.get("coherent", "false")),
            reps=int(mapping["reps"]),
            alpha=float(mapping.get("alpha", 0.05)),
            seed=seed,
            xi_scale=float(mapping.get("xi_scale", 1.0)),
            init_mode=mapping.get("init_mode", "oracle-spiked"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def manifest_line(payload: dict, seed: int) -> str:
    canon = "\n".join(f"{k}={payload[k]}" for k in sorted(payload))
    digest = hashlib.sha256(canon.encode()).hexdigest()[:16]
    return f"manifest=sha256:{digest};seed:{seed};version:{__version__}"


def _write_report_files(report: SimulationReport, out: Path, index: int, manifest: str) -> None:
    (out / f"report_{index}.csv").write_text("\n".join(report_csv_lines(report)) + "\n")
    lines = [manifest] + summary_lines(report)
    (out / f"summary_{index}.txt").write_text("\n".join(lines) + "\n")
    (out / f"hist_{index}.csv").write_text("\n".join(histogram_csv_lines(report)) + "\n")
    write_histogram_plot(report, out / f"hist_{index}.svg")


def cmd_simulate(args) -> int:
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    mapping = parse_config(args.config)
    cfg = experiment_from_mapping(mapping)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = manifest_line(mapping, cfg.seed)
    print(manifest)
    try:
        reports = run_experiment(cfg, workers=args.workers)
        status = 0
    except ExperimentFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        reports = exc.reports or []
        status = 3
    for i, report in enumerate(reports):
        _write_report_files(report, out, i, manifest)
        for line in summary_lines(report):
            print(line)
    return status


def _parse_ranks(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ConfigError(f"ranks must be r1,r2,r3, got {text!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad ranks: {exc}") from None


def _print_result(res, manifest: str) -> None:
    print(manifest)
    pairs = [
        ("model", res.model),
        ("estimate", _fmt(res.estimate)),
        ("ci_lo", _fmt(res.ci[0])),
        ("ci_hi", _fmt(res.ci[1])),
        ("s_A_hat", _fmt(res.s_a_hat)),
        ("sigma_hat", _fmt(res.sigma_hat)),
        ("sigma_xi_hat", _fmt(res.sigma_xi_hat)),
        ("z", _fmt(res.z)),
        ("alpha", _fmt(res.alpha)),
        ("n", res.n),
    ]
    for k, v in pairs:
        print(f"{k}={v}")
    align = res.diagnostics.get("alignment")
    if align is not None:
        print(f"alignment={'pass' if align.passed else 'fail'}")
        print(f"alignment_ratio={_fmt(align.ratio)}")
    inc = res.diagnostics.get("incoherence")
    if inc is not None:
        for j, r in enumerate(inc, start=1):
            print(f"incoherence_{j}={_fmt(r)}")


def cmd_infer(args) -> int:
    ranks = _parse_ranks(args.ranks)
    a = read_tnsr(args.loading)
    sigma2 = args.sigma**2 if args.sigma is not None else None
    manifest = manifest_line(
        {k: str(v) for k, v in vars(args).items() if k != "func"},
        int(os.environ.get("TENSOR_INFER_SEED", 0)),
    )
    if args.model == "pca":
        obs = PcaObservation(y=read_tnsr(args.data), ranks=ranks)
        res = infer_pca(obs, a, alpha=args.alpha)
        _print_result(res, manifest)
        return 0
    data = read_treg(args.data)
    init = read_tnsr(args.init) if args.init else None
    if args.model == "reg":
        if init is None:
            init = naive_init(data, ranks, sigma=args.sigma or 1.0)
        res = infer_no_split(data, init, a, alpha=args.alpha, sigma2=sigma2, ranks=ranks)
    else:
        n1 = data.n // 2
        if init is not None:
            init_fn = lambda half: init  # noqa: E731
        else:
            init_fn = lambda half: naive_init(half, ranks, sigma=args.sigma or 1.0)  # noqa: E731
        res = infer_split(
            data, (n1, data.n - n1), init_fn, a,
            alpha=args.alpha, sigma2=sigma2, ranks=ranks,
        )
    _print_result(res, manifest)
    return 0


def cmd_diagnose(args) -> int:
    ranks = _parse_ranks(args.ranks)
    t = read_tnsr(args.tensor)
    a = read_tnsr(args.loading)
    manifest = manifest_line(
        {k: str(v) for k, v in vars(args).items() if k != "func"},
        int(os.environ.get("TENSOR_INFER_SEED", 0)),
    )
    print(manifest)
    factors = hosvd(t, ranks)
    try:
        ratios = incoherence_ratio(a, factors)
    except AlignmentDegenerateError:
        ratios = (math.inf, math.inf, math.inf)
    for j, r in enumerate(ratios, start=1):
        print(f"incoherence_{j}={_fmt(r)}")
    s_a2 = variance_component(a, factors)
    print(f"s_A={_fmt(math.sqrt(max(s_a2, 0.0)))}")
    report = alignment_check(a, factors, args.regime)
    print(f"alignment={'pass' if report.passed else 'fail'}")
    print(f"alignment_threshold={_fmt(report.threshold)}")
    for name, value in sorted(report.threshold_terms.items()):
        print(f"alignment_term_{name}={_fmt(value)}")
    summary = spectral_summary(factors.reconstruct(), ranks)
    snr_regime = "low-rank" if "low-rank" in args.regime else "general"
    snr = snr_check(summary, t.shape, ranks, regime=snr_regime)
    print(f"snr_lambda_min={_fmt(snr.lambda_min)}")
    print(f"snr_threshold={_fmt(max(snr.term_kappa, snr.term_dim))}")
    print(f"snr_passed={_fmt(snr.passed)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tensorci",
        description="Debiased inference for linear functionals of low-rank tensors.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a replicated experiment from a config file")
    p_sim.add_argument("--config", required=True)
    p_sim.add_argument("--out", required=True)
    p_sim.add_argument("--workers", type=int, default=1)
    p_sim.set_defaults(func=cmd_simulate)

    p_inf = sub.add_parser("infer", help="one-shot inference on data files")
    p_inf.add_argument("--model", required=True, choices=("reg", "reg-split", "pca"))
    p_inf.add_argument("--data", required=True)
    p_inf.add_argument("--loading", required=True)
    p_inf.add_argument("--ranks", required=True)
    p_inf.add_argument("--alpha", type=float, default=0.05)
    p_inf.add_argument("--sigma", type=float, default=None)
    p_inf.add_argument("--init", default=None)
    p_inf.set_defaults(func=cmd_infer)

    p_diag = sub.add_parser("diagnose", help="incoherence / alignment / SNR diagnostics")
    p_diag.add_argument("--tensor", required=True)
    p_diag.add_argument("--ranks", required=True)
    p_diag.add_argument("--loading", required=True)
    p_diag.add_argument("--regime", default="general", choices=ALIGNMENT_REGIMES)
    p_diag.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AlignmentDegenerateError as exc:
        print(f"error: alignment condition violated: {exc}", file=sys.stderr)
        return 4
    except (ConfigError, ShapeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
