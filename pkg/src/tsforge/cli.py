"""The ``tsforge`` command line front end.

Subcommands::

    tsforge train     --data prices.csv [flags]      train a model
    tsforge generate  --checkpoint run/x.ckpt ...    sample a trained generator
    tsforge evaluate  --data prices.csv ...          stylized facts of one asset
    tsforge compare   --real prices.csv ...          real vs synthetic report

Every plot is written as minimal SVG with a CSV twin carrying the same
numbers. Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric
abort. ``TSFORGE_OUT`` overrides the default output root.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, gan, stats
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .data import (DataError, build_dataset, inverse_scale, load_csv, log_returns,
                   make_windows, returns_to_prices)
from .gan import TrainConfig, TrainingDiverged, make_rng
from .nn import critic_forward
from .optim import OptimConfig
from .plot import Chart, render_chart, render_panels, write_svg
from .stats import StatsError
from .tensor import Tensor

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    """Bad configuration file or flag values."""


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


# configuration ------------------------------------------------------

_INT_KEYS = {"epochs", "n_critic", "batch_size", "noise_len", "seq_len",
             "units", "seed", "checkpoint_every"}
_FLOAT_KEYS = {"lambda", "learning_rate", "rho", "epsilon", "clip_c"}
_STR_KEYS = {"loss_variant"}
_BOOL_KEYS = {"g_loss_nonsaturating"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS | _BOOL_KEYS


def _read_config_file(path) -> dict:
    values: dict = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _ALL_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            if key in _INT_KEYS:
                values[key] = int(val)
            elif key in _FLOAT_KEYS:
                values[key] = float(val)
            elif key in _BOOL_KEYS:
                if val.lower() not in ("true", "false", "0", "1"):
                    raise ValueError(val)
                values[key] = val.lower() in ("true", "1")
            else:
                values[key] = val
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: cannot parse value {val!r} "
                              f"for key {key!r}") from None
    return values


def parse_config(path=None, overrides: dict | None = None) -> TrainConfig:
    """Build a TrainConfig from defaults, an optional flat ``key = value``
    file and flag overrides (flags beat the file, the file beats defaults)."""
    values: dict = {}
    if path is not None:
        values.update(_read_config_file(path))
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in _ALL_KEYS:
            raise ConfigError(f"unknown configuration key {k!r}")
        values[k] = v
    optim_kwargs = {}
    for src, dst in (("learning_rate", "learning_rate"), ("rho", "rho"),
                     ("epsilon", "epsilon"), ("clip_c", "clip_c")):
        if src in values:
            optim_kwargs[dst] = values.pop(src)
    rename = {"lambda": "lambda_gp", "units": "lstm_units"}
    cfg_kwargs = {rename.get(k, k): v for k, v in values.items()}
    try:
        return TrainConfig(optim=OptimConfig(**optim_kwargs), **cfg_kwargs)
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e)) from None


def write_config(cfg: TrainConfig, path) -> None:
    """Snapshot a TrainConfig in the same flat format parse_config reads."""
    lines = [
        f"epochs = {cfg.epochs}",
        f"n_critic = {cfg.n_critic}",
        f"lambda = {_fmt(cfg.lambda_gp)}",
        f"batch_size = {cfg.batch_size}",
        f"noise_len = {cfg.noise_len}",
        f"seq_len = {cfg.seq_len}",
        f"units = {cfg.lstm_units}",
        f"loss_variant = {cfg.loss_variant}",
        f"seed = {cfg.seed}",
        f"checkpoint_every = {cfg.checkpoint_every}",
        f"g_loss_nonsaturating = {str(cfg.g_loss_nonsaturating).lower()}",
        f"learning_rate = {_fmt(cfg.optim.learning_rate)}",
        f"rho = {_fmt(cfg.optim.rho)}",
        f"epsilon = {_fmt(cfg.optim.epsilon)}",
        f"clip_c = {_fmt(cfg.optim.clip_c)}",
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# CSV helpers --------------------------------------------------------

def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, (int, float, np.floating))
                              else str(v) for v in row) + "\n")


def _write_matrix_csv(path, matrix: np.ndarray) -> None:
    matrix = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in np.atleast_2d(matrix):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _read_matrix_csv(path) -> np.ndarray:
    try:
        return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=np.float64))
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read numeric CSV {path}: {e}") from None


def _out_dir(arg: str | None, default_name: str) -> Path:
    if arg:
        root = Path(arg)
    else:
        root = Path(os.environ.get("TSFORGE_OUT", "runs")) / default_name
    root.mkdir(parents=True, exist_ok=True)
    return root


# train --------------------------------------------------------------

def _loss_rows(history: gan.LossHistory):
    for i in range(len(history)):
        yield (history.epochs[i], history.critic_loss[i], history.generator_loss[i],
               history.wasserstein[i], history.gradient_penalty[i])


def _write_loss_artifacts(out: Path, history: gan.LossHistory) -> None:
    _write_csv(out / "loss.csv",
               ["epoch", "critic_loss", "generator_loss", "wasserstein", "gradient_penalty"],
               _loss_rows(history))
    chart = Chart("Generator and critic loss", "epoch", "loss")
    chart.add("critic", history.epochs, history.critic_loss)
    chart.add("generator", history.epochs, history.generator_loss)
    chart.add("wasserstein estimate", history.epochs, history.wasserstein)
    write_svg(out / "loss.svg", render_chart(chart))


def _sample_grid_chart(samples: np.ndarray, title: str,
                       real_window: np.ndarray | None = None) -> Chart:
    chart = Chart(title, "timestep", "scaled return")
    xs = list(range(samples.shape[1]))
    for i, row in enumerate(samples[:8]):
        chart.add("synthetic" if i == 0 else "", xs, row[:, 0], color="#1f77b4")
    if real_window is not None:
        chart.add("real", xs, real_window, color="#d62728")
    return chart


def cmd_train(args) -> int:
    overrides = {
        "epochs": args.epochs, "n_critic": args.n_critic, "lambda": args.lambda_gp,
        "batch_size": args.batch_size, "noise_len": args.noise_len,
        "seq_len": args.seq_len, "units": args.units, "loss_variant": args.loss_variant,
        "seed": args.seed, "checkpoint_every": args.checkpoint_every,
        "learning_rate": args.lr, "rho": args.rho, "epsilon": args.epsilon,
        "clip_c": args.clip_c,
        "g_loss_nonsaturating": True if args.g_loss_nonsaturating else None,
    }
    cfg = parse_config(args.config, overrides)
    prices = load_csv(args.data)
    dataset = build_dataset(prices, seq_len=cfg.seq_len, stride=args.stride,
                            kind=args.scaler)
    out = _out_dir(args.out, f"train-{Path(args.data).stem}-seed{cfg.seed}")
    write_config(cfg, out / "config.txt")

    real_flat = inverse_scale(dataset.windows[:, :, 0], dataset.scaler).reshape(-1)

    def on_checkpoint(snap: gan.TrainSnapshot, crashed: bool = False) -> None:
        tag = "crash" if crashed else f"epoch{snap.epoch:06d}"
        cp = Checkpoint(spec=snap.generator.arch, epoch=snap.epoch,
                        generator=snap.generator, critic=snap.critic,
                        opt_generator=snap.opt_generator, opt_critic=snap.opt_critic,
                        scaler=dataset.scaler, rng_state=snap.rng_state,
                        extra={"loss_variant": cfg.loss_variant, "seed": cfg.seed})
        save_checkpoint(out / f"checkpoint_{tag}.ckpt", cp)
        if crashed:
            return
        samples = gan.generate(snap.generator, args.grid_samples, cfg.seed + snap.epoch)
        _write_matrix_csv(out / f"samples_{tag}.csv", samples[:, :, 0])
        write_svg(out / f"samples_{tag}.svg",
                  render_chart(_sample_grid_chart(
                      samples, f"Generated samples at epoch {snap.epoch}",
                      dataset.windows[0, :, 0])))
        synth = inverse_scale(samples[:, :, 0], dataset.scaler)
        report = stats.compare_distributions(real_flat, synth)
        _write_csv(out / f"compare_{tag}_moments.csv",
                   ["metric", "real", "synthetic"],
                   [(k, rv, sv) for (k, rv), (_, sv) in
                    zip(report.moments_real.rows(), report.moments_synthetic.rows())])

    resume = None
    if args.resume:
        cp = load_checkpoint(args.resume)
        resume = gan.TrainSnapshot(epoch=cp.epoch, generator=cp.generator,
                                   critic=cp.critic, opt_generator=cp.opt_generator,
                                   opt_critic=cp.opt_critic, rng_state=cp.rng_state)

    try:
        gen, critic, history, checkpoints = gan.train(
            cfg, dataset, resume=resume,
            on_checkpoint=lambda s: on_checkpoint(s))
    except TrainingDiverged as e:
        partial = getattr(e, "history", None)
        if partial is not None and len(partial):
            _write_loss_artifacts(out, partial)
        snap = getattr(e, "snapshot", None)
        if snap is not None:
            on_checkpoint(snap, crashed=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC

    _write_loss_artifacts(out, history)

    # run summary: mode collapse per checkpoint plus a Lipschitz probe
    rng = make_rng(cfg.seed + 1)
    ratios = []
    for _ in range(args.lipschitz_pairs):
        i, j = rng.integers(0, len(dataset), size=2)
        x1, x2 = dataset.windows[i], dataset.windows[j]
        if np.array_equal(x1, x2):
            continue
        ratios.append(gan.lipschitz_ratio_check(
            lambda x: critic_forward(critic, x), x1, x2))
    final_sample = gan.generate(gen, max(2, cfg.batch_size), cfg.seed + cfg.epochs + 1)
    summary = {
        "epochs": cfg.epochs,
        "final_critic_loss": history.critic_loss[-1],
        "final_generator_loss": history.generator_loss[-1],
        "final_wasserstein": history.wasserstein[-1],
        "median_lipschitz_ratio": float(np.median(ratios)) if ratios else None,
        "mode_collapse_final": gan.mode_collapse_score(final_sample),
        "mode_collapse_per_checkpoint": {str(s.epoch): s.mode_collapse for s in checkpoints},
        "dropped_rows": prices.dropped,
        "n_windows": len(dataset),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    print(f"run artifacts written to {out}")
    return EXIT_OK


# generate -----------------------------------------------------------

def cmd_generate(args) -> int:
    cp = load_checkpoint(args.checkpoint)
    out = _out_dir(args.out, f"generate-seed{args.seed}")
    samples = gan.generate(cp.generator, args.n, args.seed)   # [n, seq, 1]
    scaled = samples[:, :, 0]
    _write_matrix_csv(out / "returns_scaled.csv", scaled)
    if cp.scaler is not None:
        returns = inverse_scale(scaled, cp.scaler)
    else:
        logger.warning("checkpoint has no scaler; emitting scaled values as returns")
        returns = scaled
    _write_matrix_csv(out / "returns.csv", returns)
    prices = np.stack([returns_to_prices(row, args.p0) for row in returns])
    _write_matrix_csv(out / "prices.csv", prices)

    real_path = None
    if args.real:
        series = load_csv(args.real)
        r = log_returns(series).values
        seq = scaled.shape[1]
        if len(r) >= seq:
            real_path = returns_to_prices(r[-seq:], args.p0)
    chart = Chart("Generated price paths", "timestep", "price")
    xs = list(range(prices.shape[1]))
    for i, row in enumerate(prices[:8]):
        chart.add("synthetic" if i == 0 else "", xs, row, color="#1f77b4")
    if real_path is not None:
        chart.add("real", xs, real_path, color="#d62728")
    write_svg(out / "prices.svg", render_chart(chart))
    print(f"wrote {args.n} samples to {out}")
    return EXIT_OK


# evaluate -----------------------------------------------------------

def _acf_csv_rows(plain: stats.AcfReport, absolute: stats.AcfReport):
    for lag, v, a in zip(plain.lags, plain.values, absolute.values):
        yield (int(lag), v, a)


def cmd_evaluate(args) -> int:
    prices = load_csv(args.data)
    returns = log_returns(prices).values
    out = _out_dir(args.out, f"evaluate-{Path(args.data).stem}")

    report = stats.moments(returns)
    _write_csv(out / "moments.csv", ["metric", "value"], report.rows())

    max_lag = min(args.max_lag, len(returns) - 1)
    plain = stats.acf(returns, max_lag)
    absolute = stats.acf_absolute(returns, max_lag)
    _write_csv(out / "acf.csv", ["lag", "acf", "acf_absolute"],
               _acf_csv_rows(plain, absolute))
    band = plain.band
    panels = []
    for name, rep in (("ACF of log returns", plain),
                      ("ACF of absolute log returns", absolute)):
        c = Chart(name, "lag", "acf", h_lines=[band, -band])
        c.add("", rep.lags[1:], rep.values[1:], kind="stem")
        panels.append(c)
    write_svg(out / "acf.svg", render_panels(panels))

    qq = stats.qq_points(returns, "normal")
    _write_csv(out / "qq.csv", ["theoretical", "sample"],
               zip(qq.theoretical, qq.sample))
    qc = Chart("QQ plot of log returns vs normal", "normal quantile", "sample quantile",
               ref_line=(qq.slope, qq.intercept))
    qc.add("log returns", qq.theoretical, qq.sample, kind="scatter")
    write_svg(out / "qq.svg", render_chart(qc))

    _write_csv(out / "returns.csv", ["index", "log_return"],
               enumerate(returns))
    rc = Chart("Log returns", "day", "log return")
    rc.add("", range(len(returns)), returns)
    write_svg(out / "returns.svg", render_chart(rc))
    print(f"evaluation written to {out} ({report.n} returns)")
    return EXIT_OK


# compare ------------------------------------------------------------

def _load_synthetic(args, seq_len_hint: int | None) -> np.ndarray:
    if args.synthetic:
        return _read_matrix_csv(args.synthetic)
    cp = load_checkpoint(args.checkpoint)
    samples = gan.generate(cp.generator, args.n, args.seed)[:, :, 0]
    if cp.scaler is not None:
        samples = inverse_scale(samples, cp.scaler)
    return samples


def cmd_compare(args) -> int:
    if not args.synthetic and not args.checkpoint:
        raise _UsageError("compare needs --synthetic or --checkpoint")
    prices = load_csv(args.real)
    real = log_returns(prices).values
    synth = _load_synthetic(args, None)
    out = _out_dir(args.out, f"compare-{Path(args.real).stem}")

    report = stats.compare_distributions(real, synth, max_lag=args.max_lag,
                                         bins=args.bins)
    _write_csv(out / "moments.csv", ["metric", "real", "synthetic"],
               [(k, rv, sv) for (k, rv), (_, sv) in
                zip(report.moments_real.rows(), report.moments_synthetic.rows())])

    hist = report.histogram
    centers = (hist.edges[:-1] + hist.edges[1:]) / 2.0
    _write_csv(out / "histogram.csv", ["bin_center", "real_density", "synthetic_density"],
               zip(centers, hist.densities["real"], hist.densities["synthetic"]))
    hc = Chart("Log return densities", "log return", "density", annotations=[
        f"real skew {report.moments_real.skewness:.3f} kurt {report.moments_real.kurtosis:.2f}",
        f"synthetic skew {report.moments_synthetic.skewness:.3f} "
        f"kurt {report.moments_synthetic.kurtosis:.2f}",
    ])
    hc.add("real", centers, hist.densities["real"], kind="bar", color="#1f77b4")
    hc.add("synthetic", centers, hist.densities["synthetic"], kind="bar", color="#d62728")
    write_svg(out / "histogram.svg", render_chart(hc))

    qq_sets = {
        "synthetic_vs_normal": report.qq_synthetic_vs_normal,
        "real_vs_normal": report.qq_real_vs_normal,
        "synthetic_vs_real": report.qq_synthetic_vs_real,
    }
    rows = []
    for name, rep in qq_sets.items():
        rows.extend((name, t, s) for t, s in zip(rep.theoretical, rep.sample))
    _write_csv(out / "qq.csv", ["set", "theoretical", "sample"], rows)
    qq_panels = []
    for name, rep in qq_sets.items():
        c = Chart(f"QQ {name.replace('_', ' ')}", "reference quantile", "sample quantile",
                  ref_line=(rep.slope, rep.intercept))
        c.add("", rep.theoretical, rep.sample, kind="scatter")
        qq_panels.append(c)
    write_svg(out / "qq.svg", render_panels(qq_panels))

    _write_csv(out / "acf.csv",
               ["lag", "real", "synthetic", "real_absolute", "synthetic_absolute"],
               zip(report.acf_real.lags.tolist(),
                   report.acf_real.values, report.acf_synthetic.values,
                   report.acf_abs_real.values, report.acf_abs_synthetic.values))
    acf_panels = []
    for title, rep in (("ACF of synthetic log returns", report.acf_synthetic),
                       ("ACF of real log returns", report.acf_real),
                       ("ACF of absolute synthetic log returns", report.acf_abs_synthetic),
                       ("ACF of absolute real log returns", report.acf_abs_real)):
        c = Chart(title, "lag", "acf", h_lines=[rep.band, -rep.band])
        c.add("", rep.lags[1:], rep.values[1:], kind="stem")
        acf_panels.append(c)
    write_svg(out / "acf.svg", render_panels(acf_panels))
    print(f"comparison written to {out}")
    return EXIT_OK


# argument parsing ---------------------------------------------------

def _build_parser() -> _Parser:
    p = _Parser(prog="tsforge", description=__doc__.split("\n\n")[0])
    p.add_argument("--version", action="version", version=f"tsforge {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="train a model on a price CSV")
    tr.add_argument("--data", required=True, help="price CSV (Date,...,Close,... header)")
    tr.add_argument("--config", help="flat key = value configuration file")
    tr.add_argument("--out", help="run directory (default under TSFORGE_OUT or ./runs)")
    tr.add_argument("--resume", help="checkpoint to resume from")
    tr.add_argument("--epochs", type=int)
    tr.add_argument("--n-critic", dest="n_critic", type=int)
    tr.add_argument("--lambda", dest="lambda_gp", type=float)
    tr.add_argument("--batch-size", dest="batch_size", type=int)
    tr.add_argument("--noise-len", dest="noise_len", type=int)
    tr.add_argument("--seq-len", dest="seq_len", type=int)
    tr.add_argument("--units", type=int)
    tr.add_argument("--loss-variant", dest="loss_variant",
                    choices=list(gan.LOSS_VARIANTS))
    tr.add_argument("--seed", type=int)
    tr.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    tr.add_argument("--lr", type=float, help="learning rate")
    tr.add_argument("--rho", type=float)
    tr.add_argument("--epsilon", type=float)
    tr.add_argument("--clip-c", dest="clip_c", type=float)
    tr.add_argument("--g-loss-nonsaturating", action="store_true", default=False)
    tr.add_argument("--scaler", choices=["minmax_symmetric", "zscore"],
                    default="minmax_symmetric")
    tr.add_argument("--stride", type=int, default=1)
    tr.add_argument("--grid-samples", dest="grid_samples", type=int, default=16,
                    help="samples per checkpoint grid")
    tr.add_argument("--lipschitz-pairs", dest="lipschitz_pairs", type=int, default=200)
    tr.set_defaults(func=cmd_train)

    ge = sub.add_parser("generate", help="sample a trained generator")
    ge.add_argument("--checkpoint", required=True)
    ge.add_argument("--n", type=int, default=32)
    ge.add_argument("--seed", type=int, default=0)
    ge.add_argument("--p0", type=float, default=100.0, help="starting price for paths")
    ge.add_argument("--real", help="price CSV to overlay a real window")
    ge.add_argument("--out")
    ge.set_defaults(func=cmd_generate)

    ev = sub.add_parser("evaluate", help="stylized facts of one price CSV")
    ev.add_argument("--data", required=True)
    ev.add_argument("--out")
    ev.add_argument("--max-lag", dest="max_lag", type=int, default=50)
    ev.set_defaults(func=cmd_evaluate)

    co = sub.add_parser("compare", help="real vs synthetic distribution report")
    co.add_argument("--real", required=True, help="real price CSV")
    co.add_argument("--synthetic", help="CSV of synthetic return rows")
    co.add_argument("--checkpoint", help="generate synthetic data from this checkpoint")
    co.add_argument("--n", type=int, default=64)
    co.add_argument("--seed", type=int, default=0)
    co.add_argument("--out")
    co.add_argument("--max-lag", dest="max_lag", type=int, default=50)
    co.add_argument("--bins", type=int, default=50)
    co.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("TSFORGE_LOG", "WARNING"))
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, StatsError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDiverged as e:
        print(f"numeric abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
