"""Experiment harness: dataset generation, training, ablation grid, NFE sweep.

Commands:
    adflow gen-data | train-vel | train-mr | ablate | nfe-sweep | extract
        --config <path> [--out <dir>] [--set key=value ...]

Run configs are flat key=value text files; unknown keys are rejected and the
effective config is echoed into the output directory. Every command is a pure
function of (config, seed, inputs): re-runs emit byte-identical CSVs.

Exit codes: 0 success, 2 config error, 3 numeric divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import flowpath, metrics, mrnet, sampler, velnet
from .errors import (AdflowError, ConfigError, DivergenceError,
                     FileFormatError, ParameterError)
from .signal import (DatasetConfig, make_dataset, mix, read_wav, write_tensor,
                     write_wav)

NFE_SWEEP_VALUES = (1, 2, 5, 10, 20)


@dataclass
class RunConfig:
    seed: int = 0
    n_train: int = 500
    n_eval: int = 50
    duration_s: float = 0.5
    sample_rate_hz: int = 16000
    n_fft: int = 256
    hop: int = 64
    sigma_min: float = 0.0
    sigma_max: float = 0.0
    max_nfe: int = 5
    epsilon: float = 1e-3
    lr_init: float = 1e-4
    lr_min: float = 1e-5
    warmup_epochs: int = 5
    t_max_epochs: int = 50
    weight_decay: float = 0.01
    grad_clip: float = 0.5
    batch_size: int = 16
    epochs: int = 60
    output_dir: str = "runs/adflow"


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, value: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


def parse_config_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def load_config(path=None, overrides=None) -> RunConfig:
    values = {}
    if path is not None:
        try:
            values.update(parse_config_text(Path(path).read_text("utf-8")))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
    for key, value in (overrides or {}).items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = _coerce(key, str(value))
    return RunConfig(**values)


def write_effective_config(cfg: RunConfig, out_dir: Path) -> None:
    lines = [f"{f.name}={getattr(cfg, f.name)}"
             for f in dataclasses.fields(RunConfig)]
    (out_dir / "effective_config.txt").write_text("\n".join(lines) + "\n",
                                                  "utf-8")


def _dataset_config(cfg: RunConfig) -> DatasetConfig:
    return DatasetConfig(duration_s=cfg.duration_s,
                         sample_rate_hz=cfg.sample_rate_hz)


def _train_config(cfg: RunConfig) -> velnet.TrainConfig:
    return velnet.TrainConfig(
        lr_init=cfg.lr_init, lr_min=cfg.lr_min,
        warmup_epochs=cfg.warmup_epochs, t_max_epochs=cfg.t_max_epochs,
        weight_decay=cfg.weight_decay, grad_clip=cfg.grad_clip,
        batch_size=cfg.batch_size, epochs=cfg.epochs, seed=cfg.seed)


def _path_params(cfg: RunConfig) -> flowpath.PathParams:
    return flowpath.PathParams(sigma_min=cfg.sigma_min,
                               sigma_max=cfg.sigma_max)


def _train_dataset(cfg: RunConfig) -> list:
    return make_dataset(cfg.n_train, "uniform", _dataset_config(cfg), cfg.seed)


def _eval_dataset(cfg: RunConfig) -> list:
    # eval seed offset keeps the two sets disjoint under one config seed
    return make_dataset(cfg.n_eval, "uniform", _dataset_config(cfg),
                        cfg.seed + 1)


def _prepare_out(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_effective_config(cfg, out)
    return out


def _write_csv(path: Path, header: list, rows: list) -> None:
    lines = [",".join(header)] + [",".join(row) for row in rows]
    path.write_text("\n".join(lines) + "\n", "utf-8")


# ---------------------------------------------------------------------------
# Commands

def cmd_gen_data(cfg: RunConfig) -> Path:
    out = _prepare_out(cfg)
    data_dir = out / "dataset"
    data_dir.mkdir(exist_ok=True)
    rows = []
    for i, item in enumerate(_eval_dataset(cfg)):
        stem = f"item_{i:04d}"
        for tag, wav in (("x", item.x), ("e", item.e),
                         ("s1", item.s1), ("b", item.b)):
            write_wav(data_dir / f"{stem}_{tag}.wav", wav)
            write_tensor(data_dir / f"{stem}_{tag}.adft", wav.samples)
        intf = ";".join(str(ident.id_seed) for ident, _ in
                        item.spec.interferers)
        rows.append([str(i), repr(float(item.tau)),
                     str(item.spec.target.id_seed), intf,
                     repr(float(item.spec.noise_weight))])
    _write_csv(out / "manifest.csv",
               ["item_id", "tau", "target_id_seed", "interferer_id_seeds",
                "noise_weight"], rows)
    return out


def _loss_csv(path: Path, cfg: RunConfig, trace: list) -> None:
    tc = _train_config(cfg)
    rows = [[str(epoch), repr(float(velnet.lr_for_epoch(tc, epoch))),
             repr(float(loss))] for epoch, loss in enumerate(trace)]
    _write_csv(path, ["epoch", "lr", "loss"], rows)


def cmd_train_vel(cfg: RunConfig) -> Path:
    out = _prepare_out(cfg)
    net = velnet.VelocityNet.create(cfg.seed, feat_n_fft=cfg.n_fft,
                                    feat_hop=cfg.hop)
    _, trace = velnet.train_velocity(net, _train_dataset(cfg),
                                     _train_config(cfg), _path_params(cfg))
    velnet.save_velnet(out / "velnet.ckpt", net)
    _loss_csv(out / "train_vel_loss.csv", cfg, trace)
    return out


def cmd_train_mr(cfg: RunConfig) -> Path:
    out = _prepare_out(cfg)
    reg = mrnet.MrRegressor.create(cfg.seed + 17, feat_n_fft=cfg.n_fft,
                                   feat_hop=cfg.hop)
    _, trace = mrnet.mr_train(reg, _train_dataset(cfg), _train_config(cfg))
    mrnet.save_mrnet(out / "mrnet.ckpt", reg)
    _loss_csv(out / "train_mr_loss.csv", cfg, trace)
    return out


def _load_checkpoints(cfg: RunConfig, ckpt_dir=None):
    ck = Path(ckpt_dir) if ckpt_dir else Path(cfg.output_dir)
    return (velnet.load_velnet(ck / "velnet.ckpt"),
            mrnet.load_mrnet(ck / "mrnet.ckpt"))


ABLATION_SOURCES = ("oracle", "estimated", "random", "tau1", "tau0")


def cmd_ablate(cfg: RunConfig, ckpt_dir=None) -> Path:
    """Table-style grid: five MR sources x {oracle, net} fields."""
    out = _prepare_out(cfg)
    net, reg = _load_checkpoints(cfg, ckpt_dir)
    items = _eval_dataset(cfg)
    pp = _path_params(cfg)
    policy = sampler.NfePolicy(max_nfe=cfg.max_nfe, epsilon=cfg.epsilon)
    rand_rng = np.random.default_rng(cfg.seed + 4242)
    rand_taus = rand_rng.uniform(size=len(items))
    extractor = lambda w: mrnet.mr_embed(reg, w)  # noqa: E731

    rows = []
    for i, item in enumerate(items):
        sources = {
            "oracle": sampler.oracle_mr(item.s1, item.b),
            "estimated": sampler.regressor_mr(reg),
            "random": sampler.fixed_mr(float(rand_taus[i])),
            "tau1": sampler.fixed_mr(1.0),
            "tau0": sampler.fixed_mr(0.0),
        }
        fields = {
            "oracle": sampler.OracleField(item.b, item.s1, pp),
            "net": sampler.NetField(net, item.e),
        }
        for source_name in ABLATION_SOURCES:
            for field_name in ("oracle", "net"):
                est, tau_hat, nfe = sampler.extract_adaptive(
                    item.x, item.e, sources[source_name], fields[field_name],
                    policy)
                report = metrics.evaluate(est, item.x, item.s1, extractor,
                                          item.tau, tau_hat, nfe,
                                          cfg.n_fft, cfg.hop)
                rows.append([str(i), source_name, field_name]
                            + report.csv_row())
    _write_csv(out / "ablation.csv",
               ["item_id", "mr_source", "field", *metrics.REPORT_COLUMNS],
               rows)
    return out


def _write_svg(path: Path, xs: list, series: dict, x_label: str) -> None:
    """Minimal hand-rolled SVG line chart; one polyline per series."""
    width, height, margin = 640, 400, 60
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")
    all_vals = [v for vals in series.values() for v in vals]
    lo, hi = min(all_vals), max(all_vals)
    if hi - lo < 1e-12:
        lo, hi = lo - 1.0, hi + 1.0
    x_lo, x_hi = min(xs), max(xs)

    def sx(x):
        return margin + (x - x_lo) / (x_hi - x_lo) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - lo) / (hi - lo) * (height - 2 * margin)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
             f'height="{height}">',
             f'<line x1="{margin}" y1="{height - margin}" '
             f'x2="{width - margin}" y2="{height - margin}" stroke="black"/>',
             f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
             f'y2="{height - margin}" stroke="black"/>',
             f'<text x="{width // 2}" y="{height - 15}" '
             f'text-anchor="middle">{x_label}</text>']
    for k, (name, vals) in enumerate(series.items()):
        pts = " ".join(f"{sx(x):.2f},{sy(v):.2f}" for x, v in zip(xs, vals))
        color = colors[k % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{color}" '
                     f'stroke-width="2" points="{pts}"/>')
        parts.append(f'<text x="{width - margin + 5}" '
                     f'y="{margin + 20 * k}" fill="{color}" '
                     f'font-size="12">{name}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n", "utf-8")


def cmd_nfe_sweep(cfg: RunConfig, ckpt_dir=None, field: str = "net") -> Path:
    """Sweep max_nfe in estimated-tau mode; CSV plus an SVG line chart."""
    if field not in ("net", "oracle"):
        raise ConfigError(f"unknown field {field!r}")
    out = _prepare_out(cfg)
    net, reg = _load_checkpoints(cfg, ckpt_dir)
    items = _eval_dataset(cfg)
    pp = _path_params(cfg)
    extractor = lambda w: mrnet.mr_embed(reg, w)  # noqa: E731

    rows, mean_sdr, mean_lsd, mean_sim = [], [], [], []
    for max_nfe in NFE_SWEEP_VALUES:
        policy = sampler.NfePolicy(max_nfe=max_nfe, epsilon=cfg.epsilon)
        sdrs, lsds, sims = [], [], []
        for item in items:
            fld = (sampler.OracleField(item.b, item.s1, pp) if field == "oracle"
                   else sampler.NetField(net, item.e))
            est, tau_hat, nfe = sampler.extract_adaptive(
                item.x, item.e, sampler.regressor_mr(reg), fld, policy)
            sdrs.append(metrics.si_sdr(est, item.s1))
            lsds.append(metrics.lsd(est, item.s1, cfg.n_fft, cfg.hop))
            sims.append(metrics.sim(est, item.s1, extractor))
        mean_sdr.append(float(np.mean(sdrs)))
        mean_lsd.append(float(np.mean(lsds)))
        mean_sim.append(float(np.mean(sims)))
        rows.append([str(max_nfe), repr(mean_sdr[-1]), repr(mean_lsd[-1]),
                     repr(mean_sim[-1])])
    _write_csv(out / "nfe_sweep.csv",
               ["max_nfe", "mean_si_sdr_db", "mean_lsd_db",
                "mean_sim_cosine"], rows)
    _write_svg(out / "nfe_sweep.svg", list(NFE_SWEEP_VALUES),
               {"SI-SDR (dB)": mean_sdr, "LSD (dB)": mean_lsd,
                "SIM x 10": [s * 10 for s in mean_sim]}, "max NFE")
    return out


def cmd_extract(cfg: RunConfig, in_path, enroll_path, out_wav,
                reference=None, ckpt_dir=None) -> dict:
    """Single-file end-to-end extraction; prints tau_hat and NFE used."""
    net, reg = _load_checkpoints(cfg, ckpt_dir)
    x = read_wav(in_path)
    e = read_wav(enroll_path)
    if x.sample_rate_hz != e.sample_rate_hz:
        raise FileFormatError("mixture and enrollment sample rates differ")
    policy = sampler.NfePolicy(max_nfe=cfg.max_nfe, epsilon=cfg.epsilon)
    est, tau_hat, nfe = sampler.extract_adaptive(
        x, e, sampler.regressor_mr(reg), sampler.NetField(net, e), policy)
    write_wav(out_wav, est)
    result = {"tau_hat": tau_hat, "nfe_used": nfe}
    print(f"tau_hat={tau_hat:.6f} nfe_used={nfe}")
    if reference is not None:
        ref = read_wav(reference)
        extractor = lambda w: mrnet.mr_embed(reg, w)  # noqa: E731
        sdr = metrics.si_sdr(est, ref)
        imp = sdr - metrics.si_sdr(x, ref)
        lsd_db = metrics.lsd(est, ref, cfg.n_fft, cfg.hop)
        sim_c = metrics.sim(est, ref, extractor)
        result.update(si_sdr_db=sdr, si_sdr_improvement_db=imp,
                      lsd_db=lsd_db, sim_cosine=sim_c)
        print(f"si_sdr_db={sdr:.4f} si_sdr_improvement_db={imp:.4f} "
              f"lsd_db={lsd_db:.4f} sim_cosine={sim_c:.6f}")
    return result


# ---------------------------------------------------------------------------
# Argument parsing

def _add_common(p):
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", help="override output_dir")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a single config key")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-fft", type=int, dest="n_fft")
    p.add_argument("--hop", type=int)
    p.add_argument("--max-nfe", type=int, dest="max_nfe")


def _overrides_from(args) -> dict:
    out = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    if args.out is not None:
        out["output_dir"] = args.out
    for key in ("seed", "n_fft", "hop", "max_nfe"):
        val = getattr(args, key, None)
        if val is not None:
            out[key] = str(val)
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adflow",
        description="Adaptive mixing-ratio flow matching for target-source "
                    "extraction (desk scale)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen-data", "train-vel", "train-mr"):
        _add_common(sub.add_parser(name))
    for name in ("ablate", "nfe-sweep"):
        p = sub.add_parser(name)
        _add_common(p)
        p.add_argument("--checkpoints", help="directory holding *.ckpt "
                       "(default: output_dir)")
        if name == "nfe-sweep":
            p.add_argument("--field", choices=("net", "oracle"),
                           default="net")
    p = sub.add_parser("extract")
    _add_common(p)
    p.add_argument("--checkpoints")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--enroll", required=True)
    p.add_argument("--out-wav", dest="out_wav", required=True)
    p.add_argument("--reference")
    return parser


def run(argv=None) -> None:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config, _overrides_from(args))
    if args.command == "gen-data":
        cmd_gen_data(cfg)
    elif args.command == "train-vel":
        cmd_train_vel(cfg)
    elif args.command == "train-mr":
        cmd_train_mr(cfg)
    elif args.command == "ablate":
        cmd_ablate(cfg, args.checkpoints)
    elif args.command == "nfe-sweep":
        cmd_nfe_sweep(cfg, args.checkpoints, args.field)
    elif args.command == "extract":
        cmd_extract(cfg, args.in_path, args.enroll, args.out_wav,
                    args.reference, args.checkpoints)


def main(argv=None) -> int:
    try:
        run(argv)
        return 0
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return 3
    except (OSError, FileFormatError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4
    except AdflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
