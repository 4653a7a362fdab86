"""Batch experiment runner emitting deterministic CSV.

Subcommands: ``pdf`` (ratio-density curves), ``ber-analytic``,
``ber-sim``, ``ber-particle``, ``compare`` (all baselines plus the ratio
scheme at shared settings) and ``sweep``.  Every output starts with a
commented line holding the fully resolved experiment spec and seed, from
which the file can be regenerated byte for byte (:func:`replay_csv`);
worker count never enters the spec because it never changes a result.

Flags override keys from an optional flat ``key=value`` config file.
When no output path is given, files land in ``$MRSK_OUT_DIR`` (or the
working directory).  Exit codes: 0 success, 1 usage or I/O error,
2 capability refusal (sequence or trellis cap exceeded).
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .analysis import DEFAULT_SEQUENCE_CAP, ftd_ber
from .baselines import (
    CskConfig,
    MoskConfig,
    OokConfig,
    RtskConfig,
    csk_ber,
    mosk_ber,
    ook_ber,
    rtsk_error_counts,
)
from .channel import ChannelParams, hit_fraction
from .errors import CapacityError
from .modem import MrskConfig
from .ratio_stats import (
    GaussPair,
    SolidParams,
    exact_ratio_pdf,
    gaussian_ratio_params,
    gaussian_ratio_pdf,
    sample_ratio,
    solid_ratio_pdf,
)
from .simulate import BerCurve, BerEstimate, SimConfig, run_link, sweep

__all__ = ["run_cli", "main", "write_csv", "replay_csv", "ExperimentSpec"]

CSV_HEADER = "param,value,scheme,detector,coding,ber,ci_low,ci_high,trials"
PDF_HEADER = "eta,exact,solid,gaussian,empirical"
OUT_DIR_ENV = "MRSK_OUT_DIR"

_SUBCOMMANDS = ("pdf", "ber-analytic", "ber-sim", "ber-particle", "compare", "sweep")


@dataclass(frozen=True)
class ExperimentSpec:
    """Fully resolved experiment description; the unit of reproducibility."""

    subcommand: str
    d: float = 10.0
    r: float = 5.0
    D: float = 79.4
    L: int = 5
    t_b: float = 0.5
    N: int = 2
    M: int = 1
    omega: float = math.e
    Q: float = 1000.0
    coding: str = "gray"
    detector: str = "ftd"
    mlsd_metric: str = "solid"
    engine: str = "statistical"
    bits: int = 100_000
    dt: float = 1e-3
    seed: int = 0
    param: str = "t_b"
    values: tuple[float, ...] | None = None
    ratio: float = math.e
    grid_points: int = 801
    samples: int = 10_000
    ook_alpha: float = 0.78
    csk_gamma: float = 2.0
    mosk_lambda_frac: float = 0.34
    rtsk_detector: str = "ml"

    def serialize(self) -> str:
        parts = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if f.name == "values":
                parts.append("values=" + ",".join(repr(float(x)) for x in v))
            else:
                parts.append(f"{f.name}={v!r}" if isinstance(v, str) else f"{f.name}={v}")
        return "# spec: " + " ".join(parts)

    @classmethod
    def deserialize(cls, line: str) -> "ExperimentSpec":
        if not line.startswith("# spec: "):
            raise ValueError("not a spec header line")
        kwargs: dict = {}
        types = {f.name: f.type for f in fields(cls)}
        for token in line[len("# spec: ") :].split():
            key, _, raw = token.partition("=")
            if key not in types:
                raise ValueError(f"unknown spec key {key!r}")
            if key == "values":
                kwargs[key] = tuple(float(x) for x in raw.split(","))
            elif key in ("subcommand", "coding", "detector", "mlsd_metric", "engine", "param", "rtsk_detector"):
                kwargs[key] = raw.strip("'")
            elif key in ("L", "N", "M", "bits", "seed", "grid_points", "samples"):
                kwargs[key] = int(raw)
            else:
                kwargs[key] = float(raw)
        return cls(**kwargs)

    @property
    def channel(self) -> ChannelParams:
        return ChannelParams(
            d=self.d, r=self.r, D=self.D, Ts=self.t_b * self.M * (self.N - 1), L=self.L
        )

    @property
    def mrsk(self) -> MrskConfig:
        return MrskConfig(
            N=self.N,
            M=self.M,
            Omega=self.omega,
            Q=self.Q,
            coding=self.coding,
            detector=self.detector,
            mlsd_metric=self.mlsd_metric,
        )

    def sim(self, workers: int = 1) -> SimConfig:
        engine = self.engine if self.engine != "analytic" else "statistical"
        return SimConfig(
            n_bits=self.bits,
            seed=self.seed,
            engine=engine,
            particle_dt=self.dt,
            workers=workers,
        )


def _fmt(x: float) -> str:
    return format(float(x), ".10g")


def _estimate_row(
    param: str, value: float, scheme: str, detector: str, coding: str, est: BerEstimate
) -> str:
    return ",".join(
        [
            param,
            _fmt(value),
            scheme,
            detector,
            coding,
            _fmt(est.ber),
            _fmt(est.ci_low),
            _fmt(est.ci_high),
            str(est.bits),
        ]
    )


def render_curve(curve: BerCurve, spec_line: str) -> str:
    lines = [spec_line, CSV_HEADER]
    for value, est in zip(curve.param_values, curve.estimates):
        lines.append(
            _estimate_row(curve.param_name, value, curve.scheme, curve.detector, curve.coding, est)
        )
    return "\n".join(lines) + "\n"


def write_csv(text_or_curve, path, spec_line: str | None = None) -> None:
    """Write a rendered table or a BerCurve to ``path``.

    IO failures surface as CliError (exit 1) with the path in the message.
    """
    if isinstance(text_or_curve, BerCurve):
        if spec_line is None:
            raise ValueError("writing a curve needs the serialized spec line")
        text = render_curve(text_or_curve, spec_line)
    else:
        text = text_or_curve
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}") from exc


class CliError(RuntimeError):
    """Usage or I/O failure; maps to exit code 1."""


# ---------------------------------------------------------------------------
# subcommand implementations (spec -> csv text)
# ---------------------------------------------------------------------------


def _run_pdf(spec: ExperimentSpec) -> str:
    channel = spec.channel
    p1 = hit_fraction(channel.Ts, channel)
    mu_x = spec.Q * spec.ratio * p1
    mu_y = spec.Q * p1
    pair = GaussPair(
        mu_x=mu_x,
        mu_y=mu_y,
        sigma_x=math.sqrt(spec.Q * spec.ratio * p1 * (1 - p1)),
        sigma_y=math.sqrt(spec.Q * p1 * (1 - p1)),
    )
    sp = SolidParams.from_pair(pair)
    beta, lam2 = gaussian_ratio_params(pair)
    lam = math.sqrt(lam2)
    lo, hi = beta - 8 * lam, beta + 8 * lam
    edges = np.linspace(lo, hi, spec.grid_points + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(0,)))
    samples = sample_ratio(pair, spec.samples, rng).values
    empirical, _ = np.histogram(samples, bins=edges, density=True)
    lines = [spec.serialize(), PDF_HEADER]
    for eta, fe, fs, fg, fh in zip(
        centers,
        exact_ratio_pdf(centers, pair),
        solid_ratio_pdf(centers, sp),
        gaussian_ratio_pdf(centers, pair),
        empirical,
    ):
        lines.append(",".join(_fmt(v) for v in (eta, fe, fs, fg, fh)))
    return "\n".join(lines) + "\n"


def _run_ber_analytic(spec: ExperimentSpec) -> str:
    est = BerEstimate.exact(ftd_ber(spec.mrsk, spec.channel, DEFAULT_SEQUENCE_CAP).ber)
    curve = BerCurve(
        param_name="t_b",
        param_values=(spec.t_b,),
        estimates=(est,),
        scheme="mrsk",
        detector="ftd",
        coding=spec.coding,
    )
    return render_curve(curve, spec.serialize())


def _run_ber_sim(spec: ExperimentSpec, workers: int) -> str:
    est = run_link(spec.mrsk, spec.channel, spec.sim(workers))
    curve = BerCurve(
        param_name="t_b",
        param_values=(spec.t_b,),
        estimates=(est,),
        scheme="mrsk",
        detector=spec.detector,
        coding=spec.coding,
    )
    return render_curve(curve, spec.serialize())


def _run_sweep(spec: ExperimentSpec, workers: int) -> str:
    values = spec.values if spec.values is not None else (spec.t_b,)
    curve = sweep(
        spec.param,
        values,
        spec.mrsk,
        spec.channel,
        spec.sim(workers),
        engine=spec.engine,
        t_b=spec.t_b,
    )
    return render_curve(curve, spec.serialize())


def _run_compare(spec: ExperimentSpec) -> str:
    values = spec.values if spec.values is not None else (
        (spec.t_b,) if spec.param == "t_b" else (spec.Q,)
    )
    if spec.param not in ("t_b", "Q"):
        raise CliError("compare sweeps t_b or Q only")
    lines = [spec.serialize(), CSV_HEADER]
    for i, value in enumerate(values):
        t_b = float(value) if spec.param == "t_b" else spec.t_b
        q = float(value) if spec.param == "Q" else spec.Q
        mrsk_cfg = replace(spec.mrsk, Q=q, detector="ftd")
        channel = replace(spec.channel, Ts=t_b * mrsk_cfg.bits_per_symbol)
        base_channel = replace(channel, Ts=t_b)

        est = BerEstimate.exact(ftd_ber(mrsk_cfg, channel).ber)
        lines.append(_estimate_row(spec.param, value, "mrsk", "ftd", spec.coding, est))
        est = BerEstimate.exact(ook_ber(OokConfig(Q=q, alpha=spec.ook_alpha), base_channel, t_b))
        lines.append(_estimate_row(spec.param, value, "ook", "fixed", "-", est))
        est = BerEstimate.exact(csk_ber(CskConfig(Q=q, Gamma=spec.csk_gamma), base_channel, t_b))
        lines.append(_estimate_row(spec.param, value, "csk", "fixed", "-", est))
        est = BerEstimate.exact(
            mosk_ber(MoskConfig(Q=q, Lambda=spec.mosk_lambda_frac * q), base_channel, t_b)
        )
        lines.append(_estimate_row(spec.param, value, "mosk", "fixed", "-", est))
        errors, n = rtsk_error_counts(
            RtskConfig(Delta=t_b / 2.0, detector=spec.rtsk_detector),
            base_channel,
            t_b,
            n_symbols=spec.bits,
            seed=int(
                np.random.SeedSequence(entropy=spec.seed, spawn_key=(i,)).generate_state(
                    1, np.uint64
                )[0]
            ),
        )
        est = BerEstimate.from_counts(errors, n)
        lines.append(_estimate_row(spec.param, value, "rtsk", spec.rtsk_detector, "-", est))
    return "\n".join(lines) + "\n"


def run_spec(spec: ExperimentSpec, workers: int = 1) -> str:
    """Execute one resolved experiment spec and return the CSV text."""
    if spec.subcommand == "pdf":
        return _run_pdf(spec)
    if spec.subcommand == "ber-analytic":
        return _run_ber_analytic(spec)
    if spec.subcommand == "ber-sim":
        return _run_ber_sim(spec, workers)
    if spec.subcommand == "ber-particle":
        return _run_ber_sim(spec, workers)
    if spec.subcommand == "compare":
        return _run_compare(spec)
    if spec.subcommand == "sweep":
        return _run_sweep(spec, workers)
    raise CliError(f"unknown subcommand {spec.subcommand!r}")


def replay_csv(path) -> str:
    """Regenerate a CSV from its own commented spec header."""
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
    return run_spec(ExperimentSpec.deserialize(first))


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we use 1
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _parse_values(raw: str) -> tuple[float, ...]:
    raw = raw.strip()
    if ":" in raw:
        parts = raw.split(":")
        if len(parts) != 3:
            raise CliError(f"range must be start:step:stop, got {raw!r}")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise CliError("range step must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(start + k * step for k in range(n))
    return tuple(float(p) for p in raw.split(","))


def _load_config(path) -> dict[str, str]:
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


_SPEC_FLAGS: list[tuple[str, type]] = [
    ("d", float),
    ("r", float),
    ("D", float),
    ("L", int),
    ("t_b", float),
    ("N", int),
    ("M", int),
    ("omega", float),
    ("Q", float),
    ("coding", str),
    ("detector", str),
    ("mlsd_metric", str),
    ("engine", str),
    ("bits", int),
    ("dt", float),
    ("seed", int),
    ("param", str),
    ("ratio", float),
    ("grid_points", int),
    ("samples", int),
    ("ook_alpha", float),
    ("csk_gamma", float),
    ("mosk_lambda_frac", float),
    ("rtsk_detector", str),
]


def _build_parser() -> _Parser:
    parser = _Parser(prog="mrsk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name)
        for key, typ in _SPEC_FLAGS:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ, default=None)
        p.add_argument("--values", type=str, default=None, help="comma list or start:step:stop")
        p.add_argument("--config", type=str, default=None, help="flat key=value config file")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("-o", "--output", type=str, default=None)
    return parser


def _resolve_spec(args: argparse.Namespace) -> ExperimentSpec:
    kwargs: dict = {"subcommand": args.subcommand}
    file_values: dict[str, str] = _load_config(args.config) if args.config else {}
    for key, typ in _SPEC_FLAGS:
        flag = getattr(args, key)
        if flag is not None:
            kwargs[key] = flag
        elif key in file_values:
            kwargs[key] = typ(file_values[key])
    raw_values = args.values if args.values is not None else file_values.get("values")
    if raw_values is not None:
        kwargs["values"] = _parse_values(raw_values)
    if args.subcommand == "ber-particle":
        kwargs["engine"] = "particle"
    try:
        return ExperimentSpec(**kwargs)
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc)) from exc


def _default_output(subcommand: str) -> Path:
    return Path(os.environ.get(OUT_DIR_ENV, ".")) / f"{subcommand}.csv"


def run_cli(argv=None) -> int:
    """Parse arguments, run the experiment, write the CSV; returns exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        spec = _resolve_spec(args)
        text = run_spec(spec, workers=args.workers)
        out = Path(args.output) if args.output else _default_output(args.subcommand)
        write_csv(text, out)
    except CliError as exc:
        print(f"mrsk: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"mrsk: error: {exc}", file=sys.stderr)
        return 1
    except CapacityError as exc:
        print(f"mrsk: refused: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


def main() -> None:
    sys.exit(run_cli())
