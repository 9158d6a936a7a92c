"""Command-line front end: ``hgm-zf <command> [options]``.

Commands
--------
pdf, cdf        density / distribution of the stream-1 SNR on a t grid
outage          outage probability over a Gamma_b sweep
capacity        ergodic capacity over a Gamma_b sweep
simulate        Monte Carlo histogram
compare         HGM against Monte Carlo, with pass/fail thresholds
selftest        quick internal consistency checks

Results go to CSV (17 significant digits) on stdout or ``--out``; with
``--out`` a JSON sidecar next to it records the resolved configuration, tool
version and seed.  dB values are converted to linear here and nowhere else.

Exit codes: 0 success, 1 invalid configuration, 2 numerical failure,
3 ``compare`` thresholds not met.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .hgm_engine import DEFAULT_SETTINGS, HGMError, PdfGrid, companion_p, continue_in_t, hgm_state, pdf_hgm
from .integrator import IntegrationError
from .measures import (
    DensityModel,
    QuadratureError,
    capacity_cutoff,
    cdf_from_pdf,
    ergodic_capacity,
    outage_probability,
    rayleigh_capacity,
    rayleigh_outage,
    rayleigh_pdf,
)
from .montecarlo import ks_distance, simulate
from .scenario import ConfigError, DerivedParams, ScenarioConfig, build_correlation, db_to_linear, derive_params
from .series_model import pdf_derivatives, pdf_series
from .special_fn import SeriesError, hyp1f1_hgm, hyp1f1_series

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_THRESHOLD = 0, 1, 2, 3

COMMANDS = ("pdf", "cdf", "outage", "capacity", "simulate", "compare", "selftest")

# compare thresholds
KS_LIMIT = 0.01
TERMINAL_CDF_LIMIT = 1e-3
REL_LIMIT = 0.02
OUTAGE_FLOOR = 1e-3

SCENARIO_KEYS = {
    "nr": "n_rx",
    "nt": "n_tx",
    "k_db": "k_factor_db",
    "as_deg": "azimuth_spread_deg",
    "gs_db": "gamma_s_db",
    "constellation": "constellation_size",
    "correlation": "correlation",
}
RUN_DEFAULTS = {
    "t_min": 0.5,
    "t_max": 60.0,
    "points": 30,
    "threshold": 10.0,
    "gb_db": None,
    "seed": 1,
    "samples": 1_000_000,
    "resolution": 2000,
    "bins": 200,
}
COMPARE_SWEEP = "-4:6:2"

NUMERIC_FLAG = re.compile(r"^-(inf(inity)?|\d|\.\d)", re.IGNORECASE)


class CliError(Exception):
    def __init__(self, code: int, tag: str, message: str):
        super().__init__(message)
        self.code = code
        self.tag = tag


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_CONFIG, "E_CONFIG", message)


@dataclass
class RunManifest:
    command: str
    scenario: ScenarioConfig
    t_min: float
    t_max: float
    points: int
    threshold: float
    gb_db: list[float] | None
    seed: int
    samples: int
    resolution: int
    bins: int
    out: Path | None = None

    def __post_init__(self):
        if not (0 < self.t_min < self.t_max and math.isfinite(self.t_max)):
            raise ConfigError(f"need 0 < t_min < t_max, got {self.t_min}, {self.t_max}")
        if self.points < 2:
            raise ConfigError("need at least 2 grid points")
        if not (self.threshold > 0 and math.isfinite(self.threshold)):
            raise ConfigError("threshold must be positive and finite")
        if self.samples < 10_000:
            raise ConfigError("samples must be at least 10000")
        if self.resolution < 100:
            raise ConfigError("resolution must be at least 100")
        if self.bins < 1:
            raise ConfigError("bins must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.out is not None and not self.out.parent.exists():
            raise ConfigError(f"output directory {self.out.parent} does not exist")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("command", "t_min", "t_max", "points", "threshold",
                                           "gb_db", "seed", "samples", "resolution", "bins")}
        d["scenario"] = self.scenario.to_dict()
        return d


def parse_sweep(text: str) -> list[float]:
    """``"5"``, ``"0,2,4"`` or ``"start:stop:step"`` (stop inclusive)."""
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [start + i * step for i in range(n)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad sweep specification {text!r}") from None


def _glue_negative_values(argv: list[str]) -> list[str]:
    # argparse takes "-inf" or "-3" after an option for another option
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok.startswith("--") and "=" not in tok and i + 1 < len(argv) and NUMERIC_FLAG.match(argv[i + 1]):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("scenario")
    g.add_argument("--config", type=Path, help="JSON file with scenario and run settings; flags override it")
    g.add_argument("--nr", type=int, help="receive antennas N_R")
    g.add_argument("--nt", type=int, help="transmit antennas N_T")
    g.add_argument("--k-db", type=float, help="Rician K-factor in dB (-inf for Rayleigh)")
    g.add_argument("--as-deg", type=float, help="azimuth spread in degrees")
    g.add_argument("--gs-db", type=float, help="SNR per symbol Gamma_s in dB")
    g.add_argument("--gb-db", type=str, help="SNR per bit Gamma_b in dB: value, list a,b,c or start:stop:step")
    g.add_argument("--constellation", type=int, help="constellation size M (Gamma_s = Gamma_b log2 M)")
    g.add_argument("--correlation", type=str, help="identity | file:PATH | laplacian[:spacing]")
    r = common.add_argument_group("run")
    r.add_argument("--t-min", type=float, help="smallest SNR of the t grid (linear)")
    r.add_argument("--t-max", type=float, help="largest SNR of the t grid (linear)")
    r.add_argument("--points", type=int, help="number of grid points")
    r.add_argument("--threshold", type=float, help="outage threshold SNR (linear)")
    r.add_argument("--resolution", type=int, help="rectangle-rule panels (per decade of t for c.d.f. grids)")
    r.add_argument("--samples", type=int, help="Monte Carlo sample count")
    r.add_argument("--bins", type=int, help="histogram bins")
    r.add_argument("--seed", type=int, help="Monte Carlo seed")
    r.add_argument("--out", type=Path, help="CSV output path (default stdout)")

    parser = _Parser(prog="hgm-zf", description="MIMO ZF stream-1 SNR statistics via HGM")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "pdf": "SNR p.d.f. on a grid",
        "cdf": "SNR c.d.f. on a grid",
        "outage": "outage probability vs Gamma_b",
        "capacity": "ergodic capacity vs Gamma_b",
        "simulate": "Monte Carlo histogram",
        "compare": "HGM vs Monte Carlo with acceptance thresholds",
        "selftest": "internal consistency checks",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve(args: argparse.Namespace) -> RunManifest:
    file_cfg = {}
    if args.config is not None:
        try:
            file_cfg = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    scen = {k: v for k, v in file_cfg.items() if k not in RUN_DEFAULTS}
    run = {k: file_cfg.get(k, v) for k, v in RUN_DEFAULTS.items()}
    for flag, key in SCENARIO_KEYS.items():
        v = getattr(args, flag)
        if v is not None:
            scen[key] = v
    for key in RUN_DEFAULTS:
        v = getattr(args, key)
        if v is not None:
            run[key] = v
    scenario = ScenarioConfig.from_dict(scen)

    gb = run["gb_db"]
    if isinstance(gb, str):
        gb = parse_sweep(gb)
    elif isinstance(gb, (int, float)):
        gb = [float(gb)]
    elif gb is not None:
        gb = [float(x) for x in gb]
    if gb is None and args.command == "compare" and args.gs_db is None and "gamma_s_db" not in scen:
        gb = parse_sweep(COMPARE_SWEEP)
    if gb is not None and args.command in ("pdf", "cdf", "simulate"):
        if len(gb) != 1:
            raise ConfigError(f"{args.command} takes a single Gamma_b value")
        scenario = scenario.with_gamma_b_db(gb[0])
    return RunManifest(
        command=args.command,
        scenario=scenario,
        t_min=float(run["t_min"]),
        t_max=float(run["t_max"]),
        points=int(run["points"]),
        threshold=float(run["threshold"]),
        gb_db=gb,
        seed=int(run["seed"]),
        samples=int(run["samples"]),
        resolution=int(run["resolution"]),
        bins=int(run["bins"]),
        out=args.out,
    )


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def write_csv(stream, header: list[str], rows) -> None:
    stream.write(",".join(header) + "\n")
    for row in rows:
        stream.write(",".join(_fmt(v) for v in row) + "\n")


def _emit(man: RunManifest, header, rows, results: dict, derived: dict) -> None:
    buf = io.StringIO()
    write_csv(buf, header, rows)
    if man.out is None:
        sys.stdout.write(buf.getvalue())
        return
    man.out.write_text(buf.getvalue())
    sidecar = {
        "tool": "hgm-zf",
        "version": __version__,
        "seed": man.seed,
        "manifest": man.to_dict(),
        "derived": derived,
        "results": results,
    }
    side = man.out.with_suffix(".json") if man.out.suffix != ".json" else man.out.with_suffix(".meta.json")
    side.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def _setup(scenario: ScenarioConfig):
    rt = build_correlation(scenario.correlation, scenario.n_tx, scenario.azimuth_spread_deg)
    return rt, derive_params(scenario, rt)


def _sweep_configs(man: RunManifest):
    """``(gamma_b_db, scenario)`` pairs; the requested dB values are echoed verbatim."""
    if man.gb_db is None:
        _, params = _setup(man.scenario)
        return [(params.gamma_b_db, man.scenario)]
    return [(g, man.scenario.with_gamma_b_db(g)) for g in man.gb_db]


def _density(params, t):
    if params.noncentrality == 0:
        return np.asarray(rayleigh_pdf(t, params.dof, params.gamma1)), "rayleigh"
    return pdf_hgm(params, t).pdf, "hgm"


def cmd_pdf(man: RunManifest):
    _, params = _setup(man.scenario)
    t = np.linspace(man.t_min, man.t_max, man.points)
    p, method = _density(params, t)
    _emit(man, ["t", "pdf"], zip(t, p), {"method": method}, params.to_dict())
    return EXIT_OK


# normalised start of the log-spaced c.d.f. grid; the mass below it is taken from p(0+)
CDF_START = 1e-2


def _cdf_grid(params, t_hi, per_decade):
    """Log-spaced grid on ``[CDF_START Gamma_1, t_hi]`` with ``per_decade`` panels per decade."""
    t_lo = CDF_START * params.gamma1
    n = max(2, math.ceil(per_decade * math.log10(max(t_hi / t_lo, 10.0)))) + 1
    return np.geomspace(t_lo, max(t_hi, 10 * t_lo), n)


def _fine_cdf(params, t_user, resolution):
    """c.d.f. at ``t_user`` from a rectangle rule with ``resolution`` panels per decade."""
    t = np.union1d(_cdf_grid(params, t_user[-1], resolution), t_user)
    p, method = _density(params, t)
    c = cdf_from_pdf(PdfGrid(t, p, params))
    return c[np.searchsorted(t, t_user), 1], method


def cmd_cdf(man: RunManifest):
    _, params = _setup(man.scenario)
    t = np.linspace(man.t_min, man.t_max, man.points)
    c, method = _fine_cdf(params, t, man.resolution)
    _emit(man, ["t", "cdf"], zip(t, c), {"method": method}, params.to_dict())
    return EXIT_OK


def _sweep_values(man: RunManifest, quantity: str):
    rows, model = [], None
    for gb, cfg in _sweep_configs(man):
        _, params = _setup(cfg)
        if params.noncentrality == 0:
            if quantity == "outage":
                v = rayleigh_outage(man.threshold, params.dof, params.gamma1)
            else:
                v = rayleigh_capacity(params.dof, params.gamma1)
            method = "rayleigh"
        else:
            # one density model per sweep: only Gamma_1 changes with Gamma_b
            model = DensityModel(params) if model is None else model.rescaled(params)
            if quantity == "outage":
                v = outage_probability(model, man.threshold, man.resolution)
            else:
                v = ergodic_capacity(model, params, man.resolution).bpcu
            method = "hgm"
        rows.append((gb, v, method))
    return rows


def cmd_sweep(man: RunManifest):
    rows = _sweep_values(man, man.command)
    _, params = _setup(man.scenario)
    _emit(man, ["gamma_b_db", "value", "method"], rows,
          {"threshold": man.threshold if man.command == "outage" else None}, params.to_dict())
    return EXIT_OK


def cmd_simulate(man: RunManifest):
    rt, params = _setup(man.scenario)
    sim = simulate(man.scenario, rt, man.samples, man.bins, man.seed)
    h = sim.histogram
    results = {
        "n_samples": sim.n_samples,
        "rejected": sim.rejected,
        "capacity_bpcu": sim.capacity(),
        "outage": sim.outage(man.threshold),
        "threshold": man.threshold,
    }
    _emit(man, ["t", "pdf", "cdf"], zip(h.centers, h.pdf, h.cdf), results, params.to_dict())
    return EXIT_OK


def compare_scenario(scenario: ScenarioConfig, samples: int, seed: int, resolution: int = 2000,
                     bins: int = 200) -> dict:
    """KS distance, terminal c.d.f. and largest p.d.f. gap between HGM and Monte Carlo."""
    rt, params = _setup(scenario)
    sim = simulate(scenario, rt, samples, bins, seed)
    T, _ = capacity_cutoff(params, 1e-9)
    t_hi = max(T * params.gamma1, float(sim.samples[-1]))
    t = _cdf_grid(params, t_hi, resolution)
    p, method = _density(params, t)
    cdf = cdf_from_pdf(PdfGrid(t, p, params))
    ks = ks_distance(sim.samples, lambda x: np.interp(x, cdf[:, 0], cdf[:, 1]))
    h = sim.histogram
    body = h.centers[:-1] if h.bin_edges.size > bins + 1 else h.centers
    hp, _ = _density(params, body)
    return {
        "params": params,
        "simulation": sim,
        "ks": ks,
        "terminal_cdf": float(cdf[-1, 1]),
        "max_pdf_deviation": float(np.max(np.abs(hp - h.pdf[: body.size]))),
        "method": method,
    }


def compare_sweep(scenario: ScenarioConfig, sim, gb_db: list[float], threshold: float,
                  resolution: int = 2000) -> list[dict]:
    """HGM vs Monte Carlo outage and capacity over a Gamma_b sweep.

    ``sim`` holds Monte Carlo samples of ``scenario``; they are rescaled to
    each ``Gamma_b`` since the SNR is proportional to ``Gamma_s``.
    """
    rows, model = [], None
    for gb in gb_db:
        cfg = scenario.with_gamma_b_db(gb)
        _, params = _setup(cfg)
        samples = sim.rescaled(db_to_linear(cfg.gamma_s_db))
        mc_out = np.searchsorted(samples, threshold, side="right") / samples.size
        mc_cap = float(np.mean(np.log2(1.0 + samples)))
        if params.noncentrality == 0:
            h_out = rayleigh_outage(threshold, params.dof, params.gamma1)
            h_cap = rayleigh_capacity(params.dof, params.gamma1)
        else:
            model = DensityModel(params) if model is None else model.rescaled(params)
            h_out = outage_probability(model, threshold, resolution)
            h_cap = ergodic_capacity(model, params, resolution).bpcu
        out_dev = abs(h_out - mc_out) / mc_out if mc_out > 0 else math.inf
        cap_dev = abs(h_cap - mc_cap) / mc_cap
        rows.append({
            "gamma_b_db": gb,
            "outage_hgm": h_out, "outage_mc": mc_out, "outage_dev": out_dev,
            "outage_checked": h_out >= OUTAGE_FLOOR,
            "capacity_hgm": h_cap, "capacity_mc": mc_cap, "capacity_dev": cap_dev,
        })
    return rows


def cmd_compare(man: RunManifest):
    res = compare_scenario(man.scenario, man.samples, man.seed, man.resolution, man.bins)
    params = res["params"]
    gb0 = params.gamma_b_db
    rows = [
        ("ks_distance", gb0, "", "", res["ks"], KS_LIMIT, _flag(res["ks"] <= KS_LIMIT)),
        ("terminal_cdf", gb0, res["terminal_cdf"], "", abs(1 - res["terminal_cdf"]), TERMINAL_CDF_LIMIT,
         _flag(abs(1 - res["terminal_cdf"]) <= TERMINAL_CDF_LIMIT)),
        ("max_pdf_deviation", gb0, "", "", res["max_pdf_deviation"], "", "info"),
    ]
    sweep = []
    if man.gb_db:
        sweep = compare_sweep(man.scenario, res["simulation"], man.gb_db, man.threshold, man.resolution)
        for r in sweep:
            ok = r["outage_dev"] <= REL_LIMIT
            rows.append(("outage", r["gamma_b_db"], r["outage_hgm"], r["outage_mc"], r["outage_dev"], REL_LIMIT,
                         _flag(ok) if r["outage_checked"] else "skip"))
            rows.append(("capacity", r["gamma_b_db"], r["capacity_hgm"], r["capacity_mc"], r["capacity_dev"],
                         REL_LIMIT, _flag(r["capacity_dev"] <= REL_LIMIT)))
    passed = all(r[-1] != "fail" for r in rows)
    for r in rows:
        print(f"{r[0]:>18s} gamma_b={r[1]:7.3f} dev={r[4]:.3e} {r[6]}", file=sys.stderr)
    results = {"ks": res["ks"], "terminal_cdf": res["terminal_cdf"],
               "max_pdf_deviation": res["max_pdf_deviation"], "passed": passed,
               "rejected": res["simulation"].rejected, "sweep": sweep}
    _emit(man, ["metric", "gamma_b_db", "hgm", "montecarlo", "deviation", "limit", "status"], rows,
          results, params.to_dict())
    return EXIT_OK if passed else EXIT_THRESHOLD


def _flag(ok: bool) -> str:
    return "pass" if ok else "fail"


def selftest_checks() -> list[tuple[str, bool, str]]:
    """Fast invariant checks; each entry is ``(name, passed, detail)``."""

    checks = []

    worst = 0.0
    for N, NR in ((1, 4), (5, 6), (2, 2)):
        for s in (0.5, 1.0, 2.0, 5.0, 10.0):
            ref = hyp1f1_series(N, NR, s).value
            worst = max(worst, abs(hyp1f1_hgm(N, NR, s).f / ref - 1))
    checks.append(("1F1 HGM vs series", worst <= 1e-8, f"max rel err {worst:.2e}"))

    worst = 0.0
    for t in (0.5, 2.0, 8.0, 20.0):
        h = hgm_state(t, 1e-6, 5, 6).p
        worst = max(worst, abs(h - float(rayleigh_pdf(t, 5, 1.0))))
    checks.append(("Rayleigh limit a=1e-6", worst <= 1e-6, f"max abs err {worst:.2e}"))

    worst = 0.0
    for t in (1.0, 4.0):
        h = hgm_state(t, 0.8, 5, 6).p
        s = pdf_series(t, 0.8, 5, 6).value
        worst = max(worst, abs(h - s))
    checks.append(("HGM vs series at small a", worst <= 1e-9, f"max abs err {worst:.2e}"))

    worst = 0.0
    for t in (0.5, 2.0):
        for a in (0.1, 1.0):
            d = [r.value for r in pdf_derivatives(t, a, 5, 6, order=3)]
            lhs = d[3]
            rhs = companion_p(t, a, 5, 6)[2] @ np.array(d[:3])
            worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-300))
    checks.append(("t-ODE residual of series", worst <= 1e-8, f"max rel residual {worst:.2e}"))

    s1 = hgm_state(3.0, 4.0, 5, 6)
    s2 = continue_in_t(s1, 6.0, 5, 6)
    direct = hgm_state(6.0, 4.0, 5, 6)
    dev = abs(s2.p - direct.p) / direct.p
    checks.append(("P-only continuation vs ray", dev <= 10 * DEFAULT_SETTINGS.rel_tol, f"rel dev {dev:.2e}"))

    p = DerivedParams(dof=1, k_linear=0.0, gamma1=1.0, noncentrality=0.0, gamma_b_db=0.0, n_rx=2, n_tx=2)
    out = outage_probability(DensityModel(p), 1.0)
    dev = abs(out - (1 - math.exp(-1)))
    checks.append(("Rayleigh outage N=1", dev <= 1e-6, f"abs err {dev:.2e}"))
    return checks


def cmd_selftest(man: RunManifest):
    checks = selftest_checks()
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_NUMERICAL


HANDLERS = {
    "pdf": cmd_pdf,
    "cdf": cmd_cdf,
    "outage": cmd_sweep,
    "capacity": cmd_sweep,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "selftest": cmd_selftest,
}


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(_glue_negative_values(argv))
        man = resolve(args)
        return HANDLERS[man.command](man)
    except CliError as exc:
        _report(exc.tag, str(exc))
        return exc.code
    except (SeriesError, IntegrationError, HGMError, QuadratureError, ArithmeticError,
            np.linalg.LinAlgError) as exc:
        _report("E_NUMERICAL", f"{type(exc).__name__}: {exc}")
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as exc:
        _report("E_CONFIG", str(exc))
        return EXIT_CONFIG


def _report(tag: str, message: str) -> None:
    print(f"hgm-zf: error code={tag}: {message}", file=sys.stderr)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
