"""Command-line orchestration: regions, rate tables, simulations, checks.

Exit codes: 0 success, 2 validation failure (with a one-line diagnostic
naming the offending flag), 3 enumeration budget refusal.  Every command is
deterministic given its flags and seed; ``--format`` changes encoding only.
Rates are reported in nats unless ``--bits`` is given, which divides by
ln 2 at the output layer only.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import analytics, codec, mac_regions, montecarlo, rac_rates
from .analytics import PowerPair
from .codec import EnumerationBudgetError
from .mvnormal import mvn_lower_prob, q_inv
from .noise import make_noise, noise_from_config

_LN2 = math.log(2.0)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EnumerationBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="macran")
    sub = parser.add_subparsers(dest="command", required=True)

    reg = sub.add_parser("region", help="second-order region boundaries (MAC)")
    reg.add_argument("--decoder", choices=["jnn", "sic"], default="jnn")
    reg.add_argument("--compare", action="store_true", help="emit both decoders plus gap")
    reg.add_argument("--case", required=True, choices=list(mac_regions.CASES))
    reg.add_argument("--alpha", type=float, default=None)
    reg.add_argument("--p1", type=float, required=True)
    reg.add_argument("--p2", type=float, required=True)
    reg.add_argument("--xi", type=float, default=3.0)
    reg.add_argument("--eps", type=float, required=True)
    reg.add_argument("--l1-min", type=float, default=None)
    reg.add_argument("--l1-max", type=float, default=None)
    reg.add_argument("--l1-points", type=int, default=50)
    reg.add_argument("--splits", type=int, default=101, help="SIC split-grid size")
    _output_flags(reg)
    reg.set_defaults(func=cmd_region)

    rate = sub.add_parser("rate", help="RAC achievable-rate table over k")
    rate.add_argument("--k-min", type=int, default=1)
    rate.add_argument("--k-max", type=int, required=True)
    rate.add_argument("--n", type=int, required=True, help="blocklength n_k")
    rate.add_argument("--p", type=float, required=True)
    rate.add_argument("--xi", type=float, default=3.0)
    rate.add_argument("--eps", type=float, required=True)
    rate.add_argument("--offset", type=float, default=0.0)
    _output_flags(rate)
    rate.set_defaults(func=cmd_rate)

    sm = sub.add_parser("sim-mac", help="Monte Carlo MAC simulation")
    sm.add_argument("--config", default=None, help="JSON config file (nested sections)")
    sm.add_argument("--n", type=int)
    sm.add_argument("--m1", type=int)
    sm.add_argument("--m2", type=int)
    sm.add_argument("--p1", type=float)
    sm.add_argument("--p2", type=float)
    sm.add_argument("--noise", default="gaussian", choices=["gaussian", "uniform", "laplace"])
    sm.add_argument("--decoder", choices=["jnn", "sic"], default="jnn")
    sm.add_argument("--trials", type=int, default=1000)
    sm.add_argument("--seed", type=int, default=0)
    _output_flags(sm, fmt=False)
    sm.set_defaults(func=cmd_sim_mac)

    sr = sub.add_parser("sim-rac", help="Monte Carlo rateless RAC simulation")
    sr.add_argument("--config", default=None)
    sr.add_argument("--cap-k", type=int)
    sr.add_argument("--k", type=int, help="number of active users")
    sr.add_argument("--m", type=int)
    sr.add_argument("--p", type=float)
    sr.add_argument("--layout", type=str, help="comma-separated stopping times n1,...,nK")
    sr.add_argument("--lambdas", type=str, default=None, help="per-stage thresholds (default P/2)")
    sr.add_argument("--noise", default="gaussian", choices=["gaussian", "uniform", "laplace"])
    sr.add_argument("--decoder", choices=["jnn", "sic"], default="jnn")
    sr.add_argument("--trials", type=int, default=1000)
    sr.add_argument("--seed", type=int, default=0)
    _output_flags(sr, fmt=False)
    sr.set_defaults(func=cmd_sim_rac)

    ver = sub.add_parser("verify", help="run identity and property checks")
    ver.add_argument("--quick", action="store_true", help="subset completing under a minute")
    ver.add_argument("--seed", type=int, default=0)
    ver.set_defaults(func=cmd_verify)
    return parser


def _output_flags(p, fmt: bool = True) -> None:
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    if fmt:
        p.add_argument("--format", choices=["csv", "json"], default="csv")
        p.add_argument("--bits", action="store_true", help="display rates in bits")


# ---------------------------------------------------------------------------
# region
# ---------------------------------------------------------------------------


def cmd_region(args) -> int:
    pp = PowerPair(args.p1, args.p2)
    if args.case in ("i", "iii", "v") and args.alpha is None:
        raise ValueError(f"--alpha is required for case {args.case}")
    jnn = mac_regions.mac_jnn_region(args.case, pp, args.xi, args.eps, alpha=args.alpha)
    sic = mac_regions.mac_sic_region(
        args.case,
        pp,
        args.xi,
        args.eps,
        alpha=args.alpha,
        split_grid=mac_regions.default_split_grid(args.eps, args.splits),
    )
    grid = _l1_grid(args, sic)
    meta = {
        "schema": 1,
        "case": args.case,
        "alpha": args.alpha,
        "p1": args.p1,
        "p2": args.p2,
        "xi": args.xi,
        "eps": args.eps,
        "units": "bits" if args.bits else "nats",
    }
    scale = 1.0 / _LN2 if args.bits else 1.0
    if args.compare:
        rows = mac_regions.compare_regions(jnn, sic, grid)
        rows = [tuple(v * scale for v in row) for row in rows]
        header = ["l1", "l2_jnn", "l2_sic", "gap"]
        meta["decoder"] = "compare"
    else:
        region = jnn if args.decoder == "jnn" else sic
        rows = [(l1 * scale, l2 * scale) for l1, l2 in region.boundary_points(grid)]
        header = ["l1", "l2_min"]
        meta["decoder"] = args.decoder
    _emit(args, meta, header, rows)
    return 0


def _l1_grid(args, sic_region) -> np.ndarray:
    lo, hi = args.l1_min, args.l1_max
    if lo is None or hi is None:
        corners = sic_region.corners
        span_lo = corners[0][0] if corners else 0.0
        span_hi = corners[-1][0] if corners else 3.0
        lo = span_lo if lo is None else lo
        hi = span_hi if hi is None else hi
    if not hi > lo:
        raise ValueError("--l1-max must exceed --l1-min")
    if args.l1_points < 2:
        raise ValueError("--l1-points must be >= 2")
    return np.linspace(lo, hi, args.l1_points)


# ---------------------------------------------------------------------------
# rate
# ---------------------------------------------------------------------------


def cmd_rate(args) -> int:
    if args.k_min < 1 or args.k_max < args.k_min:
        raise ValueError("--k-min/--k-max must satisfy 1 <= k_min <= k_max")
    table = rac_rates.rate_table(
        range(args.k_min, args.k_max + 1), args.n, args.p, args.xi, args.eps, args.offset
    )
    scale = 1.0 / _LN2 if args.bits else 1.0
    rows = [
        (pt.k, pt.log_m_jnn * scale, pt.log_m_sic * scale, pt.mu_k * scale) for pt in table
    ]
    meta = {
        "schema": 1,
        "n": args.n,
        "p": args.p,
        "xi": args.xi,
        "eps": args.eps,
        "offset": args.offset,
        "units": "bits" if args.bits else "nats",
    }
    _emit(args, meta, ["k", "jnn", "sic", "mu_k"], rows)
    return 0


# ---------------------------------------------------------------------------
# simulations
# ---------------------------------------------------------------------------


def cmd_sim_mac(args) -> int:
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        chan, sim = raw.get("channel", {}), raw.get("sim", {})
        cfg = montecarlo.MacSimConfig(
            n=int(chan["n"]),
            m1=int(chan["m1"]),
            m2=int(chan["m2"]),
            pp=PowerPair(float(chan["p1"]), float(chan["p2"])),
            noise=noise_from_config(chan.get("noise", {"kind": "gaussian"})),
            decoder=sim.get("decoder", "jnn"),
            trials=int(sim.get("trials", 1000)),
            master_seed=int(sim.get("seed", 0)),
        )
    else:
        for flag in ("n", "m1", "m2", "p1", "p2"):
            if getattr(args, flag) is None:
                raise ValueError(f"--{flag} is required without --config")
        cfg = montecarlo.MacSimConfig(
            n=args.n,
            m1=args.m1,
            m2=args.m2,
            pp=PowerPair(args.p1, args.p2),
            noise=make_noise(args.noise),
            decoder=args.decoder,
            trials=args.trials,
            master_seed=args.seed,
        )
    result = montecarlo.simulate_mac(cfg)
    _write_text(args.out, json.dumps(result.to_dict(cfg.echo(), cfg.master_seed), indent=2))
    return 0


def cmd_sim_rac(args) -> int:
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        chan, sim = raw.get("channel", {}), raw.get("sim", {})
        layout = tuple(int(v) for v in chan["layout"])
        lambdas = tuple(float(v) for v in chan.get("lambdas", [float(chan["p"]) / 2] * len(layout)))
        cfg = montecarlo.RacSimConfig(
            cap_k=int(chan["cap_k"]),
            k_active=int(chan["k_active"]),
            m=int(chan["m"]),
            p=float(chan["p"]),
            layout=layout,
            lambdas=lambdas,
            noise=noise_from_config(chan.get("noise", {"kind": "gaussian"})),
            decoder=sim.get("decoder", "jnn"),
            trials=int(sim.get("trials", 1000)),
            master_seed=int(sim.get("seed", 0)),
        )
    else:
        for flag in ("cap_k", "k", "m", "p", "layout"):
            if getattr(args, flag) is None:
                raise ValueError(f"--{flag.replace('_', '-')} is required without --config")
        layout = tuple(int(v) for v in args.layout.split(","))
        if args.lambdas is None:
            lambdas = tuple(args.p / 2.0 for _ in layout)
        else:
            lambdas = tuple(float(v) for v in args.lambdas.split(","))
        cfg = montecarlo.RacSimConfig(
            cap_k=args.cap_k,
            k_active=args.k,
            m=args.m,
            p=args.p,
            layout=layout,
            lambdas=lambdas,
            noise=make_noise(args.noise),
            decoder=args.decoder,
            trials=args.trials,
            master_seed=args.seed,
        )
    result = montecarlo.simulate_rac(cfg)
    _write_text(args.out, json.dumps(result.to_dict(cfg.echo(), cfg.master_seed), indent=2))
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def cmd_verify(args) -> int:
    checks = [
        ("jacobian-identity", check_jacobian_identity),
        ("vrs-reductions", check_vrs_reductions),
        ("first-order-gap", check_first_order_gap),
        ("dispersion-psd", check_dispersion_psd),
        ("decoder-equivalence", check_decoder_equivalence),
        ("empirical-a-covariance", check_empirical_a_covariance),
        ("boundary-consistency", check_boundary_consistency),
    ]
    failures = 0
    for name, fn in checks:
        try:
            detail = fn(quick=args.quick, seed=args.seed)
            print(f"PASS {name} ({detail})")
        except Exception as exc:  # noqa: BLE001 - report and continue
            failures += 1
            print(f"FAIL {name}: {exc}")
    return 0 if failures == 0 else 1


def check_jacobian_identity(quick: bool = False, seed: int = 0) -> str:
    rng = np.random.default_rng(seed)
    pairs = 5 if quick else 20
    worst = 0.0
    for _ in range(pairs):
        p1, p2 = rng.uniform(0.1, 50.0, size=2)
        for xi in (1.0, 1.8, 3.0, 6.0):
            err = analytics.jacobian_identity_error(PowerPair(p1, p2), xi)
            worst = max(worst, err)
    if worst > 1e-12:
        raise AssertionError(f"max entrywise error {worst:.3e} exceeds 1e-12")
    return f"max error {worst:.2e} over {pairs} power pairs x 4 xi values"


def check_vrs_reductions(quick: bool = False, seed: int = 0) -> str:
    ps = np.geomspace(1e-2, 1e2, 25 if quick else 100)
    worst = 0.0
    for xi in (1.0, 1.8, 3.0, 6.0):
        for p in ps:
            for k in (1, 2, 3, 7):
                _, _, v_rs = analytics.rac_dispersions(k, k, float(p), xi)
                worst = max(worst, abs(v_rs - analytics.dispersion_v(float(p), xi)))
            _, _, v21 = analytics.rac_dispersions(2, 1, float(p), xi)
            pp = PowerPair(float(p), float(p))
            worst = max(worst, abs(v21 - analytics.dispersions(pp, xi).v_1))
    if worst > 1e-12:
        raise AssertionError(f"reduction mismatch {worst:.3e} exceeds 1e-12")
    return f"max mismatch {worst:.2e}"


def check_first_order_gap(quick: bool = False, seed: int = 0) -> str:
    for p in (0.01, 0.1, 1.0, 10.0, 100.0):
        if rac_rates.first_order_gap(1, p) != 0.0:
            raise AssertionError(f"mu(1, {p}) must be exactly 0")
        for k in range(2, 51):
            mu = rac_rates.first_order_gap(k, p)
            if not mu < 0.0:
                raise AssertionError(f"mu({k}, {p}) = {mu} is not negative")
    return "mu(k) < 0 on k in [2..50] x 5 powers, mu(1) = 0"


def check_dispersion_psd(quick: bool = False, seed: int = 0) -> str:
    grid = np.geomspace(1e-2, 1e2, 5 if quick else 9)
    count = 0
    for p1 in grid:
        for p2 in grid:
            for xi in (1.0, 1.8, 3.0, 6.0):
                for which in ("V1", "V2", "Vfull"):
                    analytics.dispersion_matrix(which, PowerPair(p1, p2), xi)
                    count += 1
    return f"{count} matrices constructed (constructor enforces PSD)"


def check_decoder_equivalence(quick: bool = False, seed: int = 0) -> str:
    from .codec import Codebook, RacCodebook

    instances = 100 if quick else 1000
    rng = np.random.default_rng(seed + 17)
    n, m = 40, 12
    pp = PowerPair(1.5, 0.8)
    for _ in range(instances):
        cb1 = Codebook.sample(m, n, pp.p1, rng)
        cb2 = Codebook.sample(m, n, pp.p2, rng)
        y = cb1.rows[rng.integers(m)] + cb2.rows[rng.integers(m)] + rng.standard_normal(n)
        pair = codec.jnn_decode_mac(y, cb1, cb2)
        best, arg = -np.inf, None
        for w1 in range(m):
            for w2 in range(m):
                val = codec.info_density_mac_joint(cb1.rows[w1], cb2.rows[w2], y, pp.p1, pp.p2)
                if val > best:
                    best, arg = val, (w1, w2)
        if arg != pair:
            raise AssertionError(f"distance argmin {pair} != density argmax {arg}")
    return f"{instances} joint-decode instances match the density argmax exactly"


def check_empirical_a_covariance(quick: bool = False, seed: int = 0) -> str:
    n = 10**5 if quick else 10**6
    err = analytics.verify_jacobian_identity(
        PowerPair(5.0, 2.0), 3.0, n_mc=n, seed=seed, noise=make_noise("gaussian")
    )
    return f"exact error {err:.2e}; empirical covariance within 5 se at N={n}"


def check_boundary_consistency(quick: bool = False, seed: int = 0) -> str:
    pp = PowerPair(5.0, 2.0)
    v1 = analytics.dispersion_matrix("V1", pp, 3.0)
    grid = np.linspace(0.6, 1.6, 3 if quick else 7)
    from .mvnormal import qinv_boundary

    rb = qinv_boundary(v1, 0.2, grid)
    for a1, a2 in rb.points:
        prob = mvn_lower_prob((a1, a2), v1, 1e-9)
        if abs(prob - 0.8) > 2 * rb.boundary_tol:
            raise AssertionError(f"boundary point ({a1}, {a2}) re-evaluates to {prob}")
    return f"{len(rb.points)} boundary points re-evaluate to 1-eps within 2x tolerance"


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _emit(args, meta: dict, header: list[str], rows) -> None:
    if getattr(args, "format", "csv") == "json":
        payload = dict(meta)
        payload["columns"] = header
        payload["rows"] = [[_json_num(v) for v in row] for row in rows]
        _write_text(args.out, json.dumps(payload, indent=2))
        return
    lines = ["# " + ", ".join(f"{k}={v}" for k, v in meta.items())]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt_num(v) for v in row))
    _write_text(args.out, "\n".join(lines))


def _fmt_num(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12g}"


def _json_num(v):
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "-inf" if v < 0 else "inf"
    return v


def _write_text(out: str, text: str) -> None:
    if out == "-":
        print(text)
    else:
        with open(out, "w") as fh:
            fh.write(text + "\n")


if __name__ == "__main__":
    raise SystemExit(main())
