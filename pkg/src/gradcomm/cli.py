"""Command-line interface: simulate, regions, fit, select, synth, probe, serve.

Unit conventions at this boundary: message sizes are BYTES and rates are
seconds per byte (human convention); all library internals work in bits and
seconds per bit, with the factor of 8 applied exactly once on the way in or
out.  Every run writes a manifest next to its outputs recording the resolved
configuration, seed, output names, and tool version.

Exit codes: 0 success, 2 usage/config error, 3 degenerate data, 4 network
error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, adaptive, commodel, estimator, netprobe, optimizer
from .commodel import TimeModelParams
from .compression import CompressorSpec
from .errors import (
    ConfigError,
    DegenerateDesignError,
    DivergenceError,
    NetworkError,
    ParameterError,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE = 3
EXIT_NETWORK = 4

BITS_PER_BYTE = 8

# Flat config keys accepted by `simulate`, with their parsers.  Unknown keys
# are rejected outright so an experiment cannot run silently misconfigured.
_CONFIG_KEYS = {
    "n": int,
    "d": int,
    "steps": int,
    "gamma": float,
    "compressor.kind": str,
    "compressor.k": int,
    "compressor.r": int,
    "alpha": float,
    "beta": float,
    "alpha_m": float,
    "beta_m": float,
    "seed": int,
    "downlink_compressed": None,  # bool, parsed specially
}

_PROBLEM_STREAM = 3  # SeedSequence spawn key for synthetic problem data


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def read_config(path: Path) -> dict:
    """Parse a flat key=value config file; unknown keys are errors."""
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    config = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        parser = _CONFIG_KEYS[key]
        try:
            config[key] = _parse_bool(value) if parser is None else parser(value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return config


def parse_sizes(text: str) -> list[int]:
    """Sizes in bytes: either 'a,b,c' or a geometric range 'lo:hi:count'."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"size range must be lo:hi:count, got {text!r}")
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        if lo < 1 or hi < lo or count < 1:
            raise ConfigError(f"invalid size range {text!r}")
        grid = np.unique(np.round(np.geomspace(lo, hi, count)).astype(np.int64))
        return [int(s) for s in grid]
    try:
        sizes = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad size list {text!r}: {exc}") from exc
    if not sizes or any(s < 1 for s in sizes):
        raise ConfigError("sizes must be positive integers (bytes)")
    return sizes


def _time_model(alpha: float, beta_per_byte: float, alpha_m: float = 0.0,
                beta_m: float = 0.0) -> TimeModelParams:
    return TimeModelParams(alpha, beta_per_byte / BITS_PER_BYTE, alpha_m, beta_m)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, subcommand: str, config: dict, seed, outputs: list[str]) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "outputs": outputs,
        "version": __version__,
    }
    path = out / f"{subcommand}.manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def cmd_synth(args) -> int:
    out = _out_dir(args)
    params = _time_model(args.alpha, args.beta, args.alpha_m, args.beta_m)
    sizes = parse_sizes(args.sizes)
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(seed)
    rows = []
    for size in sizes:
        for _ in range(args.reps):
            rows.append((size, commodel.sample_time(params, size * BITS_PER_BYTE, rng)))
    path = out / "samples.csv"
    with open(path, "w", newline="") as handle:
        handle.write("size_bytes,time_seconds\n")
        for size, t in rows:
            handle.write(f"{size},{t!r}\n")
    config = {
        "alpha": args.alpha, "beta": args.beta,
        "alpha_m": args.alpha_m, "beta_m": args.beta_m,
        "sizes": args.sizes, "reps": args.reps,
    }
    _write_manifest(out, "synth", config, seed, [path.name])
    print(f"wrote {len(rows)} samples to {path}")
    return EXIT_OK


def _fit_stream(samples_bits: list[tuple[float, float]], forgetting: float):
    """Initialize on the first two distinct sizes, then stream the rest."""
    if len(samples_bits) < 2:
        raise DegenerateDesignError("degenerate design: need at least two samples")
    x1, y1 = samples_bits[0]
    second = next((i for i in range(1, len(samples_bits)) if samples_bits[i][0] != x1), None)
    if second is None:
        raise DegenerateDesignError("degenerate design: all message sizes are equal")
    x2, y2 = samples_bits[second]
    p_max = max(x for x, _ in samples_bits)
    state = estimator.init(x1, y1, x2, y2, p_max, forgetting)
    rows = [(2, *_fit_pair(state))]
    rest = [samples_bits[i] for i in range(1, len(samples_bits)) if i != second]
    for x, y in rest:
        state, result = estimator.update(state, x, y)
        rows.append((result.k, result.alpha_hat, result.beta_hat))
    return rows


def _fit_pair(state) -> tuple[float, float]:
    result = estimator.fit(state)
    return result.alpha_hat, result.beta_hat


def _write_fit_trace(path: Path, rows) -> None:
    # beta_hat is emitted in seconds per byte (boundary convention).
    with open(path, "w", newline="") as handle:
        handle.write("k,alpha_hat,beta_hat\n")
        for k, alpha, beta in rows:
            handle.write(f"{k},{alpha!r},{beta * BITS_PER_BYTE!r}\n")


def cmd_fit(args) -> int:
    out = _out_dir(args)
    path = out / "fit_trace.csv"
    if args.live:
        rows = _fit_live(args)
        config = {
            "live": args.live, "policy": args.policy, "rounds": args.rounds,
            "pmax": args.pmax, "warmup": args.warmup, "forgetting": args.forgetting,
        }
    else:
        if args.samples is None:
            raise ConfigError("fit needs --samples PATH or --live HOST:PORT")
        if not Path(args.samples).exists():
            raise ConfigError(f"samples file not found: {args.samples}")
        samples = estimator.read_samples_csv(args.samples)
        rows = _fit_stream(samples, args.forgetting)
        config = {"samples": args.samples, "forgetting": args.forgetting}
    _write_fit_trace(path, rows)
    seed = args.seed if args.seed is not None else 0
    _write_manifest(out, "fit", config, seed, [path.name])
    k, alpha, beta = rows[-1]
    print(f"k={k} alpha_hat={alpha!r} beta_hat={beta * BITS_PER_BYTE!r} (s/byte)")
    return EXIT_OK


def _fit_live(args) -> list[tuple[int, float, float]]:
    host, _, port_text = args.live.rpartition(":")
    if not host or not port_text.isdigit():
        raise ConfigError(f"--live expects HOST:PORT, got {args.live!r}")
    port = int(port_text)
    p_max_bytes = args.pmax
    if p_max_bytes < 2:
        raise ConfigError("--pmax must be at least 2 bytes for two distinct sizes")
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(seed)

    def one_rtt(size_bytes: int) -> float:
        result = netprobe.probe(host, port, [size_bytes], reps=1, warmup=args.warmup)
        if result.error or not result.samples:
            raise NetworkError(result.error or "probe returned no samples")
        return result.samples[0].rtt_seconds

    x1 = p_max_bytes
    x2 = max(1, p_max_bytes // 16)
    if x2 == x1:
        x2 = x1 - 1
    state = estimator.init(
        x1 * BITS_PER_BYTE, one_rtt(x1), x2 * BITS_PER_BYTE, one_rtt(x2),
        p_max_bytes * BITS_PER_BYTE, args.forgetting,
    )
    rows = [(2, *_fit_pair(state))]
    for _ in range(args.rounds):
        bits = estimator.propose_next_size(state, args.policy, rng)
        size_bytes = min(p_max_bytes, max(1, round(bits / BITS_PER_BYTE)))
        rtt = one_rtt(size_bytes)
        state, result = estimator.update(state, size_bytes * BITS_PER_BYTE, rtt)
        rows.append((result.k, result.alpha_hat, result.beta_hat))
    return rows


def cmd_select(args) -> int:
    out = _out_dir(args)
    if args.fit is not None:
        trace = Path(args.fit)
        if not trace.exists():
            raise ConfigError(f"fit trace not found: {trace}")
        last = None
        with open(trace, newline="") as handle:
            import csv as _csv

            for row in _csv.DictReader(handle):
                last = row
        if last is None:
            raise ConfigError(f"fit trace {trace} has no rows")
        alpha = float(last["alpha_hat"])
        beta_per_byte = float(last["beta_hat"])
    elif args.alpha is not None and args.beta is not None:
        alpha, beta_per_byte = args.alpha, args.beta
    else:
        raise ConfigError("select needs either --fit PATH or both --alpha and --beta")
    obj = adaptive.SelectionObjective(
        family=args.family, d=args.d, n=args.n,
        alpha=alpha, beta=beta_per_byte / BITS_PER_BYTE, b=args.b,
    )
    k_star, cost = adaptive.select_power(obj)
    path = out / "jcurve.csv"
    with open(path, "w", newline="") as handle:
        handle.write("k,predicted_cost\n")
        for k in adaptive.candidate_powers(obj.d):
            handle.write(f"{int(k)},{adaptive.predicted_cost(obj, int(k))!r}\n")
    config = {
        "family": args.family, "d": args.d, "n": args.n, "b": args.b,
        "alpha": alpha, "beta": beta_per_byte,
        "fit": args.fit,
    }
    seed = args.seed if args.seed is not None else 0
    _write_manifest(out, "select", config, seed, [path.name])
    print(f"k_star={k_star} predicted_cost={cost!r}")
    return EXIT_OK


def cmd_regions(args) -> int:
    out = _out_dir(args)
    params = _time_model(args.alpha, args.beta)
    sizes = parse_sizes(args.sizes)
    regions_path = out / "regions.csv"
    with open(regions_path, "w", newline="") as handle:
        handle.write("size_bits,region\n")
        for size in sizes:
            bits = size * BITS_PER_BYTE
            handle.write(f"{bits},{commodel.classify_region(params, bits, args.rho).value}\n")
    if args.omegas:
        omegas = [float(w) for w in args.omegas.split(",")]
    else:
        omegas = [float(w) for w in np.geomspace(1.0, 1e6, 61)]
    curve = commodel.speedup_curve(params, max(sizes) * BITS_PER_BYTE, sorted(omegas), args.rho)
    speedup_path = out / "speedup.csv"
    curve.to_csv(speedup_path)
    config = {"alpha": args.alpha, "beta": args.beta, "sizes": args.sizes,
              "rho": args.rho, "omegas": args.omegas}
    seed = args.seed if args.seed is not None else 0
    _write_manifest(out, "regions", config, seed, [regions_path.name, speedup_path.name])
    print(f"wrote {regions_path} and {speedup_path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    out = _out_dir(args)
    config = read_config(Path(args.config)) if args.config else {}
    overrides = {
        "n": args.n, "d": args.d, "steps": args.steps, "gamma": args.gamma,
        "compressor.kind": args.compressor, "compressor.k": args.k,
        "compressor.r": args.r, "alpha": args.alpha, "beta": args.beta,
        "alpha_m": args.alpha_m, "beta_m": args.beta_m,
        "downlink_compressed": args.downlink_compressed or None,
    }
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    missing = [key for key in ("n", "d", "steps", "alpha", "beta") if key not in config]
    if missing:
        raise ConfigError(f"simulate needs values for: {', '.join(missing)}")
    seed = args.seed if args.seed is not None else config.get("seed", 0)
    config["seed"] = seed
    config.setdefault("alpha_m", 0.0)
    config.setdefault("beta_m", 0.0)
    config.setdefault("compressor.kind", "identity")
    config.setdefault("downlink_compressed", False)

    params = _time_model(config["alpha"], config["beta"], config["alpha_m"], config["beta_m"])
    spec = CompressorSpec(
        kind=config["compressor.kind"],
        k=config.get("compressor.k"),
        r=config.get("compressor.r"),
    )
    problem_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(_PROBLEM_STREAM,))
    )
    problem = optimizer.Problem.mean(problem_rng.standard_normal((config["n"], config["d"])))
    gamma = config.get("gamma")
    if gamma is None:
        gamma = optimizer.default_stepsize(problem, spec)
    config["gamma"] = gamma
    sim_config = optimizer.SimConfig(
        steps=config["steps"],
        time_model=params,
        gamma=gamma,
        compressor=spec,
        seed=seed,
        downlink_compressed=config["downlink_compressed"],
    )
    trace = optimizer.run_compressed_gd(problem, sim_config)
    path = out / "trace.csv"
    trace.to_csv(path)
    final = trace.rows[-1]
    _write_manifest(out, "simulate", config, seed, [path.name])
    print(
        f"final_objective={final.objective!r} wall_clock_s={final.wall_clock_s!r} "
        f"uplink_bits={final.uplink_bits} downlink_bits={final.downlink_bits}"
    )
    return EXIT_OK


def cmd_probe(args) -> int:
    out = _out_dir(args)
    sizes = parse_sizes(args.sizes)
    result = netprobe.probe(
        args.host, args.port, sizes, reps=args.reps, warmup=args.warmup,
        timeout=args.timeout,
    )
    path = out / "samples.csv"
    netprobe.write_samples_csv(path, result.samples)
    config = {"host": args.host, "port": args.port, "sizes": args.sizes,
              "reps": args.reps, "warmup": args.warmup}
    seed = args.seed if args.seed is not None else 0
    _write_manifest(out, "probe", config, seed, [path.name])
    if result.error:
        print(f"error: {result.error} ({len(result.samples)} partial samples kept)",
              file=sys.stderr)
        return EXIT_NETWORK
    print(f"wrote {len(result.samples)} samples to {path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    server = netprobe.PingPongServer(args.host, args.port, args.pmax)
    port = server.bind()
    print(f"serving on {args.host}:{port} (p_max={args.pmax} bytes)", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="randomness seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--config", default=None, help="flat key=value config file")

    parser = argparse.ArgumentParser(
        prog="gradcomm",
        description="Model, measure, and simulate communication cost of "
                    "distributed optimization with gradient compression.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common],
                       help="generate synthetic (size, delay) samples")
    p.add_argument("--alpha", type=float, required=True, help="startup time, seconds")
    p.add_argument("--beta", type=float, required=True, help="seconds per byte")
    p.add_argument("--alpha-m", type=float, default=0.0, dest="alpha_m")
    p.add_argument("--beta-m", type=float, default=0.0, dest="beta_m")
    p.add_argument("--sizes", required=True, help="bytes: 'a,b,c' or 'lo:hi:count'")
    p.add_argument("--reps", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", parents=[common],
                       help="estimate (alpha, beta) from samples or a live server")
    p.add_argument("--samples", default=None, help="sample CSV (size_bytes,time_seconds)")
    p.add_argument("--live", default=None, help="HOST:PORT of a running serve instance")
    p.add_argument("--policy", choices=("uniform", "grid"), default="uniform")
    p.add_argument("--rounds", type=int, default=16, help="live probe rounds")
    p.add_argument("--pmax", type=int, default=1 << 20, help="largest probe size, bytes")
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--forgetting", type=float, default=1.0)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", parents=[common],
                       help="pick the compression power minimizing predicted time")
    p.add_argument("--alpha", type=float, default=None, help="startup time, seconds")
    p.add_argument("--beta", type=float, default=None, help="seconds per byte")
    p.add_argument("--fit", default=None, help="fit trace CSV; its last row is used")
    p.add_argument("--family", choices=adaptive.SELECTION_FAMILIES, default="rand_k")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--b", type=int, default=32)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("regions", parents=[common],
                       help="classify sizes and tabulate the speedup curve")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True, help="seconds per byte")
    p.add_argument("--sizes", required=True, help="bytes: 'a,b,c' or 'lo:hi:count'")
    p.add_argument("--rho", type=float, default=commodel.DEFAULT_RHO)
    p.add_argument("--omegas", default=None, help="comma list of compression ratios")
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("simulate", parents=[common],
                       help="run the distributed GD simulator on the mean problem")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--compressor", default=None,
                   choices=("identity", "rand_k", "top_k", "natural", "rank_r"))
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--beta", type=float, default=None, help="seconds per byte")
    p.add_argument("--alpha-m", type=float, default=None, dest="alpha_m")
    p.add_argument("--beta-m", type=float, default=None, dest="beta_m")
    p.add_argument("--downlink-compressed", action="store_true", dest="downlink_compressed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("probe", parents=[common],
                       help="measure (size, RTT) samples against a serve instance")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--sizes", required=True, help="bytes: 'a,b,c' or 'lo:hi:count'")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--timeout", type=float, default=netprobe.DEFAULT_TIMEOUT_S)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("serve", parents=[common],
                       help="run the ping-pong measurement server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--pmax", type=int, default=netprobe.DEFAULT_P_MAX_BYTES,
                   help="largest accepted payload, bytes")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config is not None and args.command != "simulate":
        print("error: --config only applies to the simulate subcommand", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateDesignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except NetworkError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NETWORK
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
