"""Command-line front end.

    python -m mfris analyze  [--config PATH] [--points LIST] [--scheme LIST] [--out PATH]
    python -m mfris optimize [--config PATH] [--seed U64] [--trials N] [--scheme LIST] [--out PATH]
    python -m mfris robust   [--config PATH] [--seed U64] [--trials N] [--scheme LIST] [--out PATH]
    python -m mfris sweep    --config PATH [--seed U64] [--points LIST] [--trials N]
                             [--scheme LIST] [--csi MODE] [--out PATH]
    python -m mfris validate [--config PATH] [--seed U64] [--samples N] [--out PATH]

Exit status: 0 on success, 2 when some grid points failed (or sampling found
violations), 1 on configuration errors.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from .scenario import CSI_MODES, ConfigError, ScenarioConfig, load_config, watts_to_dbm

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


def _list(text):
    return [s.strip() for s in text.split(",") if s.strip()]


def _floats(text):
    try:
        return [float(s) for s in _list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _u64(text):
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    ap = argparse.ArgumentParser(prog="mfris", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="JSON scenario file")
        p.add_argument("--seed", type=_u64, help="overrides the config seed")
        p.add_argument("--out", help="output CSV (default: stdout)")
        p.add_argument("--timing", action="store_true", help="fill the wall_ms column")

    p = sub.add_parser("analyze", help="closed-form single-user SNR versus M_A")
    common(p)
    p.add_argument("--points", type=_floats, help="M_A values (default 0..M)")
    p.add_argument("--scheme", type=_list, default=["mf-ris", "self-sustainable"])

    for name, help_ in (("optimize", "perfect-CSI alternating optimization"),
                        ("robust", "worst-case robust optimization on estimated channels")):
        p = sub.add_parser(name, help=help_)
        common(p)
        p.add_argument("--trials", type=int, default=1)
        p.add_argument("--scheme", type=_list, default=["mf-ris"])

    p = sub.add_parser("sweep", help="Monte Carlo sweep defined by the config's sweep section")
    common(p, config_required=True)
    p.add_argument("--points", type=_floats, help="grid values, comma separated")
    p.add_argument("--trials", type=int)
    p.add_argument("--scheme", type=_list)
    p.add_argument("--csi", choices=CSI_MODES)

    p = sub.add_parser("validate", help="robust solve, then sample errors and report violations")
    common(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--cascade", choices=("independent", "consistent"), default="independent")
    return ap


def _config(args) -> tuple[ScenarioConfig, dict]:
    from .scenario import default_config
    if args.config:
        cfg, sweep = load_config(args.config)
    else:
        cfg, sweep = default_config(), {}
    if args.seed is not None:
        cfg = replace(cfg, rng_seed=args.seed)
    return cfg, sweep


def _write(table, args):
    from .harness import csv_text, emit_csv
    if args.out:
        emit_csv(table, args.out, timing=args.timing)
    else:
        if not table:
            raise ValueError("empty result table")
        sys.stdout.write(csv_text(table, timing=args.timing))
    return EXIT_PARTIAL if any(r.failed for r in table) else EXIT_OK


def _analyze(args):
    from .analysis import example_params
    from .harness import SisoSpec, SweepSpec, run_sweep
    if args.config:
        cfg, sweep = _config(args)
        siso = SisoSpec(**sweep.get("siso", {}))
    else:
        # the worked single-user example
        ex = example_params()
        from .scenario import default_config
        cfg = default_config(P_BS_max=ex.P_BS_max, M=ex.M, sigma0_sq=ex.sigma0_sq,
                            sigma1_sq=ex.sigma1_sq, beta_max=ex.beta_max, energy=ex.energy)
        siso = SisoSpec(h_sq_dB=-45.0, g_sq_dB=-60.0, sumPA_W=ex.sumPA)
    points = args.points if args.points is not None else list(range(cfg.M + 1))
    spec = SweepSpec("M_A", tuple(points), 1, tuple(args.scheme), "perfect", siso=siso)
    return _write(run_sweep(cfg, spec), args)


def _single(args, csi):
    from .harness import SweepSpec, run_sweep
    cfg, _ = _config(args)
    spec = SweepSpec("P_BS_max", (float(watts_to_dbm(cfg.P_BS_max)),), args.trials,
                     tuple(args.scheme), csi)
    return _write(run_sweep(cfg, spec), args)


def _sweep(args):
    from .harness import SweepSpec, run_sweep
    cfg, sweep = _config(args)
    spec = SweepSpec.from_dict(sweep, values=tuple(args.points) if args.points else None,
                               trials=args.trials, csi=args.csi,
                               schemes=tuple(args.scheme) if args.scheme else None)
    return _write(run_sweep(cfg, spec), args)


def _validate(args):
    from .channel import generate_channel_set
    from .harness import trial_seed
    from .optimizer.model import Instance
    from .robust.ao import robust_alternating_optimize
    from .robust.validate import validate_by_sampling, write_violations_csv
    if args.samples < 1:
        raise ConfigError(["--samples >= 1"])
    cfg, _ = _config(args)
    seed = trial_seed(cfg.rng_seed, 0)
    cs = generate_channel_set(cfg, np.random.default_rng(seed))
    inst = Instance.from_config(cfg, cs, "mf-ris")
    res = robust_alternating_optimize(inst, rng=np.random.default_rng([seed, 1]))
    report = validate_by_sampling(inst, res.state, res.beams, args.samples,
                                  np.random.default_rng([seed, 2]), res.certificate, args.cascade)
    print(f"certified worst-case sum rate {res.sum_rate:.6f} bit/s/Hz; {report.summary()}",
          file=sys.stderr)
    if args.out:
        write_violations_csv(report, args.out)
    else:
        for draw, name, v in report.rows:
            print(f"{draw},{name},{v:.9g}")
    return EXIT_OK if report.clean else EXIT_PARTIAL


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "trials", None) is not None and args.trials < 1:
        ap.error("--trials must be >= 1")
    handlers = {"analyze": _analyze, "optimize": lambda a: _single(a, "perfect"),
                "robust": lambda a: _single(a, "robust"), "sweep": _sweep, "validate": _validate}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
