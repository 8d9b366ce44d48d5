"""Command-line entry points: train, sweep, equiv-check, regret-check.

Exit codes: 0 success, 2 usage/config, 3 data/parse, 4 numeric,
5 check-failed.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from . import __version__, evaluation, kernels, oracle
from .core import (
    ConfigError,
    DataError,
    Linear,
    Logistic,
    NumericError,
    PenaltyKind,
    PenaltyMode,
    PenaltySchedule,
    Squared,
    UftrlError,
)
from .data import Dataset, parse_libsvm, shuffle, synth_linear, to_csr
from .evaluation import (
    PassMetrics,
    adversarial_regret_run,
    auc,
    density,
    run_pass,
    sweep,
    sweep_to_csv,
)
from .learners import (
    AlgorithmConfig,
    Family,
    LearningRateSchedule,
    LossHandling,
    RateMode,
    WeightVector,
    init,
    predict,
    save_checkpoint,
    step,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_CHECK_FAILED = 5

DEFAULT_GAMMA_GRID = [round(g, 6) for g in np.linspace(0.3, 1.9, 12)]


def _loss_from_flags(args) -> object:
    if args.loss == "logistic":
        return Logistic()
    if args.loss == "squared":
        return Squared(args.squared_target)
    return Linear()


def _config_from_flags(args) -> AlgorithmConfig:
    pen = PenaltySchedule(
        lam=getattr(args, "lam", 0.0),
        mode=PenaltyMode(args.penalty_mode),
        kind=PenaltyKind.L1,
    )
    return AlgorithmConfig(
        family=Family(args.family),
        loss_handling=(
            LossHandling.IMPLICIT if args.implicit else LossHandling.LINEARIZED
        ),
        rate=LearningRateSchedule(RateMode(args.rate), args.gamma),
        penalty=pen,
        sigma_floor=args.sigma_floor,
        loss=_loss_from_flags(args),
    )


def _load_dataset(args) -> tuple[Dataset, dict]:
    if getattr(args, "synth", None):
        params = {}
        for part in args.synth.split(","):
            key, _, val = part.partition("=")
            if not val:
                raise ConfigError(f"bad synth spec fragment {part!r}")
            params[key.strip()] = val.strip()
        n = int(params.get("n", 1000))
        d = int(params.get("d", 1000))
        informative = int(params.get("informative", 10))
        noise = float(params.get("noise", 0.1))
        seed = int(params.get("seed", 0))
        ds = synth_linear(n, d, informative, noise, seed)
        desc = {"synth": {"n": n, "d": d, "informative": informative,
                          "noise": noise, "seed": seed}}
        return ds, desc
    if not getattr(args, "data", None):
        raise ConfigError("either --data or --synth is required")
    ds = parse_libsvm(args.data)
    return ds, {"path": args.data, "examples": len(ds)}


def _write_manifest(path: str, command: str, args_dict: dict, dataset_desc: dict,
                    started: float) -> None:
    manifest = {
        "command": command,
        "config": args_dict,
        "dataset": dataset_desc,
        "tool_version": __version__,
        "wall_time_s": round(time.time() - started, 6),
    }
    with open(path, "w", encoding="ascii") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w", encoding="ascii") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _kernel_eligible(cfg: AlgorithmConfig) -> bool:
    return (
        isinstance(cfg.loss, Logistic)
        and cfg.loss_handling is LossHandling.LINEARIZED
        and cfg.penalty.kind is PenaltyKind.L1
        and cfg.penalty.mode in (PenaltyMode.CONSTANT, PenaltyMode.PRIOR_ONCE)
        and cfg.rate.mode is RateMode.PER_COORDINATE_ADAPTIVE
    )


def cmd_train(args) -> int:
    started = time.time()
    ds, desc = _load_dataset(args)
    if args.seed is not None:
        ds = shuffle(ds, args.seed)
    cfg = _config_from_flags(args)
    if _kernel_eligible(cfg):
        csr = to_csr(ds)
        metrics, pass_state = run_pass(
            csr, args.family, args.lam, args.gamma, args.sigma_floor,
            args.penalty_mode,
        )
        final_nnz = int(np.count_nonzero(pass_state.final_weights()))
    else:
        state = init(cfg)
        scores = []
        total_loss = 0.0
        for ex in ds:
            p = predict(state, ex)
            scores.append((p.margin, ex.label))
            state, rec = step(state, ex, collect_record=True)
            total_loss += rec.loss
        try:
            auc_val = auc(scores)
        except UftrlError:
            auc_val = float("nan")
        metrics = PassMetrics(
            auc=auc_val,
            density=density(WeightVector(dict(state.x)), max(ds.feature_universe, 1)),
            online_loss=total_loss / max(len(ds), 1),
            rounds=len(ds),
        )
        final_nnz = len(state.x)
        if args.out:
            save_checkpoint(state, args.out)
    if args.out and _kernel_eligible(cfg):
        _save_kernel_checkpoint(pass_state, csr, cfg, args.out)
    payload = {
        "auc": metrics.auc,
        "density": metrics.density,
        "online_loss": metrics.online_loss,
        "T": metrics.rounds,
    }
    sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")
    if args.out:
        _write_manifest(
            args.out + ".manifest.json", "train", _flags_dict(args), desc, started
        )
    del final_nnz
    return EXIT_OK


def _save_kernel_checkpoint(pass_state, csr, cfg: AlgorithmConfig, out: str) -> None:
    from .learners import LearnerState

    state = LearnerState(config=cfg)
    state.t = pass_state.rounds
    state.alpha_cum = cfg.penalty.alpha_cum(state.t)
    for slot, coord in enumerate(csr.slots):
        if pass_state.n[slot] != 0.0:
            state.grad_sq[int(coord)] = float(pass_state.n[slot])
    if cfg.family in (Family.FTPRL, Family.RDA):
        for slot, coord in enumerate(csr.slots):
            if pass_state.z[slot] != 0.0:
                state.z[int(coord)] = float(pass_state.z[slot])
    else:
        final = pass_state.final_weights()
        sig = np.maximum(cfg.rate.gamma * np.sqrt(pass_state.n), cfg.sigma_floor)
        for slot, coord in enumerate(csr.slots):
            if final[slot] != 0.0:
                state.z[int(coord)] = float(-sig[slot] * final[slot])
    from .learners import _reconstruct_iterate

    state.x = _reconstruct_iterate(state)
    save_checkpoint(state, out)


def _flags_dict(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def cmd_sweep(args) -> int:
    started = time.time()
    ds, desc = _load_dataset(args)
    lambdas = [float(x) for x in args.lambdas.split(",") if x.strip()] if args.lambdas else []
    if not lambdas:
        raise ConfigError("the lambda grid is empty")
    gammas = (
        [float(x) for x in args.gammas.split(",") if x.strip()]
        if args.gammas
        else list(DEFAULT_GAMMA_GRID)
    )
    if not gammas:
        raise ConfigError("the gamma grid is empty")
    families = [f.strip() for f in args.families.split(",") if f.strip()]
    rows = sweep(
        ds,
        families,
        lambdas,
        gammas,
        seed_count=args.seeds,
        base_seed=args.seed or 0,
        sigma_floor=args.sigma_floor,
    )
    if args.format == "csv":
        text = sweep_to_csv(rows)
    else:
        text = json.dumps([row.__dict__ for row in rows], indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w", encoding="ascii") as f:
            f.write(text)
        _write_manifest(
            args.out + ".manifest.json", "sweep", _flags_dict(args), desc, started
        )
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_equiv_check(args) -> int:
    worst = 0.0
    reports = []
    for k in range(args.seeds):
        rep = oracle.equivalence_check(
            args.theorem,
            T=args.T,
            dim=args.dim,
            seed=(args.seed or 0) + k,
            tol=args.tol,
            gamma=args.gamma,
            psi=args.psi,
            lam=args.lam,
            radius=args.radius,
        )
        reports.append(rep)
        worst = max(worst, rep["max_discrepancy"])
    summary = {
        "theorem": args.theorem,
        "T": args.T,
        "dim": args.dim,
        "seeds": args.seeds,
        "max_discrepancy": worst,
        "tol": reports[0]["tol"],
        "pass": all(r["pass"] for r in reports),
    }
    _emit(summary, args.out)
    return EXIT_OK if summary["pass"] else EXIT_CHECK_FAILED


def cmd_regret_check(args) -> int:
    t_values = [int(x) for x in args.T.split(",") if x.strip()]
    if not t_values:
        raise ConfigError("empty T list")
    runs = []
    ok = True
    for T in t_values:
        for k in range(args.seeds):
            rep = adversarial_regret_run(
                args.family, args.D, args.G, T, seed=(args.seed or 0) + k,
                dim=args.dim, collect_records=args.ledger,
            )
            rep = {key: val for key, val in rep.items()
                   if key not in ("records", "losses", "comparator")}
            runs.append(rep)
            ok = ok and rep["pass"]
    payload = {
        "family": args.family,
        "D": args.D,
        "G": args.G,
        "runs": runs,
        "pass": ok,
    }
    _emit(payload, args.out)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uftrl",
        description="Unified FTRL online learners with theorem self-checks",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--family", choices=[f.value for f in Family], default="ftprl")
        p.add_argument("--implicit", action="store_true")
        p.add_argument("--loss", choices=["logistic", "squared", "linear"],
                       default="logistic")
        p.add_argument("--squared-target", type=float, default=0.0)
        p.add_argument("--lambda", dest="lam", type=float, default=0.0)
        p.add_argument("--gamma", type=float, default=1.0)
        p.add_argument("--sigma-floor", type=float, default=0.0)
        p.add_argument("--penalty-mode", choices=["constant", "prior-once"],
                       default="constant")
        p.add_argument("--rate", choices=["global", "adaptive"], default="adaptive")
        p.add_argument("--data", default=None)
        p.add_argument("--synth", default=None,
                       help="n=...,d=...,informative=...,noise=...[,seed=...]")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--format", choices=["csv", "json"], default="csv")

    p_train = sub.add_parser("train", help="one training pass, metrics + checkpoint")
    add_common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="lambda/gamma sweep to CSV or JSON")
    add_common(p_sweep)
    p_sweep.add_argument("--families", default="ftprl,rda,fobos")
    p_sweep.add_argument("--lambdas", default="")
    p_sweep.add_argument("--gammas", default="")
    p_sweep.add_argument("--seeds", type=int, default=5)
    p_sweep.set_defaults(func=cmd_sweep)

    p_eq = sub.add_parser("equiv-check", help="run one equivalence-theorem suite")
    p_eq.add_argument("theorem", choices=["cor2", "cor3", "cor4", "thm2", "thm3"])
    p_eq.add_argument("--T", type=int, default=1000)
    p_eq.add_argument("--dim", type=int, default=10)
    p_eq.add_argument("--seeds", type=int, default=1)
    p_eq.add_argument("--seed", type=int, default=0)
    p_eq.add_argument("--tol", type=float, default=None)
    p_eq.add_argument("--gamma", type=float, default=0.7)
    p_eq.add_argument("--psi", choices=["l1", "ball"], default="l1")
    p_eq.add_argument("--lambda", dest="lam", type=float, default=0.05)
    p_eq.add_argument("--radius", type=float, default=1.0)
    p_eq.add_argument("--out", default=None)
    p_eq.set_defaults(func=cmd_equiv_check)

    p_rc = sub.add_parser("regret-check", help="Corollary-1 bound on adversarial streams")
    p_rc.add_argument("--family", choices=["ftprl", "rda"], default="ftprl")
    p_rc.add_argument("--D", type=float, default=2.0)
    p_rc.add_argument("--G", type=float, default=1.0)
    p_rc.add_argument("--T", default="100,1000,10000")
    p_rc.add_argument("--dim", type=int, default=2)
    p_rc.add_argument("--seeds", type=int, default=1)
    p_rc.add_argument("--seed", type=int, default=0)
    p_rc.add_argument("--ledger", action="store_true",
                      help="also check the strong-FTRL ledger bound")
    p_rc.add_argument("--out", default=None)
    p_rc.set_defaults(func=cmd_regret_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"uftrl: config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as err:
        print(f"uftrl: {err}", file=sys.stderr)
        return EXIT_DATA
    except DataError as err:
        print(f"uftrl: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as err:
        print(f"uftrl: numeric error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
