"""``fracdose`` command line: JSON configs in, CSV out.

Exit codes: 0 success, 2 configuration error, 3 infeasible problem,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import sys
import warnings
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import laplace, pkmodels, solvers, specialfn
from .errors import InfeasibleError

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NUMERIC = 0, 2, 3, 4
COMMANDS = ("mlf", "simulate", "plan", "population", "mpc", "nilt", "approx")


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# Config handling
# --------------------------------------------------------------------------


def load_schema(command: str) -> dict:
    text = resources.files("fracdose").joinpath("schemas", f"{command}.json").read_text()
    return json.loads(text)


def validate_config(command: str, cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, load_schema(command))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid {command} config at {where}: {exc.message}") from None


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    if isinstance(v, str):
        return v
    return f"{float(v):.15g}"


def write_csv(path, header, rows, cfg_hash: str) -> None:
    buf = io.StringIO()
    buf.write(f"# config_sha256={cfg_hash}\n")
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(v) for v in r) + "\n")
    if path is None or str(path) == "-":
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(buf.getvalue())


def _sibling(out, suffix: str):
    if out is None or str(out) == "-":
        return None
    p = Path(out)
    return p.with_name(f"{p.stem}_{suffix}{p.suffix or '.csv'}")


def _model(d: dict) -> pkmodels.TwoCompParams:
    return pkmodels.TwoCompParams(
        d["k10"], d["k12"], d["k21f"], d["alpha"], q10=d.get("q10", 1.0), v=d.get("v", 1.0)
    )


def _ocp(d: dict | None):
    from .dosing import OcpSpec

    d = dict(d or {})
    for key in ("q_weights", "x0"):
        if key in d:
            d[key] = tuple(d[key])
    return OcpSpec(**d)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_mlf(cfg: dict, out):
    alpha, beta, rho = cfg["alpha"], cfg.get("beta", 1.0), cfg.get("rho", 1.0)
    params = specialfn.MlParams(alpha, beta, rho)
    rows = []
    for z in cfg["z"]:
        r = specialfn.ml3(params, float(z))
        rows.append((z, r.value, r.abs_error_estimate))
    write_csv(out, ("z", "value", "error_estimate"), rows, config_hash(cfg))


def _time_grid(cfg: dict) -> np.ndarray:
    if "times" in cfg:
        t = np.asarray(cfg["times"], dtype=float)
        return np.unique(np.concatenate([[0.0], t]))
    return np.linspace(0.0, cfg.get("t_end", 60.0), cfg.get("n_points", 121))


def cmd_simulate(cfg: dict, out):
    model = _model(cfg["model"])
    times = _time_grid(cfg)
    u = pkmodels.input_from_dict(cfg.get("input"))
    solver = cfg.get("solver", "gl")
    kw = {k: cfg[k] for k in ("h", "q_denom", "nu") if k in cfg}
    if "tol" in cfg:
        kw["tol"] = cfg["tol"]
    if solver == "gl" and "nu" not in cfg:
        # a stand-alone simulation keeps the whole history; truncation is a dosing-design choice
        kw["nu"] = int(math.ceil(times.max() / cfg.get("h", 1e-3))) + 1
    if isinstance(u, pkmodels.ZeroInput):
        u = None
    q1, q2 = solvers.simulate_two_comp(model, times, solver, u=u, **kw)
    c = pkmodels.concentration(q1, model.v)
    write_csv(out, ("t", "q1", "q2", "c"), zip(times, q1, q2, c), config_hash(cfg))


def _plan_for(cfg: dict, spec, model):
    from .dosing import box_vertices, plan_individual, plan_minimax, plan_stochastic, sample_population

    strategy = cfg.get("strategy", "individual")
    tol = cfg.get("tol", 1e-6)
    if strategy == "individual":
        return plan_individual(spec, model, tol)
    if strategy == "minimax":
        if "box" not in cfg:
            raise ConfigError("strategy 'minimax' needs a 'box'")
        box_vertices(cfg["box"])
        return plan_minimax(spec, cfg["box"], tol=tol)
    pop = cfg.get("population", {})
    sample = sample_population(model, pop.get("cv", 0.2), pop.get("l", 20), cfg.get("seed", 0))
    return plan_stochastic(spec, sample, tol)


def cmd_plan(cfg: dict, out):
    model = _model(cfg["model"])
    spec = _ocp(cfg.get("ocp"))
    plan = _plan_for(cfg, spec, model)
    h = config_hash(cfg)
    write_csv(out, ("time", "dose"), plan.to_rows(), h)
    traj = plan.trajectory
    c = traj[:, 0] / model.v
    write_csv(_sibling(out, "trajectory"), ("t", "q1", "q2", "c"), zip(plan.times, traj[:, 0], traj[:, 1], c), h)
    if not plan.converged:
        print(f"warning: QP not converged (KKT residual {plan.kkt_residual:.2e})", file=sys.stderr)


def cmd_population(cfg: dict, out):
    from .dosing import plan_individual, plan_stochastic, population_costs, prediction, sample_population

    model = _model(cfg["model"])
    spec = _ocp(cfg.get("ocp"))
    seed = cfg.get("seed", 0)
    cv = cfg.get("cv", 0.2)
    train = sample_population(model, cv, cfg.get("l", 20), seed)
    test = sample_population(model, cv, cfg.get("members", 100), None if seed is None else seed + 1)
    plan = plan_stochastic(spec, train, cfg.get("tol", 1e-6))
    nominal = plan_individual(spec, model, cfg.get("tol", 1e-6))
    c_saa = population_costs(spec, test, plan.doses)
    c_nom = population_costs(spec, test, nominal.doses)
    h = config_hash(cfg)
    rows = [
        (i, *test.members[i], c_saa[i], c_nom[i]) for i in range(len(test))
    ]
    write_csv(out, ("member", "k10", "k12", "k21f", "alpha", "cost_saa", "cost_nominal"), rows, h)
    write_csv(_sibling(out, "plan"), ("time", "dose"), plan.to_rows(), h)
    mdir = None if out is None or str(out) == "-" else Path(out).with_name(Path(out).stem + "_members")
    if mdir is not None:
        for i, mdl in enumerate(test.models()):
            free, resp = prediction(spec, mdl)
            traj = free + resp @ plan.doses
            write_csv(
                mdir / f"member_{i:03d}.csv",
                ("t", "q1", "q2"),
                zip(spec.times, traj[:, 0], traj[:, 1]),
                h,
            )
    print(f"mean cost: saa {c_saa.mean():.6g}, nominal plan {c_nom.mean():.6g}", file=sys.stderr)


def cmd_mpc(cfg: dict, out):
    from .dosing import mpc_run

    plant, model = _model(cfg["plant"]), _model(cfg["model"])
    spec = _ocp(cfg.get("ocp"))
    log = mpc_run(
        spec,
        plant,
        model,
        cfg.get("meas_noise_sd", 0.0),
        cfg.get("steps"),
        cfg.get("seed", 0),
        offset_free=cfg.get("offset_free", True),
        plant_bias=cfg.get("plant_bias"),
        window_doses=cfg.get("window_doses"),
    )
    header = ("time", "u", "q1_true", "q2_true", "q1_est", "q2_est", "d_est", "c")
    write_csv(out, header, log.rows(), config_hash(cfg))
    for k, msg in log.flags:
        print(f"warning: step {k}: {msg}", file=sys.stderr)


def cmd_nilt(cfg: dict, out):
    if "model" in cfg:
        q1, q2 = pkmodels.two_comp_transfer(_model(cfg["model"]))
        f = q2 if cfg.get("output", "q1") == "q2" else q1
    elif "numerator" in cfg and "denominator" in cfg:
        f = laplace.FracTransferFunction(tuple(map(tuple, cfg["numerator"])), tuple(map(tuple, cfg["denominator"])))
    else:
        raise ConfigError("nilt needs either 'model' or both 'numerator' and 'denominator'")
    res = laplace.nilt(
        f,
        cfg["times"],
        m_terms=cfg.get("m_terms", 40),
        sigma_margin=cfg.get("sigma_margin"),
        sigma0=cfg.get("sigma0", 0.0),
        tol=cfg.get("tol", 1e-12),
        full_output=True,
    )
    rows = zip(cfg["times"], res.values, res.error_estimates, res.reduced_accuracy.astype(int))
    write_csv(out, ("t", "value", "error_estimate", "reduced_accuracy"), rows, config_hash(cfg))


def cmd_approx(cfg: dict, out):
    method, alpha = cfg["method"], cfg["alpha"]
    wb, wh = cfg.get("wb", 1e-2), cfg.get("wh", 1e2)
    if method == "oustaloup":
        approx = laplace.oustaloup(alpha, wb, wh, cfg.get("n_half", 4))
    elif method == "pade":
        approx = laplace.pade_s_alpha(alpha, cfg.get("s0", 1.0), cfg.get("m", 2), cfg.get("n", 2))
    else:
        n_nodes = cfg.get("n_nodes", 9)
        nodes = np.logspace(math.log10(wb), math.log10(wh), n_nodes)
        approx = laplace.matsuda_fujii([(s, s**alpha) for s in nodes]).as_rational()
    omega = np.asarray(cfg.get("omega", np.logspace(math.log10(wb), math.log10(wh), 41)), dtype=float)
    resp = np.asarray(approx(1j * omega))
    rows = []
    rows.append(("gain", 0, approx.gain, 0.0, "", "", ""))
    for i, zk in enumerate(approx.zeros):
        rows.append(("zero", i, complex(zk).real, complex(zk).imag, "", "", ""))
    for i, pk in enumerate(approx.poles):
        rows.append(("pole", i, complex(pk).real, complex(pk).imag, "", "", ""))
    for w, r in zip(omega, resp):
        rows.append(("response", "", w, "", 20 * math.log10(abs(r)), 20 * alpha * math.log10(w), math.degrees(np.angle(r))))
    header = ("kind", "index", "real_or_omega", "imag", "mag_db", "target_db", "phase_deg")
    write_csv(out, header, rows, config_hash(cfg))


HANDLERS = {
    "mlf": cmd_mlf,
    "simulate": cmd_simulate,
    "plan": cmd_plan,
    "population": cmd_population,
    "mpc": cmd_mpc,
    "nilt": cmd_nilt,
    "approx": cmd_approx,
}


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fracdose", description="Fractional pharmacokinetics toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON configuration file")
        p.add_argument("--out", help="output CSV path (stdout if omitted)")
        p.add_argument("--seed", type=int)
        p.add_argument("--solver", choices=solvers.SOLVERS)
        p.add_argument("--tol", type=float)
        if name == "mlf":
            p.add_argument("--alpha", type=float)
            p.add_argument("--beta", type=float)
            p.add_argument("--rho", type=float)
            p.add_argument("--z", type=float, action="append", help="argument (repeatable)")
    return parser


def resolve_config(args) -> dict:
    cfg: dict = {}
    if args.config is not None:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    if args.command == "mlf":
        for key in ("alpha", "beta", "rho"):
            if getattr(args, key) is not None:
                cfg[key] = getattr(args, key)
        if args.z:
            cfg["z"] = list(args.z)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.tol is not None:
        cfg["tol"] = args.tol
    if args.solver is not None:
        if args.command != "simulate":
            raise ConfigError("--solver only applies to 'simulate'")
        cfg["solver"] = args.solver
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "mlf" and "alpha" in cfg and not cfg["alpha"] > 0:
            parser.error("--alpha must be positive")
        validate_config(args.command, cfg)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            HANDLERS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ArithmeticError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
