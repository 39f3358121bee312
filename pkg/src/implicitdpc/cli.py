"""Command-line front end.

Every subcommand reads an optional JSON run configuration (``--config``);
flags given on the command line override the file.  Without a config the
scalar unstable example is used: ``x+ = 2x - 0.5u``, ``y = x``, output noise
standard deviation 0.1, ``Q = R = 1``, ``N_f = 1``, ``ell = 3`` and input and
output boxes ``[-1, 1]``.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import qp
from .data import DataMatrix, TrajectoryData, build_data_matrix, fmt_float, rank_diagnostics
from .errors import NumericalError, PreconditionError
from .ocp import OcpSpec, solve_dpc_regularized, solve_dpc_unregularized
from .predictors import (
    build_implicit_model,
    data_terms,
    fit_spc,
    implicit_predict,
    implicit_predict_constrained,
    spc_predict,
)
from .sim import LtiPlant, closed_loop, pe_input, simulate
from .verify import run_suite

SCHEMA_VERSION = 1
MAX_GRID_POINTS = 1_000_000

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


DEFAULT_CONFIG = {
    "schema_version": SCHEMA_VERSION,
    "plant": {"A": [[2.0]], "B": [[-0.5]], "C": [[1.0]], "D": [[0.0]], "noise_std": 0.1, "x0": [0.0]},
    "data": {"steps": 50, "amplitude": 1.0, "seed": 1, "N_p": 0, "N_f": 1, "ell": 3, "stride": 1,
             "setting": "state"},
    "ocp": {"Q": [[1.0]], "R": [[1.0]], "u_lo": [-1.0], "u_hi": [1.0], "y_lo": [-1.0], "y_hi": [1.0],
            "reg": {"kind": "two_norm", "lambda_a": 1.0}, "y_ref": None},
    "grid": {"xi_range": [-2.0, 2.0], "u_range": [-2.0, 2.0], "xi_points": 101, "u_points": 101,
             "xi_index": 0, "u_index": 0, "lambdas": [1e-2, 1.0, 1e2, 1e6]},
    "closed_loop": {"steps": 50, "x0": [0.3], "seed": 1},
    "verify": {"num_xi": 20, "seed": 1},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


@dataclass
class RunConfig:
    """Validated run configuration; ``raw`` is the merged JSON document."""

    raw: dict
    plant: LtiPlant
    ocp: OcpSpec

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        version = d.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise UsageError(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}")
        raw = _merge(DEFAULT_CONFIG, d)
        unknown = set(raw) - set(DEFAULT_CONFIG)
        if unknown:
            raise UsageError(f"unknown config sections: {sorted(unknown)}")
        pl = raw["plant"]
        plant = LtiPlant(pl["A"], pl["B"], pl["C"], pl["D"], float(pl["noise_std"]))
        dd = raw["data"]
        if dd["setting"] not in ("io", "state"):
            raise UsageError(f"data.setting must be 'io' or 'state', got {dd['setting']!r}")
        ocp_d = dict(raw["ocp"], N_p=dd["N_p"], N_f=dd["N_f"])
        spec = OcpSpec.from_dict(ocp_d)
        if (spec.m, spec.p) != (plant.m, plant.p):
            raise UsageError(f"OCP weights are for m={spec.m}, p={spec.p}; plant has m={plant.m}, p={plant.p}")
        if len(pl["x0"]) != plant.n or len(raw["closed_loop"]["x0"]) != plant.n:
            raise UsageError(f"initial states need {plant.n} entries")
        if dd["setting"] == "state" and (dd["N_p"] != 0 or plant.p != plant.n or np.any(plant.D != 0)):
            raise UsageError("state setting needs N_p = 0, a measured state (p = n) and D = 0")
        if int(dd["steps"]) < 1 or float(dd["amplitude"]) < 0:
            raise UsageError("data.steps must be >= 1 and data.amplitude >= 0")
        return cls(raw=raw, plant=plant, ocp=spec)

    def to_json(self) -> str:
        return json.dumps(self.raw, indent=2)

    @property
    def data(self) -> dict:
        return self.raw["data"]

    def trajectory(self) -> TrajectoryData:
        d = self.data
        u = pe_input(self.plant.m, int(d["steps"]), float(d["amplitude"]), int(d["seed"]))
        return simulate(self.plant, self.raw["plant"]["x0"], u, seed=int(d["seed"]))

    def data_matrix(self, traj: Optional[TrajectoryData] = None) -> DataMatrix:
        d = self.data
        traj = self.trajectory() if traj is None else traj
        return build_data_matrix(traj, int(d["N_p"]), int(d["N_f"]), d["ell"], int(d["stride"]), d["setting"])


# ---------------------------------------------------------------------------
# commands


def _emit(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text)


def _load_matrix(cfg: RunConfig, args) -> DataMatrix:
    if getattr(args, "matrix", None):
        return DataMatrix.from_json(args.matrix)
    if getattr(args, "data", None):
        return cfg.data_matrix(TrajectoryData.from_csv(args.data))
    return cfg.data_matrix()


def _parse_vector(text: str, name: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip()])
    except ValueError as exc:
        raise UsageError(f"--{name} expects comma-separated numbers") from exc


def cmd_gen_data(cfg: RunConfig, args) -> int:
    traj = cfg.trajectory()
    traj.to_csv(args.out)
    D = cfg.data_matrix(traj)
    print(json.dumps(rank_diagnostics(D, n=cfg.plant.n).to_dict()))
    return EXIT_OK


def cmd_build_matrix(cfg: RunConfig, args) -> int:
    D = _load_matrix(cfg, args)
    _emit(D.to_json(), args.out)
    print(json.dumps(rank_diagnostics(D, n=cfg.plant.n).to_dict()), file=sys.stderr if args.out is None else sys.stdout)
    return EXIT_OK


def cmd_fit_spc(cfg: RunConfig, args) -> int:
    D = _load_matrix(cfg, args)
    doc = {"K": fit_spc(D).K.tolist(), "dims": D.dims()}
    if cfg.ocp.reg is not None:
        model = build_implicit_model(D, cfg.ocp.reg, cfg.ocp.Qcal, cfg.ocp.y_ref)
        doc["implicit"] = model.to_dict()
    _emit(json.dumps(doc, indent=2), args.out)
    return EXIT_OK


def cmd_solve(cfg: RunConfig, args) -> int:
    D = _load_matrix(cfg, args)
    if args.xi is None:
        raise UsageError("solve needs --xi")
    xi = _parse_vector(args.xi, "xi")
    if cfg.ocp.reg is None:
        sol = solve_dpc_unregularized(D, cfg.ocp, xi)
    else:
        sol = solve_dpc_regularized(D, cfg.ocp, xi, form=args.form)
    if not sol.ok:
        raise NumericalError(f"solver status {sol.status}")
    _emit(json.dumps(sol.to_dict(), indent=2), args.out)
    return EXIT_OK


def cmd_predictor_surface(cfg: RunConfig, args) -> int:
    D = _load_matrix(cfg, args)
    g = cfg.raw["grid"]
    nx, nu, lams = int(g["xi_points"]), int(g["u_points"]), [float(v) for v in g["lambdas"]]
    total = nx * nu * len(lams)
    if total > MAX_GRID_POINTS:
        raise UsageError(
            f"grid has {total} points (limit {MAX_GRID_POINTS}); lower grid.xi_points, grid.u_points "
            f"or the number of lambdas"
        )
    ix, iu = int(g["xi_index"]), int(g["u_index"])
    if not (0 <= ix < D.n_xi and 0 <= iu < D.n_u):
        raise UsageError(f"grid indices out of range (n_xi={D.n_xi}, n_u={D.n_u})")
    xs = np.linspace(g["xi_range"][0], g["xi_range"][1], nx)
    us = np.linspace(g["u_range"][0], g["u_range"][1], nu)
    terms = data_terms(D)
    spec = cfg.ocp
    if spec.reg is None:
        raise UsageError("predictor-surface needs a regularizer in the config")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    ny = D.n_y
    w.writerow(["lambda_a", "xi", "u"] + [f"y_spc_{i}" for i in range(ny)] + [f"y_lin_{i}" for i in range(ny)]
               + [f"y_con_{i}" for i in range(ny)] + ["active_out"])
    xi = np.zeros(D.n_xi)
    u = np.zeros(D.n_u)
    for lam in lams:
        reg = type(spec.reg)(spec.reg.kind, lam)
        model = build_implicit_model(D, reg, spec.Qcal, spec.y_ref, terms=terms)
        for a in xs:
            xi[ix] = a
            for b in us:
                u[iu] = b
                y_spc = spc_predict(terms.spc, xi, u)
                y_lin = implicit_predict(model, xi, u)
                y_con, sig = implicit_predict_constrained(model, xi, u, spec.Yset)
                w.writerow([fmt_float(lam), fmt_float(a), fmt_float(b)] + [fmt_float(v) for v in y_spc]
                           + [fmt_float(v) for v in y_lin] + [fmt_float(v) for v in y_con]
                           + [qp.format_signature(sig)])
    Path(args.out).write_text(buf.getvalue())
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args) -> int:
    D = _load_matrix(cfg, args)
    v = cfg.raw["verify"]
    res = run_suite(cfg.plant, D, cfg.ocp, num_xi=int(v["num_xi"]), seed=int(v["seed"]),
                    negative_only=args.negative_control)
    for r in res.reports:
        print(r.summary())
    if args.out is not None:
        res.to_json(args.out)
    print("suite " + ("OK" if res.ok else "FAILED"))
    return EXIT_OK if res.ok else EXIT_CHECK


def cmd_closed_loop(cfg: RunConfig, args) -> int:
    D = _load_matrix(cfg, args)
    c = cfg.raw["closed_loop"]
    spec = cfg.ocp
    steps = int(c["steps"])
    model = None
    if spec.reg is not None:
        model = build_implicit_model(D, spec.reg, spec.Qcal, spec.y_ref)
    init = None
    if D.setting == "io":
        u0 = pe_input(cfg.plant.m, D.N_p, float(cfg.data["amplitude"]), int(c["seed"]) + 1)
        init = TrajectoryData(u0, np.zeros((D.N_p, cfg.plant.p)))
    log = closed_loop(cfg.plant, D, spec, model, steps, init=init, seed=int(c["seed"]), x0=c["x0"])
    log.to_csv(args.out, dims=(D.n_xi, cfg.plant.m, cfg.plant.p, D.n_u, D.n_y))
    print(f"steps={len(log)} max_residual={log.max_residual:.3e}")
    return EXIT_OK


COMMANDS = {
    "gen-data": (cmd_gen_data, "simulate the plant under random excitation and write a trajectory CSV"),
    "build-matrix": (cmd_build_matrix, "assemble the data matrix and write it as JSON"),
    "fit-spc": (cmd_fit_spc, "fit the least-squares predictor and the implicit predictor"),
    "solve": (cmd_solve, "solve one DPC problem at a given xi"),
    "predictor-surface": (cmd_predictor_surface, "evaluate the predictors over a (xi, u_f) grid"),
    "verify": (cmd_verify, "run the verification suite"),
    "closed-loop": (cmd_closed_loop, "run a receding-horizon closed loop and write its log"),
}
OUT_REQUIRED = {"gen-data", "predictor-surface", "closed-loop"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="implicitdpc", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="seed for data generation (and closed loop / verify)")
        p.add_argument("--out", required=name in OUT_REQUIRED, help="output file")
        p.add_argument("--noise-std", type=float, help="output noise standard deviation")
        p.add_argument("--steps", type=int, help="number of samples (gen-data) or closed-loop steps")
        p.add_argument("--lambda-a", type=float, help="regularization weight")
        p.add_argument("--kind", choices=["two_norm", "projected_two_norm"], help="regularizer kind")
        if name != "gen-data":
            p.add_argument("--data", help="trajectory CSV to build the data matrix from")
            p.add_argument("--matrix", help="data matrix JSON (overrides --data)")
        if name == "solve":
            p.add_argument("--xi", help="comma-separated past data")
            p.add_argument("--form", choices=["condensed", "full"], default="condensed")
        if name == "verify":
            p.add_argument("--negative-control", action="store_true",
                           help="run only the tampered-predictor and noisy-data controls")
    return parser


def _overrides(args) -> dict:
    o: dict = {}
    if args.seed is not None:
        o.setdefault("data", {})["seed"] = args.seed
        o.setdefault("closed_loop", {})["seed"] = args.seed
        o.setdefault("verify", {})["seed"] = args.seed
    if args.noise_std is not None:
        o.setdefault("plant", {})["noise_std"] = args.noise_std
    if args.steps is not None:
        key = "closed_loop" if args.command == "closed-loop" else "data"
        o.setdefault(key, {})["steps"] = args.steps
    if args.lambda_a is not None or args.kind is not None:
        o.setdefault("ocp", {})["reg"] = {}
        if args.lambda_a is not None:
            o["ocp"]["reg"]["lambda_a"] = args.lambda_a
        if args.kind is not None:
            o["ocp"]["reg"]["kind"] = args.kind
    return o


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        base = {}
        if args.config is not None:
            try:
                base = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        cfg = RunConfig.from_dict(_merge(base, _overrides(args)))
        return COMMANDS[args.command][0](cfg, args)
    except (UsageError, PreconditionError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
