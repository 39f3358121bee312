"""Plant simulation, excitation signals and receding-horizon closed loops.

Random streams use SplitMix64 (uniforms) and Box-Muller (Gaussians), written
out here so that noise realizations are reproducible bit for bit from a seed
independently of the numpy version.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import qp
from .data import TrajectoryData, extract_xi, fmt_float
from .errors import DimensionError, NumericalError, PreconditionError
from .ocp import OcpSpec, solve_dpc_regularized, solve_dpc_unregularized, solve_mpc
from .predictors import (
    ImplicitPredictorModel,
    data_terms,
    fit_spc,
    implicit_predict,
    implicit_predict_constrained,
    spc_predict,
)

_MASK = (1 << 64) - 1


class SplitMix64:
    """SplitMix64 generator with uniform and Box-Muller Gaussian draws."""

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK
        self._spare: Optional[float] = None

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform on [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def normal(self) -> float:
        """Standard normal; the second Box-Muller variate is cached."""
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(1.0 - u1))
        theta = 2.0 * math.pi * u2
        self._spare = r * math.sin(theta)
        return r * math.cos(theta)


@dataclass(frozen=True)
class LtiPlant:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    noise_std: float = 0.0

    def __post_init__(self):
        A, B, C, D = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (self.A, self.B, self.C, self.D))
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n or D.shape != (C.shape[0], B.shape[1]):
            raise DimensionError(
                f"inconsistent plant shapes A{A.shape} B{B.shape} C{C.shape} D{D.shape}"
            )
        if self.noise_std < 0:
            raise PreconditionError("noise_std must be >= 0")
        for name, M in zip("ABCD", (A, B, C, D)):
            object.__setattr__(self, name, M)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def output(self, x, u, noise: Optional[np.ndarray] = None) -> np.ndarray:
        y = self.C @ x + self.D @ u
        return y if noise is None else y + noise

    def step(self, x, u) -> np.ndarray:
        return self.A @ x + self.B @ u


def example_plant(noise_std: float = 0.1) -> LtiPlant:
    """Scalar unstable plant ``x+ = 2x - 0.5u``, ``y = x`` used in the examples."""
    return LtiPlant([[2.0]], [[-0.5]], [[1.0]], [[0.0]], noise_std)


def _noise(rng: SplitMix64, p: int, std: float) -> np.ndarray:
    if std == 0.0:
        return np.zeros(p)
    return std * np.array([rng.normal() for _ in range(p)])


def simulate(plant: LtiPlant, x0, u_seq, seed: int = 0, return_states: bool = False):
    """Simulate ``x+ = Ax + Bu``, ``y = Cx + Du + w`` with ``w ~ N(0, sigma^2 I)``."""
    u_seq = np.atleast_2d(np.asarray(u_seq, dtype=float))
    if u_seq.shape[1] != plant.m and u_seq.shape[0] == plant.m:
        u_seq = u_seq.T
    if u_seq.shape[1] != plant.m:
        raise DimensionError(f"inputs have {u_seq.shape[1]} components, plant has m={plant.m}")
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.size != plant.n:
        raise DimensionError(f"x0 has {x.size} entries, plant has n={plant.n}")
    rng = SplitMix64(seed)
    ys = np.zeros((u_seq.shape[0], plant.p))
    xs = np.zeros((u_seq.shape[0] + 1, plant.n))
    for k, u in enumerate(u_seq):
        xs[k] = x
        ys[k] = plant.output(x, u, _noise(rng, plant.p, plant.noise_std))
        x = plant.step(x, u)
    xs[-1] = x
    traj = TrajectoryData(u_seq, ys)
    return (traj, xs) if return_states else traj


def pe_input(m: int, steps: int, amplitude: float = 1.0, seed: int = 0) -> np.ndarray:
    """Uniform random inputs in ``[-amplitude, amplitude]``, shape ``(steps, m)``."""
    rng = SplitMix64(seed)
    out = np.empty((steps, m))
    for k in range(steps):
        for i in range(m):
            out[k, i] = amplitude * (2.0 * rng.uniform() - 1.0)
    return out


@dataclass
class ClosedLoopStep:
    k: int
    xi: np.ndarray
    u_applied: np.ndarray
    y_meas: np.ndarray
    u_f: np.ndarray
    y_f: np.ndarray
    residual: np.ndarray
    residual_linear: np.ndarray
    value: float
    active_out: tuple
    active_in: tuple


@dataclass
class ClosedLoopLog:
    steps: list = field(default_factory=list)
    history: Optional[TrajectoryData] = None

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def max_residual(self) -> float:
        return max((float(np.linalg.norm(s.residual)) for s in self.steps), default=0.0)

    def header(self, n_xi: int, m: int, p: int, n_u: int, n_y: int) -> list:
        return (
            ["k"]
            + [f"xi_{i}" for i in range(n_xi)]
            + [f"u_applied_{i}" for i in range(m)]
            + [f"y_meas_{i}" for i in range(p)]
            + [f"uf_{i}" for i in range(n_u)]
            + [f"yf_{i}" for i in range(n_y)]
            + ["resid_norm", "value", "active_out", "active_in"]
        )

    def to_csv(self, path=None, dims: Optional[tuple] = None) -> str:
        """Write one row per step; ``dims=(n_xi, m, p, n_u, n_y)`` for empty logs."""
        if self.steps:
            s0 = self.steps[0]
            dims = (s0.xi.size, s0.u_applied.size, s0.y_meas.size, s0.u_f.size, s0.y_f.size)
        elif dims is None:
            raise PreconditionError("an empty log needs explicit dims for its header")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header(*dims))
        for s in self.steps:
            w.writerow(
                [s.k]
                + [fmt_float(v) for v in s.xi]
                + [fmt_float(v) for v in s.u_applied]
                + [fmt_float(v) for v in s.y_meas]
                + [fmt_float(v) for v in s.u_f]
                + [fmt_float(v) for v in s.y_f]
                + [fmt_float(np.linalg.norm(s.residual)), fmt_float(s.value),
                   qp.format_signature(s.active_out), qp.format_signature(s.active_in)]
            )
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _warm_start(plant: LtiPlant, init: TrajectoryData, x0, rng: SplitMix64):
    """Drive the plant open loop with the prefix inputs; return history and state."""
    x = np.zeros(plant.n) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    us, ys = [], []
    for u in init.u:
        ys.append(plant.output(x, u, _noise(rng, plant.p, plant.noise_std)))
        us.append(u)
        x = plant.step(x, u)
    return us, ys, x


def closed_loop(
    plant: LtiPlant,
    D,
    spec: OcpSpec,
    model: Optional[ImplicitPredictorModel],
    steps: int,
    init: Optional[TrajectoryData] = None,
    seed: int = 0,
    x0=None,
) -> ClosedLoopLog:
    """Receding-horizon DPC: solve, apply the first input block, step, repeat.

    ``init`` supplies open-loop warm-up inputs so that ``N_p`` samples of
    history exist before the first solve (not needed in the state setting).
    With ``spec.reg`` set the regularized problem is solved and residuals are
    measured against ``model`` (constrained predictor when ``spec.Yset`` is
    bounded); otherwise the unregularized problem is solved and residuals are
    measured against the SPC predictor.
    """
    rng = SplitMix64(seed)
    setting = D.setting
    if setting == "state" and np.any(plant.D != 0):
        raise PreconditionError("state setting needs a plant without feedthrough (D = 0)")
    us, ys, x = [], [], np.zeros(plant.n) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    if init is not None:
        us, ys, x = _warm_start(plant, init, x0, rng)
    if setting == "io" and len(us) < D.N_p:
        raise PreconditionError(f"warm-up prefix has {len(us)} samples, need N_p = {D.N_p}")
    terms = data_terms(D) if spec.reg is not None else None
    spc = terms.spc if terms is not None else fit_spc(D)
    constrained = spec.Yset.bounded
    log = ClosedLoopLog()
    m = plant.m
    for k in range(steps):
        if setting == "state":
            # output is a state measurement available before the input is chosen
            y_now = plant.output(x, np.zeros(m), _noise(rng, plant.p, plant.noise_std))
            hist = TrajectoryData(np.vstack(us + [np.zeros(m)]), np.vstack(ys + [y_now]))
            xi = extract_xi(hist, len(hist) - 1, D.N_p, setting)
        else:
            hist = TrajectoryData(np.vstack(us), np.vstack(ys))
            xi = extract_xi(hist, len(hist), D.N_p, setting)
        if spec.reg is not None:
            sol = solve_dpc_regularized(D, spec, xi, terms=terms)
        else:
            sol = solve_dpc_unregularized(D, spec, xi)
        if not sol.ok:
            log.history = hist
            raise NumericalError(f"closed loop aborted at step {k}: solver status {sol.status}")
        if model is not None:
            y_lin = implicit_predict(model, xi, sol.u_f)
            y_pred = implicit_predict_constrained(model, xi, sol.u_f, spec.Yset)[0] if constrained else y_lin
        else:
            y_lin = y_pred = spc_predict(spc, xi, sol.u_f)
        u = sol.u_f[:m].copy()
        if setting == "state":
            y = y_now
        else:
            y = plant.output(x, u, _noise(rng, plant.p, plant.noise_std))
        us.append(u)
        ys.append(y)
        x = plant.step(x, u)
        log.steps.append(
            ClosedLoopStep(
                k=k, xi=xi, u_applied=u, y_meas=y, u_f=sol.u_f, y_f=sol.y_f,
                residual=sol.y_f - y_pred, residual_linear=sol.y_f - y_lin,
                value=sol.value, active_out=sol.active_out, active_in=sol.active_in,
            )
        )
    if us:
        log.history = TrajectoryData(np.vstack(us), np.vstack(ys))
    return log


def closed_loop_mpc(plant: LtiPlant, spec: OcpSpec, steps: int, init: Optional[TrajectoryData] = None,
                    x0=None, setting: str = "io") -> ClosedLoopLog:
    """Receding-horizon MPC with exact state feedback (noise-free reference loop)."""
    rng = SplitMix64(0)
    us, ys, x = [], [], np.zeros(plant.n) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    if init is not None:
        us, ys, x = _warm_start(plant, init, x0, rng)
    log = ClosedLoopLog()
    m = plant.m
    for k in range(steps):
        sol = solve_mpc(plant, spec, x, setting)
        if not sol.ok:
            raise NumericalError(f"MPC closed loop aborted at step {k}: status {sol.status}")
        u = sol.u_f[:m].copy()
        y = plant.output(x, u)
        us.append(u)
        ys.append(y)
        log.steps.append(
            ClosedLoopStep(
                k=k, xi=x.copy(), u_applied=u, y_meas=y, u_f=sol.u_f, y_f=sol.y_f,
                residual=np.zeros_like(sol.y_f), residual_linear=np.zeros_like(sol.y_f),
                value=sol.value, active_out=sol.active_out, active_in=sol.active_in,
            )
        )
        x = plant.step(x, u)
    if us:
        log.history = TrajectoryData(np.vstack(us), np.vstack(ys))
    return log
