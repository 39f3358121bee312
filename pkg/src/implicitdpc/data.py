"""Trajectory data and the partitioned data matrix ``(W_p; U_f; Y_f)``.

Two window layouts are supported:

``"io"``
    Input/output setting.  A column is a length ``L = N_p + N_f`` window,
    stacked as ``(u_p; y_p; u_f; y_f)`` with time increasing downward and the
    components of each sample contiguous.
``"state"``
    State-space setting for plants whose output is a full state measurement.
    A column starting at sample ``s`` is ``(y(s); u(s..s+N_f-1);
    y(s+1..s+N_f))``; the past block is the measured state and ``U_p`` is
    empty.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, PreconditionError
from .linalg import default_tol, singular_values

SETTINGS = ("io", "state")


@dataclass(frozen=True)
class TrajectoryData:
    """Recorded samples ``u(k)`` (rows of ``u``) and ``y(k)`` (rows of ``y``)."""

    u: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=float)
        y = np.array(self.y, dtype=float)
        if u.ndim == 1:
            u = u.reshape(-1, 1)
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        if u.ndim != 2 or y.ndim != 2:
            raise DimensionError("u and y must be (T, m) and (T, p) arrays")
        if u.shape[0] != y.shape[0]:
            raise DimensionError(
                f"u has {u.shape[0]} samples but y has {y.shape[0]}"
            )
        if u.shape[0] < 1:
            raise DimensionError("trajectory needs at least one sample")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise PreconditionError("trajectory contains non-finite samples")
        u.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def p(self) -> int:
        return self.y.shape[1]

    def __len__(self) -> int:
        return self.u.shape[0]

    def append(self, u, y) -> "TrajectoryData":
        u = np.asarray(u, dtype=float).reshape(1, self.m)
        y = np.asarray(y, dtype=float).reshape(1, self.p)
        return TrajectoryData(np.vstack([self.u, u]), np.vstack([self.y, y]))

    def to_csv(self, path=None) -> str:
        """Write ``k,u_0..u_{m-1},y_0..y_{p-1}`` rows; return the text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(
            ["k"] + [f"u_{i}" for i in range(self.m)] + [f"y_{i}" for i in range(self.p)]
        )
        for k in range(len(self)):
            w.writerow([k] + [fmt_float(v) for v in self.u[k]] + [fmt_float(v) for v in self.y[k]])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "TrajectoryData":
        """Parse the trajectory CSV format from a path or a string of text."""
        text = source
        if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
            text = Path(source).read_text()
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise PreconditionError("empty trajectory CSV")
        header = [h.strip() for h in rows[0]]
        if not header or header[0] != "k":
            raise PreconditionError("trajectory CSV header must start with 'k'")
        ucols = [i for i, h in enumerate(header) if h.startswith("u_")]
        ycols = [i for i, h in enumerate(header) if h.startswith("y_")]
        if not ycols:
            raise PreconditionError("trajectory CSV has no y_ columns")
        body = [r for r in rows[1:] if r]
        data = np.array([[float(x) for x in r] for r in body], dtype=float)
        if data.size == 0:
            raise PreconditionError("trajectory CSV has no samples")
        return cls(data[:, ucols], data[:, ycols])


def fmt_float(v: float) -> str:
    """Format with 17 significant digits so CSV round trips are lossless."""
    return format(float(v), ".17g")


@dataclass(frozen=True)
class DataMatrix:
    """Partitioned data matrix with its bookkeeping.

    ``Up`` is ``(m*N_p, ell)`` in the io setting and ``(0, ell)`` in the state
    setting, where ``Yp`` holds the measured state.
    """

    Up: np.ndarray
    Yp: np.ndarray
    Uf: np.ndarray
    Yf: np.ndarray
    m: int
    p: int
    N_p: int
    N_f: int
    setting: str = "io"

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise PreconditionError(f"unknown setting {self.setting!r}")
        blocks = {}
        for name in ("Up", "Yp", "Uf", "Yf"):
            b = np.array(getattr(self, name), dtype=float)
            if b.ndim != 2:
                raise DimensionError(f"{name} must be 2-D, got shape {b.shape}")
            if not np.all(np.isfinite(b)):
                raise PreconditionError(f"{name} contains non-finite entries")
            b.setflags(write=False)
            blocks[name] = b
            object.__setattr__(self, name, b)
        if self.setting == "state" and self.N_p != 0:
            raise PreconditionError("state-setting data has no past I/O window; N_p must be 0")
        ells = {b.shape[1] for b in blocks.values()}
        if len(ells) != 1:
            raise DimensionError(f"blocks have inconsistent column counts {sorted(ells)}")
        if blocks["Yf"].shape[1] < 1:
            raise DimensionError("data matrix needs at least one column")
        expect = {
            "Up": self.m * self.N_p if self.setting == "io" else 0,
            "Yp": self.p * self.N_p if self.setting == "io" else self.p,
            "Uf": self.m * self.N_f,
            "Yf": self.p * self.N_f,
        }
        for name, rows in expect.items():
            if blocks[name].shape[0] != rows:
                raise DimensionError(
                    f"{name} has {blocks[name].shape[0]} rows, expected {rows}"
                )

    @property
    def ell(self) -> int:
        return self.Yf.shape[1]

    @property
    def L(self) -> int:
        return self.N_p + self.N_f

    @property
    def Wp(self) -> np.ndarray:
        return np.vstack([self.Up, self.Yp])

    @property
    def Z(self) -> np.ndarray:
        """The stacked ``(W_p; U_f)`` block used by the SPC fit."""
        return np.vstack([self.Up, self.Yp, self.Uf])

    @property
    def full(self) -> np.ndarray:
        return np.vstack([self.Up, self.Yp, self.Uf, self.Yf])

    @property
    def n_xi(self) -> int:
        return self.Up.shape[0] + self.Yp.shape[0]

    @property
    def n_u(self) -> int:
        return self.m * self.N_f

    @property
    def n_y(self) -> int:
        return self.p * self.N_f

    @property
    def rows(self) -> int:
        return self.n_xi + self.n_u + self.n_y

    def split(self, w) -> tuple:
        """Split a stacked column ``(xi; u_f; y_f)`` into its three parts."""
        w = np.asarray(w, dtype=float).reshape(-1)
        a, b = self.n_xi, self.n_xi + self.n_u
        return w[:a], w[a:b], w[b:]

    def stack(self, xi, u_f, y_f) -> np.ndarray:
        xi = np.asarray(xi, dtype=float).reshape(-1)
        u_f = np.asarray(u_f, dtype=float).reshape(-1)
        y_f = np.asarray(y_f, dtype=float).reshape(-1)
        if (xi.size, u_f.size, y_f.size) != (self.n_xi, self.n_u, self.n_y):
            raise DimensionError(
                f"expected (xi, u_f, y_f) sizes {(self.n_xi, self.n_u, self.n_y)}, "
                f"got {(xi.size, u_f.size, y_f.size)}"
            )
        return np.concatenate([xi, u_f, y_f])

    def dims(self) -> dict:
        return {
            "m": self.m,
            "p": self.p,
            "N_p": self.N_p,
            "N_f": self.N_f,
            "ell": self.ell,
            "setting": self.setting,
        }

    def to_dict(self) -> dict:
        return {
            "dims": self.dims(),
            "Up": self.Up.tolist(),
            "Yp": self.Yp.tolist(),
            "Uf": self.Uf.tolist(),
            "Yf": self.Yf.tolist(),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "DataMatrix":
        dims = d["dims"]
        ell = int(dims["ell"])

        def block(name):
            b = np.array(d[name], dtype=float)
            return b.reshape(0, ell) if b.size == 0 else b

        return cls(
            block("Up"),
            block("Yp"),
            block("Uf"),
            block("Yf"),
            m=int(dims["m"]),
            p=int(dims["p"]),
            N_p=int(dims["N_p"]),
            N_f=int(dims["N_f"]),
            setting=dims.get("setting", "io"),
        )

    @classmethod
    def from_json(cls, source) -> "DataMatrix":
        text = source
        if isinstance(source, Path) or not str(source).lstrip().startswith("{"):
            text = Path(source).read_text()
        return cls.from_dict(json.loads(text))


def _check_counts(N_p: int, N_f: int, ell: int, stride: int, setting: str):
    if N_f < 1:
        raise PreconditionError("N_f must be >= 1")
    if setting == "io" and N_p < 1:
        raise PreconditionError("N_p must be >= 1 in the io setting")
    if ell < 1:
        raise PreconditionError("ell must be >= 1")
    if stride < 1:
        raise PreconditionError("stride must be >= 1")


def window_length(N_p: int, N_f: int, setting: str = "io") -> int:
    """Number of consecutive samples one data column consumes."""
    return N_p + N_f if setting == "io" else N_f + 1


def max_columns(length: int, N_p: int, N_f: int, stride: int = 1, setting: str = "io") -> int:
    span = window_length(N_p, N_f, setting)
    if length < span:
        return 0
    return (length - span) // stride + 1


def _window(traj: TrajectoryData, start: int, N_p: int, N_f: int, setting: str):
    if setting == "io":
        u = traj.u[start:start + N_p + N_f]
        y = traj.y[start:start + N_p + N_f]
        return (
            u[:N_p].reshape(-1),
            y[:N_p].reshape(-1),
            u[N_p:].reshape(-1),
            y[N_p:].reshape(-1),
        )
    return (
        np.zeros(0),
        traj.y[start].reshape(-1),
        traj.u[start:start + N_f].reshape(-1),
        traj.y[start + 1:start + 1 + N_f].reshape(-1),
    )


def _assemble(cols, ell):
    out = []
    for j in range(4):
        if cols[0][j].size:
            out.append(np.column_stack([c[j] for c in cols]))
        else:
            out.append(np.zeros((0, ell)))
    return out


def build_data_matrix(
    traj: TrajectoryData,
    N_p: int,
    N_f: int,
    ell: Optional[int] = None,
    stride: int = 1,
    setting: str = "io",
) -> DataMatrix:
    """Assemble a data matrix from time-shifted windows of one trajectory.

    Column ``i`` is the window starting at sample ``i * stride``; ``stride=1``
    gives the Hankel layout.  ``ell=None`` takes as many columns as fit.
    In the state setting ``N_p`` is ignored (the past block is ``y(s)``).
    """
    if setting not in SETTINGS:
        raise PreconditionError(f"unknown setting {setting!r}")
    if setting == "state":
        N_p = 0
    if ell is None:
        ell = max_columns(len(traj), N_p, N_f, stride, setting)
        if ell < 1:
            ell = 1
    _check_counts(N_p, N_f, ell, stride, setting)
    need = window_length(N_p, N_f, setting) + (ell - 1) * stride
    if len(traj) < need:
        raise PreconditionError(
            f"trajectory too short: {need} samples required, {len(traj)} available"
        )
    cols = [_window(traj, i * stride, N_p, N_f, setting) for i in range(ell)]
    Up, Yp, Uf, Yf = _assemble(cols, ell)
    return DataMatrix(Up, Yp, Uf, Yf, m=traj.m, p=traj.p, N_p=N_p, N_f=N_f, setting=setting)


def build_from_independent(
    trajs: Sequence[TrajectoryData], N_p: int, N_f: int, setting: str = "io"
) -> DataMatrix:
    """One column per independent experiment of exactly one window length."""
    if not trajs:
        raise PreconditionError("need at least one trajectory")
    if setting == "state":
        N_p = 0
    m, p = trajs[0].m, trajs[0].p
    span = window_length(N_p, N_f, setting)
    for i, t in enumerate(trajs):
        if (t.m, t.p) != (m, p):
            raise DimensionError(
                f"trajectory {i} has (m, p) = {(t.m, t.p)}, expected {(m, p)}"
            )
        if len(t) != span:
            raise PreconditionError(
                f"trajectory {i} has {len(t)} samples, expected exactly {span}"
            )
    cols = [_window(t, 0, N_p, N_f, setting) for t in trajs]
    ell = len(trajs)
    Up, Yp, Uf, Yf = _assemble(cols, ell)
    return DataMatrix(Up, Yp, Uf, Yf, m=m, p=p, N_p=N_p, N_f=N_f, setting=setting)


@dataclass(frozen=True)
class RankReport:
    rank: int
    rows: int
    cols: int
    full_row_rank: bool
    gpe_rank_target: Optional[int]
    satisfies_gpe_exactly: Optional[bool]
    singular_values: tuple = field(default=())

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "rows": self.rows,
            "cols": self.cols,
            "full_row_rank": self.full_row_rank,
            "gpe_rank_target": self.gpe_rank_target,
            "satisfies_gpe_exactly": self.satisfies_gpe_exactly,
            "singular_values": list(self.singular_values),
        }


def rank_diagnostics(D: DataMatrix, n: Optional[int] = None, tol: Optional[float] = None) -> RankReport:
    """Numerical rank of the stacked matrix against full row rank and ``L*m + n``.

    The exact-data target counts every input sample in a window plus the
    state dimension; in the io setting that is ``L*m + n``, in the state
    setting ``N_f*m + n``.
    """
    M = D.full
    s = singular_values(M)
    smax = s[0] if s.size else 0.0
    cut = default_tol(M.shape, smax) if tol is None else tol
    rank = int(np.count_nonzero(s > cut)) if smax > 0 else 0
    target = None
    exact = None
    if n is not None:
        target = D.Up.shape[0] + D.Uf.shape[0] + int(n)
        exact = rank == target
    return RankReport(
        rank=rank,
        rows=M.shape[0],
        cols=M.shape[1],
        full_row_rank=rank == M.shape[0],
        gpe_rank_target=target,
        satisfies_gpe_exactly=exact,
        singular_values=tuple(float(v) for v in s),
    )


def extract_xi(traj: TrajectoryData, at: int, N_p: int, setting: str = "io") -> np.ndarray:
    """Past data ``xi`` for a future window starting at sample ``at``.

    io: ``(u(at-N_p..at-1); y(at-N_p..at-1))`` in the same order as the
    ``W_p`` rows.  state: the measured state ``y(at)``.
    """
    if setting == "io":
        if at < N_p:
            raise PreconditionError(
                f"need {N_p} samples of history before index {at}"
            )
        if at > len(traj):
            raise PreconditionError(f"index {at} beyond trajectory length {len(traj)}")
        return np.concatenate(
            [traj.u[at - N_p:at].reshape(-1), traj.y[at - N_p:at].reshape(-1)]
        )
    if setting == "state":
        if not 0 <= at < len(traj):
            raise PreconditionError(f"no measured state at index {at}")
        return traj.y[at].copy()
    raise PreconditionError(f"unknown setting {setting!r}")
