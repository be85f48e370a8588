"""Green kernel of the jump-OU process through its Fourier transform.

The transform ``Ghat(x, z) = int e^{izy} G(x, y) dy`` solves the first-order
ODE

    (alpha + sigma^2 z^2/2 - i lam z/(beta - iz)) Ghat + gamma z dGhat/dz = e^{izx}

whose homogeneous solution is ``H(z) = exp(-sigma^2 z^2/(4 gamma))
|z|^{-alpha/gamma} (beta - iz)^{-lam/gamma}``.  The particular solution

    Ghat(x, z) = H(z)/gamma * int_0^z e^{i zeta x} / (zeta H(zeta)) d zeta

is evaluated by Gauss-Legendre quadrature, always in the scaled form
``H(z)/H(zeta)`` so nothing overflows, and inverted to a density on a
uniform y-grid with the inverse FFT.
"""

from __future__ import annotations

import math
import struct
import warnings
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _accel
from . import _rowquad
from .errors import GridResolutionError, GridResolutionWarning, ParameterError, QuadratureError
from .model import ModelParams, Problem

_GL_LOW = 10
_GL_HIGH = 20
_MAX_DEPTH = 40
# Width of the composite panels for a standalone transform evaluation.
_PANEL_WIDTH = 0.05


@lru_cache(maxsize=None)
def _gauss_legendre(n: int):
    t, w = np.polynomial.legendre.leggauss(n)
    return t, w


def _coefficients(params: ModelParams, alpha: float):
    g = params.gamma
    return params.sigma**2 / (4.0 * g), alpha / g, params.lam / g


def log_homogeneous(params: ModelParams, alpha: float, z):
    """Principal-branch ``log H(z)`` for ``z != 0``."""
    s, p, q = _coefficients(params, alpha)
    z = np.asarray(z, dtype=float)
    return -s * z * z - p * np.log(np.abs(z)) - q * np.log(params.beta - 1j * z)


def homogeneous_H(params: ModelParams, alpha: float, z: float) -> complex:
    """Homogeneous solution ``H(z)`` of the transform ODE.

    Uses the principal branch of ``(beta - iz)^{-lam/gamma}``; ``beta > 0``
    keeps the base in the right half-plane so the branch is continuous in z.
    """
    if z == 0:
        raise ParameterError("H is singular at z = 0")
    return complex(np.exp(log_homogeneous(params, alpha, z)))


def _gl_apply(fun, a, b, ref, n):
    t, w = _gauss_legendre(n)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = mid[:, None] + half[:, None] * t[None, :]
    vals = fun(nodes, ref[:, None])
    return half * (vals @ w)


def _adaptive(fun, a, b, ref, tol, z_diag):
    """Vectorized adaptive Gauss-Legendre over panels ``[a_k, b_k]``.

    ``fun(nodes, ref)`` evaluates the integrand at nodes of shape (P, m) with a
    per-panel reference value.  Panels are bisected until the low/high order
    estimates agree to ``tol`` relative to the panel magnitude.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ref = np.asarray(ref)
    total = np.zeros(a.shape[0], dtype=np.complex128)
    err_total = np.zeros(a.shape[0])
    owner = np.arange(a.shape[0])
    floor = None
    for _ in range(_MAX_DEPTH):
        lo = _gl_apply(fun, a, b, ref, _GL_LOW)
        hi = _gl_apply(fun, a, b, ref, _GL_HIGH)
        err = np.abs(hi - lo)
        if floor is None:
            floor = 1e-6 * float(np.max(np.abs(hi), initial=0.0))
        ok = err <= tol * np.maximum(np.abs(hi), floor)
        np.add.at(total, owner[ok], hi[ok])
        np.add.at(err_total, owner[ok], err[ok])
        if ok.all():
            return total, err_total
        bad = ~ok
        a, b, ref, owner = a[bad], b[bad], ref[bad], owner[bad]
        m = 0.5 * (a + b)
        a, b = np.concatenate([a, m]), np.concatenate([m, b])
        ref = np.concatenate([ref, ref])
        owner = np.concatenate([owner, owner])
    raise QuadratureError("transform quadrature did not converge", z_diag, float(np.max(err)))


def _scaled_integrand(params, alpha, x):
    """``e^{i zeta x} H(zr) / (gamma zeta H(zeta))`` with ``ref = log H(zr)``."""
    g = params.gamma

    def fun(zeta, log_h_ref):
        return np.exp(1j * zeta * x + log_h_ref - log_homogeneous(params, alpha, zeta)) / (g * zeta)

    return fun


def _origin_integral(params, alpha, x, eps, zr, tol):
    """``int_0^eps`` of the scaled integrand with reference ``zr >= eps``.

    Near 0 the integrand behaves like ``zeta^{alpha/gamma - 1}``; the change of
    variables ``zeta = zr v^{gamma/alpha}`` removes that factor.
    """
    s, p, q = _coefficients(params, alpha)
    beta = params.beta
    log_q_ref = np.log(beta - 1j * zr)

    def fun(v, _ref):
        zeta = zr * v ** (1.0 / p)
        expo = 1j * zeta * x - s * (zr * zr - zeta * zeta) - q * (log_q_ref - np.log(beta - 1j * zeta))
        return np.exp(expo)

    upper = (eps / zr) ** p
    val, err = _adaptive(fun, np.array([0.0]), np.array([upper]), np.zeros(1), tol, zr)
    c = 1.0 / (params.gamma * p)
    return complex(val[0] * c), float(err[0] * c)


def ghat(params: ModelParams, alpha: float, x: float, z: float, quad_tol: float = 1e-9) -> complex:
    """Fourier transform ``Ghat(x, z)`` of the Green kernel at one frequency.

    ``z = 0`` returns the limit ``1/alpha``; negative ``z`` is obtained by
    conjugate symmetry, since ``G(x, .)`` is a real density.
    """
    if quad_tol <= 0:
        raise ParameterError("quad_tol must be > 0")
    if z == 0:
        return complex(1.0 / alpha)
    if z < 0:
        return ghat(params, alpha, x, -z, quad_tol).conjugate()
    z = float(z)
    eps = min(0.1, z / 10.0)
    head, _ = _origin_integral(params, alpha, x, eps, z, quad_tol)
    n = max(1, math.ceil((z - eps) / _PANEL_WIDTH))
    edges = np.linspace(eps, z, n + 1)
    ref = np.full(n, complex(log_homogeneous(params, alpha, z)))
    body, _ = _adaptive(_scaled_integrand(params, alpha, x), edges[:-1], edges[1:], ref, quad_tol, z)
    return complex(head + body.sum())


def ghat_row(params: ModelParams, alpha: float, x: float, dz: float, n_half: int,
             quad_tol: float = 1e-9, backend: str | None = None) -> np.ndarray:
    """``Ghat(x, k dz)`` for ``k = 0..n_half``.

    Each panel ``[z_{k-1}, z_k]`` is integrated once and the running integral
    is carried forward by ``Ghat_k = H(z_k)/H(z_{k-1}) Ghat_{k-1} + P_k``.
    """
    z = dz * np.arange(n_half + 1)
    first, _ = _origin_integral(params, alpha, x, dz, dz, quad_tol)
    zk = z[2:]
    zp = z[1:-1]
    log_h = log_homogeneous(params, alpha, z[1:])
    ref = log_h[1:]
    panels, _ = _adaptive(_scaled_integrand(params, alpha, x), zp, zk, ref, quad_tol, dz)
    log_r = log_h[1:] - log_h[:-1]
    tail = _accel.linear_recurrence(log_r, panels, first, backend=backend)
    out = np.empty(n_half + 1, dtype=np.complex128)
    out[0] = 1.0 / alpha
    out[1:] = tail
    return out


def ode_residual(params: ModelParams, alpha: float, x: float, z: float, h: float = 1e-4,
                 quad_tol: float = 1e-12) -> float:
    """``|LHS - e^{izx}|`` of the transform ODE with a central difference in z."""
    if h <= 0:
        raise ParameterError("h must be > 0")
    if abs(z) < 10.0 * h:
        raise ParameterError(f"|z| = {abs(z):g} is within 10 h of the singular point z = 0")
    g0 = ghat(params, alpha, x, z, quad_tol)
    gp = ghat(params, alpha, x, z + h, quad_tol)
    gm = ghat(params, alpha, x, z - h, quad_tol)
    deriv = (gp - gm) / (2.0 * h)
    coef = alpha + 0.5 * params.sigma**2 * z * z - 1j * params.lam * z / (params.beta - 1j * z)
    lhs = coef * g0 + params.gamma * z * deriv
    return float(abs(lhs - np.exp(1j * z * x)))


def singular_part(params: ModelParams, alpha: float, x: float, z):
    """Large-|z| asymptote of ``e^{-izx} Ghat(x, z)``, regularized at z = 0.

    From the ODE, ``e^{-izx} Ghat ~ 2/(sigma^2 z^2) - 4i gamma x/(sigma^4 z^3)``.
    Both terms are replaced by rational functions with a closed-form inverse
    (see ``singular_density``).  Returns 0 when ``sigma = 0``.
    """
    z = np.asarray(z, dtype=float)
    if params.sigma == 0.0:
        return np.zeros_like(z, dtype=np.complex128)
    s2 = params.sigma**2
    k2 = _kappa(params, alpha) ** 2
    a2 = 2.0 / s2
    a3 = -4j * params.gamma * x / (s2 * s2)
    d = z * z + k2
    return a2 / d + a3 * z / (d * d)


def singular_density(params: ModelParams, alpha: float, x: float, u):
    """Inverse transform of ``singular_part`` at offset ``u = y - x``."""
    u = np.asarray(u, dtype=float)
    if params.sigma == 0.0:
        return np.zeros_like(u)
    s2 = params.sigma**2
    k = _kappa(params, alpha)
    e = np.exp(-k * np.abs(u))
    return (1.0 / (s2 * k)) * e - (params.gamma * x / (s2 * s2 * k)) * u * e


def _kappa(params: ModelParams, alpha: float) -> float:
    return math.sqrt(2.0 * (alpha + params.lam)) / params.sigma


def invert_transform(ghat_half: np.ndarray, x: float, dz: float, n: int,
                     params: ModelParams | None = None, alpha: float | None = None):
    """Density on the row-centred grid ``y_j = x + j dy``, ``j = -n/2..n/2-1``.

    Discretizes ``G(x, y) = 1/(2 pi) int e^{-izy} Ghat(x, z) dz`` with the
    trapezoid rule on ``[-z_max, z_max]``.  When ``params`` is given the
    asymptote from ``singular_part`` is removed before the FFT and its exact
    inverse added back afterwards, which suppresses the ringing caused by the
    kink of the density at ``y = x``.  Returns ``(y, density, dy)``.
    """
    z = dz * np.arange(ghat_half.shape[0])
    shifted = np.exp(-1j * z * x) * ghat_half
    if params is not None:
        shifted = shifted - singular_part(params, alpha, x, z)
    dens = np.fft.irfft(np.conj(shifted), n) * (n * dz / (2.0 * np.pi))
    dens = np.fft.fftshift(dens)
    dy = 2.0 * np.pi / (n * dz)
    u = dy * np.arange(-n // 2, n // 2)
    if params is not None:
        dens = dens + singular_density(params, alpha, x, u)
    return x + u, dens, dy


def truncation_estimate(params: ModelParams, alpha: float, x: float, z_max: float,
                        ghat_at_zmax: complex) -> float:
    """Pointwise density error from cutting the transform at ``z_max``.

    The remainder after removing ``singular_part`` decays like ``z^-4``, so
    ``(1/pi) int_{z_max}^inf |R| dz ~ |R(z_max)| z_max / (3 pi)``.
    """
    r = np.exp(-1j * z_max * x) * ghat_at_zmax - singular_part(params, alpha, x, z_max)
    return float(abs(r) * z_max / (3.0 * np.pi))


# --------------------------------------------------------------------------- #
# Grids
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class FourierGrid:
    """Frequency grid and tolerances for building kernel rows."""

    z_max: float = 40.0
    n_z: int = 4096
    x_values: tuple = ()
    quad_tol: float = 1e-9
    mass_tol: float = 1e-3
    identity_tol: float = 1e-2
    clip_tol: float = 1e-6
    tail_tol: float = 1e-3

    def __post_init__(self) -> None:
        n = int(self.n_z)
        if n != self.n_z or n < 256 or n & (n - 1):
            raise ParameterError(f"n_z must be a power of two >= 256, got {self.n_z}")
        if not (self.z_max > 0 and math.isfinite(self.z_max)):
            raise ParameterError(f"z_max must be > 0, got {self.z_max}")
        for name in ("quad_tol", "mass_tol", "identity_tol", "clip_tol", "tail_tol"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be > 0")
        object.__setattr__(self, "n_z", n)
        object.__setattr__(self, "x_values", tuple(float(v) for v in self.x_values))

    @property
    def dz(self) -> float:
        return 2.0 * self.z_max / self.n_z

    @property
    def dy(self) -> float:
        return 2.0 * np.pi / (self.n_z * self.dz)


@dataclass(frozen=True)
class KernelGrid:
    """Discretized ``G_alpha(x, y)``; one row per source state.

    Row ``i`` lives on its own uniform grid ``y_values[i]`` centred at
    ``x_values[i]`` (the kink of the density sits on a node).
    """

    alpha: float
    x_values: np.ndarray
    y_values: np.ndarray
    density: np.ndarray
    mass: np.ndarray
    dy: float
    z_values: np.ndarray = field(repr=False)
    transform: np.ndarray = field(repr=False)
    clipped: np.ndarray = field(repr=False)
    truncation: np.ndarray = field(repr=False)
    identity: np.ndarray | None = field(default=None, repr=False)

    @property
    def kink_index(self) -> int:
        return self.y_values.shape[1] // 2

    def row_index(self, x: float) -> int:
        hits = np.flatnonzero(self.x_values == x)
        if hits.size == 0:
            raise KeyError(f"no kernel row at x={x!r}")
        return int(hits[0])

    def identity_error(self, smooth_reward: Callable = lambda v: v) -> np.ndarray:
        if self.identity is None:
            raise ValueError("kernel grid was built without an excess function")
        return np.abs(self.identity - smooth_reward(self.x_values))

    def mass_error(self) -> np.ndarray:
        return np.abs(self.mass * self.alpha - 1.0)

    # ---------------------------------------------------------------- I/O
    def to_csv(self, path, header_comment: str | None = None) -> None:
        path = Path(path)
        with path.open("w") as fh:
            fh.write(f"# greenstop kernel v1 alpha={self.alpha:.12g} dy={self.dy:.12g}\n")
            if header_comment:
                fh.write(f"# {header_comment}\n")
            fh.write("x,y,density\n")
            for i, x in enumerate(self.x_values):
                xs = f"{x:.12g}"
                rows = [f"{xs},{y:.12g},{d:.12g}\n" for y, d in zip(self.y_values[i], self.density[i])]
                fh.writelines(rows)

    def save(self, path) -> None:
        buf = io.BytesIO()
        arrays = {
            "x_values": self.x_values, "y_values": self.y_values, "density": self.density,
            "mass": self.mass, "z_values": self.z_values, "transform": self.transform,
            "clipped": self.clipped, "truncation": self.truncation,
        }
        if self.identity is not None:
            arrays["identity"] = self.identity
        np.savez(buf, **arrays)
        meta = json.dumps({"alpha": self.alpha, "dy": self.dy}).encode()
        with open(path, "wb") as fh:
            fh.write(CACHE_MAGIC)
            fh.write(struct.pack("<II", CACHE_VERSION, len(meta)))
            fh.write(meta)
            fh.write(buf.getvalue())

    @classmethod
    def load(cls, path) -> "KernelGrid":
        with open(path, "rb") as fh:
            blob = fh.read()
        if not blob.startswith(CACHE_MAGIC):
            raise ValueError(f"{path}: not a greenstop kernel cache")
        off = len(CACHE_MAGIC)
        version, n_meta = struct.unpack_from("<II", blob, off)
        if version != CACHE_VERSION:
            raise ValueError(f"{path}: unsupported cache version {version}")
        off += 8
        meta = json.loads(blob[off : off + n_meta])
        data = np.load(io.BytesIO(blob[off + n_meta :]))
        return cls(
            alpha=float(meta["alpha"]), dy=float(meta["dy"]),
            x_values=data["x_values"], y_values=data["y_values"], density=data["density"],
            mass=data["mass"], z_values=data["z_values"], transform=data["transform"],
            clipped=data["clipped"], truncation=data["truncation"], identity=data["identity"] if "identity" in data else None,
        )


CACHE_MAGIC = b"GSTPKRN\x00"
CACHE_VERSION = 1


def build_kernel_row(problem: Problem, grid: FourierGrid, x: float, backend: str | None = None):
    """One row: ``(y, density, transform_half, clipped_mass, truncation)``."""
    params = problem.params
    if params is None:
        raise ParameterError("Fourier kernel needs a jump-OU problem (params is None)")
    if params.sigma <= 0:
        # without diffusion the transform decays like 1/z and the row has a jump discontinuity
        raise ParameterError("Fourier kernel needs sigma > 0")
    alpha = problem.alpha
    tr = ghat_row(params, alpha, x, grid.dz, grid.n_z // 2, grid.quad_tol, backend=backend)
    y, dens, dy = invert_transform(tr, x, grid.dz, grid.n_z, params, alpha)
    low = float(dens.min())
    if low < -grid.clip_tol:
        raise GridResolutionError(
            f"density at x={x:g} dips to {low:.3g} (< -clip_tol={grid.clip_tol:g}); "
            "increase z_max or n_z"
        )
    clipped = float(-np.minimum(dens, 0.0).sum() * dy)
    dens = np.maximum(dens, 0.0)
    trunc = truncation_estimate(params, alpha, x, grid.z_max, tr[-1])
    if trunc > grid.tail_tol:
        warnings.warn(
            f"transform truncation estimate {trunc:.2g} at x={x:g} exceeds tail_tol={grid.tail_tol:g}; "
            "consider a larger z_max",
            GridResolutionWarning,
            stacklevel=2,
        )
    return y, dens, tr, clipped, trunc


def build_kernel_grid(problem: Problem, grid: FourierGrid, x_values: Sequence[float] | None = None,
                      backend: str | None = None, check: bool = True, workers: int = 1) -> KernelGrid:
    """Evaluate, invert and validate kernel rows for every source state.

    Rows are independent; ``workers > 1`` builds them on a thread pool.
    """
    xs = np.asarray(grid.x_values if x_values is None else x_values, dtype=float)
    if xs.size == 0:
        raise ParameterError("no x values requested")

    def one(x):
        return build_kernel_row(problem, grid, float(x), backend=backend)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, xs))
    else:
        rows = [one(x) for x in xs]
    y = np.stack([r[0] for r in rows])
    dens = np.stack([r[1] for r in rows])
    k0 = grid.n_z // 2
    mass = np.array([_rowquad.integral(y[i], dens[i], k0) for i in range(xs.size)])
    identity = np.array([_rowquad.integral(y[i], dens[i] * problem.excess(y[i]), k0) for i in range(xs.size)])
    kg = KernelGrid(
        alpha=problem.alpha, x_values=xs, y_values=y, density=dens, mass=mass, dy=grid.dy,
        z_values=grid.dz * np.arange(k0 + 1), transform=np.stack([r[2] for r in rows]),
        clipped=np.array([r[3] for r in rows]), truncation=np.array([r[4] for r in rows]),
        identity=identity,
    )
    if check:
        err = kg.mass_error()
        if (err > grid.mass_tol).any():
            i = int(np.argmax(err))
            raise GridResolutionError(
                f"row mass {mass[i]:.6g} at x={xs[i]:g} deviates from 1/alpha beyond "
                f"mass_tol={grid.mass_tol:g}; increase z_max or n_z"
            )
        if (kg.clipped > 1e-4 * mass).any():
            raise GridResolutionError("clipped negative mass exceeds 1e-4 of the row mass")
    return kg
