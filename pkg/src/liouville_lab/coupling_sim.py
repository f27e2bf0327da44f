"""Coupling-by-reflection simulator and Monte Carlo harmonicity checks.

The pair (X, Y) is driven by the decomposition that the shifted square
root enables: sigma(x)^2 + mu*I = q(x) splits the diffusion into a
synchronous part (same Brownian increment dB through sigma at each
endpoint) and an additive isotropic part of size sqrt(mu) whose
increment is mirrored across the hyperplane orthogonal to X - Y:

    X <- X + b(X) dt + sigma(X) dB + sqrt(mu) dW
    Y <- Y + b(Y) dt + sigma(Y) dB + sqrt(mu) R dW,   R = I - 2 e e^T

with e = (X-Y)/|X-Y|.  The difference process then feels twice the
reflected noise along e, which is what drives the pair together.

Conventions: coupling is declared at a positive radius (exact hitting is
a null event under discretization); the reflection direction is frozen
within a step, and a step whose straight-line segment would cross the
origin of X - Y is treated as coupled at that step (clamping avoids a
spurious flip of e).  Escaped paths (either endpoint beyond the escape
radius) count as not coupled unless configured otherwise, and are
reported separately.

Every path owns the Philox substream (seed, path-domain, path index), so
results are independent of chunking and worker layout.  Noise is drawn
in whole-chunk blocks per path; a path that finishes mid-chunk simply
discards the remainder of its block, which keeps the draw layout — and
hence the output — a pure function of the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from . import _streams
from .coefficients import CoefficientField, EllipticityBounds
from .errors import ShiftTooLarge, SimulationBlowUp
from .matrix_analysis import _shifted_sqrt_batch

_STEP_CAP = 10_000_000
_NOISE_BUDGET_BYTES = 6e7


@dataclass(frozen=True)
class CouplingConfig:
    """Parameters of one coupling experiment.

    mu must lie in (0, lambda0) of the field in use — checked at
    simulation time against the supplied bounds, not here.
    escape_radius None means the default guard 1e3 * (1 + |x0| + |y0|).
    """

    mu: float
    t_max: float
    n_paths: int
    dt: float = 1e-3
    couple_radius: float = 1e-3
    escape_radius: Optional[float] = None
    seed: int = 0
    count_escaped_as_coupled: bool = False

    def __post_init__(self) -> None:
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ValueError("mu must be positive and finite")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if not (self.t_max >= 0 and math.isfinite(self.t_max)):
            raise ValueError("t_max must be nonnegative")
        if self.t_max > 0 and self.dt > self.t_max:
            raise ValueError("dt must not exceed t_max")
        if self.t_max / self.dt > _STEP_CAP:
            raise ValueError(f"t_max/dt exceeds the {_STEP_CAP} step cap")
        if not (self.couple_radius > 0):
            raise ValueError("couple_radius must be positive")
        if self.escape_radius is not None \
                and self.escape_radius <= self.couple_radius:
            raise ValueError("escape_radius must exceed couple_radius")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ValueError("n_paths must be a positive integer")

    def n_steps(self) -> int:
        return int(math.floor(self.t_max / self.dt + 1e-9))

    def resolved_escape_radius(self, x0: np.ndarray, y0: np.ndarray) -> float:
        if self.escape_radius is not None:
            return float(self.escape_radius)
        return 1e3 * (1.0 + float(np.linalg.norm(x0))
                      + float(np.linalg.norm(y0)))


@dataclass(frozen=True)
class CouplingStats:
    """Aggregated outcome of simulate_coupling.

    coupling_time_quantiles holds the (25%, 50%, 90%) quantiles of the
    coupling times among coupled paths (NaN when no path coupled).
    recorded_distances is test instrumentation: the |X-Y| sample frozen
    at a requested time, 0.0 for already-coupled paths.
    """

    n_paths: int
    n_coupled: int
    n_escaped: int
    p_couple: float
    ci_halfwidth: float
    coupling_time_quantiles: Tuple[float, float, float]
    recorded_distances: Optional[np.ndarray] = None


def _check_mu(mu: float, bounds: EllipticityBounds) -> None:
    if not (0.0 < mu < bounds.lambda0):
        raise ShiftTooLarge(
            f"mu = {mu} outside (0, lambda0 = {bounds.lambda0}); the "
            "shifted square root needs mu strictly below the ellipticity "
            "floor")


def _sigma_batch(field: CoefficientField, pts: np.ndarray,
                 mu: float, const_sigma: Optional[np.ndarray]) -> np.ndarray:
    if const_sigma is not None:
        return np.broadcast_to(const_sigma, (pts.shape[0],) + const_sigma.shape)
    q = np.asarray(field.diffusion(pts), dtype=float)
    return _shifted_sqrt_batch(q, mu)


def _const_sigma(field: CoefficientField, mu: float) -> Optional[np.ndarray]:
    if not field.constant_diffusion:
        return None
    q0 = np.asarray(field.diffusion(np.zeros((1, field.dim))), dtype=float)[0]
    return _shifted_sqrt_batch(q0[None], mu)[0]


def coupled_step(field: CoefficientField, bounds: EllipticityBounds,
                 x: np.ndarray, y: np.ndarray, mu: float, dt: float,
                 noise: Tuple[np.ndarray, np.ndarray],
                 ) -> Tuple[np.ndarray, np.ndarray]:
    """One explicit Euler step of the coupled pair (reference kernel).

    noise = (dB, dW): two independent N(0, dt*I_d) increments.  Requires
    x != y (the reflection direction is undefined at the diagonal).
    """
    _check_mu(mu, bounds)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = x - y
    dist = float(np.linalg.norm(diff))
    if not dist > 0.0:
        raise ValueError("coupled_step needs x != y")
    dB, dW = (np.asarray(a, dtype=float) for a in noise)
    e = diff / dist
    refl = dW - 2.0 * e * float(e @ dW)
    pts = np.stack([x, y])
    drift = np.asarray(field.drift(pts), dtype=float)
    sig = _sigma_batch(field, pts, mu, _const_sigma(field, mu))
    root_mu = math.sqrt(mu)
    x_new = x + drift[0] * dt + sig[0] @ dB + root_mu * dW
    y_new = y + drift[1] * dt + sig[1] @ dB + root_mu * refl
    return x_new, y_new


def _draw_noise(gens: Sequence[np.random.Generator], ids: np.ndarray,
                n_k: int, dim: int, root_dt: float) -> np.ndarray:
    out = np.empty((ids.size, n_k, 2 * dim))
    for row, pid in enumerate(ids):
        out[row] = gens[pid].standard_normal((n_k, 2 * dim))
    out *= root_dt
    return out


def _segment_min_distance(diff0: np.ndarray, diff1: np.ndarray) -> np.ndarray:
    """Min of |diff0 + a*(diff1-diff0)| over a in [0,1], per row."""
    delta = diff1 - diff0
    denom = np.einsum("ij,ij->i", delta, delta)
    num = -np.einsum("ij,ij->i", diff0, delta)
    alpha = np.where(denom > 0.0, num / np.where(denom > 0.0, denom, 1.0), 0.0)
    alpha = np.clip(alpha, 0.0, 1.0)
    closest = diff0 + alpha[:, None] * delta
    return np.linalg.norm(closest, axis=1)


def simulate_coupling(field: CoefficientField, bounds: EllipticityBounds,
                      cfg: CouplingConfig, x0, y0, *,
                      record_distance_at: Optional[float] = None,
                      ) -> CouplingStats:
    """Estimate the coupling probability from n_paths independent pairs.

    Each path stops at the first of: coupling (|X-Y| dips to the couple
    radius, segment-crossing counted), escape (either endpoint beyond
    the escape radius), or the horizon.  Deterministic given cfg.seed.
    """
    _check_mu(cfg.mu, bounds)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if x0.size != field.dim or y0.size != field.dim:
        raise ValueError("x0/y0 dimension mismatch with the field")
    if not np.linalg.norm(x0 - y0) > cfg.couple_radius:
        raise ValueError("x0 and y0 must start farther apart than the "
                         "couple radius")
    n = int(cfg.n_paths)
    dim = field.dim
    esc_radius = cfg.resolved_escape_radius(x0, y0)
    n_steps = cfg.n_steps()
    const_sigma = _const_sigma(field, cfg.mu)
    root_mu = math.sqrt(cfg.mu)
    root_dt = math.sqrt(cfg.dt)

    gens = [_streams.substream(cfg.seed, _streams.DOMAIN_PATHS, i)
            for i in range(n)]
    X = np.tile(x0, (n, 1))
    Y = np.tile(y0, (n, 1))
    ids = np.arange(n)
    coupled = np.zeros(n, dtype=bool)
    escaped = np.zeros(n, dtype=bool)
    couple_time = np.full(n, np.nan)
    recorded = None
    k_record = None
    if record_distance_at is not None:
        k_record = int(round(record_distance_at / cfg.dt))
        if not 0 <= k_record <= n_steps:
            raise ValueError("record_distance_at outside the horizon")
        recorded = np.zeros(n)
        if k_record == 0:
            recorded[:] = np.linalg.norm(x0 - y0)

    step = 0
    while step < n_steps and ids.size:
        budget = int(_NOISE_BUDGET_BYTES / max(1, ids.size * 2 * dim * 8))
        n_k = max(16, min(256, budget))
        n_k = min(n_k, n_steps - step)
        noise = _draw_noise(gens, ids, n_k, dim, root_dt)
        alive = np.ones(ids.size, dtype=bool)
        for k in range(n_k):
            rows = np.flatnonzero(alive)
            if rows.size == 0:
                break
            if k_record is not None and step + k == k_record:
                recorded[ids[rows]] = np.linalg.norm(X[rows] - Y[rows],
                                                     axis=1)
            xa = X[rows]
            ya = Y[rows]
            diff = xa - ya
            dist = np.linalg.norm(diff, axis=1)
            e = diff / dist[:, None]
            dB = noise[rows, k, :dim]
            dW = noise[rows, k, dim:]
            refl = dW - 2.0 * e * np.einsum("ij,ij->i", e, dW)[:, None]
            both = np.concatenate([xa, ya])
            drift = np.asarray(field.drift(both), dtype=float)
            sig = _sigma_batch(field, both, cfg.mu, const_sigma)
            m = rows.size
            x_new = xa + drift[:m] * cfg.dt \
                + np.einsum("nij,nj->ni", sig[:m], dB) + root_mu * dW
            y_new = ya + drift[m:] * cfg.dt \
                + np.einsum("nij,nj->ni", sig[m:], dB) + root_mu * refl
            bad = ~(np.isfinite(x_new).all(axis=1)
                    & np.isfinite(y_new).all(axis=1))
            if bad.any():
                j = int(np.flatnonzero(bad)[0])
                raise SimulationBlowUp(
                    "non-finite state in coupled pair",
                    path_index=int(ids[rows[j]]),
                    time=(step + k + 1) * cfg.dt)
            min_dist = _segment_min_distance(diff, x_new - y_new)
            hit = min_dist <= cfg.couple_radius
            esc = ~hit & ((np.linalg.norm(x_new, axis=1) > esc_radius)
                          | (np.linalg.norm(y_new, axis=1) > esc_radius))
            X[rows] = x_new
            Y[rows] = y_new
            if hit.any():
                pid = ids[rows[hit]]
                coupled[pid] = True
                couple_time[pid] = (step + k + 1) * cfg.dt
            if esc.any():
                escaped[ids[rows[esc]]] = True
            alive[rows[hit | esc]] = False
        step += n_k
        if k_record is not None and step == k_record and ids.size:
            live = np.flatnonzero(alive)
            recorded[ids[live]] = np.linalg.norm(X[live] - Y[live], axis=1)
        keep = alive
        X, Y, ids = X[keep], Y[keep], ids[keep]

    n_coupled = int(coupled.sum())
    n_escaped = int(escaped.sum())
    successes = n_coupled + (n_escaped if cfg.count_escaped_as_coupled else 0)
    p = successes / n
    ci = 1.96 * math.sqrt(p * (1.0 - p) / n)
    times = couple_time[coupled]
    if times.size:
        q = np.quantile(times, [0.25, 0.5, 0.9])
        quantiles = (float(q[0]), float(q[1]), float(q[2]))
    else:
        quantiles = (math.nan, math.nan, math.nan)
    return CouplingStats(
        n_paths=n, n_coupled=n_coupled, n_escaped=n_escaped,
        p_couple=p, ci_halfwidth=ci,
        coupling_time_quantiles=quantiles,
        recorded_distances=recorded,
    )


def simulate_pair_trajectory(field: CoefficientField,
                             bounds: EllipticityBounds,
                             cfg: CouplingConfig, x0, y0,
                             stride: int = 1,
                             ) -> Tuple[np.ndarray, np.ndarray, np.ndarray,
                                        np.ndarray]:
    """One recorded pair trajectory for the CSV dump.

    Returns (t, X, Y, dist) sampled every `stride` steps (plus the final
    state).  After coupling the pair moves as a single merged path
    (Y := X); escape truncates the record.  Uses path index 0's stream.
    """
    if int(stride) != stride or stride < 1:
        raise ValueError("stride must be a positive integer")
    _check_mu(cfg.mu, bounds)
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    y = np.asarray(y0, dtype=float).reshape(-1).copy()
    if x.size != field.dim or y.size != field.dim:
        raise ValueError("x0/y0 dimension mismatch with the field")
    esc_radius = cfg.resolved_escape_radius(x, y)
    n_steps = cfg.n_steps()
    const_sigma = _const_sigma(field, cfg.mu)
    root_mu = math.sqrt(cfg.mu)
    root_dt = math.sqrt(cfg.dt)
    gen = _streams.substream(cfg.seed, _streams.DOMAIN_PATHS, 0)

    times = [0.0]
    xs = [x.copy()]
    ys = [y.copy()]
    merged = False
    for k in range(n_steps):
        z = gen.standard_normal(2 * field.dim) * root_dt
        dB, dW = z[:field.dim], z[field.dim:]
        if merged:
            drift = np.asarray(field.drift(x[None]), dtype=float)[0]
            sig = _sigma_batch(field, x[None], cfg.mu, const_sigma)[0]
            x = x + drift * cfg.dt + sig @ dB + root_mu * dW
            y = x
        else:
            diff = x - y
            dist = float(np.linalg.norm(diff))
            e = diff / dist
            refl = dW - 2.0 * e * float(e @ dW)
            both = np.stack([x, y])
            drift = np.asarray(field.drift(both), dtype=float)
            sig = _sigma_batch(field, both, cfg.mu, const_sigma)
            x_new = x + drift[0] * cfg.dt + sig[0] @ dB + root_mu * dW
            y_new = y + drift[1] * cfg.dt + sig[1] @ dB + root_mu * refl
            crossing = _segment_min_distance((x - y)[None],
                                             (x_new - y_new)[None])[0]
            x, y = x_new, y_new
            if crossing <= cfg.couple_radius:
                merged = True
                y = x
        if not (np.isfinite(x).all() and np.isfinite(y).all()):
            raise SimulationBlowUp("non-finite state in pair trajectory",
                                   path_index=0, time=(k + 1) * cfg.dt)
        if max(np.linalg.norm(x), np.linalg.norm(y)) > esc_radius:
            break
        if (k + 1) % stride == 0 or k == n_steps - 1:
            times.append((k + 1) * cfg.dt)
            xs.append(x.copy())
            ys.append(y.copy())
    t = np.array(times)
    X = np.stack(xs)
    Y = np.stack(ys)
    return t, X, Y, np.linalg.norm(X - Y, axis=1)


def martingale_check(field: CoefficientField, bounds: EllipticityBounds,
                     u: Callable[[float, np.ndarray], float], mu: float,
                     x0, t: float, n_paths: int, dt: float, seed: int,
                     ) -> Tuple[float, float]:
    """Sample mean and standard error of u(t, X_t) over single paths.

    X uses the same noise decomposition as the pair simulator (sigma dB
    plus sqrt(mu) dW) without reflection; for a space-time harmonic u the
    mean estimates u(0, x0) up to discretization bias.
    """
    _check_mu(mu, bounds)
    if not t > 0:
        raise ValueError("t must be positive")
    if not (dt > 0 and dt <= t):
        raise ValueError("need 0 < dt <= t")
    if t / dt > _STEP_CAP:
        raise ValueError(f"t/dt exceeds the {_STEP_CAP} step cap")
    if int(n_paths) != n_paths or n_paths < 2:
        raise ValueError("n_paths must be an integer >= 2")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    dim = field.dim
    if x0.size != dim:
        raise ValueError("x0 dimension mismatch with the field")
    n_steps = int(math.floor(t / dt + 1e-9))
    const_sigma = _const_sigma(field, mu)
    root_mu = math.sqrt(mu)
    root_dt = math.sqrt(dt)
    gens = [_streams.substream(seed, _streams.DOMAIN_MARTINGALE, i)
            for i in range(int(n_paths))]
    X = np.tile(x0, (int(n_paths), 1))
    step = 0
    while step < n_steps:
        budget = int(_NOISE_BUDGET_BYTES / max(1, X.shape[0] * 2 * dim * 8))
        n_k = min(max(16, min(256, budget)), n_steps - step)
        noise = _draw_noise(gens, np.arange(X.shape[0]), n_k, dim, root_dt)
        for k in range(n_k):
            drift = np.asarray(field.drift(X), dtype=float)
            sig = _sigma_batch(field, X, mu, const_sigma)
            X = X + drift * dt \
                + np.einsum("nij,nj->ni", sig, noise[:, k, :dim]) \
                + root_mu * noise[:, k, dim:]
            if not np.isfinite(X).all():
                j = int(np.flatnonzero(~np.isfinite(X).all(axis=1))[0])
                raise SimulationBlowUp("non-finite state in martingale paths",
                                       path_index=j,
                                       time=(step + k + 1) * dt)
        step += n_k
    try:
        vals = np.asarray(u(n_steps * dt, X), dtype=float)
        if vals.shape != (X.shape[0],):
            raise ValueError
    except Exception:
        vals = np.array([float(u(n_steps * dt, X[i]))
                         for i in range(X.shape[0])])
    mean = float(np.mean(vals))
    stderr = float(np.std(vals, ddof=1) / math.sqrt(vals.size))
    return mean, stderr


def space_time_residual(field: CoefficientField,
                        u: Callable[[float, np.ndarray], float],
                        grid: Sequence[Tuple[float, np.ndarray]],
                        h: float = 1e-3) -> float:
    """Max |d_t u + L u| over the grid, by second-order central
    differences with step h (4-point stencil for the mixed terms)."""
    if not h > 0:
        raise ValueError("h must be positive")
    worst = 0.0
    dim = field.dim
    eye = np.eye(dim)
    for t, x in grid:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != dim:
            raise ValueError("grid point dimension mismatch")
        b = np.asarray(field.drift(x[None]), dtype=float)[0]
        q = np.asarray(field.diffusion(x[None]), dtype=float)[0]
        u0 = float(u(t, x))
        dt_u = (float(u(t + h, x)) - float(u(t - h, x))) / (2.0 * h)
        val = dt_u
        for i in range(dim):
            up = float(u(t, x + h * eye[i]))
            dn = float(u(t, x - h * eye[i]))
            val += b[i] * (up - dn) / (2.0 * h)
            val += 0.5 * q[i, i] * (up - 2.0 * u0 + dn) / h ** 2
            for j in range(i + 1, dim):
                upp = float(u(t, x + h * eye[i] + h * eye[j]))
                upm = float(u(t, x + h * eye[i] - h * eye[j]))
                ump = float(u(t, x - h * eye[i] + h * eye[j]))
                umm = float(u(t, x - h * eye[i] - h * eye[j]))
                cross = (upp - upm - ump + umm) / (4.0 * h ** 2)
                val += q[i, j] * cross
        worst = max(worst, abs(val))
    return worst
