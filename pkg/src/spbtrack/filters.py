"""Motion filtering for 11-D track states.

State layout (index / meaning):

    0 x, 1 y, 2 z, 3 yaw, 4 vx, 5 vy, 6 ax, 7 ay, 8 w, 9 l, 10 h

The motion model integrates planar constant acceleration for (x, y) and holds
everything else; the measurement is the 7-D detector output
[x, y, z, yaw, w, l, h]. Three variants share this model:

* ``kf``   - textbook linear Kalman filter, fixed measurement covariance.
* ``ukf``  - unscented filter (sigma-point transform), fixed covariance.
* ``dukf`` - unscented filter whose measurement covariance is re-estimated
             every update from the innovation and the detection confidence.

Filter states are values: every operation returns a new FilterState and never
mutates its input, so independent tracks can be filtered concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CholeskyFailure, DimensionMismatch, NonFiniteInput
from .geometry import Box3D, wrap_angle

STATE_DIM = 11
MEAS_DIM = 7
# State indices observed by the detector, in measurement order.
MEAS_IDX = np.array([0, 1, 2, 3, 8, 9, 10])
MIN_DIM = 0.05  # meters; box extents are clamped here after every update

KF = "kf"
UKF = "ukf"
DUKF = "dukf"
VARIANTS = (KF, UKF, DUKF)


@dataclass(frozen=True)
class TrackState:
    """Named view of the 11-D state vector."""

    x: float
    y: float
    z: float
    yaw: float
    vx: float
    vy: float
    ax: float
    ay: float
    w: float
    l: float
    h: float

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.x, self.y, self.z, self.yaw, self.vx, self.vy,
             self.ax, self.ay, self.w, self.l, self.h],
            dtype=float,
        )

    @staticmethod
    def from_array(v) -> "TrackState":
        v = np.asarray(v, dtype=float)
        return TrackState(*v.tolist())

    def box(self) -> Box3D:
        return Box3D(x=self.x, y=self.y, z=self.z, yaw=self.yaw,
                     w=self.w, l=self.l, h=self.h)


def state_diag(pos, yaw, vel, acc, dim) -> np.ndarray:
    return np.diag([pos, pos, pos, yaw, vel, vel, acc, acc, dim, dim, dim]).astype(float)


def meas_diag(pos, yaw, dim) -> np.ndarray:
    return np.diag([pos, pos, pos, yaw, dim, dim, dim]).astype(float)


@dataclass(frozen=True)
class FilterConfig:
    """Tuning knobs shared by all variants.

    ``alpha_adapt`` is the forgetting factor of the covariance re-estimate
    (only used by ``dukf``); ``kappa`` spreads the sigma points.
    """

    variant: str = DUKF
    kappa: float = 0.0
    alpha_adapt: float = 0.5
    adapt_r_cap: float = 25.0  # ceiling on adapted R, as a multiple of r_init
    dt: float = 0.1
    r_init: np.ndarray = field(default_factory=lambda: meas_diag(0.0025, 0.01, 0.0025))
    q: np.ndarray = field(default_factory=lambda: state_diag(2.5e-3, 0.05, 0.05, 0.25, 1e-6))
    p_init: np.ndarray = field(default_factory=lambda: state_diag(0.01, 0.05, 2.25, 1.0, 0.01))

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown filter variant {self.variant!r}")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if STATE_DIM + self.kappa <= 0.0:
            raise ValueError("kappa must exceed -11")
        if self.adapt_r_cap <= 0.0:
            raise ValueError("adapt_r_cap must be positive")


@dataclass(frozen=True)
class FilterState:
    """Gaussian belief over one track plus its (possibly adapted) noise model."""

    mean: TrackState
    P: np.ndarray
    R: np.ndarray
    Q: np.ndarray


@dataclass(frozen=True)
class SigmaSet:
    points: np.ndarray   # (2*STATE_DIM + 1, STATE_DIM)
    weights: np.ndarray  # (2*STATE_DIM + 1,)


def _symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _psd_sqrt(p: np.ndarray) -> np.ndarray:
    """Symmetric square root of a PSD matrix.

    Eigenvalues down to -1e-9 are treated as rounding noise; below that one
    jitter of 1e-9*I is attempted before giving up. Diagonal matrices take an
    exact fast path (this keeps zero-covariance sigma sets exactly collapsed).
    """
    if not np.any(p - np.diag(np.diagonal(p))):
        d = np.diagonal(p).copy()
        if d.min() < -1e-9:
            d = d + 1e-9
            if d.min() < 0.0:
                raise CholeskyFailure(f"covariance has eigenvalue {d.min():.3e} after jitter")
        return np.diag(np.sqrt(np.maximum(d, 0.0)))
    vals, vecs = np.linalg.eigh(_symmetrize(p))
    if vals.min() < -1e-9:
        vals = vals + 1e-9
        if vals.min() < 0.0:
            raise CholeskyFailure(f"covariance has eigenvalue {vals.min():.3e} after jitter")
    vals = np.maximum(vals, 0.0)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _psd_project(m: np.ndarray, floor: float = 1e-9,
                 ceiling: float = math.inf) -> np.ndarray:
    """Clip eigenvalues into [floor, ceiling]; returns the input untouched
    when it already complies (preserves bit-exact no-op behavior)."""
    sym = _symmetrize(m)
    vals = np.linalg.eigvalsh(sym)
    if vals.min() >= floor and vals.max() <= ceiling:
        return m
    vals, vecs = np.linalg.eigh(sym)
    return (vecs * np.clip(vals, floor, ceiling)) @ vecs.T


def sigma_points(mean, P: np.ndarray, kappa: float) -> SigmaSet:
    """Deterministic sample set matching the mean and covariance.

    Center point weighted kappa/(L+kappa); the remaining 2L points sit at
    mean +/- the columns of sqrt((L+kappa) P), each weighted 1/(2(L+kappa)).
    """
    x = mean.to_array() if isinstance(mean, TrackState) else np.asarray(mean, dtype=float)
    scale = STATE_DIM + kappa
    spread = _psd_sqrt(scale * np.asarray(P, dtype=float))
    points = np.empty((2 * STATE_DIM + 1, STATE_DIM))
    points[0] = x
    points[1:STATE_DIM + 1] = x + spread.T
    points[STATE_DIM + 1:] = x - spread.T
    weights = np.full(2 * STATE_DIM + 1, 1.0 / (2.0 * scale))
    weights[0] = kappa / scale
    return SigmaSet(points=points, weights=weights)


def transition_matrix(dt: float) -> np.ndarray:
    f = np.eye(STATE_DIM)
    f[0, 4] = dt
    f[0, 6] = 0.5 * dt * dt
    f[1, 5] = dt
    f[1, 7] = 0.5 * dt * dt
    f[4, 6] = dt
    f[5, 7] = dt
    return f


def measurement_matrix() -> np.ndarray:
    h = np.zeros((MEAS_DIM, STATE_DIM))
    h[np.arange(MEAS_DIM), MEAS_IDX] = 1.0
    return h


def motion_step(states: np.ndarray, dt: float) -> np.ndarray:
    """Apply the constant-acceleration planar motion model to state rows."""
    out = states.copy()
    out[..., 0] += states[..., 4] * dt + 0.5 * states[..., 6] * dt * dt
    out[..., 1] += states[..., 5] * dt + 0.5 * states[..., 7] * dt * dt
    out[..., 4] += states[..., 6] * dt
    out[..., 5] += states[..., 7] * dt
    return out


def _finalize_mean(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    x[3] = wrap_angle(x[3])
    x[8:11] = np.maximum(x[8:11], MIN_DIM)
    return x


def make_filter_state(z: np.ndarray, cfg: FilterConfig) -> FilterState:
    """Belief for a newborn track: measured components from the detection,
    velocities and accelerations zero, covariance from config."""
    z = np.asarray(z, dtype=float)
    x = np.zeros(STATE_DIM)
    x[MEAS_IDX] = z
    return FilterState(
        mean=TrackState.from_array(_finalize_mean(x)),
        P=cfg.p_init.copy(),
        R=cfg.r_init.copy(),
        Q=cfg.q.copy(),
    )


def predict(fs: FilterState, cfg: FilterConfig, dt: float | None = None) -> FilterState:
    """Propagate the belief one frame forward through the motion model."""
    if dt is None:
        dt = cfg.dt
    x = fs.mean.to_array()
    if cfg.variant == KF:
        f = transition_matrix(dt)
        x_pred = f @ x
        p_pred = f @ fs.P @ f.T + fs.Q
    else:
        sig = sigma_points(x, fs.P, cfg.kappa)
        propagated = motion_step(sig.points, dt)
        x_pred = sig.weights @ propagated
        diffs = propagated - x_pred
        p_pred = (diffs.T * sig.weights) @ diffs + fs.Q
    return replace(fs, mean=TrackState.from_array(_finalize_mean(x_pred)),
                   P=_symmetrize(p_pred))


def _validate_measurement(z: np.ndarray):
    if z.shape != (MEAS_DIM,):
        raise DimensionMismatch(f"measurement must have shape ({MEAS_DIM},), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise NonFiniteInput("measurement contains non-finite values")


def baseline_kf_step(fs: FilterState, z, cfg: FilterConfig) -> FilterState:
    """Linear Kalman measurement update with fixed covariance (ablation baseline)."""
    z = np.asarray(z, dtype=float)
    _validate_measurement(z)
    x = fs.mean.to_array()
    h = measurement_matrix()
    nu = z - h @ x
    nu[3] = wrap_angle(nu[3])
    s = h @ fs.P @ h.T + cfg.r_init
    k = np.linalg.solve(s.T, (fs.P @ h.T).T).T
    x_post = x + k @ nu
    p_post = _psd_project(_symmetrize(fs.P - k @ s @ k.T), 0.0)
    return replace(fs, mean=TrackState.from_array(_finalize_mean(x_post)),
                   P=p_post)


def update(fs: FilterState, z, confidence: float, cfg: FilterConfig) -> FilterState:
    """Fold one detection into the belief.

    For ``dukf`` the stored measurement covariance is first re-estimated from
    the innovation, scaled by the inverse detection confidence (floored at
    0.05 so a near-zero score cannot blow it up more than 20x), and projected
    back to SPD; the Kalman gain then uses the freshly adapted covariance.

    The re-estimate has positive feedback: a large R shrinks the gain, the
    systematic innovation persists, and R grows further until the filter
    ignores measurements entirely. The projection therefore also caps the
    eigenvalues at ``adapt_r_cap`` times the initial covariance scale, which
    bounds the lockout and lets the track re-acquire within a few frames.
    """
    z = np.asarray(z, dtype=float)
    _validate_measurement(z)
    if cfg.variant == KF:
        return baseline_kf_step(fs, z, cfg)

    x = fs.mean.to_array()
    sig = sigma_points(x, fs.P, cfg.kappa)
    gammas = sig.points[:, MEAS_IDX]
    z_hat = sig.weights @ gammas
    d_meas = gammas - z_hat
    p_zz = (d_meas.T * sig.weights) @ d_meas
    s_spread = p_zz + cfg.r_init

    nu = z - z_hat
    nu[3] = wrap_angle(nu[3])

    r = fs.R
    if cfg.variant == DUKF:
        conf = max(float(confidence), 0.05)
        r = (1.0 / conf) * ((1.0 - cfg.alpha_adapt) * fs.R
                            + cfg.alpha_adapt * (np.outer(nu, nu) - s_spread))
        ceiling = cfg.adapt_r_cap * float(cfg.r_init.diagonal().max())
        r = _psd_project(r, 1e-9, ceiling)

    s_gain = p_zz + r
    d_state = sig.points - x
    p_xz = (d_state.T * sig.weights) @ d_meas
    k = np.linalg.solve(s_gain.T, p_xz.T).T
    x_post = x + k @ nu
    p_post = _psd_project(_symmetrize(fs.P - k @ s_gain @ k.T), 0.0)
    return FilterState(mean=TrackState.from_array(_finalize_mean(x_post)),
                       P=p_post, R=r, Q=fs.Q)
