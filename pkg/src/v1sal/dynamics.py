"""Excitatory/inhibitory firing-rate dynamics on the wavelet lattice.

Every pixel of the working image hosts one hypercolumn of scales x 3
orientations. Each node carries an excitatory membrane potential x and an
inhibitory partner y, integrated with explicit Euler (time in membrane
units, 10 ms each) under

    dx = -a_x x - g_y(y) - sum_psi Psi g_y(y') + J0 g_x(x)
         + sum_J J g_x(x_j) + input + I0 + u(t)
    dy = -a_y y - g_x(x) + sum_W W g_x(x_j) + Ic + n(t)

where g_x / g_y are piecewise-linear rate functions, J / W are the
translation-invariant lateral tables from :mod:`v1sal.kernels`, Psi
spreads inhibition to same-position neighbours one orientation step
(0.8) or one scale step (0.5) away, u is uniform background noise on the
excitatory drive and n is Gaussian noise on the inhibitory drive, both
drawn per node per step from one seeded generator.

A channel is simulated twice, on the rectified ON and OFF coefficient
stacks, with the *same* noise realisation for both polarities; the
conspicuity readout is the temporal mean of g_x over the trailing
averaging window, summed over polarities. Sharing the noise is what
makes the readout exactly symmetric under input sign flips.

Wavelet coefficients are scaled by ``input_gain`` on the way in: the
rate functions operate over potentials of order 1..2, while raw
coefficients of [0, 1]-range images live well below that.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DivergenceError, ValidationError
from .kernels import ORIENT_ANGLES, CouplingKernels

# Additive constant of the conspicuity readout. The source model leaves
# it undefined; it is pinned to zero.
CONSPICUITY_BASELINE = 0.0


@dataclass(frozen=True)
class PiecewiseLinear:
    """Threshold-linear rate function with optional knees and saturation.

    Zero below ``threshold``; then ``slopes[0]`` up to ``knees[0]``,
    ``slopes[1]`` beyond it, and so on; clamped at ``saturation`` when
    one is set. The defaults make a unit ramp saturating at rate 1.
    """

    threshold: float = 1.0
    slopes: tuple[float, ...] = (1.0,)
    knees: tuple[float, ...] = ()
    saturation: float | None = 1.0

    def __post_init__(self) -> None:
        if len(self.slopes) != len(self.knees) + 1:
            raise ValidationError("need exactly one slope per segment")
        if any(s <= 0 for s in self.slopes):
            raise ValidationError("slopes must be positive")
        last = self.threshold
        for knee in self.knees:
            if knee <= last:
                raise ValidationError("knees must increase from the threshold")
            last = knee

    def _node_points(self) -> tuple[np.ndarray, np.ndarray]:
        xs = [self.threshold]
        ys = [0.0]
        for knee, slope in zip(self.knees, self.slopes):
            ys.append(ys[-1] + slope * (knee - xs[-1]))
            xs.append(knee)
        if self.saturation is not None:
            if self.saturation < ys[-1]:
                raise ValidationError("saturation below the last knee's rate")
            xs.append(xs[-1] + (self.saturation - ys[-1]) / self.slopes[-1])
            ys.append(self.saturation)
        return np.asarray(xs), np.asarray(ys)

    @property
    def max_rate(self) -> float:
        return float("inf") if self.saturation is None else self.saturation

    def __call__(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if not self.knees and self.saturation is not None:
            # single ramp: the everyday case, kept allocation-light
            return np.clip((v - self.threshold) * self.slopes[0], 0.0, self.saturation)
        xs, ys = self._node_points()
        out = np.interp(v, xs, ys)
        if self.saturation is None:
            out = out + self.slopes[-1] * np.maximum(v - xs[-1], 0.0)
        return out


# Rate profiles of the classical two-population V1 model: excitatory
# cells ramp over potentials [1, 2] and saturate at rate 1; inhibitory
# cells start at 0 with unit slope and steepen past 1.2.
GX_LI98 = PiecewiseLinear(threshold=1.0, slopes=(1.0,), knees=(), saturation=1.0)
GY_LI98 = PiecewiseLinear(threshold=0.0, slopes=(1.0, 2.5), knees=(1.2,), saturation=3.0)


@dataclass(frozen=True)
class LatticeParams:
    """Integration constants and drives, one instance per simulation."""

    alpha_x: float = 1.0
    alpha_y: float = 1.0
    j0: float = 0.8
    i0: float = 0.85
    i0_noise: float = 0.1
    ic: float = 1.0
    ic_noise: float = 0.1
    dt: float = 0.1
    t_total: float = 10.0
    avg_window: float = 5.0
    membrane_ms: float = 10.0
    input_gain: float = 18.0
    activation_x: PiecewiseLinear = GX_LI98
    activation_y: PiecewiseLinear = GY_LI98
    psi_orient: float = 0.8
    psi_scale: float = 0.5
    lambda_profile: tuple[float, ...] = (1.0, 0.5)
    w_gate_as_printed: bool = True
    boundary: str = "wrap"
    precision: str = "single"

    def __post_init__(self) -> None:
        if self.dt <= 0 or not np.isfinite(self.dt):
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if self.t_total <= 0:
            raise ValidationError("t_total must be positive")
        if self.avg_window <= 0:
            raise ValidationError("avg_window must be positive")
        if self.precision not in ("single", "double"):
            raise ValidationError(f"unknown precision {self.precision!r}")

    @property
    def n_steps(self) -> int:
        return max(1, round(self.t_total / self.dt))

    @property
    def avg_steps(self) -> int:
        return min(self.n_steps, max(1, round(self.avg_window / self.dt)))

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32 if self.precision == "single" else np.float64)

    def with_overrides(self, **kw) -> "LatticeParams":
        return replace(self, **kw)


@dataclass
class LatticeState:
    """Membrane potentials of both populations; leading axes are batch."""

    x: np.ndarray
    y: np.ndarray
    t: float = 0.0
    step_index: int = 0


@dataclass
class ConspicuityResponse:
    """Temporal-mean firing rates of one channel's two polarity runs."""

    mean_rate_on: np.ndarray
    mean_rate_off: np.ndarray
    channel: str = ""
    trace_times: np.ndarray | None = None
    trace_rates: np.ndarray | None = None


def psi_matrix(scales: int, params: LatticeParams) -> np.ndarray:
    """Same-position inhibition spread: (S*O, S*O), zero diagonal.

    Orientation adjacency follows the angular order of the planes
    (0, 45, 90 degrees); one orientation step couples with
    ``psi_orient``, one scale step with ``psi_scale``.
    """
    n_o = len(ORIENT_ANGLES)
    rank = np.argsort(ORIENT_ANGLES)
    step_of = np.empty(n_o, dtype=int)
    step_of[rank] = np.arange(n_o)
    m = np.zeros((scales, n_o, scales, n_o))
    for s in range(scales):
        for o in range(n_o):
            for o2 in range(n_o):
                if abs(step_of[o] - step_of[o2]) == 1:
                    m[s, o, s, o2] = params.psi_orient
            if s > 0:
                m[s, o, s - 1, o] = params.psi_scale
            if s + 1 < scales:
                m[s, o, s + 1, o] = params.psi_scale
    return m.reshape(scales * n_o, scales * n_o)


def step(
    state: LatticeState,
    drive: np.ndarray,
    kernels: CouplingKernels | None,
    params: LatticeParams,
    psi: np.ndarray | None = None,
    noise_x: np.ndarray | float = 0.0,
    noise_y: np.ndarray | float = 0.0,
) -> LatticeState:
    """One explicit-Euler update; both populations read the old state.

    ``drive`` is the (already gained) input on the excitatory population,
    broadcastable to ``state.x``. ``kernels=None`` means an isolated
    lattice with no lateral coupling. ``psi`` is the matrix from
    :func:`psi_matrix` (or None to skip the inhibition spread, e.g. for
    single-node reductions).
    """
    g_x = params.activation_x
    g_y = params.activation_y
    x, y = state.x, state.y
    gx = g_x(x)
    gy = g_y(y)

    x_in = -params.alpha_x * x - gy + params.j0 * gx + drive + params.i0 + noise_x
    if psi is not None:
        flat = gy.reshape(gy.shape[:-4] + (-1,) + gy.shape[-2:])
        spread = np.matmul(psi.astype(gy.dtype, copy=False), flat.reshape(flat.shape[:-2] + (-1,)))
        x_in = x_in - spread.reshape(gy.shape)
    if kernels is not None:
        x_in = x_in + kernels.apply(gx, "j")

    y_in = -params.alpha_y * y - gx + params.ic + noise_y
    if kernels is not None and not kernels.w_is_zero:
        y_in = y_in + kernels.apply(gx, "w")

    dt = np.asarray(params.dt, dtype=x.dtype)
    return LatticeState(
        x=x + dt * x_in,
        y=y + dt * y_in,
        t=state.t + params.dt,
        step_index=state.step_index + 1,
    )


def _never_fires(params: LatticeParams) -> bool:
    """True when a zero-input lattice provably stays below threshold.

    With zero drive, non-negative couplings and dt*alpha_x <= 1, the
    excitatory potential obeys x' <= max(x, (i0 + noise)/alpha_x), so a
    threshold above that bound is never crossed and every rate is 0.
    """
    if params.alpha_x <= 0 or params.dt * params.alpha_x > 1.0:
        return False
    ceiling = (params.i0 + params.i0_noise) / params.alpha_x
    return params.activation_x.threshold > ceiling


def simulate_channel(
    on: np.ndarray,
    off: np.ndarray,
    kernels: CouplingKernels | None,
    params: LatticeParams,
    seed=0,
    channel: str = "",
    trace_positions=None,
) -> ConspicuityResponse:
    """Integrate one channel's ON and OFF lattices and average the rates.

    ``on``/``off`` are the rectified coefficient stacks (S, O, H, W).
    Both polarities consume the same per-step noise fields from a single
    generator seeded with ``seed``, so flipping the channel's sign
    exactly swaps the two mean-rate maps. Mean rates cover the trailing
    ``params.avg_window`` membrane units. ``trace_positions`` is an
    optional sequence of (row, col) pixels whose rates are recorded at
    every step.
    """
    on = np.asarray(on, dtype=np.float64)
    off = np.asarray(off, dtype=np.float64)
    if on.shape != off.shape or on.ndim != 4:
        raise ValidationError("expected matching (S, O, H, W) ON/OFF stacks")
    if not (np.all(np.isfinite(on)) and np.all(np.isfinite(off))):
        raise ValidationError("non-finite wavelet input to the lattice")
    if on.min() < 0 or off.min() < 0:
        raise ValidationError("rectified inputs must be non-negative")
    if kernels is not None and kernels.shape != on.shape[-2:]:
        raise ValidationError(
            f"kernel tables built for {kernels.shape}, input is {on.shape[-2:]}"
        )

    s_n, o_n, h, w = on.shape
    shape = on.shape
    if (
        trace_positions is None
        and not on.any()
        and not off.any()
        and _never_fires(params)
    ):
        zero = np.zeros(shape)
        return ConspicuityResponse(zero, zero.copy(), channel=channel)

    dtype = params.dtype
    drive = np.stack([on, off]).astype(dtype) * dtype.type(params.input_gain)
    state = LatticeState(
        x=np.zeros((2,) + shape, dtype=dtype), y=np.zeros((2,) + shape, dtype=dtype)
    )
    psi = psi_matrix(s_n, params) if (s_n * o_n) > 1 else None
    rng = np.random.default_rng(seed)
    gauss_kw = {"dtype": np.float32} if dtype == np.float32 else {}

    acc = np.zeros((2,) + shape)
    first_avg = params.n_steps - params.avg_steps
    trace_rates = None
    trace_times = None
    if trace_positions is not None:
        trace_positions = [(int(r), int(c)) for r, c in trace_positions]
        trace_rates = np.zeros((params.n_steps, 2, len(trace_positions), s_n, o_n))
        trace_times = (1 + np.arange(params.n_steps)) * params.dt

    for k in range(params.n_steps):
        eps_y = rng.standard_normal(shape, **gauss_kw)
        eps_x = rng.random(shape, **gauss_kw)
        noise_y = dtype.type(params.ic_noise) * eps_y.astype(dtype, copy=False)
        noise_x = dtype.type(params.i0_noise) * (
            dtype.type(2.0) * eps_x.astype(dtype, copy=False) - dtype.type(1.0)
        )
        state = step(state, drive, kernels, params, psi, noise_x, noise_y)
        if k % 5 == 4 or k == params.n_steps - 1:
            if not (np.all(np.isfinite(state.x)) and np.all(np.isfinite(state.y))):
                raise DivergenceError(
                    f"non-finite lattice state at step {state.step_index} "
                    f"(t={state.t:.3f}, dt={params.dt}, gain={params.input_gain})"
                )
        if k >= first_avg or trace_rates is not None:
            rates = params.activation_x(state.x)
            if k >= first_avg:
                acc += rates
            if trace_rates is not None:
                for p, (row, col) in enumerate(trace_positions):
                    trace_rates[k, :, p] = rates[..., row, col]

    acc /= params.avg_steps
    return ConspicuityResponse(
        mean_rate_on=acc[0],
        mean_rate_off=acc[1],
        channel=channel,
        trace_times=trace_times,
        trace_rates=trace_rates,
    )


def conspicuity(response: ConspicuityResponse) -> np.ndarray:
    """Per-plane conspicuity: ON mean rate + OFF mean rate (+ baseline 0)."""
    return response.mean_rate_on + response.mean_rate_off + CONSPICUITY_BASELINE
