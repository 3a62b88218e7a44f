"""Desk-scale synthetic fire and smoke snapshots.

The fire front is a level set ``psi`` advanced by ``psi_t + S |grad psi| = 0``
with a first-order Godunov upwind gradient and forward Euler. The input field
is time since ignition. Smoke is a column-averaged passive tracer moved by
upwind finite-volume advection plus centred diffusion, fed by recently
ignited cells; the output field is the running sum of the tracer over
checkpoints, which makes it non-decreasing in time.

All fields are handled as ``(ny, nx)`` arrays internally and flattened
row-major for snapshots.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .tensorio import Grid2D, SnapshotLabel, SnapshotMatrix

CFL_LIMIT = 0.9


class CflError(ValueError):
    pass


@dataclass(frozen=True)
class FireScenario:
    grid: Grid2D
    spread_rate: np.ndarray          # (N,) m/s
    ignition: tuple[int, int]        # (ix, iy)
    wind: np.ndarray                 # (2, N): u, v in m/s
    diffusivity: float               # m^2/s
    emission_factor: float           # concentration per burning cell per second
    dt: float
    n_steps: int
    checkpoint_every: int
    condition: str = ""
    burn_duration: int = 10          # steps a cell keeps emitting after ignition
    boundary: str = "outflow"        # or "closed" (zero flux, for budget checks)
    perturbation: float = 0.0        # seeded multiplicative noise on S and wind
    detection_floor: float = 0.0     # reported cumulative smoke below this is zero

    def __post_init__(self):
        n = self.grid.size
        s = np.asarray(self.spread_rate, dtype=np.float64).reshape(n)
        w = np.asarray(self.wind, dtype=np.float64)
        if w.shape == (2,):
            w = np.repeat(w[:, None], n, axis=1)
        w = w.reshape(2, n)
        object.__setattr__(self, "spread_rate", s)
        object.__setattr__(self, "wind", w)
        ix, iy = self.ignition
        if not (0 <= ix < self.grid.nx and 0 <= iy < self.grid.ny):
            raise ValueError(f"ignition {self.ignition} outside the {self.grid.nx}x{self.grid.ny} grid")
        if np.any(s < 0):
            raise ValueError("spread rate must be non-negative")
        if self.diffusivity < 0 or self.emission_factor < 0 or self.detection_floor < 0:
            raise ValueError("diffusivity and emission factor must be non-negative")
        if self.dt <= 0 or self.n_steps < 1 or self.checkpoint_every < 1:
            raise ValueError("need dt > 0, n_steps >= 1, checkpoint_every >= 1")
        if self.boundary not in ("outflow", "closed"):
            raise ValueError(f"unknown boundary mode {self.boundary!r}")
        check_cfl(self.grid, self.dt, s, w, self.diffusivity)


@dataclass(frozen=True)
class FireSmokeSnapshot:
    time_since_ignition: np.ndarray  # (N,)
    cumulative_smoke: np.ndarray     # (N,)
    t: float


def check_cfl(grid: Grid2D, dt: float, spread_rate=None, wind=None, diffusivity: float = 0.0) -> None:
    if spread_rate is not None:
        c = dt * float(np.max(spread_rate, initial=0.0)) * (1 / grid.dx + 1 / grid.dy)
        if c > CFL_LIMIT:
            raise CflError(f"front CFL number {c:.3f} > {CFL_LIMIT}")
    if wind is not None:
        w = np.asarray(wind).reshape(2, -1)
        c = dt * (np.abs(w[0]).max() / grid.dx + np.abs(w[1]).max() / grid.dy)
        if c > CFL_LIMIT:
            raise CflError(f"advection CFL number {c:.3f} > {CFL_LIMIT}")
    c = 2 * diffusivity * dt * (1 / grid.dx**2 + 1 / grid.dy**2)
    if c > CFL_LIMIT:
        raise CflError(f"diffusion number {c:.3f} > {CFL_LIMIT}")


# --------------------------------------------------------------------------
# level set
# --------------------------------------------------------------------------

def initial_level_set(grid: Grid2D, ignition: tuple[int, int], radius: float | None = None) -> np.ndarray:
    """Signed distance to a circle around the ignition cell centre.

    The default radius of half a cell burns only the ignition cell.
    """
    if radius is None:
        radius = 0.5 * min(grid.dx, grid.dy)
    ix, iy = ignition
    y, x = np.mgrid[0 : grid.ny, 0 : grid.nx]
    return np.hypot((x - ix) * grid.dx, (y - iy) * grid.dy) - radius


def upwind_gradient_norm(psi, dx: float, dy: float) -> np.ndarray:
    """Godunov ``|grad psi|`` for an outward-moving front (speed >= 0)."""
    p = np.pad(psi, 1, mode="edge")
    dxm = (psi - p[1:-1, :-2]) / dx
    dxp = (p[1:-1, 2:] - psi) / dx
    dym = (psi - p[:-2, 1:-1]) / dy
    dyp = (p[2:, 1:-1] - psi) / dy
    g2 = (
        np.maximum(dxm, 0.0) ** 2 + np.minimum(dxp, 0.0) ** 2
        + np.maximum(dym, 0.0) ** 2 + np.minimum(dyp, 0.0) ** 2
    )
    return np.sqrt(g2)


def propagate_front(psi, spread_rate, grid: Grid2D, dt: float) -> np.ndarray:
    """One forward-Euler step of the level-set equation.

    Since ``S >= 0`` and the gradient norm is non-negative, ``psi`` never
    increases, so the burned region ``{psi < 0}`` never shrinks.
    """
    psi = np.asarray(psi, dtype=np.float64)
    s = np.asarray(spread_rate, dtype=np.float64).reshape(psi.shape)
    check_cfl(grid, dt, spread_rate=s)
    if not np.any(s):
        return psi.copy()
    return psi - dt * s * upwind_gradient_norm(psi, grid.dx, grid.dy)


def update_ignition_times(ign_time, psi_old, psi_new, t_old: float, dt: float) -> None:
    """Record first-crossing times in place, interpolated linearly inside the step."""
    crossed = np.isinf(ign_time) & (psi_new < 0)
    if np.any(crossed):
        po, pn = psi_old[crossed], psi_new[crossed]
        frac = np.where(po > 0, po / (po - pn), 0.0)
        ign_time[crossed] = t_old + dt * np.clip(frac, 0.0, 1.0)


def time_since_ignition(ign_time, t: float) -> np.ndarray:
    """``t - t_ignition`` on burned cells (ignited at or before *t*), 0 elsewhere."""
    ign_time = np.asarray(ign_time, dtype=np.float64)
    burned = ign_time <= t
    return np.where(burned, t - np.where(burned, ign_time, 0.0), 0.0)


# --------------------------------------------------------------------------
# smoke transport
# --------------------------------------------------------------------------

def _fluxes(c, u, v, kappa, grid: Grid2D, boundary: str):
    dx, dy = grid.dx, grid.dy
    ny, nx = c.shape
    fx = np.zeros((ny, nx + 1))
    fy = np.zeros((ny + 1, nx))
    if nx > 1:
        uf = 0.5 * (u[:, :-1] + u[:, 1:])
        fx[:, 1:-1] = np.maximum(uf, 0.0) * c[:, :-1] + np.minimum(uf, 0.0) * c[:, 1:]
        fx[:, 1:-1] -= kappa * (c[:, 1:] - c[:, :-1]) / dx
    if ny > 1:
        vf = 0.5 * (v[:-1, :] + v[1:, :])
        fy[1:-1, :] = np.maximum(vf, 0.0) * c[:-1, :] + np.minimum(vf, 0.0) * c[1:, :]
        fy[1:-1, :] -= kappa * (c[1:, :] - c[:-1, :]) / dy
    if boundary == "outflow":
        # outgoing advection leaves the domain; inflow carries clean air; no diffusive boundary flux
        fx[:, 0] = np.minimum(u[:, 0], 0.0) * c[:, 0]
        fx[:, -1] = np.maximum(u[:, -1], 0.0) * c[:, -1]
        fy[0, :] = np.minimum(v[0, :], 0.0) * c[0, :]
        fy[-1, :] = np.maximum(v[-1, :], 0.0) * c[-1, :]
    return fx, fy


def _outgoing_rate(u, v, kappa, grid: Grid2D, boundary: str) -> float:
    """Largest per-cell outflow coefficient; ``dt`` times it must stay <= 1 for positivity."""
    ny, nx = u.shape
    pu = np.pad(u, ((0, 0), (1, 1)), mode="edge")
    pv = np.pad(v, ((1, 1), (0, 0)), mode="edge")
    uf = 0.5 * (pu[:, :-1] + pu[:, 1:])
    vf = 0.5 * (pv[:-1, :] + pv[1:, :])
    if boundary == "closed":
        uf[:, [0, -1]] = 0.0
        vf[[0, -1], :] = 0.0
    else:
        uf[:, 0], uf[:, -1] = u[:, 0], u[:, -1]
        vf[0, :], vf[-1, :] = v[0, :], v[-1, :]
    out = (np.maximum(uf[:, 1:], 0) + np.maximum(-uf[:, :-1], 0)) / grid.dx
    out = out + (np.maximum(vf[1:, :], 0) + np.maximum(-vf[:-1, :], 0)) / grid.dy
    return float(out.max()) + 2 * kappa * (1 / grid.dx**2 + 1 / grid.dy**2)


def transport_smoke(c, wind, kappa: float, source, dt: float, grid: Grid2D, boundary: str = "outflow") -> np.ndarray:
    """One explicit step of ``c_t - kappa lap c + div(u c) = source``.

    Parameters
    ----------
    c, source : ndarray, shape (ny, nx)
        Concentration and non-negative source rate.
    wind : ndarray, shape (2, ny, nx)
        Cell-centred velocity; face velocities are neighbour averages.
    boundary : {"outflow", "closed"}
        ``"closed"`` sets every boundary flux to zero so total mass changes
        only through the source.
    """
    c = np.asarray(c, dtype=np.float64)
    u = np.asarray(wind[0], dtype=np.float64).reshape(c.shape)
    v = np.asarray(wind[1], dtype=np.float64).reshape(c.shape)
    src = np.asarray(source, dtype=np.float64).reshape(c.shape)
    check_cfl(grid, dt, wind=np.stack([u, v]), diffusivity=kappa)
    if dt * _outgoing_rate(u, v, kappa, grid, boundary) > 1.0:
        raise CflError("combined advection-diffusion step would break positivity")
    fx, fy = _fluxes(c, u, v, kappa, grid, boundary)
    div = (fx[:, 1:] - fx[:, :-1]) / grid.dx + (fy[1:, :] - fy[:-1, :]) / grid.dy
    return c - dt * div + dt * src


# --------------------------------------------------------------------------
# scenarios
# --------------------------------------------------------------------------

def _perturbed(s: FireScenario, seed) -> FireScenario:
    if s.perturbation <= 0 or seed is None:
        return s
    rng = np.random.default_rng(seed)
    spread = s.spread_rate * np.exp(s.perturbation * rng.standard_normal(s.spread_rate.shape))
    wind = s.wind * (1.0 + s.perturbation * rng.standard_normal((2, 1)))
    return replace(s, spread_rate=spread, wind=wind)


def run_scenario(s: FireScenario, seed=None, burning_log: list | None = None) -> list[FireSmokeSnapshot]:
    """Run one fire and return a snapshot every ``checkpoint_every`` steps.

    If *burning_log* is given, the number of emitting cells at every step is
    appended to it (useful for mass budgets).
    """
    s = _perturbed(s, seed)
    grid = s.grid
    shape = grid.shape
    spread = s.spread_rate.reshape(shape)
    wind = s.wind.reshape(2, *shape)

    psi = initial_level_set(grid, s.ignition)
    ign = np.full(shape, np.inf)
    ign[psi < 0] = 0.0
    c = np.zeros(shape)
    g = np.zeros(shape)
    burn_window = s.burn_duration * s.dt
    snaps = []
    for k in range(1, s.n_steps + 1):
        t_old = (k - 1) * s.dt
        t = k * s.dt
        psi_new = propagate_front(psi, spread, grid, s.dt)
        update_ignition_times(ign, psi, psi_new, t_old, s.dt)
        psi = psi_new
        # a cell emits for burn_duration steps starting with the step it ignites in
        burning = (ign < t) & (ign >= t - burn_window)
        if burning_log is not None:
            burning_log.append(int(np.count_nonzero(burning)))
        c = transport_smoke(c, wind, s.diffusivity, s.emission_factor * burning, s.dt, grid, s.boundary)
        if k % s.checkpoint_every == 0:
            g = g + c
            # g never decreases, so flooring it keeps each cell monotone
            reported = np.where(g >= s.detection_floor, g, 0.0)
            snaps.append(FireSmokeSnapshot(time_since_ignition(ign, t).ravel(), reported.ravel(), t))
    return snaps


# --------------------------------------------------------------------------
# dataset sampler
# --------------------------------------------------------------------------

@dataclass
class ConditionSpec:
    emission_multiplier: float = 1.0
    spread_multiplier: float = 1.0
    wind_speed: tuple[float, float] = (2.0, 4.0)


def _default_conditions() -> dict:
    return {
        "low": ConditionSpec(0.5, 0.8, (1.5, 3.0)),
        "medium": ConditionSpec(1.0, 1.0, (2.0, 4.0)),
        "high": ConditionSpec(2.0, 1.25, (3.0, 5.0)),
    }


@dataclass
class SamplerConfig:
    nx: int = 48
    ny: int = 40
    dx: float = 200.0
    dy: float = 200.0
    dt: float = 10.0
    n_steps: int = 300
    checkpoint_every: int = 60
    base_spread: tuple[float, float] = (0.4, 0.8)
    n_bumps: int = 4
    bump_amplitude: tuple[float, float] = (0.0, 0.4)
    bump_width: tuple[float, float] = (3.0, 8.0)    # cells
    downwind_bias: float = 3.0                      # extra spread-rate factor straight downwind
    max_spread: float = 8.0                         # m/s cap keeping the front CFL number bounded
    wind_direction: float = 30.0                    # degrees counter-clockwise from +x
    wind_direction_jitter: float = 20.0             # degrees, standard deviation
    diffusivity: float = 100.0
    emission_factor: float = 0.05
    burn_duration: int = 10
    detection_floor: float = 0.01
    ignition_margin: float = 0.3
    time_unit: float = 3600.0                       # seconds per unit of the stored input field
    boundary: str = "outflow"
    conditions: dict = field(default_factory=_default_conditions)

    def __post_init__(self):
        conds = {}
        for k, v in self.conditions.items():
            conds[k] = v if isinstance(v, ConditionSpec) else ConditionSpec(
                float(v.get("emission_multiplier", 1.0)),
                float(v.get("spread_multiplier", 1.0)),
                tuple(v.get("wind_speed", (2.0, 4.0))),
            )
        if not conds:
            raise ValueError("need at least one condition")
        self.conditions = conds
        for name in ("base_spread", "bump_amplitude", "bump_width"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} range is reversed")
            setattr(self, name, (float(lo), float(hi)))
        if self.time_unit <= 0:
            raise ValueError("time_unit must be positive")
        if not 0 <= self.ignition_margin < 0.5:
            raise ValueError("ignition_margin must lie in [0, 0.5)")

    @property
    def grid(self) -> Grid2D:
        return Grid2D(self.nx, self.ny, self.dx, self.dy)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conditions"] = {k: asdict(v) for k, v in self.conditions.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown sampler keys: {sorted(unknown)}")
        d = dict(d)
        for name in ("base_spread", "bump_amplitude", "bump_width"):
            if name in d:
                d[name] = tuple(d[name])
        return cls(**d)


def sample_scenario(cfg: SamplerConfig, condition: str, rng: np.random.Generator) -> FireScenario:
    """Draw one random fire: ignition, bumpy spread-rate field biased downwind, uniform wind."""
    grid = cfg.grid
    spec = cfg.conditions[condition]
    lo_x = int(np.floor(cfg.ignition_margin * grid.nx))
    lo_y = int(np.floor(cfg.ignition_margin * grid.ny))
    ix = int(rng.integers(lo_x, max(grid.nx - lo_x, lo_x + 1)))
    iy = int(rng.integers(lo_y, max(grid.ny - lo_y, lo_y + 1)))

    theta = np.deg2rad(cfg.wind_direction + cfg.wind_direction_jitter * rng.standard_normal())
    speed = rng.uniform(*spec.wind_speed)
    wdir = np.array([np.cos(theta), np.sin(theta)])

    y, x = np.mgrid[0 : grid.ny, 0 : grid.nx].astype(np.float64)
    field_ = np.ones(grid.shape)
    for _ in range(cfg.n_bumps):
        cx, cy = rng.uniform(0, grid.nx), rng.uniform(0, grid.ny)
        amp = rng.uniform(*cfg.bump_amplitude)
        width = rng.uniform(*cfg.bump_width)
        field_ += amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * width**2))
    rx, ry = (x - ix) * grid.dx, (y - iy) * grid.dy
    dist = np.hypot(rx, ry)
    cos_dw = np.where(dist > 0, (rx * wdir[0] + ry * wdir[1]) / np.where(dist > 0, dist, 1.0), 0.0)
    field_ *= 1.0 + cfg.downwind_bias * np.maximum(cos_dw, 0.0)
    spread = np.minimum(rng.uniform(*cfg.base_spread) * spec.spread_multiplier * field_, cfg.max_spread)

    return FireScenario(
        grid=grid,
        spread_rate=spread.ravel(),
        ignition=(ix, iy),
        wind=speed * wdir,
        diffusivity=cfg.diffusivity,
        emission_factor=cfg.emission_factor * spec.emission_multiplier,
        dt=cfg.dt,
        n_steps=cfg.n_steps,
        checkpoint_every=cfg.checkpoint_every,
        condition=condition,
        burn_duration=cfg.burn_duration,
        boundary=cfg.boundary,
        detection_floor=cfg.detection_floor,
    )


def generate_dataset(n_fires: int, cfg: SamplerConfig | None = None, seed: int = 0,
                     conditions: Sequence[str] | None = None):
    """Simulate *n_fires* fires and stack every checkpoint as a snapshot column.

    Fire ``i`` uses condition ``conditions[i % len(conditions)]`` and its own
    generator seeded from ``(seed, i)``, so results do not depend on how many
    fires precede it.

    Returns ``(inputs, outputs, manifest_extra)`` where the last item is the
    JSON-ready sampler description stored alongside the data.
    """
    if n_fires < 3:
        raise ValueError(f"need at least 3 fires, got {n_fires}")
    cfg = cfg or SamplerConfig()
    names = list(conditions) if conditions is not None else list(cfg.conditions)
    for name in names:
        if name not in cfg.conditions:
            raise ValueError(f"unknown condition {name!r}")
    cols_f, cols_g, labels = [], [], []
    for i in range(n_fires):
        rng = np.random.default_rng([seed, i])
        cond = names[i % len(names)]
        scen = sample_scenario(cfg, cond, rng)
        for k, snap in enumerate(run_scenario(scen)):
            cols_f.append(snap.time_since_ignition / cfg.time_unit)
            cols_g.append(snap.cumulative_smoke)
            labels.append(SnapshotLabel(i, k, cond))
    grid = cfg.grid
    inputs = SnapshotMatrix(grid, np.column_stack(cols_f), tuple(labels))
    outputs = SnapshotMatrix(grid, np.column_stack(cols_g), tuple(labels))
    extra = {"sampler": cfg.to_dict(), "n_fires": n_fires, "seed": seed, "conditions": names}
    return inputs, outputs, extra
