import numpy as np
import pytest

from multilinop.synthfire import (
    CflError,
    FireScenario,
    SamplerConfig,
    generate_dataset,
    initial_level_set,
    propagate_front,
    run_scenario,
    sample_scenario,
    time_since_ignition,
    transport_smoke,
    update_ignition_times,
)
from multilinop.tensorio import Grid2D

SMALL = dict(nx=24, ny=20, n_steps=80, checkpoint_every=20)


def expand_circle(n, h, r0, s0, t_end, cfl=0.4):
    grid = Grid2D(n, n, h, h)
    steps = int(round(t_end / (cfl * h / (2 * s0))))
    dt = t_end / steps
    psi = initial_level_set(grid, (n // 2, n // 2), r0)
    speed = np.full(grid.shape, s0)
    for _ in range(steps):
        psi = propagate_front(psi, speed, grid, dt)
    return grid, psi


def equivalent_radius(psi, h):
    return np.sqrt(np.count_nonzero(psi < 0) * h * h / np.pi)


def test_zero_speed_is_identity():
    grid = Grid2D(10, 8, 1.0, 1.0)
    psi = initial_level_set(grid, (3, 4), 2.0)
    np.testing.assert_array_equal(propagate_front(psi, np.zeros(grid.shape), grid, 0.1), psi)


def test_circular_front_radius():
    n, h, r0, s0, t_end = 200, 1.0, 10.0, 1.0, 50.0
    grid, psi = expand_circle(n, h, r0, s0, t_end)
    burned = psi < 0
    inner = burned[1:-1, 1:-1] & burned[:-2, 1:-1] & burned[2:, 1:-1] & burned[1:-1, :-2] & burned[1:-1, 2:]
    edge = burned.copy()
    edge[1:-1, 1:-1] &= ~inner
    y, x = np.mgrid[0:n, 0:n]
    dist = np.hypot(x - n // 2, y - n // 2)[edge] * h
    assert np.abs(dist - (r0 + s0 * t_end)).max() <= 2 * h


def test_circular_front_first_order_convergence():
    errs = []
    for n, h in ((100, 2.0), (200, 1.0), (400, 0.5)):
        _, psi = expand_circle(n, h, 40.0, 1.0, 40.0)
        errs.append(abs(equivalent_radius(psi, h) - 80.0))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((rates > 0.5) & (rates < 1.5)), rates


def test_planar_front_speed():
    grid = Grid2D(120, 4, 1.0, 1.0)
    x = np.arange(grid.nx, dtype=float)[None, :].repeat(grid.ny, axis=0)
    psi = x - 10.0
    s0, dt = 0.8, 0.5
    speed = np.full(grid.shape, s0)
    for _ in range(100):
        psi = propagate_front(psi, speed, grid, dt)
    front = np.count_nonzero(psi[1] < 0)  # burned cells in a row
    assert abs(front - (11 + s0 * dt * 100)) <= 1


def test_front_never_recedes(rng):
    grid = Grid2D(30, 30, 1.0, 1.0)
    psi = initial_level_set(grid, (15, 15), 3.0)
    speed = rng.uniform(0, 1.0, grid.shape)
    for _ in range(20):
        new = propagate_front(psi, speed, grid, 0.4)
        assert np.all(new <= psi)
        psi = new


def test_front_cfl_violation():
    grid = Grid2D(5, 5, 1.0, 1.0)
    with pytest.raises(CflError):
        propagate_front(np.zeros(grid.shape), np.ones(grid.shape), grid, 1.0)


def test_time_since_ignition_definition():
    ign = np.array([[30.0, np.inf], [0.0, 100.0]])
    np.testing.assert_array_equal(time_since_ignition(ign, 100.0), [[70.0, 0.0], [100.0, 0.0]])
    np.testing.assert_array_equal(time_since_ignition(ign, 10.0), [[0.0, 0.0], [10.0, 0.0]])


def test_ignition_interpolation():
    ign = np.full((1, 2), np.inf)
    update_ignition_times(ign, np.array([[1.0, 1.0]]), np.array([[-3.0, 0.5]]), 20.0, 10.0)
    assert ign[0, 0] == pytest.approx(22.5) and np.isinf(ign[0, 1])


def test_transport_identity():
    grid = Grid2D(6, 5, 1.0, 1.0)
    c = np.random.default_rng(0).random(grid.shape)
    out = transport_smoke(c, np.zeros((2, *grid.shape)), 0.0, np.zeros(grid.shape), 0.1, grid)
    np.testing.assert_array_equal(out, c)


def test_closed_mode_conserves_mass(rng):
    grid = Grid2D(40, 30, 1.0, 1.0)
    c = rng.random(grid.shape)
    wind = rng.uniform(-1, 1, (2, *grid.shape))
    for _ in range(50):
        new = transport_smoke(c, wind, 0.05, np.zeros(grid.shape), 0.1, grid, boundary="closed")
        assert abs(new.sum() - c.sum()) <= 1e-10 * c.sum()
        assert np.all(new >= 0)
        c = new


def test_point_mass_diffuses():
    grid = Grid2D(21, 21, 1.0, 1.0)
    c = np.zeros(grid.shape)
    c[10, 10] = 1.0
    peak = 1.0
    for _ in range(20):
        c = transport_smoke(c, np.zeros((2, *grid.shape)), 0.2, np.zeros(grid.shape), 0.5, grid, "closed")
        assert abs(c.sum() - 1.0) < 1e-10
        assert c.max() < peak
        peak = c.max()


def test_blob_centroid_advects():
    grid = Grid2D(100, 20, 1.0, 1.0)
    y, x = np.mgrid[0:20, 0:100]
    c = np.exp(-((x - 20.0) ** 2 + (y - 10.0) ** 2) / 8.0)
    u0, dt = 0.8, 0.5
    wind = np.zeros((2, *grid.shape))
    wind[0] = u0
    x0 = (c * x).sum() / c.sum()
    for _ in range(50):
        c = transport_smoke(c, wind, 0.0, np.zeros(grid.shape), dt, grid)
    x1 = (c * x).sum() / c.sum()
    assert abs(x1 - x0 - u0 * dt * 50) <= 1.0


def test_transport_cfl_violation():
    grid = Grid2D(5, 5, 1.0, 1.0)
    wind = np.ones((2, *grid.shape))
    with pytest.raises(CflError):
        transport_smoke(np.zeros(grid.shape), wind, 0.0, np.zeros(grid.shape), 1.0, grid)


def _scenario(**kw):
    grid = Grid2D(30, 30, 100.0, 100.0)
    base = dict(grid=grid, spread_rate=np.full(grid.size, 1.0), ignition=(15, 15), wind=np.array([1.0, 0.5]),
                diffusivity=20.0, emission_factor=0.1, dt=5.0, n_steps=60, checkpoint_every=15)
    base.update(kw)
    return FireScenario(**base)


def test_zero_spread_burns_only_ignition_cell():
    s = _scenario(spread_rate=np.zeros(900), boundary="closed", checkpoint_every=60)
    log = []
    snaps = run_scenario(s, burning_log=log)
    f = snaps[-1].time_since_ignition.reshape(30, 30)
    assert np.count_nonzero(f) == 1 and f[15, 15] == pytest.approx(300.0)
    assert log == [1] * s.burn_duration + [0] * (60 - s.burn_duration)
    total = snaps[-1].cumulative_smoke.sum()
    assert total == pytest.approx(0.1 * s.burn_duration * 5.0, rel=1e-10)


def test_zero_emission_gives_no_smoke():
    for snap in run_scenario(_scenario(emission_factor=0.0)):
        assert not np.any(snap.cumulative_smoke)


def test_mass_budget_closed_domain():
    s = _scenario(boundary="closed", checkpoint_every=60)
    log = []
    snaps = run_scenario(s, burning_log=log)
    emitted = s.emission_factor * sum(log) * s.dt
    assert abs(snaps[-1].cumulative_smoke.sum() - emitted) <= 1e-8 * emitted


def test_scenario_snapshots_monotone():
    snaps = run_scenario(_scenario())
    assert len(snaps) == 4
    for a, b in zip(snaps, snaps[1:]):
        assert np.all(b.time_since_ignition >= a.time_since_ignition)
        assert np.all(b.cumulative_smoke >= a.cumulative_smoke)
        assert np.all((a.time_since_ignition > 0) <= (b.time_since_ignition > 0))


def test_perturbation_is_seeded():
    s = _scenario(perturbation=0.1)
    a = run_scenario(s, seed=3)[-1].cumulative_smoke
    b = run_scenario(s, seed=3)[-1].cumulative_smoke
    c = run_scenario(s, seed=4)[-1].cumulative_smoke
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_scenario_validation():
    with pytest.raises(ValueError):
        _scenario(ignition=(30, 0))
    with pytest.raises(ValueError):
        _scenario(spread_rate=np.full(900, -1.0))
    with pytest.raises(ValueError):
        _scenario(boundary="periodic")
    with pytest.raises(CflError):
        _scenario(dt=500.0)


def test_dataset_bookkeeping_and_determinism():
    cfg = SamplerConfig(**SMALL)
    f, g, extra = generate_dataset(3, cfg, seed=5)
    assert f.n_snapshots == g.n_snapshots == 12
    assert [(lab.fire_id, lab.time_index) for lab in f.labels] == [(i, k) for i in range(3) for k in range(4)]
    assert [lab.condition for lab in f.labels[::4]] == ["low", "medium", "high"]
    assert extra["n_fires"] == 3 and extra["seed"] == 5
    f2, g2, _ = generate_dataset(3, cfg, seed=5)
    assert f.data.tobytes() == f2.data.tobytes() and g.data.tobytes() == g2.data.tobytes()
    with pytest.raises(ValueError):
        generate_dataset(2, cfg)
    with pytest.raises(ValueError):
        generate_dataset(3, cfg, conditions=["arid"])


def test_sampler_config_roundtrip():
    cfg = SamplerConfig(**SMALL)
    back = SamplerConfig.from_dict(cfg.to_dict())
    assert back == cfg
    with pytest.raises(ValueError):
        SamplerConfig.from_dict({"nz": 3})


def test_condition_emission_ordering():
    cfg = SamplerConfig(**SMALL)
    _, g, _ = generate_dataset(30, cfg, seed=2)
    totals = {}
    for j, lab in enumerate(g.labels):
        if lab.time_index == 3:
            totals.setdefault(lab.condition, []).append(g.data[:, j].sum())
    means = {k: np.mean(v) for k, v in totals.items()}
    assert means["low"] < means["medium"] < means["high"]


def test_sampled_scenarios_are_valid():
    cfg = SamplerConfig()
    for seed in range(5):
        s = sample_scenario(cfg, "high", np.random.default_rng(seed))
        assert s.spread_rate.max() <= cfg.max_spread
        assert s.spread_rate.min() > 0
