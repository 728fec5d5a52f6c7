import numpy as np
import pytest

from photonfi import nn
from photonfi.accelerator import (
    CONV,
    FC,
    WEIGHT_ARRAY,
    AcceleratorConfig,
    BlockConfig,
    build_accelerator,
    map_model,
)
from photonfi.errors import ConfigError
from photonfi.faults import (
    ACTUATION,
    HOTSPOT,
    AttackSpec,
    apply_attack,
    attack_digest,
    corrupted_slot_count,
    select_actuation_targets,
    select_hotspot_heaters,
    selected_mr_total,
    trial_seed,
)


def spec(kind, scope="CONV", fraction=0.1, seed=42, power=25.0):
    return AttackSpec(kind=kind, scope=scope, fraction=fraction, seed=seed,
                      heater_power_mw=power)


def test_actuation_cardinality_default_config(default_acc):
    sel = select_actuation_targets(spec(ACTUATION, "CONV", 0.1), default_acc, trial=0)
    assert len(sel) == 8000
    assert len(np.unique(sel)) == 8000
    lo, hi = default_acc.mr_index_range(CONV)
    assert sel.min() >= lo and sel.max() < hi


def test_actuation_full_fraction_on_toy(toy_acc):
    sel = select_actuation_targets(spec(ACTUATION, "CONV", 1.0), toy_acc, trial=0)
    assert len(sel) == toy_acc.mr_count(CONV) == 6


def test_actuation_determinism(default_acc):
    a = select_actuation_targets(spec(ACTUATION, "BOTH", 0.01), default_acc, trial=3)
    b = select_actuation_targets(spec(ACTUATION, "BOTH", 0.01), default_acc, trial=3)
    c = select_actuation_targets(spec(ACTUATION, "BOTH", 0.01), default_acc, trial=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_actuation_empty_when_budget_rounds_to_zero(small_acc, caplog):
    tiny = spec(ACTUATION, "CONV", fraction=1e-6)
    with caplog.at_level("WARNING"):
        sel = select_actuation_targets(tiny, small_acc, trial=0)
    assert len(sel) == 0
    assert "selects nothing" in caplog.text


def test_fraction_zero_boundary_is_empty(small_acc):
    assert len(select_actuation_targets(spec(ACTUATION, fraction=0.0), small_acc, 0)) == 0
    assert len(select_hotspot_heaters(spec(HOTSPOT, fraction=0.0), small_acc, 0)) == 0


def test_invalid_fractions_rejected():
    with pytest.raises(ConfigError):
        AttackSpec(kind=ACTUATION, fraction=1.5)
    with pytest.raises(ConfigError):
        AttackSpec(kind=ACTUATION, fraction=-0.1)
    with pytest.raises(ConfigError):
        AttackSpec(kind="melt", fraction=0.1)


def test_hotspot_bank_budget_default_config(default_acc):
    s = spec(HOTSPOT, "CONV", 0.1)
    banks = select_hotspot_heaters(s, default_acc, trial=0)
    # 8000 targeted rings at 40 rings per bank -> exactly 200 of 2000 banks
    assert len(banks) == 200
    assert selected_mr_total(default_acc, banks) == 8000
    lo, hi = default_acc.bank_index_range(CONV)
    assert banks.min() >= lo and banks.max() < hi


def test_hotspot_overshoot_allowed(small_acc):
    # budget of 1 ring still selects one whole bank
    s = spec(HOTSPOT, "CONV", fraction=1.0 / small_acc.mr_count(CONV))
    banks = select_hotspot_heaters(s, small_acc, trial=0)
    assert len(banks) == 1
    assert selected_mr_total(small_acc, banks) == 2 * small_acc.cfg.conv.width


def test_selection_uniformity(small_acc):
    """Per-ring selection frequency stays inside a generous binomial band."""
    s = spec(ACTUATION, "CONV", 0.5, seed=7)
    n = small_acc.mr_count(CONV)
    trials = 400
    counts = np.zeros(n, dtype=np.int64)
    for t in range(trials):
        counts[select_actuation_targets(s, small_acc, t)] += 1
    p = (n // 2) / n
    mean, sd = trials * p, np.sqrt(trials * p * (1 - p))
    assert counts.min() >= mean - 6 * sd
    assert counts.max() <= mean + 6 * sd


def test_apply_actuation_matches_selection(small_acc):
    s = spec(ACTUATION, "BOTH", 0.05)
    facc = apply_attack(small_acc, s, trial=1)
    sel = select_actuation_targets(s, small_acc, trial=1)
    flagged = 0
    for (block, u, b, arr), cols in facc.off_columns.items():
        bcfg = small_acc.cfg.block(block)
        base = small_acc.mr_index_range(block)[0]
        ai = 0 if arr == "input" else 1
        for col in cols:
            idx = base + (((u * bcfg.banks + b) * 2 + ai) * bcfg.width + int(col))
            assert idx in set(sel.tolist())
            flagged += 1
    assert flagged == len(sel)


def test_zero_heaters_leaves_device_healthy(small_acc, dataset):
    s = spec(HOTSPOT, "CONV", fraction=0.0)
    facc = apply_attack(small_acc, s, trial=0)
    assert not facc.thermal and not facc.off_columns

    rng = np.random.default_rng(0)
    from tests.conftest import random_model

    model = random_model(rng)
    plan = map_model(model, small_acc)
    x = dataset[0][:16]
    ref = nn.reference_forward(model, x)
    got = nn.accelerated_forward(model, x, plan, facc)
    np.testing.assert_allclose(got, ref, rtol=1e-6, atol=1e-7)


def test_hotspot_spillover_and_threshold(small_acc):
    """A heater shifts its own bank and near neighbors, not banks sigma-fulls away."""
    cfg = small_acc.cfg
    coef = cfg.thermo.shift_per_k_per_nm * cfg.base_wavelength_nm
    threshold_k = cfg.channel_spacing_nm / 2 / coef
    # one selected bank: budget == one bank's rings
    s = spec(HOTSPOT, "CONV", fraction=2 * cfg.conv.width / small_acc.mr_count(CONV),
             power=25.0)
    banks = select_hotspot_heaters(s, small_acc, trial=2)
    assert len(banks) == 1
    block, u, b = small_acc.decode_bank(int(banks[0]))
    facc = apply_attack(small_acc, s, trial=2)

    heater_pos = np.array(small_acc.array_position(block, u, b, WEIGHT_ARRAY))
    kern = cfg.thermal_kernel
    peak = s.heater_power_mw * kern.kappa_k_per_mw
    for (blk, uu, bb, arr), tf in facc.thermal.items():
        pos = np.array(small_acc.array_position(blk, uu, bb, arr))
        dist = np.linalg.norm(pos - heater_pos)
        expected_dt = peak * np.exp(-dist ** 2 / (2 * kern.sigma_um ** 2))
        assert tf.delta_t_k == pytest.approx(expected_dt, rel=1e-12)
        assert tf.delta_t_k >= threshold_k
    # the heated bank's own weight array is in the overlay
    assert (block, u, b, WEIGHT_ARRAY) in facc.thermal
    # a bank three sigmas away picks up ~1.1% of the peak: below the margin
    assert peak * np.exp(-4.5) < threshold_k
    # at this power the reach is two bank pitches (one sigma), same unit only
    for (blk, uu, bb, arr) in facc.thermal:
        assert (blk, uu) == (block, u)
        assert abs(bb - b) <= 2


def test_hotspot_input_arrays_unaffected_at_default_gap(small_acc):
    """The array gap keeps activation imprints off the heater's reach."""
    s = spec(HOTSPOT, "CONV", fraction=0.2)
    facc = apply_attack(small_acc, s, trial=0)
    assert facc.thermal  # something was heated
    assert all(arr == WEIGHT_ARRAY for (_, _, _, arr) in facc.thermal)


def test_trial_determinism_of_apply(small_acc):
    s = spec(HOTSPOT, "BOTH", 0.1)
    f1 = apply_attack(small_acc, s, trial=5)
    f2 = apply_attack(small_acc, s, trial=5)
    assert set(f1.thermal) == set(f2.thermal)
    for k in f1.thermal:
        assert f1.thermal[k].delta_t_k == f2.thermal[k].delta_t_k
        assert np.array_equal(f1.thermal[k].effective_channel,
                              f2.thermal[k].effective_channel)


def test_attack_digest_stability(small_acc):
    s = spec(ACTUATION, "CONV", 0.25)
    c1, d1 = attack_digest(s, small_acc, trial=0)
    c2, d2 = attack_digest(s, small_acc, trial=0)
    assert (c1, d1) == (c2, d2)
    assert c1 == int(0.25 * small_acc.mr_count(CONV))
    assert trial_seed(s, 0) != trial_seed(s, 1)


def _digitnet_plan(acc):
    rng = np.random.default_rng(11)

    def w(*shape):
        return rng.normal(size=shape).astype(np.float32)

    model = nn.Model(name="digitnet", layers=[
        nn.Conv2d(6, 1, (5, 5), weight=w(6, 1, 5, 5), name="conv1"), nn.ReLU(),
        nn.MaxPool2d(2, 2),
        nn.Conv2d(16, 6, (5, 5), weight=w(16, 6, 5, 5), name="conv2"), nn.ReLU(),
        nn.MaxPool2d(2, 2), nn.Flatten(),
        nn.Linear(120, 256, weight=w(120, 256), name="fc1"), nn.ReLU(),
        nn.Linear(84, 120, weight=w(84, 120), name="fc2"), nn.ReLU(),
        nn.Linear(10, 84, weight=w(10, 84), name="fc3"),
    ])
    return map_model(model, acc)


@pytest.mark.parametrize("fraction", [0.05, 0.10])
def test_hotspot_corrupts_at_least_as_many_slots(default_acc, fraction):
    """Clustered bank attacks reach at least the slot count of scattered ones."""
    plan = _digitnet_plan(default_acc)
    for trial in range(3):
        hot = corrupted_slot_count(
            apply_attack(default_acc, spec(HOTSPOT, "BOTH", fraction), trial), plan)
        act = corrupted_slot_count(
            apply_attack(default_acc, spec(ACTUATION, "BOTH", fraction), trial), plan)
        assert hot >= act


def test_corrupted_slots_count_manual(toy_acc):
    from photonfi.accelerator import FaultedAccelerator, INPUT_ARRAY

    model = nn.Model(name="m", layers=[
        nn.Linear(1, 3, weight=np.ones((1, 3), dtype=np.float32), name="f1")])
    plan = map_model(model, toy_acc)
    facc = FaultedAccelerator(
        toy_acc, off_columns={(FC, 0, 0, INPUT_ARRAY): np.array([0, 2])})
    assert corrupted_slot_count(facc, plan) == 2
