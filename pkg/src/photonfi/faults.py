"""Materialize declarative attack specifications into per-ring fault states.

Two attack vectors are modeled:

* actuation: individual rings picked uniformly at random across the scoped
  blocks are forced off resonance and stop imprinting;
* hotspot: whole banks are picked uniformly at random until their rings
  cover the same budget of targeted rings, one compromised heater per
  selected bank (placed on the bank's multiplication array); the resulting
  temperature field shifts every ring it reaches, selected or neighboring,
  per the thermo-optic model.  Rings whose shift stays below half a channel
  spacing are absorbed by the tuning circuit and stay healthy.

All randomness flows through a PCG64 generator seeded by
SHA-256(master seed, trial), so a (seed, trial) pair pins a trial's fault
state bit for bit, independent of execution order.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .accelerator import (
    Accelerator,
    FaultedAccelerator,
    INPUT_ARRAY,
    MappingPlan,
    ThermalArrayFault,
    WEIGHT_ARRAY,
)
from .errors import ConfigError
from .photonics import Heater, compute_temperature_field, snap_channels

log = logging.getLogger(__name__)

ACTUATION = "actuation"
HOTSPOT = "hotspot"
KINDS = (ACTUATION, HOTSPOT)

SCOPES = ("CONV", "FC", "BOTH")

#: Identity of the PRNG and the seed derivation, embedded in campaign reports
#: so any run can be reproduced from its metadata alone.
PRNG_IDENTITY = ("numpy PCG64; stream seed = "
                 "SHA-256(master_seed|trial|kind|scope|fraction)[:8] little-endian")


@dataclass(frozen=True)
class AttackSpec:
    kind: str
    scope: str = "BOTH"
    fraction: float = 0.1
    seed: int = 0
    trial_count: int = 10
    heater_power_mw: float = 25.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"attack kind must be one of {KINDS}, got {self.kind!r}")
        if self.scope not in SCOPES:
            raise ConfigError(f"scope must be one of {SCOPES}, got {self.scope!r}")
        # 0 is tolerated as a degenerate empty attack; anything negative or
        # above 1 is a config mistake
        if not 0.0 <= self.fraction <= 1.0:
            raise ConfigError(f"fraction must lie in [0, 1], got {self.fraction}")
        if self.trial_count < 1:
            raise ConfigError("trial_count must be >= 1")
        if self.heater_power_mw <= 0:
            raise ConfigError("heater power must be positive")


def derive_seed(master_seed: int, *parts) -> int:
    """64-bit stream seed from a master seed and arbitrary labels."""
    text = "|".join([str(master_seed), *map(str, parts)])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def trial_seed(spec: AttackSpec, trial: int) -> int:
    return derive_seed(spec.seed, trial, spec.kind, spec.scope, spec.fraction)


def _rng(spec: AttackSpec, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(trial_seed(spec, trial)))


def _scope_blocks(scope: str) -> tuple[str, ...]:
    return ("CONV", "FC") if scope == "BOTH" else (scope,)


def scope_mr_count(acc: Accelerator, scope: str) -> int:
    return sum(acc.mr_count(b) for b in _scope_blocks(scope))


def select_actuation_targets(spec: AttackSpec, acc: Accelerator, trial: int) -> np.ndarray:
    """Exactly floor(fraction * scope size) distinct ring indices, sorted.

    Sampling is uniform without replacement over the scope's full ring
    inventory (both arrays of every bank).
    """
    if spec.kind != ACTUATION:
        raise ConfigError(f"expected an actuation spec, got kind {spec.kind!r}")
    pool = np.concatenate([np.arange(*acc.mr_index_range(b), dtype=np.int64)
                           for b in _scope_blocks(spec.scope)])
    count = int(spec.fraction * len(pool))
    if count == 0:
        log.warning("fraction %.4g of %d rings selects nothing", spec.fraction, len(pool))
        return np.empty(0, dtype=np.int64)
    chosen = _rng(spec, trial).choice(pool, size=count, replace=False)
    return np.sort(chosen)


def select_hotspot_heaters(spec: AttackSpec, acc: Accelerator, trial: int) -> np.ndarray:
    """Bank indices drawn uniformly without replacement until the rings they
    contain meet the targeted-ring budget; the final bank may overshoot."""
    if spec.kind != HOTSPOT:
        raise ConfigError(f"expected a hotspot spec, got kind {spec.kind!r}")
    blocks = _scope_blocks(spec.scope)
    pool = np.concatenate([np.arange(*acc.bank_index_range(b), dtype=np.int64)
                           for b in blocks])
    budget = int(spec.fraction * scope_mr_count(acc, spec.scope))
    if budget == 0:
        return np.empty(0, dtype=np.int64)
    order = _rng(spec, trial).permutation(pool)
    per_bank = np.array([2 * acc.cfg.block(acc.decode_bank(int(b))[0]).width
                         for b in order], dtype=np.int64)
    covered = np.cumsum(per_bank)
    n_banks = int(np.searchsorted(covered, budget)) + 1
    return np.sort(order[:n_banks])


def selected_mr_total(acc: Accelerator, bank_ids: np.ndarray) -> int:
    """Ring count contained in a set of selected banks (both arrays)."""
    return int(sum(2 * acc.cfg.block(acc.decode_bank(int(b))[0]).width for b in bank_ids))


def heaters_for_banks(spec: AttackSpec, acc: Accelerator, bank_ids: np.ndarray) -> list[Heater]:
    """One compromised heater per selected bank, on its weight-array centroid."""
    heaters = []
    for bid in bank_ids:
        block, u, b = acc.decode_bank(int(bid))
        heaters.append(Heater(acc.array_position(block, u, b, WEIGHT_ARRAY),
                              spec.heater_power_mw))
    return heaters


def _actuation_overlay(acc: Accelerator, targets: np.ndarray) -> dict:
    off: dict = {}
    for block in ("CONV", "FC"):
        lo, hi = acc.mr_index_range(block)
        sel = targets[(targets >= lo) & (targets < hi)]
        if not len(sel):
            continue
        unit, bank, array, column = acc.decode_mr_components(sel, block)
        keys = ((unit * acc.cfg.block(block).banks + bank) * 2 + array)
        order = np.argsort(keys, kind="stable")
        uniq, starts = np.unique(keys[order], return_index=True)
        arrays = ("input", "weight")
        for i, key in enumerate(uniq):
            end = starts[i + 1] if i + 1 < len(uniq) else len(order)
            rows = order[starts[i]:end]
            key = int(key)
            arr = arrays[key % 2]
            ub = key // 2
            banks = acc.cfg.block(block).banks
            off[(block, ub // banks, ub % banks, arr)] = np.sort(column[rows])
    return off


def _thermal_overlay(acc: Accelerator, field) -> dict:
    """Re-snap every ring array the field disturbs beyond the tuning margin."""
    thermal: dict = {}
    for block in ("CONV", "FC"):
        grid = acc.grids[block]
        bcfg = acc.cfg.block(block)
        positions = acc.array_positions(block)
        delta = field.at(positions)
        # a bank array can only move once its longest-wavelength ring
        # (channel 0) would re-snap, i.e. when its shift reaches half a spacing
        coef = acc.cfg.thermo.shift_per_k_per_nm * grid.base_wavelength_nm
        threshold = grid.spacing_nm / 2.0 / coef
        nominal = np.arange(bcfg.width, dtype=np.int64)
        for flat in np.nonzero(delta >= threshold)[0]:
            dt = float(delta[flat])
            eff = snap_channels(nominal, dt, grid, acc.cfg.thermo)
            if np.array_equal(eff, nominal):
                continue
            array = ("input", "weight")[int(flat) % 2]
            ub = int(flat) // 2
            key = (block, ub // bcfg.banks, ub % bcfg.banks, array)
            thermal[key] = ThermalArrayFault(delta_t_k=dt, effective_channel=eff)
    return thermal


def materialize(spec: AttackSpec, acc: Accelerator,
                trial: int) -> tuple[FaultedAccelerator, int, str]:
    """One trial's faulted device plus (targeted ring count, selection digest).

    Runs the random selection exactly once; the digest covers the selected
    ring indices (actuation) or bank indices (hotspot).
    """
    if spec.kind == ACTUATION:
        sel = select_actuation_targets(spec, acc, trial)
        facc = FaultedAccelerator(acc, off_columns=_actuation_overlay(acc, sel))
        count = len(sel)
    else:
        sel = select_hotspot_heaters(spec, acc, trial)
        heaters = heaters_for_banks(spec, acc, sel)
        field = compute_temperature_field(heaters, acc.chip_bounds, acc.cfg.thermal_kernel)
        facc = FaultedAccelerator(acc, thermal=_thermal_overlay(acc, field))
        count = selected_mr_total(acc, sel)
    return facc, count, hashlib.sha256(sel.tobytes()).hexdigest()[:16]


def apply_attack(acc: Accelerator, spec: AttackSpec, trial: int) -> FaultedAccelerator:
    """Materialize one trial of an attack into a faulted device."""
    return materialize(spec, acc, trial)[0]


def attack_digest(spec: AttackSpec, acc: Accelerator, trial: int) -> tuple[int, str]:
    """(target ring count, SHA-256 digest of the realized target list).

    For actuation the digest covers the selected ring indices; for hotspot,
    the selected bank indices.  Recorded per trial for auditability.
    """
    if spec.kind == ACTUATION:
        sel = select_actuation_targets(spec, acc, trial)
        count = len(sel)
    else:
        sel = select_hotspot_heaters(spec, acc, trial)
        count = selected_mr_total(acc, sel)
    return count, hashlib.sha256(sel.tobytes()).hexdigest()[:16]


def corrupted_slot_count(facc: FaultedAccelerator, plan: MappingPlan) -> int:
    """Parameter slots whose product term a fault disturbs.

    A slot k of a tile is corrupted when either of the two rings serving it
    (activation imprint or stationary weight) is off-resonance or re-snapped;
    a ring shared across reuse rounds corrupts every parameter mapped to it.
    """
    total = 0
    for lm in plan.layer_maps.values():
        width = lm.width
        for (block, u, b) in facc.faulted_banks(lm.block):
            tiles = lm.bank_to_tiles.get((u, b))
            if tiles is None:
                continue
            disturbed = np.zeros(width, dtype=bool)
            for arr in (INPUT_ARRAY, WEIGHT_ARRAY):
                state = facc.array_state(block, u, b, arr)
                if state is None:
                    continue
                eff, off = state
                disturbed |= off
                disturbed |= eff != np.arange(width)
            cum = np.concatenate([[0], np.cumsum(disturbed)])
            for t in tiles:
                lo, hi = lm.chunk_bounds[lm.chunk_id[t]]
                total += int(cum[hi - lo])
    return total
