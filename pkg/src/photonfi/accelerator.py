"""Architecture model of the photonic CNN accelerator.

The device is split into a CONV block and an FC block.  Each block holds a
number of vector-dot-product (VDP) units; a unit is a stack of MR banks; a
bank is a pair of ring arrays on one WDM waveguide: the input array imprints
the streamed activation chunk, the weight array holds the stationary
parameter chunk, and a photodetector sums the per-channel products into one
partial dot product.

Value encoding is non-coherent (amplitude) and therefore non-negative:
activations are scaled per tile and weights per layer into [0, 1] before
imprinting, with magnitudes denormalized and signs reapplied electronically
after photodetection.  Both scales are rounded up to a power of two so that
scaling is exact in binary floating point and a fault-free pass reproduces
the reference dot product to accumulation order.

Floorplan: units of a block sit side by side; the banks of a unit are
stacked vertically at ``bank_pitch_um``.  All rings of one array share their
array's centroid coordinate (one thermal node per array); a bank's input
array is offset from its weight array by ``array_gap_um`` so that a heater
over the multiplication array does not drag the input imprints along with
it.  Positions only feed the hotspot temperature field.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import ConfigError, ContractError
from .photonics import ChannelGrid, ChipBounds, ThermalKernel, ThermoOpticParams

CONV = "CONV"
FC = "FC"
BLOCKS = (CONV, FC)

INPUT_ARRAY = "input"
WEIGHT_ARRAY = "weight"
ARRAYS = (INPUT_ARRAY, WEIGHT_ARRAY)


@dataclass(frozen=True)
class BlockConfig:
    """One accelerator block: ``units`` VDP units of ``banks`` x ``width`` rings."""

    units: int
    banks: int
    width: int

    def __post_init__(self) -> None:
        if self.units < 1 or self.banks < 1 or self.width < 1:
            raise ConfigError(f"block dimensions must be positive, got {self}")

    @property
    def bank_count(self) -> int:
        return self.units * self.banks

    @property
    def mr_count(self) -> int:
        # input array + weight array
        return self.units * self.banks * self.width * 2


@dataclass(frozen=True)
class Floorplan:
    """Chip placement parameters (um)."""

    bank_pitch_um: float = 50.0
    array_gap_um: float = 300.0
    block_gap_um: float = 2000.0
    unit_margin_pitches: float = 4.0

    def __post_init__(self) -> None:
        if min(self.bank_pitch_um, self.array_gap_um, self.block_gap_um) <= 0:
            raise ConfigError("floorplan pitches must be positive")

    @property
    def unit_pitch_um(self) -> float:
        return self.array_gap_um + self.unit_margin_pitches * self.bank_pitch_um


@dataclass(frozen=True)
class AcceleratorConfig:
    conv: BlockConfig = BlockConfig(units=100, banks=20, width=20)
    fc: BlockConfig = BlockConfig(units=60, banks=150, width=150)
    base_wavelength_nm: float = 1550.0
    channel_spacing_nm: float = 0.8
    floorplan: Floorplan = Floorplan()
    thermo: ThermoOpticParams = ThermoOpticParams()
    kappa_k_per_mw: float = 0.5
    sigma_t_um: Optional[float] = None  # default: 2 bank pitches
    off_resonance_value: float = 1.0

    def block(self, name: str) -> BlockConfig:
        if name == CONV:
            return self.conv
        if name == FC:
            return self.fc
        raise ConfigError(f"unknown block {name!r}")

    @property
    def thermal_kernel(self) -> ThermalKernel:
        sigma = self.sigma_t_um
        if sigma is None:
            sigma = 2.0 * self.floorplan.bank_pitch_um
        return ThermalKernel(kappa_k_per_mw=self.kappa_k_per_mw, sigma_um=sigma)


@dataclass(frozen=True)
class MRCoordinate:
    block: str
    unit: int
    bank: int
    array: str
    column: int


class Accelerator:
    """Immutable device inventory derived from an :class:`AcceleratorConfig`."""

    def __init__(self, cfg: AcceleratorConfig):
        self.cfg = cfg
        self.grids = {
            CONV: ChannelGrid(cfg.base_wavelength_nm, cfg.channel_spacing_nm, cfg.conv.width),
            FC: ChannelGrid(cfg.base_wavelength_nm, cfg.channel_spacing_nm, cfg.fc.width),
        }
        fp = cfg.floorplan
        self._block_x0 = {CONV: 0.0}
        conv_extent = cfg.conv.units * fp.unit_pitch_um
        self._block_x0[FC] = conv_extent + fp.block_gap_um
        self._mr_base = {CONV: 0, FC: cfg.conv.mr_count}
        self._bank_base = {CONV: 0, FC: cfg.conv.bank_count}

    # --- inventory arithmetic -------------------------------------------------

    @property
    def total_mr_count(self) -> int:
        return self.cfg.conv.mr_count + self.cfg.fc.mr_count

    def mr_count(self, block: str) -> int:
        return self.cfg.block(block).mr_count

    @property
    def total_bank_count(self) -> int:
        return self.cfg.conv.bank_count + self.cfg.fc.bank_count

    def bank_count(self, block: str) -> int:
        return self.cfg.block(block).bank_count

    def mr_index_range(self, block: str) -> tuple[int, int]:
        """Flat MR index interval [lo, hi) of a block.

        Canonical MR order: CONV before FC; within a block unit-major, then
        bank, then array (input first), then column.
        """
        base = self._mr_base[block]
        return base, base + self.mr_count(block)

    def decode_mr(self, index: int) -> MRCoordinate:
        if not 0 <= index < self.total_mr_count:
            raise ContractError(f"MR index {index} out of range")
        block = CONV if index < self._mr_base[FC] else FC
        b = self.cfg.block(block)
        rel = index - self._mr_base[block]
        column = rel % b.width
        rel //= b.width
        array = ARRAYS[rel % 2]
        rel //= 2
        bank = rel % b.banks
        unit = rel // b.banks
        return MRCoordinate(block, unit, bank, array, column)

    def decode_mr_components(self, indices: np.ndarray, block: str):
        """Vectorized decode of flat MR indices belonging to one block."""
        b = self.cfg.block(block)
        rel = np.asarray(indices, dtype=np.int64) - self._mr_base[block]
        column = rel % b.width
        rel //= b.width
        array = rel % 2
        rel //= 2
        bank = rel % b.banks
        unit = rel // b.banks
        return unit, bank, array, column

    def bank_index_range(self, block: str) -> tuple[int, int]:
        base = self._bank_base[block]
        return base, base + self.bank_count(block)

    def decode_bank(self, index: int) -> tuple[str, int, int]:
        if not 0 <= index < self.total_bank_count:
            raise ContractError(f"bank index {index} out of range")
        block = CONV if index < self._bank_base[FC] else FC
        rel = index - self._bank_base[block]
        banks = self.cfg.block(block).banks
        return block, rel // banks, rel % banks

    # --- floorplan ------------------------------------------------------------

    def array_position(self, block: str, unit: int, bank: int, array: str) -> tuple[float, float]:
        fp = self.cfg.floorplan
        x = self._block_x0[block] + unit * fp.unit_pitch_um
        if array == WEIGHT_ARRAY:
            x += fp.array_gap_um
        return (x, bank * fp.bank_pitch_um)

    def array_positions(self, block: str) -> np.ndarray:
        """(units*banks*2, 2) centroids in canonical array order."""
        b = self.cfg.block(block)
        fp = self.cfg.floorplan
        units = np.arange(b.units)
        banks = np.arange(b.banks)
        x0 = self._block_x0[block] + units * fp.unit_pitch_um
        xs = np.stack([np.broadcast_to(x0[:, None], (b.units, b.banks)),
                       np.broadcast_to(x0[:, None] + fp.array_gap_um, (b.units, b.banks))],
                      axis=2)
        ys = np.broadcast_to(banks[None, :, None] * fp.bank_pitch_um, (b.units, b.banks, 2))
        return np.stack([xs.reshape(-1), ys.reshape(-1)], axis=1)

    @property
    def chip_bounds(self) -> ChipBounds:
        fp = self.cfg.floorplan
        margin = 2 * fp.bank_pitch_um
        x_max = self._block_x0[FC] + (self.cfg.fc.units - 1) * fp.unit_pitch_um + fp.array_gap_um
        y_max = max((self.cfg.conv.banks - 1), (self.cfg.fc.banks - 1)) * fp.bank_pitch_um
        return ChipBounds(-margin, -margin, x_max + margin, y_max + margin)


def build_accelerator(cfg: AcceleratorConfig) -> Accelerator:
    """Validate a config and materialize the device inventory (zero faults)."""
    for name in BLOCKS:
        b = cfg.block(name)
        grid = ChannelGrid(cfg.base_wavelength_nm, cfg.channel_spacing_nm, b.width)
        if grid.channel_count != b.width:
            raise ConfigError(f"{name}: channel count {grid.channel_count} != bank width {b.width}")
    if not 0.0 <= cfg.off_resonance_value <= 1.0:
        raise ConfigError("off_resonance_value must lie in [0, 1]")
    return Accelerator(cfg)


# --- weight-stationary mapping -------------------------------------------------


def _pow2_ceil_scalar(x: float) -> float:
    if x <= 0:
        return 1.0
    m, e = np.frexp(x)
    return float(x) if m == 0.5 else float(np.ldexp(1.0, e))


def _pow2_ceil(x: np.ndarray) -> np.ndarray:
    """Smallest power of two >= x elementwise; 1.0 where x <= 0."""
    x = np.asarray(x, dtype=np.float64)
    m, e = np.frexp(x)
    out = np.ldexp(1.0, e)
    out = np.where(m == 0.5, x, out)
    return np.where(x <= 0, 1.0, out)


@dataclass
class LayerMapping:
    """Tile assignment of one conv/fc layer.

    Each output neuron's flattened parameter vector is cut into chunks of at
    most the bank width; tile ``i`` (arrays below are parallel) places chunk
    ``chunk_id[i]`` of output ``out_id[i]`` on ``(unit[i], bank[i])`` during
    reuse round ``round_id[i]``.  The weight scale is the layer-wide
    power-of-two normalization divisor.
    """

    layer_index: int
    block: str
    width: int
    kernel_len: int
    n_outputs: int
    chunk_bounds: list[tuple[int, int]]
    out_id: np.ndarray
    chunk_id: np.ndarray
    unit: np.ndarray
    bank: np.ndarray
    round_id: np.ndarray
    weight_scale: float
    bank_to_tiles: dict = field(default_factory=dict)

    @property
    def n_tiles(self) -> int:
        return len(self.out_id)

    @property
    def slot_count(self) -> int:
        return self.kernel_len * self.n_outputs

    def tiles_of_output(self, out: int) -> np.ndarray:
        return np.nonzero(self.out_id == out)[0]


@dataclass
class MappingPlan:
    layer_maps: dict
    total_slots: int

    def layer(self, layer_index: int) -> LayerMapping:
        try:
            return self.layer_maps[layer_index]
        except KeyError:
            raise ContractError(f"layer {layer_index} is not mapped") from None


def _flat_weights(layer) -> np.ndarray:
    w = np.asarray(layer.weight, dtype=np.float64)
    return w.reshape(w.shape[0], -1)


def map_model(model, acc: Accelerator) -> MappingPlan:
    """Deterministic weight-stationary assignment of every conv/fc parameter.

    Tiles are placed in row-major layer order, round-robin over a block's
    units first and banks second; once every (unit, bank) of the block holds
    a tile the assignment wraps onto the next reuse round, so on small
    models every ring serves at most one parameter while large models share
    rings across rounds.
    """
    from . import nn as _nn

    if not model.layers:
        raise ContractError("cannot map an empty model")
    cursor = {CONV: 0, FC: 0}
    layer_maps = {}
    total = 0
    for li, layer in enumerate(model.layers):
        if isinstance(layer, _nn.Conv2d):
            block = CONV
        elif isinstance(layer, _nn.Linear):
            block = FC
        else:
            continue  # electronic operators bypass the accelerator
        bcfg = acc.cfg.block(block)
        wmat = _flat_weights(layer)
        n_out, klen = wmat.shape
        bounds = [(lo, min(lo + bcfg.width, klen)) for lo in range(0, klen, bcfg.width)]
        n_chunks = len(bounds)
        n_tiles = n_out * n_chunks
        t = np.arange(cursor[block], cursor[block] + n_tiles, dtype=np.int64)
        cursor[block] += n_tiles
        lm = LayerMapping(
            layer_index=li,
            block=block,
            width=bcfg.width,
            kernel_len=klen,
            n_outputs=n_out,
            chunk_bounds=bounds,
            out_id=np.repeat(np.arange(n_out, dtype=np.int64), n_chunks),
            chunk_id=np.tile(np.arange(n_chunks, dtype=np.int64), n_out),
            unit=t % bcfg.units,
            bank=(t // bcfg.units) % bcfg.banks,
            round_id=t // (bcfg.units * bcfg.banks),
            weight_scale=_pow2_ceil_scalar(float(np.abs(wmat).max()) if wmat.size else 0.0),
        )
        keys = lm.unit * bcfg.banks + lm.bank
        order = np.argsort(keys, kind="stable")
        uniq, starts = np.unique(keys[order], return_index=True)
        bank_to_tiles = {}
        for i, ub in enumerate(uniq):
            end = starts[i + 1] if i + 1 < len(uniq) else len(order)
            bank_to_tiles[(int(ub) // bcfg.banks, int(ub) % bcfg.banks)] = order[starts[i]:end]
        lm.bank_to_tiles = bank_to_tiles
        layer_maps[li] = lm
        total += lm.slot_count
    if not layer_maps:
        raise ContractError("model has no conv/fc layers to map")
    return MappingPlan(layer_maps=layer_maps, total_slots=total)


# --- fault state ----------------------------------------------------------------


@dataclass(frozen=True)
class ThermalArrayFault:
    """Uniform heating of one ring array: every column re-snaps per its own
    carrier wavelength (longer-wavelength columns shift further)."""

    delta_t_k: float
    effective_channel: np.ndarray  # (width,) int64, -1 = off the comb


class FaultedAccelerator:
    """Accelerator plus a per-ring corruption overlay for one attack trial.

    ``off_columns[(block, unit, bank, array)]`` lists actuation-faulted
    columns; ``thermal[(block, unit, bank, array)]`` carries the re-snapped
    channel map of a heated array.  Absent keys mean healthy hardware, so
    the overlay stays sparse even on the full-size device.
    """

    def __init__(self, acc: Accelerator, off_columns=None, thermal=None,
                 off_resonance_value: Optional[float] = None):
        self.acc = acc
        self.off_columns = dict(off_columns or {})
        self.thermal = dict(thermal or {})
        self.off_resonance_value = (acc.cfg.off_resonance_value
                                    if off_resonance_value is None else off_resonance_value)
        banks = {}
        for (block, u, b, arr) in list(self.off_columns) + list(self.thermal):
            banks.setdefault((block, u, b), set()).add(arr)
        self._faulted_banks = banks

    @classmethod
    def healthy(cls, acc: Accelerator) -> "FaultedAccelerator":
        return cls(acc)

    @property
    def fault_count(self) -> int:
        n = sum(len(v) for v in self.off_columns.values())
        for (block, *_), tf in self.thermal.items():
            n += int((tf.effective_channel != np.arange(len(tf.effective_channel))).sum())
        return n

    def faulted_banks(self, block: str):
        return [k for k in self._faulted_banks if k[0] == block]

    def bank_is_faulted(self, block: str, unit: int, bank: int) -> bool:
        return (block, unit, bank) in self._faulted_banks

    def array_state(self, block: str, unit: int, bank: int, array: str):
        """(effective_channel, off_mask) for one array, or None when healthy."""
        key = (block, unit, bank, array)
        off = self.off_columns.get(key)
        th = self.thermal.get(key)
        if off is None and th is None:
            return None
        width = self.acc.cfg.block(block).width
        eff = (th.effective_channel if th is not None
               else np.arange(width, dtype=np.int64))
        mask = np.zeros(width, dtype=bool)
        if off is not None:
            mask[off] = True
        return eff, mask


# --- dot-product execution -------------------------------------------------------


def _evaluate_tile(A: np.ndarray, w_chunk: np.ndarray, w_scale: float, width: int,
                   in_state, wt_state, off_value: float) -> np.ndarray:
    """Partial dot products of one tile for M streamed activation chunks.

    ``A`` is (M, L) of nominal (signed) activations, ``w_chunk`` the nominal
    stationary weights.  Healthy tiles reduce to the plain partial dot
    product; otherwise the per-channel optical semantics apply:

    * the laser lights channels 0..L-1 (one per used slot); the rest of the
      comb is dark and contributes nothing,
    * each used ring multiplies its imprint onto whichever lit channel it is
      resonant with; unused rings are parked off the comb and transparent,
    * an actuation-faulted ring passes ``off_value`` on its nominal channel
      instead of its imprint,
    * a channel left without a resonant weight ring passes unweighted; a
      ring whose resonance left the comb contributes nowhere,
    * the photodetector sums lit channels; electronics rescale and reapply
      the signs of the values it believes are on each channel.

    This is the direct (reference) implementation; the layer-level driver
    uses the algebraically equal fast paths below and falls back here when
    a hand-built fault state puts two rings onto one channel.
    """
    if in_state is None and wt_state is None:
        return A @ w_chunk

    m, length = A.shape
    s_a = _pow2_ceil(np.abs(A).max(axis=1))
    x = np.abs(A) / s_a[:, None]
    y = np.abs(w_chunk) / w_scale

    if in_state is None:
        in_fac = x
    else:
        in_fac = np.ones((m, length))
        eff, off = in_state
        for k in range(length):
            if off[k]:
                in_fac[:, k] *= off_value
                continue
            c = eff[k]
            if 0 <= c < length:
                in_fac[:, c] *= x[:, k]

    if wt_state is None:
        wt_fac = y
    else:
        wt_fac = np.ones(length)
        eff, off = wt_state
        for k in range(length):
            if off[k]:
                wt_fac[k] *= off_value
                continue
            c = eff[k]
            if 0 <= c < length:
                wt_fac[c] *= y[k]

    detected = in_fac * wt_fac[None, :]
    signs = np.where(A < 0, -1.0, 1.0) * np.where(w_chunk < 0, -1.0, 1.0)[None, :]
    return s_a * w_scale * (signs * detected).sum(axis=1)


def _weight_channel_values(w_chunk: np.ndarray, w_scale: float, wt_state,
                           off_value: float) -> np.ndarray:
    """Signed per-channel weight factor, nominal-channel sign convention."""
    y = np.abs(w_chunk) / w_scale
    sign_w = np.where(w_chunk < 0, -1.0, 1.0)
    if wt_state is None:
        return sign_w * y
    length = len(w_chunk)
    vals = np.ones(length)
    eff, off = wt_state
    for k in range(length):
        if off[k]:
            vals[k] *= off_value
            continue
        c = eff[k]
        if 0 <= c < length:
            vals[c] *= y[k]
    return sign_w * vals


def _input_channel_map(in_state, length: int, off_value: float):
    """(src, const) per channel: the carried factor is x[:, src[c]] * const[c]
    with src -1 meaning no imprinting ring.  Returns None on a channel
    collision (two rings re-snapped onto one carrier), which only hand-built
    states can produce."""
    src = np.full(length, -1, dtype=np.int64)
    const = np.ones(length)
    eff, off = in_state
    for k in range(length):
        if off[k]:
            const[k] *= off_value
            continue
        c = eff[k]
        if 0 <= c < length:
            if src[c] >= 0:
                return None
            src[c] = k
    return src, const


class _ChunkCache:
    """Per-chunk normalization shared by every faulted tile on the chunk."""

    def __init__(self, A: np.ndarray):
        self.A = A
        self._s_a = None
        self._parts = None

    def s_a(self):
        if self._s_a is None:
            self._s_a = _pow2_ceil(np.abs(self.A).max(axis=1))
        return self._s_a

    def parts(self):
        if self._parts is None:
            x = np.abs(self.A) / self.s_a()[:, None]
            sign_a = np.where(self.A < 0, -1.0, 1.0)
            self._parts = (x, self.s_a(), sign_a)
        return self._parts


def _tile_values(cache: _ChunkCache, w_chunk: np.ndarray, w_scale: float,
                 in_state, wt_state, off_value: float) -> np.ndarray:
    """Fast tile evaluation, algebraically equal to :func:`_evaluate_tile`.

    With a healthy input array the whole fault collapses into an effective
    stationary weight vector (power-of-two scaling commutes exactly with the
    per-element products), so the tile is a plain matvec against corrupted
    weights; only input-array faults need the per-row normalization.
    """
    wt_vals = _weight_channel_values(w_chunk, w_scale, wt_state, off_value)
    if in_state is None:
        return cache.A @ (w_scale * wt_vals)
    mapping = _input_channel_map(in_state, len(w_chunk), off_value)
    if mapping is None:
        return _evaluate_tile(cache.A, w_chunk, w_scale, 0, in_state, wt_state, off_value)
    src, const = mapping
    x, s_a, sign_a = cache.parts()
    gathered = np.where(src[None, :] >= 0, x[:, src], 1.0)
    if not np.all(const == 1.0):
        gathered = gathered * const[None, :]
    return s_a * ((gathered * wt_vals[None, :]) * sign_a).sum(axis=1) * w_scale


def _is_identity(state, length: int) -> bool:
    """True when the array's rings still sit on their nominal channels (pure
    actuation overlays; possibly with off columns)."""
    if state is None:
        return True
    eff, _ = state
    return bool(np.array_equal(eff[:length], np.arange(length)))


def _tile_delta(cache: _ChunkCache, w_chunk: np.ndarray, w_scale: float,
                in_state, wt_state, off_value: float):
    """Sparse faulty-minus-plain delta for actuation-only tiles, or None.

    Without thermal re-snapping, only off-resonance columns change, and
    the change per column k is closed-form:

        in-part  = s_a * sign(a_k) * off_value   (ring silenced)  else a_k
        wt-part  = s_w * sign(w_k) * off_value                    else w_k
        delta_k  = in-part * wt-part - a_k * w_k
    """
    length = len(w_chunk)
    if not (_is_identity(in_state, length) and _is_identity(wt_state, length)):
        return None
    in_off = in_state[1][:length] if in_state is not None else None
    wt_off = wt_state[1][:length] if wt_state is not None else None
    cols = np.zeros(length, dtype=bool)
    if in_off is not None:
        cols |= in_off
    if wt_off is not None:
        cols |= wt_off
    idx = np.nonzero(cols)[0]
    if len(idx) == 0:
        return np.zeros(cache.A.shape[0])
    A_cols = cache.A[:, idx]
    w_cols = w_chunk[idx]
    in_part = A_cols
    if in_off is not None and in_off[idx].any():
        hit = in_off[idx]
        sign_a = np.where(A_cols < 0, -1.0, 1.0)
        silenced = cache.s_a()[:, None] * sign_a * off_value
        in_part = np.where(hit[None, :], silenced, A_cols)
    wt_part = w_cols
    if wt_off is not None and wt_off[idx].any():
        hit = wt_off[idx]
        wt_part = np.where(hit, np.where(w_cols < 0, -1.0, 1.0) * w_scale * off_value,
                           w_cols)
    return (in_part * wt_part[None, :] - A_cols * w_cols[None, :]).sum(axis=1)


def execute_dot_product(mapping: LayerMapping, weights_flat: np.ndarray, out: int,
                        activations: np.ndarray, facc: FaultedAccelerator) -> float:
    """One output scalar: evaluate and sum this output's tiles in order."""
    activations = np.asarray(activations, dtype=np.float64)
    if activations.shape != (mapping.kernel_len,):
        raise ContractError(
            f"activation vector of length {activations.shape} does not match "
            f"kernel length {mapping.kernel_len}")
    w_out = np.asarray(weights_flat, dtype=np.float64)[out]
    total = 0.0
    for t in mapping.tiles_of_output(out):
        lo, hi = mapping.chunk_bounds[mapping.chunk_id[t]]
        u, b = int(mapping.unit[t]), int(mapping.bank[t])
        in_state = facc.array_state(mapping.block, u, b, INPUT_ARRAY)
        wt_state = facc.array_state(mapping.block, u, b, WEIGHT_ARRAY)
        total += float(_evaluate_tile(activations[None, lo:hi], w_out[lo:hi],
                                      mapping.weight_scale, mapping.width,
                                      in_state, wt_state, facc.off_resonance_value)[0])
    return total


def _forward_rows(P: np.ndarray, wmat: np.ndarray, mapping: LayerMapping,
                  facc: FaultedAccelerator) -> np.ndarray:
    """All output columns for a row matrix of streamed activation vectors.

    Healthy tiles collapse into one matrix product; tiles on faulted banks
    are re-evaluated through the optical semantics and patched in.
    """
    out = P @ wmat.T
    faulted = [k for k in facc.faulted_banks(mapping.block)
               if (k[1], k[2]) in mapping.bank_to_tiles]
    if not faulted:
        return out
    caches: dict[int, _ChunkCache] = {}
    for (_, u, b) in faulted:
        in_state = facc.array_state(mapping.block, u, b, INPUT_ARRAY)
        wt_state = facc.array_state(mapping.block, u, b, WEIGHT_ARRAY)
        for t in mapping.bank_to_tiles[(u, b)]:
            j = int(mapping.chunk_id[t])
            lo, hi = mapping.chunk_bounds[j]
            f = mapping.out_id[t]
            cache = caches.get(j)
            if cache is None:
                cache = caches.setdefault(j, _ChunkCache(P[:, lo:hi]))
            delta = _tile_delta(cache, wmat[f, lo:hi], mapping.weight_scale,
                                in_state, wt_state, facc.off_resonance_value)
            if delta is None:
                faulty = _tile_values(cache, wmat[f, lo:hi], mapping.weight_scale,
                                      in_state, wt_state, facc.off_resonance_value)
                delta = faulty - cache.A @ wmat[f, lo:hi]
            out[:, f] += delta
    return out


def layer_forward_via_accelerator(layer, x: np.ndarray, mapping: LayerMapping,
                                  facc: FaultedAccelerator) -> np.ndarray:
    """Forward one conv/fc layer with every output produced by its tiles."""
    from . import nn as _nn
    from .ops import im2col

    wmat = _flat_weights(layer)
    if isinstance(layer, _nn.Conv2d):
        cols, oh, ow = im2col(x, layer.kernel_size, layer.stride, layer.padding)
        n = x.shape[0]
        rows = _forward_rows(cols, wmat, mapping, facc)
        if layer.bias is not None:
            rows = rows + np.asarray(layer.bias, dtype=np.float64)[None, :]
        return rows.reshape(n, oh, ow, layer.out_channels).transpose(0, 3, 1, 2)
    if isinstance(layer, _nn.Linear):
        rows = _forward_rows(np.asarray(x, dtype=np.float64), wmat, mapping, facc)
        if layer.bias is not None:
            rows = rows + np.asarray(layer.bias, dtype=np.float64)[None, :]
        return rows
    raise ContractError(f"layer {type(layer).__name__} does not run on the accelerator")
