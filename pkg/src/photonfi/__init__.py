"""Fault-injection simulator for a WDM microring CNN accelerator."""

from .accelerator import (
    AcceleratorConfig,
    BlockConfig,
    FaultedAccelerator,
    Floorplan,
    MappingPlan,
    MRCoordinate,
    build_accelerator,
    execute_dot_product,
    layer_forward_via_accelerator,
    map_model,
)
from .campaign import (
    CampaignConfig,
    CampaignReport,
    Scenario,
    VariantSpec,
    emit_csv,
    emit_summary,
    load_config,
    recovery_metrics,
    run_campaign,
)
from .errors import (
    ArchiveError,
    ConfigError,
    ContractError,
    DatasetError,
    DomainError,
    ShapeError,
)
from .faults import (
    AttackSpec,
    apply_attack,
    corrupted_slot_count,
    select_actuation_targets,
    select_hotspot_heaters,
)
from .model_io import load_idx, read_archive, write_archive
from .nn import Model, accelerated_forward, evaluate_accuracy, reference_forward
from .photonics import (
    ChannelGrid,
    Heater,
    MRPhysical,
    TemperatureField,
    ThermoOpticParams,
    compute_temperature_field,
    mr_transmission,
    resonant_wavelength,
    snap_to_channel,
    thermal_shift,
)

__version__ = "0.1.0"
