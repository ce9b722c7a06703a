"""
Simulated sensor fleet: the shipped models, per-dialect sensors, fleets and the sample sink.
"""
from core.simsensor.catalog import SHIPPED_MODELS, CatalogModel, find_model
from core.simsensor.sensor import (
    Lifecycle,
    SensorSpec,
    SensorState,
    SimSensorError,
    SimulatedSensor,
    DialectResponder,
    config_value_ok,
)
from core.simsensor.fleet import (
    Fleet,
    SpawnError,
    build_fleet_specs,
    create_hook_app,
    load_fleet_spec,
    spawn_fleet,
)
from core.simsensor.sink import SampleSink
