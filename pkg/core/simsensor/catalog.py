"""
The shipped sensor model catalog: 52 models over the 52 shipped dialects.

The registry seeds its catalog and plugin store from these models, and the
fleet builds its sensors from them, so a model's plugin and its simulated
sensor are always rendered from the same dialect.
"""
import logging
from typing import Dict, List, Optional, Tuple

from pydantic import Field

from core.models import Capability, Record, SamplingRange, ValueType
from core.plugin.generator import shipped_dialects

logger = logging.getLogger(__name__)

MANUFACTURER = "libelium"
ALL_TRANSPORTS = ["tcp", "udp", "bt-sim"]


class CatalogModel(Record):
    """A sensor model as the manufacturer ships it."""
    model: str
    manufacturer: str = MANUFACTURER
    dialect: str
    capabilities: List[Capability] = Field(min_length=1)
    sampling_range: SamplingRange
    supports_schedules: bool = True
    transports: List[str] = Field(default_factory=lambda: list(ALL_TRANSPORTS))
    has_epc: bool = False

    @property
    def plugin_id(self) -> str:
        return f"{self.manufacturer}.{self.model.lower()}.v1"

    @property
    def phenomena(self) -> List[str]:
        return [cap.phenomenon for cap in self.capabilities]

    def epc_for(self, uid: str) -> Optional[str]:
        """EPC identifier of one unit of this model, if the model carries one."""
        return f"urn:epc:id:sgtin:8437.{self.model.lower()}.{uid}" if self.has_epc else None


def _cap(text: str) -> Capability:
    phenomenon, unit, value_type = text.split(":")
    return Capability(phenomenon=phenomenon, unit=unit, value_type=ValueType(value_type))


# (model, capabilities, sampling min/max seconds, schedules, epc), one row per dialect in shipped order
_MODELS: List[Tuple[str, List[str], Tuple[float, float], bool, bool]] = [
    # hello family
    ("WaspTemp3", ["temperature:celsius:float"], (1, 3600), True, False),
    ("WaspHum", ["humidity:percent:float"], (5, 1800), True, False),
    ("WaspAirTemp", ["air_temperature:celsius:float"], (1, 3600), True, True),
    ("WaspSoilTemp", ["soil_temperature:celsius:float"], (10, 3600), True, False),
    ("WaspLux", ["luminosity:lux:int"], (1, 900), True, False),
    ("WaspCO2", ["co2:ppm:int"], (10, 1800), False, False),
    ("WaspPres", ["pressure:hpa:float"], (2, 3600), True, False),
    ("WaspEnvTHM", ["temperature:celsius:float", "humidity:percent:float", "motion:event:bool"],
     (1, 600), True, True),
    ("WaspNoise", ["noise:dba:float"], (1, 300), False, False),
    ("WaspDust", ["pm10:ugm3:float"], (5, 1200), True, False),
    ("WaspUV", ["uv_index:index:float"], (3, 600), True, False),
    ("WaspLeaf", ["leaf_wetness:percent:float"], (10, 7200), True, False),
    ("WaspSolar", ["solar_radiation:wm2:float"], (1, 1800), True, False),
    # at family
    ("WaspAT", ["temperature:celsius:float"], (1, 3600), True, False),
    ("WaspATHum", ["humidity:percent:float"], (2, 1800), True, False),
    ("WaspATMotion", ["motion:event:bool"], (1, 300), False, False),
    ("WaspATCO", ["co:ppm:float"], (10, 900), True, False),
    ("WaspATO3", ["o3:ppm:float"], (10, 900), True, True),
    ("WaspATNO2", ["no2:ppm:float"], (10, 900), True, False),
    ("WaspATSoilMoist", ["soil_moisture:percent:float"], (5, 3600), True, False),
    ("WaspATWind", ["wind_speed:ms:float"], (1, 600), False, False),
    ("WaspATRain", ["rainfall:mm:float"], (10, 3600), True, False),
    ("WaspATLevel", ["water_level:cm:int"], (2, 1800), True, True),
    ("WaspATPH", ["ph:ph:float"], (10, 3600), True, False),
    ("WaspATCond", ["conductivity:mscm:float"], (10, 3600), True, False),
    ("WaspATWeather", ["air_temperature:celsius:float", "humidity:percent:float", "pressure:hpa:float"],
     (1, 1800), True, False),
    # cfg family
    ("WaspCfg", ["temperature:celsius:float"], (1, 3600), True, False),
    ("WaspCfgHum", ["humidity:percent:float"], (5, 3600), True, False),
    ("WaspCfgGas", ["co2:ppm:int"], (10, 1800), True, False),
    ("WaspCfgMotion", ["motion:event:bool"], (1, 300), True, False),
    ("WaspCfgPark", ["presence:event:bool"], (1, 600), False, True),
    ("WaspCfgVib", ["vibration:g:float"], (1, 300), True, False),
    ("WaspCfgTank", ["fill_level:percent:int"], (10, 7200), True, False),
    ("WaspCfgFlow", ["water_flow:lmin:float"], (2, 900), True, False),
    ("WaspCfgDoor", ["contact:event:bool"], (1, 3600), False, False),
    ("WaspCfgSmoke", ["smoke:ppm:float"], (1, 600), True, True),
    ("WaspCfgRad", ["radiation:usvh:float"], (10, 3600), True, False),
    ("WaspCfgWater", ["turbidity:ntu:float"], (10, 3600), True, False),
    ("WaspCfgAgro", ["soil_temperature:celsius:float", "soil_moisture:percent:float",
                     "leaf_wetness:percent:float"], (5, 3600), True, False),
    # reg family
    ("WaspRegTemp", ["temperature:celsius:float"], (1, 3600), True, False),
    ("WaspRegHum", ["humidity:percent:float"], (5, 3600), True, False),
    ("WaspRegLux", ["luminosity:lux:int"], (1, 1800), True, False),
    ("WaspRegCO2", ["co2:ppm:int"], (10, 3600), True, False),
    ("WaspRegPres", ["pressure:hpa:float"], (5, 3600), False, False),
    ("WaspRegNoise", ["noise:dba:float"], (1, 600), True, True),
    ("WaspRegSoil", ["soil_temperature:celsius:float"], (10, 3600), True, False),
    ("WaspRegMotion", ["motion:event:bool"], (1, 300), True, False),
    ("WaspRegEnergy", ["energy:kwh:float"], (10, 3600), True, False),
    ("WaspRegCurrent", ["current:a:float"], (1, 900), True, False),
    ("WaspRegVolt", ["voltage:v:float"], (1, 900), True, False),
    ("WaspRegFlow", ["gas_flow:m3h:float"], (5, 1800), False, True),
    ("WaspRegAir", ["co:ppm:float"], (10, 1800), True, False),
]


def _build_catalog() -> List[CatalogModel]:
    dialects = shipped_dialects()
    if len(dialects) != len(_MODELS):
        raise RuntimeError(f"{len(_MODELS)} catalog models for {len(dialects)} dialects")
    return [
        CatalogModel(
            model=model,
            dialect=dialect,
            capabilities=[_cap(text) for text in caps],
            sampling_range=SamplingRange(min_s=low, max_s=high),
            supports_schedules=schedules,
            has_epc=epc,
        )
        for dialect, (model, caps, (low, high), schedules, epc) in zip(dialects, _MODELS)
    ]


SHIPPED_MODELS: List[CatalogModel] = _build_catalog()
_BY_NAME: Dict[Tuple[str, str], CatalogModel] = {(m.model, m.manufacturer): m for m in SHIPPED_MODELS}

# Models whose dialects the reference clients in the test suite speak
REFERENCE_MODELS = ["WaspTemp3", "WaspAT", "WaspCfg"]


def find_model(model: str, manufacturer: str = MANUFACTURER) -> Optional[CatalogModel]:
    """Case-sensitive lookup of a shipped model."""
    return _BY_NAME.get((model, manufacturer))
