"""Weights bundle: trained transceiver state with exact save/load roundtrip.

The on-disk format is a plain .npz (no pickling): one uint8 record holding a
JSON header, the constellation, and one entry per named parameter array.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .errors import WeightsFormatError
from .grid import Constellation
from .neural_mod import ModulatorNet
from .neural_rx import ReceiverNet

FORMAT_VERSION = 1

_META_KEY = "__meta__"
_PARAM_PREFIX = "param:"


@dataclass
class WeightsBundle:
    """Everything needed to rebuild and evaluate a trained transceiver."""

    mode: str
    constellation: np.ndarray
    rx_config: dict
    mod_config: dict | None = None
    params: dict[str, np.ndarray] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        self.constellation = np.asarray(self.constellation, dtype=np.complex128)


def bundle_from_nets(mode: str, constellation, rx_net: ReceiverNet,
                     mod_net: ModulatorNet | None = None,
                     metadata: dict | None = None) -> WeightsBundle:
    points = constellation.points if isinstance(constellation, Constellation) \
        else np.asarray(constellation)
    params = dict(rx_net.state_dict())
    if mod_net is not None:
        params.update(mod_net.state_dict())
    return WeightsBundle(
        mode=mode,
        constellation=points,
        rx_config=rx_net.config(),
        mod_config=None if mod_net is None else mod_net.config(),
        params=params,
        metadata=dict(metadata or {}),
    )


def nets_from_bundle(bundle: WeightsBundle, dtype=None
                     ) -> tuple[Constellation, ModulatorNet | None, ReceiverNet]:
    """Instantiate the networks a bundle describes and load its weights."""
    m = int(bundle.rx_config["m"])
    constellation = Constellation(m, bundle.constellation)
    rx = ReceiverNet(m=m, width=int(bundle.rx_config["width"]),
                     rx_input=bundle.rx_config["rx_input"], dtype=dtype)
    mod = None
    if bundle.mod_config is not None:
        mod = ModulatorNet(width=int(bundle.mod_config["width"]),
                           linear=bool(bundle.mod_config["linear"]), dtype=dtype)
    rx_state = {k: v for k, v in bundle.params.items() if k.startswith("rx/")}
    rx.load_state_dict(rx_state)
    if mod is not None:
        mod_state = {k: v for k, v in bundle.params.items() if k.startswith("mod/")}
        mod.load_state_dict(mod_state)
    return constellation, mod, rx


def save_weights(bundle: WeightsBundle, path) -> None:
    header = {
        "version": int(bundle.version),
        "mode": bundle.mode,
        "rx_config": bundle.rx_config,
        "mod_config": bundle.mod_config,
        "metadata": bundle.metadata,
    }
    blob = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    arrays = {_META_KEY: blob, "constellation": bundle.constellation}
    for name, arr in bundle.params.items():
        arrays[_PARAM_PREFIX + name] = arr
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def load_weights(path) -> WeightsBundle:
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError, zipfile.BadZipFile) as e:
        raise WeightsFormatError(f"unreadable weights file {path}: {e}") from e
    with data:
        if _META_KEY not in data.files:
            raise WeightsFormatError(f"{path} has no weights header record")
        try:
            header = json.loads(bytes(data[_META_KEY]).decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise WeightsFormatError(f"corrupt weights header in {path}: {e}") from e
        version = header.get("version")
        if version != FORMAT_VERSION:
            raise WeightsFormatError(
                f"weights format version {version} not supported "
                f"(this build reads version {FORMAT_VERSION})")
        if "constellation" not in data.files:
            raise WeightsFormatError(f"{path} is missing the constellation record")
        params = {name[len(_PARAM_PREFIX):]: data[name]
                  for name in data.files if name.startswith(_PARAM_PREFIX)}
        return WeightsBundle(
            mode=header["mode"],
            constellation=data["constellation"],
            rx_config=header["rx_config"],
            mod_config=header["mod_config"],
            params=params,
            metadata=header.get("metadata", {}),
            version=version,
        )
