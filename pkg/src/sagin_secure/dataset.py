"""Channel datasets and their on-disk format.

File layout (little-endian)::

    b"SAGINDS1"                 magic + format version
    uint32  header length n
    n bytes UTF-8 JSON header  {"count", "seed", "start", "config_fingerprint", "config"}
    count * 12 complex128      coefficients, C order (count, 3, 4)

Identical (config, count, seed) inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from sagin_secure.channel import ChannelMatrix, sample_channels
from sagin_secure.config import ScenarioConfig

MAGIC = b"SAGINDS1"


class DatasetError(ValueError):
    pass


@dataclass
class Dataset:
    channels: ChannelMatrix
    seed: int
    config: ScenarioConfig
    start: int = 0

    def __len__(self):
        return self.channels.coefficients.shape[0]

    @property
    def gains(self):
        return self.channels.gains

    @property
    def features(self):
        return self.channels.features

    def subset(self, idx):
        return Dataset(ChannelMatrix(self.channels.coefficients[idx]), self.seed, self.config, self.start)

    def to_bytes(self):
        header = json.dumps({
            "count": len(self),
            "seed": self.seed,
            "start": self.start,
            "config_fingerprint": self.config.fingerprint(),
            "config": self.config.to_dict(),
        }, sort_keys=True).encode()
        body = np.ascontiguousarray(self.channels.coefficients, dtype="<c16").tobytes()
        return MAGIC + struct.pack("<I", len(header)) + header + body

    def save(self, path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob):
        if blob[:8] != MAGIC:
            raise DatasetError("not a SAGINDS1 dataset file")
        (n,) = struct.unpack("<I", blob[8:12])
        header = json.loads(blob[12:12 + n])
        config = ScenarioConfig.from_dict(header["config"])
        if config.fingerprint() != header["config_fingerprint"]:
            raise DatasetError("config fingerprint mismatch")
        coeffs = np.frombuffer(blob[12 + n:], dtype="<c16").reshape(header["count"], 3, 4)
        return cls(ChannelMatrix(coeffs.astype(complex)), header["seed"], config, header["start"])

    @classmethod
    def load(cls, path):
        return cls.from_bytes(Path(path).read_bytes())


def generate_dataset(config, count, seed, start=0):
    """``count`` independent channel draws; draw k depends only on (config, seed, start + k)."""
    if count < 0:
        raise DatasetError("count must be >= 0")
    return Dataset(sample_channels(config, count, seed, start), int(seed), config, int(start))


def as_channels(data):
    if isinstance(data, Dataset):
        return data.channels
    if isinstance(data, ChannelMatrix):
        return data
    return ChannelMatrix(np.asarray(data))
