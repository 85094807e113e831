"""Shared fixtures: small sonar configs, random images, tiny manifests."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

# Property suites must replay the same examples on every run.
settings.register_profile("seeded", derandomize=True)
settings.load_profile("seeded")

from sonarplace.core import (
    DatasetManifest,
    Pose2D,
    ScanRecord,
    SonarConfig,
    SonarImage,
    derive_rng,
)


@pytest.fixture
def small_config() -> SonarConfig:
    return SonarConfig(max_range_m=30.0, aperture_rad=np.radians(120.0), n_beams=16, n_bins=96)


@pytest.fixture
def cfar_config() -> SonarConfig:
    return SonarConfig(max_range_m=30.0, aperture_rad=np.radians(120.0), n_beams=64, n_bins=512)


def random_image(config: SonarConfig, seed: int) -> SonarImage:
    rng = derive_rng(seed)
    return SonarImage(config, rng.random((config.n_beams, config.n_bins)))


def grid_manifest(
    config: SonarConfig,
    positions,
    headings,
    times=None,
    asset_id: int = 1,
) -> DatasetManifest:
    """Manifest of bare poses (image paths are placeholders, never read)."""
    records = []
    for i, ((x, y), h) in enumerate(zip(positions, headings)):
        t = float(times[i]) if times is not None else float(i)
        records.append(
            ScanRecord(
                id=i,
                pose=Pose2D(float(x), float(y), float(h), t),
                image_path=f"images/{i:06d}.pgm",
                role="anchor",
                asset_id=asset_id,
            )
        )
    return DatasetManifest(config=config, records=tuple(records))


def unit_vectors(n: int, seed: int, dim: int = 128) -> np.ndarray:
    """Random unit rows for metric tests."""
    rng = derive_rng(seed)
    v = rng.normal(size=(n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
