# nimbus/offline/overlap_replicates.py
"""Histogram overlap between generated and real cloud patches, over replicates."""

import sys
from collections.abc import Sequence
from pathlib import Path

import mlflow
import numpy as np

from ..errors import ParameterError, ShapeError
from ..metrics import DEFAULT_OVERLAP_BINS, histogram_overlap
from ..models import BandRaster, FbmParams
from ..raster import read_raster
from ..seeding import make_rng, mix_seed
from ..settings import tracking_uri
from ..spatial import generate_fbm_cloud

REPLICATES = 5
PATCHES_PER_REPLICATE = 100


def overlap_rates(
    real: Sequence[BandRaster],
    params: FbmParams,
    replicates: int = REPLICATES,
    per_replicate: int = PATCHES_PER_REPLICATE,
    base_seed: int = 0,
    bin_count: int = DEFAULT_OVERLAP_BINS,
) -> list[float]:
    """One overlap rate per replicate.

    Each replicate draws `per_replicate` real patches (with replacement when the
    pool is smaller) and generates as many fBm clouds of the same size.
    """
    if not real:
        raise ParameterError("no real patches to compare against")
    if replicates < 1 or per_replicate < 1:
        raise ParameterError("replicates and per_replicate must be >= 1")
    height, width = real[0].height, real[0].width
    if any((r.height, r.width) != (height, width) for r in real):
        raise ShapeError("real patches must share one size")

    rates = []
    for rep in range(replicates):
        rng = make_rng(mix_seed(base_seed, rep))
        replace = len(real) < per_replicate
        picks = rng.choice(len(real), size=per_replicate, replace=replace)
        generated = [
            generate_fbm_cloud(
                width,
                height,
                params.model_copy(
                    update={"seed": mix_seed(base_seed, rep * per_replicate + i)}
                ),
            ).raster
            for i in range(per_replicate)
        ]
        chosen = [real[int(i)] for i in np.sort(picks)]
        rates.append(histogram_overlap(chosen, generated, bin_count).rate)
    return rates


def load_real_patches(real_dir: str | Path) -> list[BandRaster]:
    return [
        band
        for path in sorted(Path(real_dir).glob("*.ras"))
        for band in read_raster(path).bands
    ]


def run_overlap_replicates(
    real_dir: str | Path,
    params: FbmParams | None = None,
    replicates: int = REPLICATES,
    per_replicate: int = PATCHES_PER_REPLICATE,
    base_seed: int = 0,
) -> list[float]:
    params = params or FbmParams()
    real = load_real_patches(real_dir)
    if not real:
        print(f"No .ras patches found in {real_dir}.")
        return []

    mlflow.set_tracking_uri(tracking_uri())
    with mlflow.start_run(run_name="overlap_replicates"):
        mlflow.log_param("real_dir", str(real_dir))
        mlflow.log_param("real_pool", len(real))
        mlflow.log_param("replicates", replicates)
        mlflow.log_param("per_replicate", per_replicate)
        mlflow.log_param("base_seed", base_seed)
        mlflow.log_params({f"fbm_{k}": v for k, v in params.model_dump().items()})

        rates = overlap_rates(real, params, replicates, per_replicate, base_seed)
        for rep, rate in enumerate(rates):
            mlflow.log_metric("overlap_rate", rate, step=rep)
        mlflow.log_metric("mean_overlap_rate", float(np.mean(rates)))
        mlflow.log_metric("min_overlap_rate", float(min(rates)))

        mlflow.log_text(
            "\n".join(f"{rep}\t{rate!r}" for rep, rate in enumerate(rates)) + "\n",
            "overlap_rates.tsv",
        )
        print(f"Mean overlap rate over {replicates} replicates: {np.mean(rates):.4f}")
    return rates


if __name__ == "__main__":
    run_overlap_replicates(sys.argv[1] if len(sys.argv) > 1 else "real_patches")
