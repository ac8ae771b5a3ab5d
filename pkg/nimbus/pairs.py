# nimbus/pairs.py
"""Paired "cloudy & cloud-free" synthesis: cloudy = augment(ground) + cloud."""

import logging
import math
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict
from threadpoolctl import threadpool_limits

from .errors import FormatError, ParameterError, ShapeError, StorageError
from .models import (
    AugmentOp,
    CloudField,
    DatasetManifest,
    GammaModel,
    ManifestEntry,
    MultiBandImage,
    ParallaxOffsets,
    SensorProfile,
)
from .raster import write_raster
from .seeding import make_rng, mix_seed
from .settings import thread_limit
from .spatial import CloudProvider, adjust_thickness
from .spectral import extrapolate_all

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"
MANIFEST_COLUMNS = (
    "ground",
    "cloud",
    "cloudy",
    "seed",
    "scale",
    "cap",
    "offsets",
    "augment",
    "cirrus",
)
ALL_AUGMENT_OPS = tuple(AugmentOp)

# sub-stream indices under an item seed
_CLOUD_STREAM = 0
_OFFSET_STREAM = 1
_DRAW_STREAM = 2


# --------------------------------------------------------------------
# Per-image operations
# --------------------------------------------------------------------


def apply_parallax(
    cloud_bands: MultiBandImage,
    offsets: ParallaxOffsets,
    max_offset: int | None = None,
) -> MultiBandImage:
    """Translate band k by (dx_k, dy_k); vacated borders replicate the edge."""
    if len(offsets.shifts) != cloud_bands.band_count:
        raise ShapeError(
            f"{len(offsets.shifts)} offsets for {cloud_bands.band_count} bands"
        )
    if max_offset is not None and offsets.bound > max_offset:
        for dx, dy in offsets.shifts:
            if abs(dx) > max_offset or abs(dy) > max_offset:
                raise ParameterError(
                    f"offset ({dx}, {dy}) exceeds the sensor limit {max_offset}"
                )

    rows = np.arange(cloud_bands.height)
    cols = np.arange(cloud_bands.width)
    bands = []
    for band, (dx, dy) in zip(cloud_bands.bands, offsets.shifts):
        if dx == 0 and dy == 0:
            bands.append(band)
            continue
        src_rows = np.clip(rows - dy, 0, cloud_bands.height - 1)
        src_cols = np.clip(cols - dx, 0, cloud_bands.width - 1)
        bands.append(band.with_data(band.data[np.ix_(src_rows, src_cols)]))
    return MultiBandImage(bands=tuple(bands))


def sample_offsets(profile: SensorProfile, seed: int) -> ParallaxOffsets:
    """Per-band (dx, dy), each uniform over the integers in [-max, +max]."""
    bound = profile.max_parallax_offset
    band_count = len(profile.bands)
    if bound == 0:
        return ParallaxOffsets.zero(band_count)
    draws = make_rng(seed).integers(-bound, bound, size=(band_count, 2), endpoint=True)
    return ParallaxOffsets(
        shifts=tuple((int(dx), int(dy)) for dx, dy in draws), bound=bound
    )


def composite(ground: MultiBandImage, cloud: MultiBandImage) -> MultiBandImage:
    """Purely additive: no clipping is applied to the sum."""
    if ground.band_count != cloud.band_count:
        raise ShapeError(
            f"ground has {ground.band_count} bands, cloud has {cloud.band_count}"
        )
    if (ground.height, ground.width) != (cloud.height, cloud.width):
        raise ShapeError(
            f"ground is {ground.width}x{ground.height}, "
            f"cloud is {cloud.width}x{cloud.height}"
        )
    for idx, (g_wl, c_wl) in enumerate(zip(ground.wavelengths, cloud.wavelengths)):
        if g_wl is None or c_wl is None:
            continue
        if not math.isclose(g_wl, c_wl, rel_tol=1e-9):
            raise ShapeError(
                f"band {idx}: ground is at {g_wl} µm, cloud at {c_wl} µm"
            )
    return MultiBandImage.from_stack(ground.stack() + cloud.stack(), ground.wavelengths)


def _transform(data: np.ndarray, op: AugmentOp) -> np.ndarray:
    flip, turns = op.flip_turns
    out = np.rot90(data, k=turns)
    if flip:
        out = out[:, ::-1]
    return out


def augment(image: MultiBandImage, op: AugmentOp) -> MultiBandImage:
    if op is AugmentOp.IDENTITY:
        return image
    return MultiBandImage(
        bands=tuple(band.with_data(_transform(band.data, op)) for band in image.bands)
    )


def clamp_for_export(image: MultiBandImage) -> MultiBandImage:
    clipped = np.clip(image.stack(), 0.0, 1.0)
    return MultiBandImage.from_stack(clipped, image.wavelengths)


# --------------------------------------------------------------------
# One dataset item
# --------------------------------------------------------------------


class SynthesizedPair(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    ground: MultiBandImage
    cirrus: CloudField
    cloud: MultiBandImage
    cloudy: MultiBandImage
    seed: int
    thickness_scale: float
    cap: float | None
    offsets: ParallaxOffsets
    augment: AugmentOp


def _check_thickness_range(thickness_range: tuple[float, float]) -> None:
    lo, hi = thickness_range
    if not (0 <= lo <= hi):
        raise ParameterError(
            f"thickness range must satisfy 0 <= min <= max, got {thickness_range}"
        )


def synthesize_pair(
    ground: MultiBandImage,
    profile: SensorProfile,
    model: GammaModel,
    provider: CloudProvider,
    seed: int,
    index: int = 0,
    thickness_range: tuple[float, float] = (1.0, 1.0),
    cap: float | None = None,
    augment_ops: Sequence[AugmentOp] = ALL_AUGMENT_OPS,
) -> SynthesizedPair:
    """Everything stochastic about an item derives from `seed`."""
    _check_thickness_range(thickness_range)
    if not augment_ops:
        raise ParameterError("at least one augmentation op is required")
    profile.check_image(ground, "ground")

    draws = make_rng(mix_seed(seed, _DRAW_STREAM))
    lo, hi = thickness_range
    scale = float(draws.uniform(lo, hi)) if hi > lo else float(lo)
    op = augment_ops[int(draws.integers(len(augment_ops)))]

    ground_view = augment(ground, op)
    field = provider.cloud(
        index, ground_view.width, ground_view.height, mix_seed(seed, _CLOUD_STREAM)
    )
    cirrus = adjust_thickness(field, scale, cap)
    offsets = sample_offsets(profile, mix_seed(seed, _OFFSET_STREAM))
    cloud = apply_parallax(extrapolate_all(cirrus, profile, model), offsets)

    return SynthesizedPair(
        ground=ground_view,
        cirrus=cirrus,
        cloud=cloud,
        cloudy=composite(ground_view, cloud),
        seed=seed,
        thickness_scale=scale,
        cap=cap,
        offsets=offsets,
        augment=op,
    )


def _write_pair(
    pair: SynthesizedPair, index: int, out_dir: Path, clamp_export: bool
) -> ManifestEntry:
    names = {kind: f"{index:06d}_{kind}.ras" for kind in ("ground", "cloud", "cloudy")}
    names["cirrus"] = f"{index:06d}_cirrus.ras"
    cloudy = clamp_for_export(pair.cloudy) if clamp_export else pair.cloudy
    write_raster(pair.ground, out_dir / names["ground"])
    write_raster(pair.cloud, out_dir / names["cloud"])
    write_raster(cloudy, out_dir / names["cloudy"])
    write_raster(MultiBandImage(bands=(pair.cirrus.raster,)), out_dir / names["cirrus"])
    return ManifestEntry(
        ground_path=names["ground"],
        cloud_path=names["cloud"],
        cloudy_path=names["cloudy"],
        seed=pair.seed,
        thickness_scale=pair.thickness_scale,
        cap=pair.cap,
        offsets=pair.offsets,
        augment=pair.augment,
        cirrus_path=names["cirrus"],
    )


# --------------------------------------------------------------------
# Dataset
# --------------------------------------------------------------------


def build_dataset(
    grounds: Sequence[MultiBandImage],
    profile: SensorProfile,
    model: GammaModel,
    n_pairs: int,
    base_seed: int,
    thickness_range: tuple[float, float],
    generator: CloudProvider,
    out_dir: str | Path,
    cap: float | None = None,
    augment_ops: Sequence[AugmentOp] = ALL_AUGMENT_OPS,
    clamp_export: bool = False,
    n_jobs: int | None = None,
) -> DatasetManifest:
    """Synthesize `n_pairs` items into `out_dir` and write the manifest.

    Item i uses ground i mod len(grounds) and seed mix_seed(base_seed, i), so
    the tree is identical for any degree of parallelism.
    """
    if not grounds:
        raise ParameterError("build_dataset needs at least one ground image")
    if n_pairs < 1:
        raise ParameterError(f"n_pairs must be >= 1, got {n_pairs}")
    _check_thickness_range(thickness_range)

    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StorageError(f"cannot create {out_dir}: {exc}") from exc
    jobs = n_jobs or thread_limit()

    def run(index: int) -> ManifestEntry:
        pair = synthesize_pair(
            grounds[index % len(grounds)],
            profile,
            model,
            generator,
            seed=mix_seed(base_seed, index),
            index=index,
            thickness_range=thickness_range,
            cap=cap,
            augment_ops=augment_ops,
        )
        try:
            return _write_pair(pair, index, out_dir, clamp_export)
        except StorageError as exc:
            raise StorageError(exc.detail, index=index) from exc

    with threadpool_limits(limits=jobs):
        entries = Parallel(n_jobs=jobs, prefer="threads")(
            delayed(run)(index) for index in range(n_pairs)
        )

    manifest = DatasetManifest(
        profile_name=profile.name,
        coefficient=model.coefficient,
        entries=tuple(entries),
        base_seed=base_seed,
        offset_bound=profile.max_parallax_offset,
    )
    write_manifest(manifest, out_dir / MANIFEST_NAME)
    logger.info("built %d pairs in %s with %d workers", n_pairs, out_dir, jobs)
    return manifest


# --------------------------------------------------------------------
# Manifest I/O
# --------------------------------------------------------------------


def format_entry(entry: ManifestEntry) -> str:
    fields = (
        entry.ground_path,
        entry.cloud_path,
        entry.cloudy_path,
        str(entry.seed),
        repr(entry.thickness_scale),
        "none" if entry.cap is None else repr(entry.cap),
        entry.offsets.encode(),
        entry.augment.value,
        entry.cirrus_path,
    )
    return "\t".join(fields)


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    lines = [
        f"# profile={manifest.profile_name}",
        f"# coefficient={manifest.coefficient!r}",
        f"# base_seed={'none' if manifest.base_seed is None else manifest.base_seed}",
        f"# offset_bound={manifest.offset_bound}",
        "# columns=" + ",".join(MANIFEST_COLUMNS),
    ]
    lines.extend(format_entry(entry) for entry in manifest.entries)
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def read_manifest(path: str | Path) -> DatasetManifest:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc

    header: dict[str, str] = {}
    rows: list[list[str]] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
            continue
        fields = line.split("\t")
        if len(fields) != len(MANIFEST_COLUMNS):
            raise FormatError(
                f"manifest line has {len(fields)} fields, expected "
                f"{len(MANIFEST_COLUMNS)}: {line!r}"
            )
        rows.append(fields)

    try:
        bound = int(header.get("offset_bound", "0"))
        entries = tuple(
            ManifestEntry(
                ground_path=ground,
                cloud_path=cloud,
                cloudy_path=cloudy,
                seed=int(seed),
                thickness_scale=float(scale),
                cap=None if cap == "none" else float(cap),
                offsets=ParallaxOffsets.decode(offsets, bound),
                augment=AugmentOp(op),
                cirrus_path=cirrus,
            )
            for ground, cloud, cloudy, seed, scale, cap, offsets, op, cirrus in rows
        )
        base_seed = header.get("base_seed", "none")
        return DatasetManifest(
            profile_name=header["profile"],
            coefficient=float(header["coefficient"]),
            entries=entries,
            base_seed=None if base_seed == "none" else int(base_seed),
            offset_bound=bound,
        )
    except (KeyError, ValueError) as exc:
        raise FormatError(f"malformed manifest {path}: {exc}") from exc
