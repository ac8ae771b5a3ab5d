# nimbus/cli.py

import logging
from pathlib import Path

import click
import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import ValidationError
from tqdm import tqdm

from .correction import correct_pgcs_m, format_correction_report
from .errors import EXIT_IO, EXIT_VALIDATION, NimbusError, ShapeError
from .metrics import (
    evaluate,
    format_metric_report,
    histogram_overlap,
    rmse,
)
from .models import (
    Aggregator,
    AugmentOp,
    CalibrationParams,
    ManifestEntry,
    MultiBandImage,
    PatchSpec,
)
from .pairs import (
    ALL_AUGMENT_OPS,
    build_dataset,
    clamp_for_export,
    format_entry,
    synthesize_pair,
)
from .raster import calibrate_image, normalize_for_training, read_raster, write_raster
from .settings import Config, load_config, thread_limit
from .spatial import (
    FbmCloudProvider,
    RasterCloudProvider,
    extract_patches,
    ingest_cloud,
    is_cloudy_patch,
    patch_anchors,
    write_patch_batch,
)
from .spectral import (
    collect_gamma_samples,
    format_fit_report,
    lsgf_fit,
    read_samples_csv,
    write_samples_csv,
)

logger = logging.getLogger(__name__)

INDEX_NAME = "index.tsv"

DIR_PATH = click.Path(file_okay=False, path_type=Path)
FILE_PATH = click.Path(path_type=Path)


class NimbusGroup(click.Group):
    """Maps library errors onto the stable exit codes (2 usage, 3 I/O, 4 validation)."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except NimbusError as exc:
            click.echo(f"error: {exc.detail}", err=True)
            ctx.exit(exc.exit_code)
        except ValidationError as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(EXIT_VALIDATION)
        except OSError as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(EXIT_IO)


def _config(ctx: click.Context) -> Config:
    return ctx.find_object(Config)


def _emit(text: str, out: Path | None) -> None:
    click.echo(text, nl=False)
    if out is not None:
        try:
            out.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise click.FileError(str(out), hint=str(exc))


# --------------------------------------------------------------------
# Group
# --------------------------------------------------------------------


@click.group(cls=NimbusGroup)
@click.option(
    "--config",
    "config_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help="INI config file with [gamma], [generator], [dataset], [metrics] "
    "and [profile.<name>] sections.",
)
@click.option("-v", "--verbose", is_flag=True, help="Log at DEBUG level.")
@click.pass_context
def cli(ctx: click.Context, config_path: Path | None, verbose: bool) -> None:
    """Thin-cloud synthesis, paired datasets and cirrus-driven correction."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    ctx.obj = load_config(config_path)


@cli.command("profiles")
@click.pass_context
def cmd_profiles(ctx: click.Context) -> None:
    """List the known sensor profiles."""
    for name, profile in sorted(_config(ctx).profiles.items()):
        bands = ", ".join(f"{b.name}:{b.wavelength}" for b in profile.bands)
        click.echo(
            f"{name}\treference={profile.reference_wavelength}\t"
            f"max_offset={profile.max_parallax_offset}\t{bands}"
        )


# --------------------------------------------------------------------
# Preparation
# --------------------------------------------------------------------


@cli.command("calibrate")
@click.option("--in", "in_path", required=True, type=FILE_PATH)
@click.option("--gain", required=True, type=float)
@click.option("--offset", required=True, type=float)
@click.option("--sun-elev", "sun_elev", required=True, type=float)
@click.option("--out", "out_path", required=True, type=FILE_PATH)
def cmd_calibrate(
    in_path: Path, gain: float, offset: float, sun_elev: float, out_path: Path
) -> None:
    """Convert a DN raster to TOA values."""
    params = CalibrationParams(gain=gain, offset=offset, sun_elevation=sun_elev)
    toa = calibrate_image(read_raster(in_path), params)
    write_raster(toa, out_path)
    click.echo(f"wrote {out_path}")


def _patches_for(path: Path, spec: PatchSpec, normalize: bool):
    image = read_raster(path)
    if image.band_count != 1:
        raise ShapeError(f"{path} has {image.band_count} bands; prepare expects 1")
    band = image.bands[0]
    anchors = patch_anchors(band.height, band.width, spec)
    patches = extract_patches(band, spec)
    kept = [(a, p) for a, p in zip(anchors, patches) if is_cloudy_patch(p, spec)]
    if normalize:
        kept = [(a, normalize_for_training(p)) for a, p in kept]
    return path.stem, kept, len(patches)


@cli.command("prepare")
@click.option("--in-dir", required=True, type=DIR_PATH)
@click.option("--out-dir", required=True, type=DIR_PATH)
@click.option("--patch-size", default=512, show_default=True, type=int)
@click.option("--stride", default=128, show_default=True, type=int)
@click.option("--threshold", default=0.015, show_default=True, type=float)
@click.option("--normalize/--no-normalize", default=True, show_default=True)
def cmd_prepare(
    in_dir: Path,
    out_dir: Path,
    patch_size: int,
    stride: int,
    threshold: float,
    normalize: bool,
) -> None:
    """Crop cirrus rasters into patches, drop cloud-free ones, optionally normalize."""
    spec = PatchSpec(patch_size=patch_size, stride=stride, cleaning_threshold=threshold)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = sorted(in_dir.glob("*.ras"))
    if not inputs:
        click.echo(f"warning: no .ras files in {in_dir}", err=True)

    jobs = thread_limit()
    logger.debug("cutting %d files with %d workers", len(inputs), jobs)
    results = Parallel(n_jobs=jobs, prefer="threads")(
        delayed(_patches_for)(path, spec, normalize) for path in inputs
    )

    index_lines: list[str] = []
    total = 0
    for stem, kept, count in tqdm(results, desc="patches", unit="file", disable=None):
        total += count
        if kept:
            anchors, patches = zip(*kept)
            index_lines.extend(write_patch_batch(stem, anchors, patches, spec, out_dir))

    index_text = "".join(line + "\n" for line in index_lines)
    (out_dir / INDEX_NAME).write_text(index_text, encoding="utf-8")
    click.echo(
        f"kept {len(index_lines)} of {total} patches from {len(inputs)} files "
        f"-> {out_dir / INDEX_NAME}"
    )


# --------------------------------------------------------------------
# Spectral law
# --------------------------------------------------------------------


@cli.command("collect-samples")
@click.option("--bands", "bands_path", required=True, type=FILE_PATH)
@click.option("--cirrus", "cirrus_path", required=True, type=FILE_PATH)
@click.option("--profile", "profile_name", default="landsat89", show_default=True)
@click.option("--min-cr", default=0.0, show_default=True, type=float)
@click.option("--out", "out_path", required=True, type=FILE_PATH)
@click.pass_context
def cmd_collect_samples(
    ctx: click.Context,
    bands_path: Path,
    cirrus_path: Path,
    profile_name: str,
    min_cr: float,
    out_path: Path,
) -> None:
    """Invert gamma from separated cloud bands against the cirrus band."""
    profile = _config(ctx).profile(profile_name)
    samples = collect_gamma_samples(
        read_raster(bands_path), ingest_cloud(cirrus_path, profile), min_cr
    )
    write_samples_csv(samples, out_path)
    click.echo(f"wrote {len(samples)} samples to {out_path}")


@cli.command("fit-lsgf")
@click.option("--samples", "samples_path", required=True, type=FILE_PATH)
@click.option("--bins", default=250, show_default=True, type=int)
@click.option(
    "--aggregator",
    type=click.Choice([a.value for a in Aggregator]),
    default=Aggregator.MEAN.value,
    show_default=True,
)
@click.option("--out", "out_path", type=FILE_PATH, default=None)
def cmd_fit_lsgf(
    samples_path: Path, bins: int, aggregator: str, out_path: Path | None
) -> None:
    """Fit gamma = a * ln(C_r) with local statistics and a global fit."""
    samples = read_samples_csv(samples_path)
    fit = lsgf_fit(samples, bin_count=bins, aggregator=aggregator)
    _emit(format_fit_report(fit), out_path)


# --------------------------------------------------------------------
# Synthesis
# --------------------------------------------------------------------


def _cloud_provider(config: Config, profile, cloud_paths: list[Path]):
    if cloud_paths:
        return RasterCloudProvider(cloud_paths, profile)
    return FbmCloudProvider(config.generator, profile.reference_wavelength)


@cli.command("synth")
@click.option("--profile", "profile_name", default="landsat89", show_default=True)
@click.option("--seed", required=True, type=int)
@click.option("--ground", "ground_path", type=FILE_PATH, default=None)
@click.option(
    "--cloud",
    "cloud_path",
    type=FILE_PATH,
    default=None,
    help="Ingest this single-band cloud raster instead of generating one.",
)
@click.option("--width", default=512, show_default=True, type=int)
@click.option("--height", default=512, show_default=True, type=int)
@click.option("--scale", default=1.0, show_default=True, type=float)
@click.option("--cap", default=None, type=float)
@click.option(
    "--augment",
    type=click.Choice([op.value for op in AugmentOp]),
    default=AugmentOp.IDENTITY.value,
    show_default=True,
)
@click.option("--clamp-export", is_flag=True, help="Clip cloudy output to [0, 1].")
@click.option("--out-dir", required=True, type=DIR_PATH)
@click.pass_context
def cmd_synth(
    ctx: click.Context,
    profile_name: str,
    seed: int,
    ground_path: Path | None,
    cloud_path: Path | None,
    width: int,
    height: int,
    scale: float,
    cap: float | None,
    augment: str,
    clamp_export: bool,
    out_dir: Path,
) -> None:
    """Synthesize one multi-band cloud and, given a ground, its cloudy image."""
    config = _config(ctx)
    profile = config.profile(profile_name)
    provider = _cloud_provider(config, profile, [cloud_path] if cloud_path else [])

    if ground_path is not None:
        ground = read_raster(ground_path)
    else:
        zeros = np.zeros((len(profile.bands), height, width), dtype=np.float32)
        ground = MultiBandImage.from_stack(zeros, profile.wavelengths)

    pair = synthesize_pair(
        ground,
        profile,
        config.gamma,
        provider,
        seed=seed,
        thickness_range=(scale, scale),
        cap=cap,
        augment_ops=(AugmentOp(augment),),
    )

    out_dir.mkdir(parents=True, exist_ok=True)
    write_raster(MultiBandImage(bands=(pair.cirrus.raster,)), out_dir / "cirrus.ras")
    write_raster(pair.cloud, out_dir / "cloud.ras")
    if ground_path is None:
        click.echo(f"wrote cirrus.ras and cloud.ras to {out_dir}")
        return

    cloudy = clamp_for_export(pair.cloudy) if clamp_export else pair.cloudy
    write_raster(pair.ground, out_dir / "ground.ras")
    write_raster(cloudy, out_dir / "cloudy.ras")
    click.echo(
        format_entry(
            ManifestEntry(
                ground_path="ground.ras",
                cloud_path="cloud.ras",
                cloudy_path="cloudy.ras",
                seed=seed,
                thickness_scale=pair.thickness_scale,
                cap=cap,
                offsets=pair.offsets,
                augment=pair.augment,
                cirrus_path="cirrus.ras",
            )
        )
    )


@cli.command("build-dataset")
@click.option(
    "--ground", "ground_paths", multiple=True, type=FILE_PATH
)
@click.option(
    "--grounds-dir", type=DIR_PATH, default=None
)
@click.option(
    "--cloud-dir",
    type=DIR_PATH,
    default=None,
    help="Ingest cloud rasters from this directory instead of generating them.",
)
@click.option("--profile", "profile_name", default="landsat89", show_default=True)
@click.option("--n-pairs", type=int, default=None)
@click.option("--seed", required=True, type=int)
@click.option("--scale-min", type=float, default=None)
@click.option("--scale-max", type=float, default=None)
@click.option("--cap", type=float, default=None)
@click.option("--no-augment", is_flag=True, help="Keep every ground unrotated.")
@click.option("--clamp-export", is_flag=True, help="Clip cloudy outputs to [0, 1].")
@click.option("--out-dir", required=True, type=DIR_PATH)
@click.pass_context
def cmd_build_dataset(
    ctx: click.Context,
    ground_paths: tuple[Path, ...],
    grounds_dir: Path | None,
    cloud_dir: Path | None,
    profile_name: str,
    n_pairs: int | None,
    seed: int,
    scale_min: float | None,
    scale_max: float | None,
    cap: float | None,
    no_augment: bool,
    clamp_export: bool,
    out_dir: Path,
) -> None:
    """Write a reproducible tree of (ground, cloud, cloudy) triples plus a manifest."""
    config = _config(ctx)
    defaults = config.dataset

    paths = list(ground_paths)
    if grounds_dir is not None:
        paths.extend(sorted(grounds_dir.glob("*.ras")))
    if not paths:
        raise click.UsageError("no ground images given (use --ground or --grounds-dir)")

    profile = config.profile(profile_name)
    cloud_paths = sorted(cloud_dir.glob("*.ras")) if cloud_dir is not None else []
    if cloud_dir is not None and not cloud_paths:
        raise click.UsageError(f"no .ras files in {cloud_dir}")

    manifest = build_dataset(
        grounds=[read_raster(path) for path in paths],
        profile=profile,
        model=config.gamma,
        n_pairs=n_pairs if n_pairs is not None else defaults.n_pairs,
        base_seed=seed,
        thickness_range=(
            scale_min if scale_min is not None else defaults.scale_min,
            scale_max if scale_max is not None else defaults.scale_max,
        ),
        generator=_cloud_provider(config, profile, cloud_paths),
        out_dir=out_dir,
        cap=cap if cap is not None else defaults.cap,
        augment_ops=(AugmentOp.IDENTITY,) if no_augment else ALL_AUGMENT_OPS,
        clamp_export=clamp_export or defaults.clamp_export,
    )
    click.echo(f"wrote {len(manifest.entries)} pairs to {out_dir}")


# --------------------------------------------------------------------
# Correction and evaluation
# --------------------------------------------------------------------


@cli.command("correct")
@click.option("--cloudy", "cloudy_path", required=True, type=FILE_PATH)
@click.option("--cirrus", "cirrus_path", required=True, type=FILE_PATH)
@click.option("--profile", "profile_name", default="landsat89", show_default=True)
@click.option("--out", "out_path", required=True, type=FILE_PATH)
@click.option("--report", "report_path", type=FILE_PATH, default=None)
@click.option(
    "--reference",
    "reference_path",
    type=FILE_PATH,
    default=None,
    help="Clear image to score the correction against (prints RMSE).",
)
@click.pass_context
def cmd_correct(
    ctx: click.Context,
    cloudy_path: Path,
    cirrus_path: Path,
    profile_name: str,
    out_path: Path,
    report_path: Path | None,
    reference_path: Path | None,
) -> None:
    """Subtract the cirrus-predicted cloud from every band."""
    config = _config(ctx)
    profile = config.profile(profile_name)
    corrected, report = correct_pgcs_m(
        read_raster(cloudy_path),
        ingest_cloud(cirrus_path, profile),
        profile,
        config.gamma,
    )
    write_raster(corrected, out_path)

    text = format_correction_report(report)
    if reference_path is not None:
        error = rmse(corrected, read_raster(reference_path))
        text += f"rmse_vs_reference = {error!r}\n"
    _emit(text, report_path)


def _pairs_to_score(pred: Path, ref: Path) -> list[tuple[str, Path, Path]]:
    if pred.is_dir() and ref.is_dir():
        names = sorted(
            p.name for p in pred.glob("*.ras") if (ref / p.name).is_file()
        )
        return [(name, pred / name, ref / name) for name in names]
    if pred.is_dir() or ref.is_dir():
        raise click.UsageError("--pred and --ref must both be files or directories")
    return [(pred.name, pred, ref)]


@cli.command("evaluate")
@click.option("--pred", "pred_path", required=True, type=FILE_PATH)
@click.option("--ref", "ref_path", required=True, type=FILE_PATH)
@click.option("--peak", type=float, default=None, help="PSNR/SSIM peak value.")
@click.option("--overlap", is_flag=True, help="Add the histogram overlap rate.")
@click.option("--bins", type=int, default=None, help="Histogram bins for --overlap.")
@click.option("--csv", "csv_path", type=FILE_PATH, default=None)
@click.pass_context
def cmd_evaluate(
    ctx: click.Context,
    pred_path: Path,
    ref_path: Path,
    peak: float | None,
    overlap: bool,
    bins: int | None,
    csv_path: Path | None,
) -> None:
    """Score predictions against references with RMSE, PSNR, SSIM, CC and SAM."""
    defaults = _config(ctx).metrics
    peak = peak if peak is not None else defaults.peak
    bins = bins if bins is not None else defaults.bins

    items = _pairs_to_score(pred_path, ref_path)
    if not items:
        click.echo("warning: no matching rasters to evaluate", err=True)

    rows = []
    for name, pred_file, ref_file in items:
        pred, ref = read_raster(pred_file), read_raster(ref_file)
        report = evaluate(pred, ref, peak)
        hist = histogram_overlap(ref.bands, pred.bands, bins) if overlap else None
        if len(items) > 1:
            click.echo(f"[{name}]")
        click.echo(format_metric_report(report, hist), nl=False)

        row = {"name": name, **report.model_dump()}
        if hist is not None:
            row["overlap_rate"] = hist.rate
        rows.append(row)

    if csv_path is not None:
        pd.DataFrame(rows).to_csv(csv_path, index=False, float_format="%.17g")


if __name__ == "__main__":
    cli()
