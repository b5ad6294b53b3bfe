"""Experimental protocols: resampling studies, sign-shift sweeps,
random-image baselines, ordering comparisons and time series.

Every study produces a StudyTable: an ordered list of rows mapping a
control parameter to the measured resources, plus a provenance block
(configs and master seed) from which the table can be regenerated
exactly.  Rows that involve sampling derive their own RNG stream from
the master seed and the row index.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import ndimage

from .encoding import EncodedState, EncodingConfig, Field2D, decode_field, encode_field, shift_field
from .errors import InputError, NumericalError, ShapeError
from .mps import mps_to_dense
from .resources import (
    EntropyProfile,
    MagicEstimate,
    REPLICA_CHI_LIMIT,
    entropy_profile,
    estimate_m2,
    sre2_replica,
    sre_dense,
)

# Fixed resource columns of every study row; free-form parameters come first.
RESOURCE_COLUMNS = (
    "s_vn_norm",
    "s_vn_bits",
    "argmax_bond",
    "m2_bits",
    "m2_norm",
    "m2_stderr",
    "chi_max",
    "discarded_weight",
)


@dataclass(frozen=True)
class MagicConfig:
    """How to measure non-stabilizerness inside a study.

    method "auto" picks the exact dense route for small site counts and
    the exact replica contraction for small bond dimensions, falling back
    to the sampled estimator; "none" skips magic entirely (entropy-only
    studies).
    """

    method: str = "auto"
    n_samples: int = 4096
    seed: int = 0
    normalization: str = "bound"
    dense_limit: int = 12
    replica_chi_limit: int = REPLICA_CHI_LIMIT

    def __post_init__(self):
        if self.method not in ("auto", "dense", "replica", "sampled", "none"):
            raise InputError(f"unknown magic method {self.method!r}")
        if self.n_samples < 2:
            raise InputError("n_samples must be >= 2")


@dataclass(frozen=True)
class ResourceReport:
    """Per-state measurement bundle: entropy profile, magic estimate,
    bond-dimension profile and truncation error."""

    entropy: EntropyProfile
    magic: MagicEstimate | None
    chi_profile: list
    chi_max: int
    discarded_weight: float


@dataclass
class StudyTable:
    """Rows of (parameters -> resources) plus reproducibility provenance."""

    rows: list
    provenance: dict = field(default_factory=dict)

    @property
    def columns(self) -> list:
        if self.rows:
            return list(self.rows[0].keys())
        return list(RESOURCE_COLUMNS)

    def column(self, key) -> list:
        return [row.get(key) for row in self.rows]


def row_seed(master_seed: int, index: int) -> int:
    """Deterministic per-row RNG seed derived from the master seed."""
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1)[0])


def _resolve_method(cfg: MagicConfig, n_sites: int, chi: int) -> str:
    if cfg.method != "auto":
        return cfg.method
    if n_sites <= cfg.dense_limit:
        return "dense"
    if chi <= cfg.replica_chi_limit:
        return "replica"
    return "sampled"


def measure_encoded(state: EncodedState, magic: MagicConfig | None = None,
                    seed: int | None = None) -> ResourceReport:
    """Entropy profile plus (optionally) an M2 estimate of an encoded state."""
    magic = magic or MagicConfig()
    profile = entropy_profile(state.mps)
    method = _resolve_method(magic, state.mps.n_sites, state.mps.chi_max)
    if method == "none":
        estimate = None
    elif method == "dense":
        estimate = sre_dense(mps_to_dense(state.mps), 2.0, normalization=magic.normalization)
    elif method == "replica":
        estimate = sre2_replica(
            state.mps, chi_limit=magic.replica_chi_limit, normalization=magic.normalization
        )
    else:
        estimate = estimate_m2(
            state.mps,
            magic.n_samples,
            magic.seed if seed is None else seed,
            normalization=magic.normalization,
        )
    return ResourceReport(
        entropy=profile,
        magic=estimate,
        chi_profile=list(state.mps.bond_dims),
        chi_max=state.mps.chi_max,
        discarded_weight=state.discarded_weight,
    )


def build_row(params: dict, report: ResourceReport, rmse_value: float | None = None) -> dict:
    """Assemble one study row in the stable column order."""
    profile = report.entropy
    if len(profile.entropies_bits):
        s_bits = float(profile.entropies_bits[profile.argmax_bond - 1])
    else:
        s_bits = 0.0
    row = dict(params)
    row["s_vn_norm"] = float(profile.max_normalized)
    row["s_vn_bits"] = s_bits
    row["argmax_bond"] = int(profile.argmax_bond)
    est = report.magic
    row["m2_bits"] = None if est is None else float(est.m2_bits)
    row["m2_norm"] = None if est is None else float(est.normalized)
    row["m2_stderr"] = None if est is None else float(est.stderr_bits)
    row["chi_max"] = int(report.chi_max)
    row["discarded_weight"] = float(report.discarded_weight)
    if rmse_value is not None:
        row["rmse"] = float(rmse_value)
    _check_row(row)
    return row


def _check_row(row: dict) -> None:
    if not -1e-9 <= row["s_vn_norm"] <= 1.0 + 1e-9:
        raise NumericalError(f"normalized entropy {row['s_vn_norm']} out of [0, 1]")
    if row["m2_norm"] is not None:
        allowance = 3.0 * (row["m2_stderr"] or 0.0) + 1e-9
        if not -allowance <= row["m2_norm"] <= 1.0 + allowance:
            raise NumericalError(f"normalized magic {row['m2_norm']} out of range")


def _map_rows(worker, items, threads: int):
    if threads <= 1:
        return [worker(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, items))


def _provenance(study: str, seed, encoding: EncodingConfig, magic: MagicConfig | None,
                **extra) -> dict:
    prov = {"study": study, "seed": seed}
    enc = asdict(encoding)
    enc["ordering"] = encoding.ordering.value
    prov["encoding"] = enc
    if magic is not None:
        prov["magic"] = asdict(magic)
    prov.update(extra)
    return prov


# ---------------------------------------------------------------------------
# Resampling


class Boundary(str, Enum):
    PERIODIC = "periodic"
    CLAMPED = "clamped"


def bspline_resample(field2d: Field2D, target_nx: int, target_ny: int,
                     boundary="periodic") -> Field2D:
    """Resample onto a (2^target_nx, 2^target_ny) grid with cubic b-splines.

    The source grid is prefiltered to an interpolating cubic b-spline and
    evaluated at the uniform target points.  Periodic boundaries treat
    index space modulo the grid; clamped boundaries align the endpoints
    and extend by the edge value.  Resampling to the source shape returns
    the values unchanged.
    """
    boundary = Boundary(boundary)
    if target_nx < 1 or target_ny < 1:
        raise InputError("target exponents must be >= 1")
    src = field2d.values
    out_shape = (1 << target_nx, 1 << target_ny)
    if out_shape == src.shape:
        return replace(field2d, values=src.copy(), preshift_values=None)

    coords = []
    for axis, size in enumerate(out_shape):
        n_src = src.shape[axis]
        if boundary is Boundary.PERIODIC:
            coords.append(np.arange(size) * (n_src / size))
        else:
            step = (n_src - 1) / (size - 1) if size > 1 else 0.0
            coords.append(np.arange(size) * step)
    grid = np.meshgrid(*coords, indexing="ij")
    mode = "grid-wrap" if boundary is Boundary.PERIODIC else "nearest"
    values = ndimage.map_coordinates(src, np.stack(grid), order=3, mode=mode)
    return replace(field2d, values=values, preshift_values=None)


def rmse(a: Field2D | np.ndarray, b: Field2D | np.ndarray) -> float:
    """Root mean squared difference over all grid points."""
    av = a.values if isinstance(a, Field2D) else np.asarray(a, dtype=np.float64)
    bv = b.values if isinstance(b, Field2D) else np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape:
        raise ShapeError(f"shape mismatch {av.shape} vs {bv.shape}")
    return float(np.sqrt(np.mean((av - bv) ** 2)))


def reconstruction_accuracy(original: Field2D, reconstructed: Field2D) -> float:
    """1 - RMSE / value range of the original; 1.0 means perfect."""
    span = float(original.values.max() - original.values.min())
    if span == 0.0:
        return 1.0 if rmse(original, reconstructed) == 0.0 else 0.0
    return 1.0 - rmse(original, reconstructed) / span


def halving_levels(nx: int, ny: int, min_exp: int = 1) -> list:
    """Default coarse-graining ladder: halve both axes per level."""
    levels = []
    tx, ty = nx, ny
    while tx >= min_exp and ty >= min_exp:
        levels.append((tx, ty))
        tx -= 1
        ty -= 1
    return levels


# ---------------------------------------------------------------------------
# Studies


def coarse_grain_study(field2d: Field2D, levels, encoding: EncodingConfig | None = None,
                       magic: MagicConfig | None = None, *, boundary="periodic",
                       threads: int = 1) -> StudyTable:
    """Downsample to each level, encode, measure, and record the round-trip
    interpolation error back at the source resolution."""
    encoding = encoding or EncodingConfig()
    magic = magic or MagicConfig()
    nx, ny = field2d.nx, field2d.ny
    levels = [(int(tx), int(ty)) for tx, ty in levels]
    for tx, ty in levels:
        if tx > nx or ty > ny:
            raise InputError(f"level ({tx}, {ty}) is finer than the source ({nx}, {ny})")

    def worker(item):
        index, (tx, ty) = item
        coarse = bspline_resample(field2d, tx, ty, boundary)
        state = encode_field(coarse, encoding)
        report = measure_encoded(state, magic, seed=row_seed(magic.seed, index))
        back = bspline_resample(coarse, nx, ny, boundary)
        delta = rmse(field2d, back)
        params = {"level": index, "nx": tx, "ny": ty, "grid_points": (1 << tx) * (1 << ty)}
        if _resolve_method(magic, state.mps.n_sites, state.mps.chi_max) == "sampled":
            params["seed"] = row_seed(magic.seed, index)
        return build_row(params, report, rmse_value=delta)

    rows = _map_rows(worker, list(enumerate(levels)), threads)
    prov = _provenance("coarse_grain", magic.seed, encoding, magic,
                       levels=levels, boundary=str(Boundary(boundary).value))
    return StudyTable(rows=rows, provenance=prov)


def shift_sweep(field2d: Field2D, shifts, encoding: EncodingConfig | None = None,
                magic: MagicConfig | None = None, *, threads: int = 1) -> StudyTable:
    """Resources as the data is shifted entrywise by each offset."""
    encoding = encoding or EncodingConfig()
    magic = magic or MagicConfig()
    shifts = [float(x) for x in shifts]

    def worker(item):
        index, x = item
        state = encode_field(shift_field(field2d, x), encoding)
        report = measure_encoded(state, magic, seed=row_seed(magic.seed, index))
        params = {"shift": x}
        if _resolve_method(magic, state.mps.n_sites, state.mps.chi_max) == "sampled":
            params["seed"] = row_seed(magic.seed, index)
        return build_row(params, report)

    rows = _map_rows(worker, list(enumerate(shifts)), threads)
    prov = _provenance("shift_sweep", magic.seed, encoding, magic, shifts=shifts)
    return StudyTable(rows=rows, provenance=prov)


def ordering_comparison(field2d: Field2D, encodings, magic: MagicConfig | None = None,
                        *, threads: int = 1) -> StudyTable:
    """Resources per site ordering on the same field.

    As a side assertion, the decoded fields of all orderings are checked
    to agree within the truncation tolerance: different orderings must
    encode the same function.
    """
    magic = magic or MagicConfig()
    encodings = list(encodings)
    if len(encodings) < 2:
        raise InputError("ordering comparison needs at least two encoding configs")

    states = [encode_field(field2d, cfg) for cfg in encodings]
    decoded = [decode_field(s) for s in states]
    scale = float(np.sqrt(np.mean(field2d.values**2))) or 1.0
    for cfg, dec, state in zip(encodings[1:], decoded[1:], states[1:]):
        tol = 10.0 * (np.sqrt(state.discarded_weight) + np.sqrt(states[0].discarded_weight)) + 1e-9
        delta = rmse(decoded[0], dec) / scale
        if delta > tol:
            raise NumericalError(
                f"orderings decode to different content (relative rmse {delta:g})"
            )

    def worker(item):
        index, (cfg, state) = item
        report = measure_encoded(state, magic, seed=row_seed(magic.seed, index))
        params = {"ordering": cfg.ordering.value}
        if _resolve_method(magic, state.mps.n_sites, state.mps.chi_max) == "sampled":
            params["seed"] = row_seed(magic.seed, index)
        return build_row(params, report)

    rows = _map_rows(worker, list(enumerate(zip(encodings, states))), threads)
    prov = _provenance("ordering_comparison", magic.seed, encodings[0], magic,
                       orderings=[cfg.ordering.value for cfg in encodings])
    return StudyTable(rows=rows, provenance=prov)


def random_image_baseline(count: int, nx: int, ny: int, value_range,
                          levels=None, seed: int = 0,
                          magic: MagicConfig | None = None, *,
                          encoding: EncodingConfig | None = None,
                          boundary="periodic", threads: int = 1) -> StudyTable:
    """Coarse-graining baseline over uniform-random images.

    Generates `count` images with entries uniform in value_range, runs the
    coarse-graining pipeline on each, and aggregates the normalized
    entropy (and magic, when enabled) per level.  Magic defaults to off:
    entropy is the quantity of interest for unstructured data.
    """
    if count < 1:
        raise InputError("count must be >= 1")
    lo, hi = (float(value_range[0]), float(value_range[1]))
    if hi <= lo:
        raise InputError("value_range must satisfy lo < hi")
    encoding = encoding or EncodingConfig()
    magic = magic or MagicConfig(method="none", seed=seed)
    levels = [(int(a), int(b)) for a, b in (levels or halving_levels(nx, ny))]

    def worker(item):
        index, image_seed = item
        rng = np.random.default_rng(image_seed)
        image = Field2D(rng.uniform(lo, hi, size=(1 << nx, 1 << ny)), label="random")
        table = coarse_grain_study(image, levels, encoding, magic, boundary=boundary)
        return table.rows

    image_seeds = [row_seed(seed, i) for i in range(count)]
    per_image = _map_rows(worker, list(enumerate(image_seeds)), threads)

    rows = []
    for li, (tx, ty) in enumerate(levels):
        s_vals = np.array([img[li]["s_vn_norm"] for img in per_image])
        m_vals = [img[li]["m2_norm"] for img in per_image]
        have_magic = all(v is not None for v in m_vals)
        params = {
            "level": li,
            "nx": tx,
            "ny": ty,
            "n_images": count,
            "value_lo": lo,
            "value_hi": hi,
            "s_vn_std": float(s_vals.std(ddof=1)) if count > 1 else 0.0,
        }
        profile_stub = {
            "s_vn_norm": float(s_vals.mean()),
            "s_vn_bits": float(np.mean([img[li]["s_vn_bits"] for img in per_image])),
            "argmax_bond": int(per_image[0][li]["argmax_bond"]),
            "m2_bits": float(np.mean([img[li]["m2_bits"] for img in per_image])) if have_magic else None,
            "m2_norm": float(np.mean(m_vals)) if have_magic else None,
            "m2_stderr": float(np.mean([img[li]["m2_stderr"] for img in per_image])) if have_magic else None,
            "chi_max": int(max(img[li]["chi_max"] for img in per_image)),
            "discarded_weight": float(np.mean([img[li]["discarded_weight"] for img in per_image])),
            "rmse": float(np.mean([img[li]["rmse"] for img in per_image])),
        }
        rows.append({**params, **profile_stub})

    prov = _provenance("random_image_baseline", seed, encoding, magic,
                       count=count, nx=nx, ny=ny, value_range=[lo, hi], levels=levels,
                       image_seeds=image_seeds)
    return StudyTable(rows=rows, provenance=prov)


def time_series_analysis(snapshots, encoding: EncodingConfig | None = None,
                         magic: MagicConfig | None = None, *, threads: int = 1) -> StudyTable:
    """Per-snapshot resources along an ordered trajectory."""
    snapshots = list(snapshots)
    if not snapshots:
        raise InputError("need at least one snapshot")
    encoding = encoding or EncodingConfig()
    magic = magic or MagicConfig()

    def worker(item):
        index, snap = item
        state = encode_field(snap, encoding)
        report = measure_encoded(state, magic, seed=row_seed(magic.seed, index))
        params = {"t": index}
        if _resolve_method(magic, state.mps.n_sites, state.mps.chi_max) == "sampled":
            params["seed"] = row_seed(magic.seed, index)
        return build_row(params, report)

    rows = _map_rows(worker, list(enumerate(snapshots)), threads)
    prov = _provenance("time_series", magic.seed, encoding, magic, n_snapshots=len(snapshots))
    return StudyTable(rows=rows, provenance=prov)
