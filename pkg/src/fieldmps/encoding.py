"""Mapping between 2D grids and MPS site orderings.

A (2^Nx, 2^Ny) grid is flattened into a length-2^(Nx+Ny) vector whose
binary index is read off site by site: the first Nx sites carry the x
index bits (most significant first) and the remaining Ny sites carry the
y index bits.  Two y-block orderings are supported: forward ("fwd",
most significant y bit first) and reversed ("revy", least significant y
bit first).  The flattened vector is stored unit-normalized inside the
MPS with the original 2-norm kept as a scalar scale factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import InputError, ShapeError
from .mps import Mps, compress, mps_from_dense, mps_to_dense, norm


class Ordering(str, Enum):
    """Site orderings for the y index block."""

    FORWARD = "fwd"
    REVERSE_Y = "revy"


def _as_ordering(value) -> Ordering:
    if isinstance(value, Ordering):
        return value
    try:
        return Ordering(value)
    except ValueError:
        raise InputError(f"unknown ordering {value!r}") from None


def _exact_log2(n: int) -> int:
    if n < 2 or (n & (n - 1)) != 0:
        raise InputError(f"{n} is not a power of two >= 2")
    return n.bit_length() - 1


@dataclass(frozen=True)
class EncodingConfig:
    ordering: Ordering = Ordering.FORWARD
    cutoff: float = 1e-8
    max_rank: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "ordering", _as_ordering(self.ordering))
        if self.cutoff < 0:
            raise InputError("cutoff must be >= 0")


@dataclass(frozen=True)
class Field2D:
    """A dense real scalar grid of shape (2^nx, 2^ny) with domain metadata.

    `shift` records the cumulative value offset applied via shift_field so
    that unshift_field can undo it; the pristine pre-shift array is kept
    alongside when available so that shift/unshift round-trips are exact.
    """

    values: np.ndarray
    extent: tuple[float, float] = (1.0, 1.0)
    periodic: tuple[bool, bool] = (True, True)
    label: str = "field"
    shift: float = 0.0
    preshift_values: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"field values must be 2-D, got shape {arr.shape}")
        _exact_log2(arr.shape[0])
        _exact_log2(arr.shape[1])
        if not np.all(np.isfinite(arr)):
            raise InputError("field contains non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def nx(self) -> int:
        return _exact_log2(self.values.shape[0])

    @property
    def ny(self) -> int:
        return _exact_log2(self.values.shape[1])

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class EncodedState:
    """An encoded field: unit-norm MPS plus the bookkeeping to invert it."""

    mps: Mps
    scale: float
    config: EncodingConfig
    nx: int
    ny: int
    discarded_weight: float
    chi_max: int
    extent: tuple[float, float] = (1.0, 1.0)
    periodic: tuple[bool, bool] = (True, True)
    label: str = "field"
    shift: float = 0.0


def site_order(nx: int, ny: int, ordering=Ordering.FORWARD) -> list[tuple[str, int]]:
    """Assignment of grid index bits to MPS sites.

    Returns one (axis, significance) pair per site; significance b means
    the bit worth 2^b of that axis index.  x bits always come first, most
    significant bit first; the y block is most-significant-first for the
    forward ordering and reversed for "revy".
    """
    if nx < 1 or ny < 1:
        raise InputError("nx and ny must be >= 1")
    ordering = _as_ordering(ordering)
    x_bits = [("x", b) for b in range(nx - 1, -1, -1)]
    y_bits = [("y", b) for b in range(ny - 1, -1, -1)]
    if ordering is Ordering.REVERSE_Y:
        y_bits.reverse()
    return x_bits + y_bits


def _axes_permutation(nx: int, ny: int, ordering: Ordering) -> list[int]:
    # Axis k of values.reshape((2,)*(nx+ny)) is bit k of the row-major index:
    # axes 0..nx-1 are x bits (msb first), axes nx..nx+ny-1 are y bits.
    # Reversing the y block is an involution, so the same permutation
    # serves for flattening and unflattening.
    axes = list(range(nx))
    if ordering is Ordering.REVERSE_Y:
        axes += list(range(nx + ny - 1, nx - 1, -1))
    else:
        axes += list(range(nx, nx + ny))
    return axes


def _flatten(values: np.ndarray, ordering: Ordering) -> np.ndarray:
    nx = _exact_log2(values.shape[0])
    ny = _exact_log2(values.shape[1])
    arr = values.reshape((2,) * (nx + ny))
    arr = arr.transpose(_axes_permutation(nx, ny, ordering))
    return np.ascontiguousarray(arr).reshape(-1)

def _unflatten(vec: np.ndarray, nx: int, ny: int, ordering: Ordering) -> np.ndarray:
    arr = vec.reshape((2,) * (nx + ny))
    arr = arr.transpose(_axes_permutation(nx, ny, ordering))
    return np.ascontiguousarray(arr).reshape(1 << nx, 1 << ny)


def encode_field(field2d: Field2D, config: EncodingConfig | None = None) -> EncodedState:
    """Encode a field as a unit-norm MPS, then compress at the cutoff.

    The flattened vector is divided by its 2-norm (recorded as `scale`),
    factorized exactly, and compressed.  The compressed state is
    renormalized so that norm(mps) == 1; the truncation loss is reported
    as the accumulated relative discarded weight.
    """
    config = config or EncodingConfig()
    vec = _flatten(field2d.values, config.ordering)
    scale = float(np.linalg.norm(vec))
    if scale == 0.0:
        raise InputError("cannot encode an identically zero field")
    exact = mps_from_dense(vec / scale, cutoff=0.0)
    truncated = compress(exact.mps, config.cutoff, config.max_rank)
    sites = [t.copy() for t in truncated.mps.sites]
    nrm = norm(truncated.mps)
    sites[0] = sites[0] / nrm
    return EncodedState(
        mps=Mps(sites, center=0),
        scale=scale,
        config=config,
        nx=field2d.nx,
        ny=field2d.ny,
        discarded_weight=truncated.discarded_weight,
        chi_max=truncated.chi_max,
        extent=field2d.extent,
        periodic=field2d.periodic,
        label=field2d.label,
        shift=field2d.shift,
    )


def decode_field(state: EncodedState, dense_limit: int | None = None) -> Field2D:
    """Invert encode_field up to truncation loss."""
    kwargs = {} if dense_limit is None else {"dense_limit": dense_limit}
    vec = mps_to_dense(state.mps, **kwargs) * state.scale
    values = _unflatten(vec, state.nx, state.ny, state.config.ordering)
    return Field2D(
        values=values,
        extent=state.extent,
        periodic=state.periodic,
        label=state.label,
        shift=state.shift,
    )


def shift_field(field2d: Field2D, x: float) -> Field2D:
    """Add a constant x to every entry, tracking the cumulative shift."""
    base = field2d.preshift_values
    if base is None and field2d.shift == 0.0:
        base = field2d.values
    return replace(
        field2d,
        values=field2d.values + float(x),
        shift=field2d.shift + float(x),
        preshift_values=base,
    )


def unshift_field(field2d: Field2D) -> Field2D:
    """Undo the recorded shift.  Exact (bitwise) when the pre-shift array
    is still attached; otherwise subtracts the recorded offset."""
    if field2d.shift == 0.0:
        return field2d
    if field2d.preshift_values is not None:
        return replace(field2d, values=field2d.preshift_values, shift=0.0, preshift_values=None)
    return replace(field2d, values=field2d.values - field2d.shift, shift=0.0)
