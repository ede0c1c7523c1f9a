"""Path-loss maps over a layout, map comparison metrics and channel-norm landscapes."""

from __future__ import annotations

import csv
import math
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from indoorfas.channel import RadioParams, channel_coefficient, image_method_reference
from indoorfas.errors import DomainError
from indoorfas.geometry import FasLine, Layout, Point, theta_to_position

PL_FLOOR_DB = 200.0
_MAGIC = b"IFRM"
_VERSION = 1
_HEADER = struct.Struct("<4sIdddQQ")  # magic, version, origin x, origin y, resolution, rows, cols


@dataclass(frozen=True)
class RadioMap:
    """Path loss in dB on a regular grid; row i, column j has its centre at
    ``origin + ((j + 0.5) * resolution, (i + 0.5) * resolution)``.

    ``values`` is NaN wherever ``mask`` is False.
    """

    origin: Point
    resolution: float
    values: np.ndarray
    mask: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.shape
        xs = self.origin.x + (np.arange(nx) + 0.5) * self.resolution
        ys = self.origin.y + (np.arange(ny) + 0.5) * self.resolution
        return xs, ys

    def masked_values(self) -> np.ndarray:
        return self.values[self.mask]


@dataclass(frozen=True)
class MapMetrics:
    mae_db: float
    rmse_db: float
    cells: int

    def to_dict(self) -> dict:
        return {"mae_db": self.mae_db, "rmse_db": self.rmse_db, "cells": self.cells}


def path_loss_db(h: complex, floor_db: float = PL_FLOOR_DB) -> float:
    """-20 log10 |h|, capped at ``floor_db`` (also used when no ray arrives)."""
    mag = abs(h)
    if mag == 0:
        return floor_db
    return min(-20.0 * math.log10(mag), floor_db)


def _grid(layout: Layout, resolution: float):
    xmin, ymin, xmax, ymax = layout.bounds
    nx = max(1, math.ceil(round((xmax - xmin) / resolution, 9)))
    ny = max(1, math.ceil(round((ymax - ymin) / resolution, 9)))
    return Point(xmin, ymin), ny, nx


def _rows(args) -> list[list[float]]:
    layout, params, tx, origin, resolution, rows, nx, max_order, floor_db = args
    out = []
    for i in rows:
        y = origin.y + (i + 0.5) * resolution
        row = []
        for j in range(nx):
            p = Point(origin.x + (j + 0.5) * resolution, y)
            if p == tx or not layout.contains(p):
                row.append(math.nan)
                continue
            if max_order is None:
                h = channel_coefficient(layout, params, tx, p)
            else:
                h = image_method_reference(layout, params, tx, p, max_order)
            row.append(path_loss_db(h, floor_db))
        out.append(row)
    return out


def path_loss_map(
    layout: Layout,
    params: RadioParams,
    tx,
    resolution: float = 0.05,
    max_order: int | None = None,
    workers: int = 1,
    floor_db: float = PL_FLOOR_DB,
) -> RadioMap:
    """Path-loss map over the layout's bounding box.

    ``max_order=None`` uses the first-order model; an integer switches to the
    image-method reference with that many bounces. Cells whose centre is
    outside the layout (or exactly at the transmitter) are masked out.
    Rows are split across ``workers`` processes and reassembled in order, so
    the result does not depend on the worker count.
    """
    tx = Point(*tx)
    if not resolution > 0:
        raise DomainError("resolution must be positive")
    if not layout.contains(tx):
        raise DomainError(f"transmitter {tx} is not inside the layout")
    origin, ny, nx = _grid(layout, resolution)
    workers = max(1, int(workers))
    chunks = [list(range(ny))[k::workers] for k in range(workers)]
    jobs = [(layout, params, tx, origin, resolution, rows, nx, max_order, floor_db) for rows in chunks]
    if workers == 1:
        parts = [_rows(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_rows, jobs))
    values = np.empty((ny, nx))
    for rows, part in zip(chunks, parts):
        for i, row in zip(rows, part):
            values[i] = row
    mask = ~np.isnan(values)
    return RadioMap(origin, float(resolution), values, mask)


def _check_compatible(a: RadioMap, b: RadioMap) -> None:
    if a.shape != b.shape or a.origin != b.origin or a.resolution != b.resolution:
        raise DomainError("maps are defined on different grids")
    if not np.array_equal(a.mask, b.mask):
        raise DomainError("maps have different masks")


def map_metrics(a: RadioMap, b: RadioMap) -> MapMetrics:
    """Mean absolute and root-mean-square path-loss difference over masked cells."""
    _check_compatible(a, b)
    diff = a.masked_values() - b.masked_values()
    if diff.size == 0:
        raise DomainError("maps have no masked cells")
    return MapMetrics(float(np.mean(np.abs(diff))), float(np.sqrt(np.mean(diff**2))), int(diff.size))


def average_rate(radio_map: RadioMap, params: RadioParams, p: float) -> float:
    """Mean of log2(1 + p |h|^2 / sigma^2) over masked cells, with |h| recovered from the path loss."""
    if not p > 0:
        raise DomainError("power must be positive")
    pl = radio_map.masked_values()
    gain = 10.0 ** (-pl / 10.0)
    return float(np.mean(np.log2(1 + p * gain / params.noise_power)))


def landscape_sweep(
    layout: Layout, params: RadioParams, fas: FasLine, rx, grid: int, theta_range: tuple[float, float]
) -> tuple[np.ndarray, np.ndarray]:
    """Two-antenna channel norm ||(h(t1), h(t2))||_2 over a grid x grid mesh of angles.

    Returns the angle axis and the ``(grid, grid)`` surface indexed [t1, t2].
    """
    if grid < 2:
        raise DomainError("grid must be at least 2")
    lo, hi = theta_range
    thetas = np.linspace(lo, hi, grid)
    power = np.array([abs(channel_coefficient(layout, params, theta_to_position(t, fas), rx)) ** 2 for t in thetas])
    return thetas, np.sqrt(power[:, None] + power[None, :])


def count_local_maxima(z: np.ndarray) -> int:
    """Interior cells strictly larger than all eight neighbours."""
    core = z[1:-1, 1:-1]
    is_max = np.ones_like(core, dtype=bool)
    ny, nx = z.shape
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == dj == 0:
                continue
            is_max &= core > z[1 + di : ny - 1 + di, 1 + dj : nx - 1 + dj]
    return int(is_max.sum())


# ------------------------------------------------------------ export


def save_csv(radio_map: RadioMap, path: str | Path) -> None:
    """One ``x,y,pl_db`` row per masked cell, row-major."""
    xs, ys = radio_map.centers()
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "pl_db"])
        for i, y in enumerate(ys):
            for j, x in enumerate(xs):
                if radio_map.mask[i, j]:
                    w.writerow([repr(float(x)), repr(float(y)), repr(float(radio_map.values[i, j]))])


def save_binary(radio_map: RadioMap, path: str | Path) -> None:
    """Header (magic, version, origin, resolution, rows, cols) then row-major little-endian float64."""
    ny, nx = radio_map.shape
    header = _HEADER.pack(_MAGIC, _VERSION, radio_map.origin.x, radio_map.origin.y, radio_map.resolution, ny, nx)
    with Path(path).open("wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(radio_map.values, dtype="<f8").tobytes())


def load_binary(path: str | Path) -> RadioMap:
    data = Path(path).read_bytes()
    magic, version, ox, oy, res, ny, nx = _HEADER.unpack_from(data)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError(f"{path}: not a radio-map file (magic {magic!r}, version {version})")
    values = np.frombuffer(data, dtype="<f8", offset=_HEADER.size, count=ny * nx).reshape(ny, nx).astype(float)
    return RadioMap(Point(ox, oy), res, values, ~np.isnan(values))


def grid_cells_in(radio_map: RadioMap, points: Sequence[Point]) -> list[tuple[int, int]]:
    """Grid indices (row, col) of the cells containing ``points``."""
    out = []
    for p in points:
        j = int((p[0] - radio_map.origin.x) // radio_map.resolution)
        i = int((p[1] - radio_map.origin.y) // radio_map.resolution)
        out.append((i, j))
    return out
