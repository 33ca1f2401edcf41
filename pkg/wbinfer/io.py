from __future__ import annotations

import hashlib
import json
import logging
import os.path
import re
import threading
import uuid
from collections.abc import Callable
from dataclasses import asdict
from typing import Any

import fsspec
import numpy as np
import pyarrow as pa
import pyarrow.csv as pacsv
from fsspec.spec import AbstractFileSystem

from wbinfer.arrow import RESULT_COLUMNS
from wbinfer.arrow import RESULT_SCHEMA
from wbinfer.arrow import ResultRow
from wbinfer.arrow import record_batch_for_rows
from wbinfer.calibrate import CalibrationResult
from wbinfer.calibrate import CredibilityEstimate
from wbinfer.calibrate import TrajectoryPoint
from wbinfer.errors import ParseError
from wbinfer.prs import PrsFamily
from wbinfer.prs import PrsKind
from wbinfer.specfun import FloatArray
from wbinfer.specfun import RngStream

logger = logging.getLogger(__name__)

NULL_CACHE_VERSION = "wbinfer-null-distribution v1"
CALIBRATION_CACHE_VERSION = 1


def get_fs(path: str) -> tuple[AbstractFileSystem, str]:
    fs, base_path = fsspec.core.url_to_fs(path)
    return fs, base_path


def create_output_path(path: str) -> None:
    fs, base_path = get_fs(path)
    fs.makedirs(base_path, exist_ok=True)


def clear_output_path(path: str) -> None:
    fs, base_path = get_fs(path)
    if fs.exists(base_path):
        fs.rm(base_path, recursive=True)


def write_bytes_atomic(filename: str, data: bytes) -> None:
    """Write to a temporary sibling, then rename over the target."""
    fs, path = get_fs(filename)
    parent = os.path.dirname(path)
    if parent:
        fs.makedirs(parent, exist_ok=True)
    temporary = f"{path}.{uuid.uuid4().hex}.tmp"
    fs.pipe_file(temporary, data)
    fs.mv(temporary, path)


def write_json(filename: str, payload: Any) -> None:
    write_bytes_atomic(filename, (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode())


def read_json(filename: str) -> Any:
    with fsspec.open(filename, "rb") as fin:
        return json.loads(fin.read())


def results_table(rows: list[ResultRow]) -> pa.Table:
    batch = record_batch_for_rows(rows)
    if batch is None:
        return RESULT_SCHEMA.empty_table()
    return pa.Table.from_batches([batch], schema=RESULT_SCHEMA)


def write_results_csv(filename: str, rows: list[ResultRow]) -> None:
    sink = pa.BufferOutputStream()
    options = pacsv.WriteOptions(include_header=False, quoting_style="needed")
    pacsv.write_csv(results_table(rows), sink, write_options=options)
    header = ",".join(RESULT_COLUMNS) + "\n"
    write_bytes_atomic(filename, header.encode() + sink.getvalue().to_pybytes())


_ROW_PATTERN = re.compile(r"Row #(\d+)")


def read_results_csv(filename: str) -> pa.Table:
    """Read a results CSV back with the result schema; malformed rows raise ParseError with their line."""
    with fsspec.open(filename, "rb") as fin:
        data = fin.read()

    header = data.split(b"\n", 1)[0].decode(errors="replace").strip()
    if [name.strip('"') for name in header.split(",")] != RESULT_COLUMNS:
        raise ParseError(f"unexpected header {header!r}", line=1)

    bad_rows: list[int] = []

    def invalid_row(row: Any) -> str:
        bad_rows.append(row.number if row.number is not None else -1)
        return "error"

    try:
        return pacsv.read_csv(
            pa.py_buffer(data),
            parse_options=pacsv.ParseOptions(invalid_row_handler=invalid_row),
            convert_options=pacsv.ConvertOptions(column_types=RESULT_SCHEMA, strings_can_be_null=False),
        )
    except pa.ArrowInvalid as error:
        line: int | None = bad_rows[0] if bad_rows and bad_rows[0] > 0 else None
        if line is None and (match := _ROW_PATTERN.search(str(error))):
            line = int(match.group(1))
        raise ParseError(str(error).splitlines()[0], line=line) from error


def write_manifest(filename: str, manifest: dict[str, Any]) -> None:
    write_json(filename, manifest)


def _stream_key(rng: RngStream) -> str:
    return f"{rng.stream_id}:{'/'.join(str(p) for p in rng.path)}"


class NullDistributionCache:
    """Sorted null samples of baseline statistics, in memory and optionally on disk.

    Files are self-describing text: a header of ``# key: value`` lines followed by one value per line.
    """

    def __init__(self, directory: str | None = None) -> None:
        self.directory = directory
        self._memory: dict[tuple[Any, ...], FloatArray] = {}
        self._lock = threading.Lock()

    def _filename(self, key: tuple[Any, ...]) -> str:
        assert self.directory is not None
        statistic, n, alpha, reps, seed, stream = key
        digest = hashlib.sha256(repr(key).encode()).hexdigest()[:16]
        return os.path.join(self.directory, f"null_{statistic}_n{n}_a{alpha:g}_r{reps}_{digest}.txt")

    def get_or_create(
        self,
        statistic: str,
        n: int,
        alpha: float,
        reps: int,
        rng: RngStream,
        factory: Callable[[], FloatArray],
    ) -> FloatArray:
        key = (str(statistic), n, alpha, reps, rng.seed, _stream_key(rng))
        with self._lock:
            if key in self._memory:
                return self._memory[key]
            values = self._load(key) if self.directory is not None else None
            if values is None:
                logger.debug("simulating null distribution %s", key)
                values = factory()
                if self.directory is not None:
                    self._store(key, values)
            self._memory[key] = values
            return values

    def _load(self, key: tuple[Any, ...]) -> FloatArray | None:
        filename = self._filename(key)
        fs, path = get_fs(filename)
        if not fs.exists(path):
            return None
        with fsspec.open(filename, "r") as fin:
            lines = fin.read().splitlines()
        if not lines or lines[0] != f"# {NULL_CACHE_VERSION}":
            logger.warning("ignoring null cache %s with unknown version", filename)
            return None
        values = [float(line) for line in lines if line and not line.startswith("#")]
        logger.debug("loaded %d null values from %s", len(values), filename)
        return np.asarray(values, dtype=np.float64)

    def _store(self, key: tuple[Any, ...], values: FloatArray) -> None:
        statistic, n, alpha, reps, seed, stream = key
        header = [
            f"# {NULL_CACHE_VERSION}",
            f"# statistic: {statistic}",
            f"# n: {n}",
            f"# alpha: {alpha!r}",
            f"# reps: {reps}",
            f"# seed: {seed}",
            f"# stream: {stream}",
        ]
        body = [repr(float(v)) for v in values]
        write_bytes_atomic(self._filename(key), ("\n".join(header + body) + "\n").encode())


def calibration_to_dict(result: CalibrationResult) -> dict[str, Any]:
    payload = asdict(result)
    payload["family"]["kind"] = str(result.family.kind)
    payload["trajectory"] = [[p.iteration, p.omega, p.phi_hat] for p in result.trajectory]
    payload["version"] = CALIBRATION_CACHE_VERSION
    return payload


def calibration_from_dict(payload: dict[str, Any]) -> CalibrationResult:
    family = payload["family"]
    return CalibrationResult(
        family=PrsFamily(
            kind=PrsKind(family["kind"]), n=family["n"], omega=family["omega"], fixed_z=family["fixed_z"]
        ),
        alpha=payload["alpha"],
        omega_star=payload["omega_star"],
        converged=payload["converged"],
        final_phi=CredibilityEstimate(**payload["final_phi"]),
        tolerance=payload["tolerance"],
        trajectory=tuple(TrajectoryPoint(int(t), float(w), float(p)) for t, w, p in payload["trajectory"]),
    )


class CalibrationCache:
    """omega(alpha) results on disk, keyed by family, level, Monte Carlo sizes and seed."""

    def __init__(self, directory: str | None) -> None:
        self.directory = directory
        self._memory: dict[str, CalibrationResult] = {}
        self._lock = threading.Lock()

    @staticmethod
    def key(family: PrsFamily, alpha: float, settings: dict[str, Any], seed: int) -> str:
        material = json.dumps(
            {"kind": str(family.kind), "n": family.n, "alpha": alpha, "settings": settings, "seed": seed},
            sort_keys=True,
        )
        return hashlib.sha256(material.encode()).hexdigest()

    def get_or_create(self, key: str, factory: Callable[[], CalibrationResult]) -> CalibrationResult:
        with self._lock:
            if key in self._memory:
                return self._memory[key]
            result = self._load(key) if self.directory is not None else None
            if result is None:
                result = factory()
                if self.directory is not None and result.converged:
                    write_json(self._filename(key), calibration_to_dict(result))
            self._memory[key] = result
            return result

    def _filename(self, key: str) -> str:
        assert self.directory is not None
        return os.path.join(self.directory, f"calibration_{key}.json")

    def _load(self, key: str) -> CalibrationResult | None:
        filename = self._filename(key)
        fs, path = get_fs(filename)
        if not fs.exists(path):
            return None
        payload = read_json(filename)
        if payload.get("version") != CALIBRATION_CACHE_VERSION:
            return None
        logger.debug("calibration cache hit %s", filename)
        return calibration_from_dict(payload)


def parse_observations(text: str) -> list[float]:
    """Numbers separated by whitespace or commas; ``#`` starts a comment."""
    values = []
    for number, raw in enumerate(text.splitlines(), start=1):
        for token in raw.split("#", 1)[0].replace(",", " ").split():
            try:
                values.append(float(token))
            except ValueError as error:
                raise ParseError(f"not a number: {token!r}", line=number) from error
    return values


def read_observations(filename: str) -> list[float]:
    with fsspec.open(filename, "r") as fin:
        return parse_observations(fin.read())
