"""
Deterministic output files: CSV tables, JSON documents, SVG heatmaps, binary
archives and the run manifest.

Artifacts are staged in memory and written by ``ArtifactSet.commit`` once the
computation has finished, so a failing run leaves no partial outputs.
"""
import datetime
import hashlib
import io
import logging
import pathlib
import typing as tp

import matplotlib
import numpy as np
from matplotlib.figure import Figure
from pydantic import BaseModel, Field

from memoryscope import __version__
from memoryscope.archive import dump_archive
from memoryscope.errors import MemoryScopeError
from memoryscope.experiment import COLUMNS, BinnedProfile, ScanDataset, Table1

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
HEATMAP_SHAPE = (25, 50)


def csv_bytes(header: tp.Sequence[str], rows: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.savetxt(
        buf,
        np.atleast_2d(np.asarray(rows, dtype=np.float64)).reshape(-1, len(header)),
        fmt=FLOAT_FORMAT,
        delimiter=",",
        header=",".join(header),
        comments="",
        newline="\n",
    )
    return buf.getvalue()


def dataset_csv(dataset: ScanDataset) -> bytes:
    return csv_bytes(COLUMNS, dataset.table())


def profile_csv(profile: BinnedProfile) -> bytes:
    rows = np.stack(
        [profile.theta_loc, profile.z_mean, profile.mean, profile.std, profile.counts], axis=-1
    )
    return csv_bytes(("theta_loc", "z_mean", "mean", "std", "count"), rows)


def table1_csv(table: Table1) -> bytes:
    header = ["a_alpha"]
    for method in ("n_ref1", "n_ref2", "n_orth"):
        header += [method, f"{method}_binned", f"{method}_std"]
    header.append("n_theo")
    rows = []
    for row in table.rows:
        cells = [row.a_alpha]
        for value in (row.n_ref1, row.n_ref2, row.n_orth):
            cells += [value.value, value.binned_mean, value.binned_std]
        cells.append(row.n_theo)
        rows.append(cells)
    return csv_bytes(header, np.array(rows))


def trajectory_csv(times: np.ndarray, values: np.ndarray) -> bytes:
    return csv_bytes(("t", "distance"), np.stack([times, values], axis=-1))


def heatmap_svg(dataset: ScanDataset, column: str = "normalized_increase") -> bytes:
    """Polar map of the mean of ``column`` over (phi_loc, theta_loc) cells."""
    n_theta, n_phi = HEATMAP_SHAPE
    theta_edges = np.linspace(0.0, np.pi, n_theta + 1)
    phi_edges = np.linspace(0.0, 2.0 * np.pi, n_phi + 1)
    sample = (dataset.theta_loc, dataset.phi_loc)
    bins = (theta_edges, phi_edges)
    total, _, _ = np.histogram2d(*sample, bins=bins, weights=dataset.column(column))
    count, _, _ = np.histogram2d(*sample, bins=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(count > 0, total / count, np.nan)

    buf = io.BytesIO()
    with matplotlib.rc_context({"svg.hashsalt": "memoryscope", "svg.fonttype": "none"}):
        fig = Figure(figsize=(6, 5))
        ax = fig.add_subplot(projection="polar")
        mesh = ax.pcolormesh(phi_edges, theta_edges, np.ma.masked_invalid(mean), shading="flat")
        fig.colorbar(mesh, ax=ax, label=column.replace("_", " "))
        ax.set_title(dataset.label)
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


class OutputEntry(BaseModel):
    path: str
    size: int
    sha256: str


class RunManifest(BaseModel):
    tool_version: str = __version__
    command: str
    config_hash: str
    seeds: dict[str, int] = Field(default_factory=dict)
    calibration: dict[str, tp.Any] | None = None
    started_at: str
    finished_at: str
    outputs: list[OutputEntry] = Field(default_factory=list)

    def content_hash(self) -> str:
        """Hash over everything but the timestamps."""
        payload = self.model_dump_json(exclude={"started_at", "finished_at"})
        return hashlib.sha256(payload.encode()).hexdigest()


def now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


class ArtifactSet:
    """Files staged under relative paths, written together by ``commit``."""

    def __init__(self) -> None:
        self._files: dict[str, bytes] = {}

    def __contains__(self, path: str) -> bool:
        return path in self._files

    def __len__(self) -> int:
        return len(self._files)

    def add(self, path: str, data: bytes) -> None:
        rel = pathlib.PurePosixPath(path)
        if rel.is_absolute() or ".." in rel.parts:
            raise MemoryScopeError(f"artifact path '{path}' leaves the output directory")
        if path in self._files:
            raise MemoryScopeError(f"artifact '{path}' staged twice")
        self._files[path] = data

    def add_text(self, path: str, text: str) -> None:
        self.add(path, text.encode("utf-8"))

    def add_model(self, path: str, model: BaseModel) -> None:
        self.add_text(path, model.model_dump_json(indent=2) + "\n")

    def add_dataset(self, stem: str, dataset: ScanDataset, heatmap: bool = False) -> None:
        self.add(f"{stem}.csv", dataset_csv(dataset))
        self.add(f"{stem}.msb", dump_archive(dataset))
        if heatmap:
            self.add(f"{stem}.svg", heatmap_svg(dataset))

    def inventory(self) -> list[OutputEntry]:
        return [
            OutputEntry(path=path, size=len(data), sha256=hashlib.sha256(data).hexdigest())
            for path, data in sorted(self._files.items())
        ]

    def commit(
        self, out_dir: str | pathlib.Path, manifest: RunManifest | None = None
    ) -> RunManifest | None:
        out = pathlib.Path(out_dir)
        if manifest is not None:
            manifest = manifest.model_copy(
                update={"outputs": self.inventory(), "finished_at": now()}
            )
        out.mkdir(parents=True, exist_ok=True)
        for path, data in sorted(self._files.items()):
            target = out / path
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
        if manifest is not None:
            manifest_text = manifest.model_dump_json(indent=2) + "\n"
            (out / "manifest.json").write_text(manifest_text, encoding="utf-8")
        logger.info("wrote %d files to %s", len(self._files), out)
        return manifest
