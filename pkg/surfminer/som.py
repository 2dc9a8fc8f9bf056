"""Kohonen self-organizing map with Euclidean matching on a rectangular grid."""
import collections
from dataclasses import dataclass
from enum import Enum
import logging
import typing

import numpy as np

from .constants import DEFAULT_ALPHA0, DEFAULT_EPOCHS, DEFAULT_GRID, SIGMA_FLOOR
from .exceptions import ConfigError, CorruptArtifact, EmptyData, IoFailure, MissingArtifacts, WidthMismatch
from .features import FeatureMatrix, PeriodBucket, SessionVector
from .refiner import Category
from .tables import parsing, write_table

logger = logging.getLogger("surfminer").getChild(__name__)

REPRESENTATIVES = 3
TOP_PAIRS = 3

period_names = {
    PeriodBucket.M: "morning",
    PeriodBucket.A: "afternoon",
    PeriodBucket.N: "night",
}


class SomInit(Enum):
    SAMPLE_DRAW = "sample"
    UNIFORM_RANGE = "uniform"


@dataclass(frozen=True)
class SomConfig:
    grid_w: int = DEFAULT_GRID[0]
    grid_h: int = DEFAULT_GRID[1]
    epochs: int = DEFAULT_EPOCHS
    alpha0: float = DEFAULT_ALPHA0
    sigma0: typing.Optional[float] = None
    seed: int = 0
    init: SomInit = SomInit.SAMPLE_DRAW
    neighborhood_cutoff: bool = True

    def __post_init__(self):
        if self.grid_w < 1 or self.grid_h < 1 or self.grid_w * self.grid_h < 2:
            raise ConfigError("SOM grid needs at least two units")
        if not 0 < self.alpha0 <= 1:
            raise ConfigError("alpha0 must lie in (0, 1]")
        if self.epochs < 1:
            raise ConfigError("epochs must be positive")
        if self.sigma0 is not None and self.sigma0 <= 0:
            raise ConfigError("sigma0 must be positive")

    @property
    def units(self) -> int:
        return self.grid_w * self.grid_h

    @property
    def initial_sigma(self) -> float:
        if self.sigma0 is not None:
            return self.sigma0
        return max(self.grid_w, self.grid_h) / 2.0

    def echo(self) -> typing.Dict[str, str]:
        return {
            "grid_w": str(self.grid_w),
            "grid_h": str(self.grid_h),
            "epochs": str(self.epochs),
            "alpha0": repr(self.alpha0),
            "sigma0": repr(self.initial_sigma),
            "seed": str(self.seed),
            "init": self.init.value,
            "neighborhood_cutoff": str(int(self.neighborhood_cutoff)),
        }


@dataclass
class SomMap:
    grid_w: int
    grid_h: int
    weights: np.ndarray  # units x width, row-major unit index

    @property
    def units(self) -> int:
        return self.grid_w * self.grid_h

    @property
    def width(self) -> int:
        return self.weights.shape[1]

    def position(self, unit: int) -> typing.Tuple[int, int]:
        return divmod(unit, self.grid_w)

    @property
    def coords(self) -> np.ndarray:
        return np.array([self.position(u) for u in range(self.units)])

    def copy(self) -> "SomMap":
        return SomMap(self.grid_w, self.grid_h, self.weights.copy())


class TrainingTrace(typing.NamedTuple):
    initial_error: float
    errors: typing.List[float]

    @property
    def final_error(self) -> float:
        return self.errors[-1] if self.errors else self.initial_error


class ClusterSummary(typing.NamedTuple):
    unit: int
    row: int
    col: int
    count: int
    modal_period: typing.Optional[PeriodBucket]
    top_pairs: typing.List[typing.Tuple[typing.Tuple[Category, ...], int]]
    representatives: typing.List[int]


def _as_array(data) -> np.ndarray:
    if isinstance(data, FeatureMatrix):
        data = data.values
    return np.asarray(data, dtype=float)


def init_map(config: SomConfig, data) -> SomMap:
    data = _as_array(data)
    if data.ndim != 2 or data.shape[0] == 0:
        raise EmptyData("Cannot initialise a map without data")

    rng = np.random.default_rng(config.seed)
    if config.init == SomInit.SAMPLE_DRAW:
        rows = rng.choice(data.shape[0], size=config.units, replace=data.shape[0] < config.units)
        weights = data[rows].copy()
    else:
        low = data.min(axis=0)
        high = data.max(axis=0)
        weights = low + rng.random((config.units, data.shape[1])) * (high - low)
    return SomMap(config.grid_w, config.grid_h, weights)


def _squared_distances(som: SomMap, x: np.ndarray) -> np.ndarray:
    diff = som.weights - x
    return np.einsum("ij,ij->i", diff, diff)


def bmu(som: SomMap, x) -> int:
    """Index of the unit nearest to ``x``; ties go to the smallest index."""
    return int(np.argmin(_squared_distances(som, np.asarray(x, dtype=float))))


def grid_distances(som: SomMap, unit: int) -> np.ndarray:
    coords = som.coords
    return np.abs(coords - coords[unit]).max(axis=1)


def neighborhood(g: np.ndarray, sigma: float, cutoff=True) -> np.ndarray:
    h = np.exp(-(g.astype(float) ** 2) / (2.0 * sigma * sigma))
    if cutoff:
        h = np.where(g <= sigma, h, 0.0)
    return h


def update(som: SomMap, x, alpha: float, sigma: float, cutoff=True, grid=None) -> int:
    """One online step toward ``x``; returns the winning unit."""
    x = np.asarray(x, dtype=float)
    winner = bmu(som, x)
    g = grid[winner] if grid is not None else grid_distances(som, winner)
    h = neighborhood(g, sigma, cutoff)
    som.weights += (alpha * h)[:, np.newaxis] * (x - som.weights)
    return winner


def schedule(epoch: int, config: SomConfig) -> typing.Tuple[float, float]:
    decay = 1.0 - epoch / config.epochs
    return config.alpha0 * decay, max(config.initial_sigma * decay, SIGMA_FLOOR)


def bmus(som: SomMap, data) -> np.ndarray:
    data = _as_array(data)
    diff = data[:, np.newaxis, :] - som.weights[np.newaxis, :, :]
    return np.argmin(np.einsum("nuk,nuk->nu", diff, diff), axis=1)


def quantization_error(som: SomMap, data) -> float:
    data = _as_array(data)
    if data.shape[0] == 0:
        return 0.0
    nearest = som.weights[bmus(som, data)]
    return float(np.linalg.norm(data - nearest, axis=1).mean())


def train(som: SomMap, data, config: SomConfig) -> typing.Tuple[SomMap, TrainingTrace]:
    data = _as_array(data)
    if data.shape[0] == 0:
        raise EmptyData("Cannot train without data")
    if data.shape[1] != som.width:
        raise WidthMismatch("Data width %d, map width %d" % (data.shape[1], som.width))

    trained = som.copy()
    rng = np.random.default_rng(config.seed)
    coords = trained.coords
    grid = np.abs(coords[:, np.newaxis, :] - coords[np.newaxis, :, :]).max(axis=2)

    initial = quantization_error(trained, data)
    errors = []
    for epoch in range(config.epochs):
        alpha, sigma = schedule(epoch, config)
        for index in rng.permutation(data.shape[0]):
            update(trained, data[index], alpha, sigma, config.neighborhood_cutoff, grid)
        errors.append(quantization_error(trained, data))
        logger.debug("Epoch %d: alpha %.4f sigma %.3f qe %.6f", epoch, alpha, sigma, errors[-1])

    logger.info("Trained %dx%d map: qe %.6f -> %.6f", config.grid_w, config.grid_h, initial, errors[-1])
    return trained, TrainingTrace(initial, errors)


def _modal(values):
    counts = collections.Counter(values)
    if not counts:
        return None
    return min(counts, key=lambda v: (-counts[v], v))


def assign(
    som: SomMap, data, vectors: typing.Sequence[SessionVector] = ()
) -> typing.Tuple[np.ndarray, typing.List[ClusterSummary]]:
    """Map each vector to its BMU and summarise every unit."""
    surf_ids = list(range(len(_as_array(data))))
    if isinstance(data, FeatureMatrix):
        surf_ids = [int(s) for s in data.surf_ids]
        vectors = vectors or data.vectors
    array = _as_array(data)
    if array.ndim != 2 or array.shape[0] == 0:
        raise EmptyData("Nothing to assign")
    if array.shape[1] != som.width:
        raise WidthMismatch("Data width %d, map width %d" % (array.shape[1], som.width))

    assignments = bmus(som, array)
    members = collections.defaultdict(list)
    for index, unit in enumerate(assignments):
        members[int(unit)].append(index)

    summaries = []
    for unit in range(som.units):
        indices = members.get(unit, [])
        metadata = [vectors[i] for i in indices] if vectors else []
        pairs = collections.Counter(v.category_pair for v in metadata)
        top_pairs = sorted(pairs.items(), key=lambda p: (-p[1], tuple(int(c) for c in p[0])))[:TOP_PAIRS]

        distances = np.linalg.norm(array[indices] - som.weights[unit], axis=1) if indices else []
        ids = [metadata[j].surf_id for j in range(len(indices))] if metadata else [surf_ids[i] for i in indices]
        nearest = sorted(zip(distances, ids))[:REPRESENTATIVES]

        row, col = som.position(unit)
        summaries.append(
            ClusterSummary(
                unit,
                row,
                col,
                len(indices),
                _modal(v.period for v in metadata),
                top_pairs,
                [int(s) for _, s in nearest],
            )
        )
    return assignments, summaries


def save_map(som: SomMap, config: SomConfig, path) -> None:
    echo = "\n".join("%s=%s" % item for item in config.echo().items())
    columns = "\t".join(["row", "col"] + ["w%d" % i for i in range(som.width)])
    data = np.column_stack([som.coords.astype(float), som.weights])
    try:
        np.savetxt(
            path,
            data,
            fmt=["%d", "%d"] + ["%.17g"] * som.width,
            delimiter="\t",
            header=echo + "\n" + columns,
        )
    except OSError as e:
        raise IoFailure("Failed to write map %s: %s" % (path, e)) from e


def load_map(path) -> typing.Tuple[SomMap, typing.Dict[str, str]]:
    echo = {}
    try:
        with open(path, encoding="utf-8") as f:
            for line in f:
                if not line.startswith("#"):
                    break
                key, sep, value = line[1:].strip().partition("=")
                if sep:
                    echo[key] = value
        data = np.loadtxt(path, delimiter="\t", comments="#", ndmin=2)
    except FileNotFoundError as e:
        raise MissingArtifacts("Missing map %s" % path) from e
    except OSError as e:
        raise IoFailure("Failed to read map %s: %s" % (path, e)) from e
    except ValueError as e:
        raise CorruptArtifact("Unreadable map %s: %s" % (path, e)) from e

    with parsing(path):
        grid_w = int(echo.get("grid_w", int(data[:, 1].max()) + 1))
        grid_h = int(echo.get("grid_h", int(data[:, 0].max()) + 1))
    return SomMap(grid_w, grid_h, data[:, 2:].copy()), echo


def _pair_label(pair) -> str:
    return " / ".join(Category(c).label for c in pair)


CLUSTER_COLUMNS = ("unit", "row", "col", "count", "modal_period", "top_pairs", "representatives")


def save_clusters(summaries: typing.Sequence[ClusterSummary], path) -> None:
    write_table(
        path,
        CLUSTER_COLUMNS,
        (
            (
                s.unit,
                s.row,
                s.col,
                s.count,
                s.modal_period.name if s.modal_period is not None else "",
                ";".join("%s=%d" % (_pair_label(p), n) for p, n in s.top_pairs),
                ",".join(str(i) for i in s.representatives),
            )
            for s in summaries
        ),
    )


def save_assignments(path, surf_ids, assignments) -> None:
    write_table(path, ("surf_id", "unit"), zip((int(s) for s in surf_ids), (int(u) for u in assignments)))


def render_clusters(summaries: typing.Sequence[ClusterSummary], grid_w: int) -> str:
    """Text grid of cluster cells, one block per map row."""
    cells = {}
    for s in summaries:
        lines = ["(%d,%d)" % (s.row, s.col)]
        if s.count == 0:
            lines.append("empty")
        else:
            period = s.modal_period
            lines.append(
                "%d sessions, mostly %s"
                % (s.count, "%s (%s)" % (period.name, period_names[period]) if period is not None else "-")
            )
            for pair, n in s.top_pairs:
                lines.append("%s: %d" % (_pair_label(pair), n))
        cells[(s.row, s.col)] = lines

    rows = sorted({r for r, _ in cells})
    width = max((len(line) for lines in cells.values() for line in lines), default=0) + 2
    blocks = []
    for r in rows:
        row_cells = [cells.get((r, c), []) for c in range(grid_w)]
        height = max(len(c) for c in row_cells)
        for i in range(height):
            blocks.append(
                "| " + "| ".join((c[i] if i < len(c) else "").ljust(width) for c in row_cells).rstrip()
            )
        blocks.append("-" * ((width + 2) * grid_w))
    return "\n".join(blocks) + "\n"
