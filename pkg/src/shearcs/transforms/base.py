from dataclasses import dataclass

import numpy as np


@dataclass
class CoefficientStack:
    """Flat coefficient vector with its subband layout and level partition.

    ``partition`` is a list of ``(level, start, stop)`` half-open index
    ranges into ``data``; level 0 is the low-pass band.
    """

    data: np.ndarray
    shapes: list
    partition: list

    def __post_init__(self):
        self.data = np.asarray(self.data).reshape(-1)
        total = sum(int(np.prod(s)) for s in self.shapes)
        if total != self.data.size:
            raise ValueError(f"layout describes {total} coefficients, data has {self.data.size}")
        check_partition(self.partition, total)

    def with_data(self, data):
        return CoefficientStack(data, self.shapes, self.partition)

    def subbands(self):
        """Yield each subband as a view of ``data``."""
        start = 0
        for shape in self.shapes:
            size = int(np.prod(shape))
            yield self.data[start : start + size].reshape(shape)
            start += size

    def level(self, j):
        return np.concatenate([self.data[a:b] for lvl, a, b in self.partition if lvl == j])


def check_partition(partition, total):
    """Raise unless ``partition`` tiles ``[0, total)`` with increasing ranges."""
    pos = 0
    for level, start, stop in partition:
        if start != pos or stop <= start:
            raise ValueError(f"partition not contiguous at level {level}: {start}..{stop}")
        pos = stop
    if pos != total:
        raise ValueError(f"partition ends at {pos}, expected {total}")


def ranges_from_levels(levels, sizes):
    """Merge consecutive subbands that share a level into index ranges."""
    out = []
    pos = 0
    for level, size in zip(levels, sizes):
        if out and out[-1][0] == level:
            out[-1] = (level, out[-1][1], pos + size)
        else:
            out.append((level, pos, pos + size))
        pos += size
    return out


class TransformSystem:
    """Common interface of the sparsifying transforms.

    Subclasses provide ``kind``, ``grid``, ``n_scales``, ``shapes``,
    ``levels`` (one per subband) and ``_analyze`` / ``_synthesize`` on
    flat arrays.
    """

    kind = None
    parseval = False

    @property
    def partition(self):
        return ranges_from_levels(self.levels, [int(np.prod(s)) for s in self.shapes])

    @property
    def n_levels(self):
        return max(self.levels) + 1

    @property
    def n_coefficients(self):
        return sum(int(np.prod(s)) for s in self.shapes)

    def level_partition(self):
        return list(self.partition)

    def _check_volume(self, x):
        x = np.asarray(getattr(x, "data", x))
        if x.shape != self.grid.shape:
            raise ValueError(f"volume shape {x.shape} does not match grid {self.grid.shape}")
        return x

    def analyze(self, x, dtype=np.complex128):
        x = self._check_volume(x)
        return CoefficientStack(self._analyze(x, dtype), list(self.shapes), self.partition)

    def synthesize(self, c):
        data = c.data if isinstance(c, CoefficientStack) else np.asarray(c).reshape(-1)
        if isinstance(c, CoefficientStack) and [tuple(s) for s in c.shapes] != [
            tuple(s) for s in self.shapes
        ]:
            raise ValueError("coefficient layout does not match this transform")
        if data.size != self.n_coefficients:
            raise ValueError(f"expected {self.n_coefficients} coefficients, got {data.size}")
        return self._synthesize(data)

    def gram(self, x):
        """``Psi* Psi x``."""
        if self.parseval:
            return np.asarray(x, dtype=np.complex128)
        return self.synthesize(self.analyze(x))


def export_subbands(stack, directory, spacing=(1.0, 1.0, 1.0), prefix="subband"):
    """Debug dump: write every subband of ``stack`` as its own CSVOL1 file."""
    from pathlib import Path

    from ..numerics import ComplexVolume, Grid3, save_volume

    directory = Path(directory)
    paths = []
    for i, band in enumerate(stack.subbands()):
        vol = ComplexVolume(Grid3(*band.shape, spacing=spacing), band)
        path = directory / f"{prefix}_{i:03d}.csvol"
        save_volume(path, vol)
        paths.append(path)
    return paths
