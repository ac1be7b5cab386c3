"""Periodic grids on the base torus and spectral differentiation.

Axes are ordered ``x^1..x^n, y^1..y^n`` so that grid axis ``a`` is the real
coordinate with jet index ``a``.  An axis of resolution 1 is *collapsed*:
every field on the grid is constant along it, which is exact whenever
nothing in the computation depends on that coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import factorial

import numpy as np

from .jets import RealJet, monomials


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on ``R^{2n} / (L_1 Z x ... x L_{2n} Z)``."""

    n: int
    shape: tuple
    periods: tuple = None

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) != 2 * self.n:
            raise ValueError(f"grid needs {2 * self.n} axes, got {len(shape)}")
        if any(s < 1 for s in shape):
            raise ValueError("grid resolutions must be positive")
        object.__setattr__(self, "shape", shape)
        periods = self.periods if self.periods is not None else (1.0,) * (2 * self.n)
        object.__setattr__(self, "periods", tuple(float(p) for p in periods))

    @classmethod
    def for_dependencies(cls, n, resolution, depends_on=None, periods=None):
        """Grid with ``resolution`` points on axes in ``depends_on``, 1 elsewhere.

        ``depends_on=None`` keeps every axis.
        """
        axes = range(2 * n) if depends_on is None else set(depends_on)
        shape = tuple(resolution if a in axes else 1 for a in range(2 * n))
        return cls(n, shape, periods)

    def resample(self, values, target):
        """Trigonometric interpolation of grid values (plus trailing axes) onto ``target``.

        Collapsed axes are broadcast; active axes are zero-padded in Fourier
        space, splitting an even Nyquist mode symmetrically.
        """
        values = np.asarray(values)
        out = values
        for a, (s, t) in enumerate(zip(self.shape, target.shape)):
            if s == t:
                continue
            if s == 1:
                reps = [1] * out.ndim
                reps[a] = t
                out = np.tile(out, reps)
                continue
            if t < s:
                raise ValueError("resampling only refines")
            spec = np.fft.fft(out, axis=a)
            shape = list(spec.shape)
            shape[a] = t
            pad = np.zeros(shape, complex)
            h = (s + 1) // 2
            lo = [slice(None)] * out.ndim
            lo[a] = slice(0, h)
            pad[tuple(lo)] = spec[tuple(lo)]
            hi_src = [slice(None)] * out.ndim
            hi_src[a] = slice(s - (s // 2), s)
            hi_dst = [slice(None)] * out.ndim
            hi_dst[a] = slice(t - (s // 2), t)
            pad[tuple(hi_dst)] = spec[tuple(hi_src)]
            if s % 2 == 0:
                nyq = [slice(None)] * out.ndim
                nyq[a] = s // 2
                half = 0.5 * spec[tuple(nyq)]
                d1 = [slice(None)] * out.ndim
                d1[a] = s // 2
                d2 = [slice(None)] * out.ndim
                d2[a] = t - s // 2
                pad[tuple(d1)] = half
                pad[tuple(d2)] = half
            res = np.fft.ifft(pad, axis=a) * (t / s)
            out = res.real if np.isrealobj(values) else res
        return out

    def refined(self, resolution):
        return TorusGrid(self.n, tuple(resolution if s > 1 else 1 for s in self.shape), self.periods)

    # geometry -------------------------------------------------------------
    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def active_axes(self):
        return tuple(a for a, s in enumerate(self.shape) if s > 1)

    @property
    def cell_volume(self):
        return float(np.prod([L / N for L, N in zip(self.periods, self.shape)]))

    @property
    def volume(self):
        return float(np.prod(self.periods))

    def axis_coordinates(self, a):
        return np.arange(self.shape[a]) * (self.periods[a] / self.shape[a])

    @cached_property
    def mesh(self):
        """Real coordinate arrays, one per axis, each of grid shape."""
        return np.meshgrid(*[self.axis_coordinates(a) for a in range(2 * self.n)], indexing="ij")

    def z_points(self):
        """Complex base coordinates of all grid points, shape (size, n), C order."""
        m = [c.reshape(-1) for c in self.mesh]
        n = self.n
        return np.stack([m[i] + 1j * m[n + i] for i in range(n)], axis=-1)

    def flat_index(self):
        return np.unravel_index(np.arange(self.size), self.shape)

    def integrate(self, values, density=None):
        """Trapezoidal (spectrally exact) integral over the torus."""
        values = np.asarray(values)
        if density is not None:
            values = values * density
        return np.sum(values.reshape(self.shape + values.shape[2 * self.n:]), axis=tuple(range(2 * self.n))) * self.cell_volume

    # spectral machinery ------------------------------------------------------
    @cached_property
    def wavenumbers(self):
        """Angular wavenumbers per axis, broadcastable to the grid."""
        ks = []
        for a, (N, L) in enumerate(zip(self.shape, self.periods)):
            k = 2 * np.pi * np.fft.fftfreq(N, d=L / N)
            shape = [1] * (2 * self.n)
            shape[a] = N
            ks.append(k.reshape(shape))
        return ks

    @cached_property
    def nyquist_masks(self):
        """Boolean masks, per axis, of the unpaired Nyquist frequency (even N)."""
        masks = []
        for a, N in enumerate(self.shape):
            m = np.zeros(N, bool)
            if N % 2 == 0 and N > 1:
                m[N // 2] = True
            shape = [1] * (2 * self.n)
            shape[a] = N
            masks.append(m.reshape(shape))
        return masks

    @cached_property
    def bandlimit_mask(self):
        """True on Fourier modes kept by :meth:`bandlimit` (no Nyquist in any axis)."""
        keep = np.ones(self.shape, bool)
        for m in self.nyquist_masks:
            keep &= ~m
        return keep

    def fft(self, values):
        return np.fft.fftn(values, axes=tuple(range(2 * self.n)))

    def ifft(self, coeffs):
        return np.fft.ifftn(coeffs, axes=tuple(range(2 * self.n)))

    def bandlimit(self, values):
        """Orthogonal projection onto trigonometric polynomials without Nyquist modes."""
        if all(N % 2 == 1 or N == 1 for N in self.shape):
            return np.array(values, dtype=np.result_type(values, float), copy=True)
        out = self.ifft(self.fft(values) * self.bandlimit_mask)
        return out.real if np.isrealobj(values) else out

    def derivative(self, values, axis, order=1):
        """Spectral derivative of a grid field along one real axis."""
        return self.partial(values, {axis: order})

    def partial(self, values, exponents):
        """Spectral mixed partial; Nyquist modes dropped on odd-order axes."""
        if not any(exponents.values()):
            return np.array(values, copy=True)
        if any(self.shape[a] == 1 for a, c in exponents.items() if c):
            return np.zeros(self.shape, dtype=np.asarray(values).dtype)
        spec = self.fft(values)
        for a, c in exponents.items():
            if not c:
                continue
            sym = (1j * self.wavenumbers[a]) ** c
            if c % 2:
                sym = np.where(self.nyquist_masks[a], 0.0, sym)
            spec = spec * sym
        out = self.ifft(spec)
        return out.real if np.isrealobj(values) else out

    def d_z(self, values, i):
        """Wirtinger derivative d/dz^i of a grid field."""
        return 0.5 * (self.derivative(values, i) - 1j * self.derivative(values, self.n + i))

    def d_zbar(self, values, i):
        return 0.5 * (self.derivative(values, i) + 1j * self.derivative(values, self.n + i))

    def wirtinger_gradient(self, values):
        """Stack of d_i values, shape grid + (n,)."""
        return np.stack([self.d_z(values, i) for i in range(self.n)], axis=-1)


@dataclass
class GridField:
    """A real scalar field sampled on a :class:`TorusGrid`.

    Its jets at grid points come from spectral derivatives, so it can stand in
    for an analytic base function (e.g. a conformal factor produced by a solver).
    """

    grid: TorusGrid
    values: np.ndarray
    name: str = "field"
    _tables: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(self.grid.shape)

    def variables(self):
        return set(self.grid.active_axes)

    def coefficient_table(self, order):
        """Taylor coefficients on the grid, shape grid + (ncoef,)."""
        if order not in self._tables:
            axes = self.grid.active_axes
            mons = monomials(len(axes), order)
            table = np.empty(self.grid.shape + (len(mons),))
            for c, row in enumerate(mons):
                exps = {a: int(e) for a, e in zip(axes, row)}
                scale = float(np.prod([factorial(int(e)) for e in row])) if len(row) else 1.0
                table[..., c] = self.grid.partial(self.values, exps) / scale
            self._tables[order] = table
        return self._tables[order]

    def jet(self, point, order):
        if point.grid is None or point.index is None:
            raise ValueError(f"grid field '{self.name}' can only be evaluated at grid points")
        if point.grid.shape != self.grid.shape:
            raise ValueError(f"grid field '{self.name}' lives on a different grid")
        table = self.coefficient_table(order)
        return RealJet(table[point.index], self.grid.active_axes, order)

    def describe(self):
        return {"grid_field": self.name, "shape": list(self.grid.shape)}
