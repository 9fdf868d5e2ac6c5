"""Zero-padded FFT convolution with tabulated translation-invariant kernels."""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft


def offset_vectors(grid):
    """Lattice offsets ``h * m`` for the doubled grid, FFT ordering, shape ``(2N1, 2N2, 2N3, 3)``."""
    axes = [grid.h * np.fft.fftfreq(2 * n, 1.0 / (2 * n)) for n in grid.dims]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


class PaddedConvolution:
    """Discrete aperiodic convolution ``out_i = sum_m W(x_i - x_m) f_m``.

    ``kernels`` maps a name to a tabulated kernel on the doubled grid (the
    value at offset zero is the self weight). Embedding into a ``2N`` box
    makes the circular FFT product equal the aperiodic sum exactly.
    """

    def __init__(self, grid, kernels, workers=1):
        self.grid = grid
        self.workers = workers
        self.shape = tuple(2 * n for n in grid.dims)
        self.hat = {}
        for name in list(kernels):
            self.hat[name] = sfft.fftn(kernels.pop(name), workers=workers)

    def forward(self, f):
        pad = np.zeros(self.shape, dtype=complex)
        n1, n2, n3 = self.grid.dims
        pad[:n1, :n2, :n3] = f
        return sfft.fftn(pad, workers=self.workers, overwrite_x=True)

    def backward(self, fhat):
        n1, n2, n3 = self.grid.dims
        return sfft.ifftn(fhat, workers=self.workers, overwrite_x=True)[:n1, :n2, :n3]

    def apply(self, name, f):
        return self.backward(self.hat[name] * self.forward(f))
