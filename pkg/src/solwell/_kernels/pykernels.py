"""Pure-numpy fallback for the split-step pointwise kernels.

Same in-place contracts as the compiled versions in _speedups.pyx.
"""

import numpy as np


def nonlinear_phase(psi, vpot, lam, dt):
    psi *= np.exp(-1j * dt * (vpot + lam * (psi.real**2 + psi.imag**2)))


def multiply_complex(a, b):
    a *= b


def multiply_real(a, m):
    a *= m
