# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled pointwise kernels for the split-step inner loop.

Each routine mutates its first argument in place and is numerically
identical (up to rounding) to the numpy fallback in pykernels.py.
"""

from libc.math cimport cos, sin


def nonlinear_phase(double complex[::1] psi, const double[::1] vpot,
                    double lam, double dt):
    """psi[i] *= exp(-i*dt*(vpot[i] + lam*|psi[i]|^2)), fused in one pass."""
    cdef Py_ssize_t i, n = psi.shape[0]
    cdef double re, im, ph, c, s
    for i in range(n):
        re = psi[i].real
        im = psi[i].imag
        ph = -dt * (vpot[i] + lam * (re * re + im * im))
        c = cos(ph)
        s = sin(ph)
        psi[i].real = re * c - im * s
        psi[i].imag = re * s + im * c


def multiply_complex(double complex[::1] a, const double complex[::1] b):
    """a[i] *= b[i] (kinetic propagator application in Fourier space)."""
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double re, im
    for i in range(n):
        re = a[i].real * b[i].real - a[i].imag * b[i].imag
        im = a[i].real * b[i].imag + a[i].imag * b[i].real
        a[i].real = re
        a[i].imag = im


def multiply_real(double complex[::1] a, const double[::1] m):
    """a[i] *= m[i] (absorbing-mask application)."""
    cdef Py_ssize_t i, n = a.shape[0]
    for i in range(n):
        a[i].real = a[i].real * m[i]
        a[i].imag = a[i].imag * m[i]
