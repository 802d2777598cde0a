"""Recovering dynamical laws as block-sparse tensor trains with shared cores."""

from .kernels import COMPILED as compiled_kernels  # noqa: F401

__version__ = "0.1.0"
