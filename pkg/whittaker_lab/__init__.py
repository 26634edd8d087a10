"""Matrix Whittaker kernels: finite models, continuous kernels, spectra and limits."""

__version__ = "0.1.0"
