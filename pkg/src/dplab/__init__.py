"""Image denoising laboratory.

Layers: deterministic RNG, image I/O and phantoms, noise simulation, quality
metrics, classical filters, a small autodiff engine with a U-Net, the
dual-path model, and a benchmark CLI tying them together.
"""

from . import classic, dpl, imgcore, metrics, noise, nn, rng

__version__ = "0.1.0"

__all__ = ["classic", "dpl", "imgcore", "metrics", "noise", "nn", "rng",
           "__version__"]
