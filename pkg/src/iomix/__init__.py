"""Regional input coefficient estimation with mixup-augmented neural networks."""

__version__ = "0.1.0"
