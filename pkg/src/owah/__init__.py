"""owah: a symbolic household world with a principal agent, an online-inferring
helper agent, and the benchmark/service scaffolding around them."""

__version__ = "0.1.0"
