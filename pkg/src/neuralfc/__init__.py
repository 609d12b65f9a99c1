"""Neural flight control pipeline: simulate, train, pack, deploy, fly."""

__version__ = "0.1.0"
