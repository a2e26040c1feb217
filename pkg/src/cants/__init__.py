"""Continuous ant-colony search over recurrent network topologies and weights."""

__version__ = "0.1.0"
