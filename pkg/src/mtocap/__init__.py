"""Many-to-one capacity analysis and CSMA/CA simulation for multi-hop wireless networks."""

from .geometry import DirectedLink, Point2D, RadioConfig, delta_margin, pairwise_compatible
from .topology import Topology, NodeRole

__version__ = "0.1.0"
