"""Region-guided 3D beamforming.

Spatial and region features built from a 3D location (or a box around it)
steer mask-based MVDR and Wiener beamformers that pull one speaker out of a
multi-speaker in-car mixture. The separation pipeline is a LangGraph graph.
"""

from beam3d.configuration import Configuration
from beam3d.geometry import Location3D, MicArray, RegionBox
from beam3d.graph import graph, run_separation

__all__ = ["Configuration", "Location3D", "MicArray", "RegionBox", "graph", "run_separation"]
