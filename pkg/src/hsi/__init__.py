"""Human-scene interaction engine.

Learns a body-centric probabilistic map of contact and scene semantics on a
fixed-topology body mesh, and places posed bodies into labeled 3D scenes by
minimizing a placement energy against a scene signed distance field.
"""

__version__ = "0.1.0"
