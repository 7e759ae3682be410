"""splitlab: split training of a 1D CNN with a CKKS-encrypted server layer.

Subpackages: ckks (leveled RNS-CKKS), nn (hand-written CNN), data (loaders
and synthesis), wire (framed TCP messaging), runtime (the client/server
protocol loops and the local baseline), attack (gradient inversion),
telemetry (timers and reports), cli (the splitlab command).
"""

__version__ = "0.1.0"
