"""Real-time collaborative 3D class-diagram synchronization engine.

An authoritative session server plus client replicas kept consistent over a
reliable, server-ordered event channel and a lossy, freshness-filtered
movement/presence channel, verifiable under a deterministic simulated
network.
"""

__version__ = "0.1.0"
