"""Discrete-event simulation core: clock, packets, links and the dumbbell."""

from .engine import NS_PER_S, Simulation, seconds, to_seconds
from .packet import ACK, DATA, Packet, PacketKind

__all__ = ["NS_PER_S", "Simulation", "seconds", "to_seconds", "Packet", "PacketKind", "DATA", "ACK"]
