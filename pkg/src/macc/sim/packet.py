from __future__ import annotations

import enum


class PacketKind(enum.IntEnum):
    DATA = 0
    ACK = 1


DATA = PacketKind.DATA
ACK = PacketKind.ACK


class Packet:
    """A data segment or a cumulative acknowledgement.

    ``seq`` is the byte offset of a data segment's first payload byte; for an
    ack, ``ack`` is the next byte the receiver expects and ``echo`` the send
    time of the data packet that triggered it (timestamp echo). All times are
    integer nanoseconds.
    """

    __slots__ = ("id", "flow", "kind", "seq", "size", "payload", "sent_at",
                 "ack", "acked_bytes", "echo", "enq_at", "retx")

    def __init__(self, id, flow, kind, seq, size, sent_at, payload=0,
                 ack=0, acked_bytes=0, echo=0, retx=False):
        if size <= 0:
            raise ValueError(f"packet size must be positive, got {size}")
        if kind == DATA and seq < 0:
            raise ValueError(f"data packet seq must be >= 0, got {seq}")
        self.id = id
        self.flow = flow
        self.kind = kind
        self.seq = seq
        self.size = size
        self.payload = payload
        self.sent_at = sent_at
        self.ack = ack
        self.acked_bytes = acked_bytes
        self.echo = echo
        self.enq_at = 0
        self.retx = retx

    def __repr__(self):
        if self.kind == DATA:
            return f"Packet(#{self.id} flow={self.flow} DATA seq={self.seq} size={self.size} t={self.sent_at})"
        return f"Packet(#{self.id} flow={self.flow} ACK ack={self.ack} size={self.size} t={self.sent_at})"
