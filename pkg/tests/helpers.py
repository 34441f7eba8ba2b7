from app.schemas import PacketRecord


SMALL_DIMS = (2848, 32, 4, 32, 2848)


def make_packet(timestamp: float, **overrides) -> PacketRecord:
    values = dict(
        timestamp=timestamp,
        src_ip='10.0.0.1',
        dst_ip='203.0.113.10',
        src_port=3074,
        dst_port=5000,
        protocol=17,
        packet_size=74,
        payload_size=46,
        ttl=64,
    )
    values.update(overrides)
    return PacketRecord(**values)
