import pytest

from vfgboost import messages as M
from vfgboost.simnet import MessageBus


def _bus(n=3):
    bus = MessageBus()
    for c in range(n):
        bus.register(c)
    return bus


def _route(q=1):
    return M.PredictRoute(query=q, tree=0, node=1)


def test_send_meters_exact_serialized_length():
    bus = _bus()
    msg = _route()
    env = bus.send(0, 1, msg)
    assert env.nbytes == len(msg.to_bytes())
    assert bus.metrics.total_bytes == env.nbytes


def test_broadcast_meters_per_recipient():
    bus = _bus(4)
    msg = M.NodeStatPlain(node=1, grad_sum=0.0, hess_sum=1.0)
    envs = bus.broadcast(0, msg)
    assert len(envs) == 3
    assert bus.metrics.total_bytes == 3 * len(msg.to_bytes())


def test_fifo_delivery_order():
    bus = _bus()
    bus.send(0, 1, _route(1))
    bus.send(2, 1, _route(2))
    got = [env.payload.query for env in bus.drain(1)]
    assert got == [1, 2]


def test_drain_limit_leaves_later_messages():
    bus = _bus()
    bus.send(0, 1, _route(1))
    bus.send(0, 1, _route(2))
    first = bus.drain(1, limit=1)
    assert [e.payload.query for e in first] == [1]
    assert [e.payload.query for e in bus.drain(1)] == [2]


def test_unknown_receiver_rejected():
    bus = _bus()
    with pytest.raises(KeyError):
        bus.send(0, 9, _route())


def test_duplicate_registration_rejected():
    bus = _bus()
    with pytest.raises(ValueError):
        bus.register(0)


def test_metrics_snapshot_is_immutable_copy():
    bus = _bus()
    before = bus.snapshot_metrics()
    assert before.total_bytes == 0 and before.message_count == 0
    bus.send(0, 1, _route())
    assert before.total_bytes == 0
    after = bus.snapshot_metrics()
    assert after.total_bytes > 0
    assert after.bytes_by_pair[(0, 1)] == after.total_bytes


def test_conservation_every_send_in_transcript_and_one_inbox():
    bus = _bus()
    for q in range(5):
        bus.send(q % 2, 2, _route(q))
    assert len(bus.transcript) == 5
    delivered = bus.drain(2)
    assert len(delivered) == 5
    assert [e.payload.query for e in delivered] == list(range(5))
    assert bus.drain(0) == [] and bus.drain(1) == []


def test_ciphertext_kinds_dominate_encrypted_histograms():
    from conftest import quick_fed
    from vfgboost.messages import EncCandidateSums, PartialSumReply

    enc, *_ = quick_fed(n=80, d=4, n_clients=3, trees=1, depth=2, seed=50,
                        encryption=True)
    plain, *_ = quick_fed(n=80, d=4, n_clients=3, trees=1, depth=2, seed=50,
                          encryption=False)
    h_enc = enc.bus.snapshot_metrics().bytes_by_kind
    h_plain = plain.bus.snapshot_metrics().bytes_by_kind
    heavy = h_enc[PartialSumReply.KIND] + h_enc[EncCandidateSums.KIND]
    assert heavy > enc.bus.snapshot_metrics().total_bytes / 2
    for kind in (PartialSumReply.KIND, EncCandidateSums.KIND):
        assert h_enc[kind] > h_plain[kind]
    assert enc.bus.snapshot_metrics().total_bytes > \
        plain.bus.snapshot_metrics().total_bytes


def test_transcript_export_format(tmp_path):
    bus = _bus()
    bus.send(0, 1, _route())
    bus.advance_round()
    bus.send(1, 2, M.NodeStatPlain(node=3, grad_sum=1.0, hess_sum=2.0))
    path = tmp_path / "transcript.tsv"
    bus.export_transcript(path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    r, s, d, kind, nb = lines[1].split("\t")
    assert (r, s, d, kind) == ("1", "1", "2", "NodeStatPlain")
    assert int(nb) > 0
