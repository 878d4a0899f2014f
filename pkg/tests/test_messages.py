"""Wire-format contract: every kind round-trips and meters its exact size."""

import numpy as np
import pytest

from vfgboost import messages as M


def _sample_instances():
    ids = np.array([3, 9, 200, 70000], dtype=np.int64)
    return [
        M.KeyAnnounce(client_id=2, pubkey_blob=b"\x01\x02\x03\x04"),
        M.LabelIdAnnounce(client_id=1, ids=ids),
        M.EncNodeStat(node=4, mode=M.MODE_ENCRYPTED, grad_ct=b"\xaa" * 132,
                      hess_ct=b"\xbb" * 132),
        M.EncNodeStat(node=4, mode=M.MODE_PLAIN, grad_plain=-1.5, hess_plain=2.25),
        M.NodeStatPlain(node=7, grad_sum=-3.25, hess_sum=10.5),
        M.SplitProposal(node=7, source=0, ticket=12, split_client=3, ids=ids),
        M.PartialSumReply(node=7, source=0, ticket=12, mode=M.MODE_REJECT),
        M.PartialSumReply(node=7, source=0, ticket=12, mode=M.MODE_ENCRYPTED,
                          grad_ct=b"\x01" * 132, hess_ct=b"\x02" * 132),
        M.PartialSumReply(node=7, source=0, ticket=12, mode=M.MODE_PLAIN,
                          grad_plain=0.5, hess_plain=0.25),
        M.EncCandidateSums(node=7, source=0, ticket=12, mode=M.MODE_ENCRYPTED,
                           grad_ct=b"\x03" * 132, hess_ct=b"\x04" * 132),
        M.LocalBestGain(node=7, split_client=2, has_candidate=True, gain=0.125,
                        source=0, ticket=12),
        M.LocalBestGain(node=7, split_client=2, has_candidate=False),
        M.GlobalWinner(node=7, source=0, ticket=12),
        M.RecordCommit(node=7, source=0, record=3, ticket=12, left_leaf=True,
                       right_leaf=False),
        M.BranchContinue(node=7, child=8, branch=M.BRANCH_LEFT, ids=ids),
        M.LeafRelease(tree=1, node=9, source=0, record=3, branch=M.BRANCH_RIGHT,
                      value=-0.625, perturbed=True),
        M.LeafRelease(tree=1, node=9, source=-1, record=-1,
                      branch=M.BRANCH_NODE, value=0.5, perturbed=False),
        M.PredictRoute(query=5, tree=1, node=9),
        M.MaskedShare(query=5, share=2**63 + 17),
    ]


def _fields_equal(a, b):
    if type(a) is not type(b):
        return False
    for name in a.__dataclass_fields__:
        va, vb = getattr(a, name), getattr(b, name)
        if isinstance(va, np.ndarray) or isinstance(vb, np.ndarray):
            if not np.array_equal(np.asarray(va), np.asarray(vb)):
                return False
        elif va != vb:
            return False
    return True


@pytest.mark.parametrize("msg", _sample_instances(),
                         ids=lambda m: "%s-%s" % (type(m).__name__,
                                                  getattr(m, "mode", "")))
def test_roundtrip(msg):
    raw = msg.to_bytes()
    assert raw[0] == msg.KIND
    back = M.from_bytes(raw)
    assert _fields_equal(msg, back)


def test_every_registered_kind_is_exercised():
    covered = {type(m).KIND for m in _sample_instances()}
    assert covered == set(M.ALL_KINDS)


def test_tags_are_stable():
    expected = {
        "KeyAnnounce": 1, "LabelIdAnnounce": 2, "EncNodeStat": 3,
        "NodeStatPlain": 4, "SplitProposal": 5, "PartialSumReply": 6,
        "EncCandidateSums": 7, "LocalBestGain": 8, "GlobalWinner": 9,
        "RecordCommit": 10, "BranchContinue": 11, "LeafRelease": 12,
        "PredictRoute": 13, "MaskedShare": 14,
    }
    assert {v: k for k, v in M.KIND_NAMES.items()} == expected


def test_unknown_tag_rejected():
    with pytest.raises(ValueError):
        M.from_bytes(b"\xff\x00")


def test_id_lists_serialize_as_u32():
    ids = np.arange(1000, dtype=np.int64)
    msg = M.LabelIdAnnounce(client_id=0, ids=ids)
    # tag + client id + count + 4 bytes per id
    assert len(msg.to_bytes()) == 1 + 2 + 4 + 4 * 1000
