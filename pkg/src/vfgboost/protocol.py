"""Client state machines and the training driver for federated boosting.

Every training row's label belongs to exactly one client while feature
columns are vertically split, so no single client can compute branch
statistics alone.  A node split separates duties between two roles: the
*source* client owns a candidate's feature, threshold and branch id sets but
never sees the summed statistics; its randomly drawn *split* client decrypts
the homomorphically aggregated sums and computes gains and leaf weights but
sees only opaque candidate tickets.  Committed splits live in the source's
private lookup table keyed by record id; leaf weights live in the split
client's received lookup table; the shared tree skeleton carries nothing but
(source id, record id) annotations.

The driver is a deterministic round scheduler over `simnet.MessageBus`:
clients are stepped in ascending id order, and all randomness (key
generation, ephemeral keys, role draws, noise, masks) comes from streams
derived from the run seed, so identical seeds give byte-identical
transcripts.
"""

import random
from dataclasses import dataclass, field

import numpy as np

from . import gbdt, messages, paillier
from .data import Dataset, VerticalPartition
from .dp import DpParams, perturb_leaf
from .gbdt import TrainConfig, gain_from_sums, weight_from_sums
from .messages import (BRANCH_LEFT, BRANCH_NODE, BRANCH_RIGHT, MODE_ENCRYPTED,
                       MODE_PLAIN, MODE_REJECT)
from .simnet import MessageBus

MASK_SCALE = 2**40  # fixed-point grid for masked prediction shares
_U64 = 2**64


@dataclass
class ProtocolConfig:
    key_bits: int = 512
    codec_scale_bits: int = 32  # matches the gradient grid so sums encode exactly
    instance_threshold: int = 10
    encryption: bool = True
    dp: DpParams | None = None
    weakened: bool = False  # plaintext sums evaluated by the source; demos only
    masking: bool = True
    seed: int = 0

    @property
    def dp_enabled(self) -> bool:
        return self.dp is not None and self.dp.enabled


@dataclass
class SharedTreeNode:
    """Tree skeleton entry every client can see: roles and ids, never values."""
    node_id: int
    tree: int
    depth: int
    owner: tuple | None = None  # (source_client, record_id) for internal nodes
    leaf_holder: int | None = None
    leaf_key: tuple | None = None
    left: "SharedTreeNode | None" = None
    right: "SharedTreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.leaf_key is not None


@dataclass
class DistributedEnsemble:
    trees: list = field(default_factory=list)
    learning_rate: float = 0.3
    base_prediction: float = 0.0
    loss: str = gbdt.LOGISTIC


def _stream(*parts) -> random.Random:
    return random.Random("|".join(str(p) for p in parts))


class ClientState:
    """One participant: feature columns, owned labels, keys and private tables."""

    def __init__(self, client_id: int, bus: MessageBus, n_samples: int,
                 feature_ids, columns: dict, label_ids, labels,
                 train_cfg: TrainConfig, proto: ProtocolConfig):
        self.client_id = client_id
        self.bus = bus
        self.cfg = train_cfg
        self.proto = proto
        self.feature_ids = sorted(int(f) for f in feature_ids)
        self.columns = columns  # feature_id -> full aligned column
        self.label_ids = np.asarray(label_ids, dtype=np.int64)
        self.owned_mask = np.zeros(n_samples, dtype=bool)
        self.owned_mask[self.label_ids] = True
        self.labels = np.zeros(n_samples, dtype=np.float64)
        self.labels[self.label_ids] = labels
        self.raw_pred = np.full(n_samples, train_cfg.base_prediction, np.float64)
        self.grad = np.zeros(n_samples, dtype=np.float64)
        self.hess = np.zeros(n_samples, dtype=np.float64)

        self.keypair = None
        self.key_registry: dict[int, paillier.PublicKey] = {}
        self.codecs: dict[int, paillier.FixedPointCodec] = {}
        self.peer_label_ids: dict[int, np.ndarray] = {}
        self.buckets: dict[int, gbdt.BucketThresholds] = {}

        self.split_table: list[tuple[int, float]] = []  # record -> (feature, threshold)
        self.committed: dict[int, dict] = {}
        self.leaf_table: dict[tuple, float] = {}  # received lookup table

        self.node_ids_known: dict[int, np.ndarray] = {}
        self.node_stats_known: dict[int, tuple[float, float]] = {}
        self.node_depth: dict[int, int] = {}
        self.node_tree: dict[int, int] = {}
        self.proposals: dict[tuple, np.ndarray] = {}  # (node, source, ticket) -> ids
        self.commit_info: dict[int, messages.RecordCommit] = {}
        self.commit_by_record: dict[tuple, int] = {}
        self.local_bests: dict[int, list] = {}
        self.received_log: list = []  # (round, sender, message); the attack view

        self._cand: dict[tuple, dict] = {}  # source-side per-candidate state
        self._evals: dict[tuple, tuple] = {}  # (node, source, ticket) -> (gain, gl, hl)
        self._best: dict[int, tuple] = {}
        self._root_buf: dict[int, list] = {}
        self._query_acc: dict[int, int] = {}

        self.enc_rng = _stream(proto.seed, "encrng", client_id)
        self.dp_rng = _stream(proto.seed, "dp", client_id)

    # -- setup ------------------------------------------------------------

    def generate_keys(self):
        seed = _stream(self.proto.seed, "keygen", self.client_id)
        pk, sk = paillier.keygen(self.proto.key_bits, rng_seed=seed,
                                 key_id=self.client_id)
        self.keypair = (pk, sk)
        self._register_key(pk)
        return pk

    def announce_key(self):
        pk = self.keypair[0]
        self.bus.broadcast(self.client_id,
                           messages.KeyAnnounce(self.client_id, pk.to_bytes()))

    def announce_label_ids(self):
        self.bus.broadcast(self.client_id,
                           messages.LabelIdAnnounce(self.client_id, self.label_ids))

    def build_feature_buckets(self, train_ids: np.ndarray):
        for f in self.feature_ids:
            self.buckets[f] = gbdt.build_buckets(
                self.columns[f][train_ids], self.cfg.n_buckets, feature_id=f)

    def _register_key(self, pk: paillier.PublicKey):
        self.key_registry[pk.key_id] = pk
        self.codecs[pk.key_id] = paillier.FixedPointCodec(
            pk.n, scale=2**self.proto.codec_scale_bits)

    # -- per-tree gradients -------------------------------------------------

    def start_tree(self):
        g, h = gbdt.grad_hess_arrays(self.cfg.loss,
                                     self.labels[self.label_ids],
                                     self.raw_pred[self.label_ids],
                                     self.cfg.grad_grid_bits)
        self.grad[:] = 0.0
        self.hess[:] = 0.0
        self.grad[self.label_ids] = g
        self.hess[self.label_ids] = h

    def local_node_sums(self, ids: np.ndarray) -> tuple[float, float]:
        mine = ids[self.owned_mask[ids]]
        return float(self.grad[mine].sum()), float(self.hess[mine].sum())

    # -- root aggregation ----------------------------------------------------

    def send_root_stat(self, node: int, enc_key_owner: int, agg_client: int):
        g_sum, h_sum = self.local_node_sums(self.node_ids_known[node])
        payload = self._stat_payload(node, g_sum, h_sum, enc_key_owner)
        if self.client_id == agg_client:
            self._root_buf.setdefault(node, []).append(payload)
        else:
            self.bus.send(self.client_id, agg_client, payload)

    def _stat_payload(self, node, g_sum, h_sum, enc_key_owner):
        if not self.proto.encryption:
            return messages.EncNodeStat(node=node, mode=MODE_PLAIN,
                                        grad_plain=g_sum, hess_plain=h_sum)
        pk = self.key_registry[enc_key_owner]
        codec = self.codecs[enc_key_owner]
        gc = paillier.encrypt(pk, codec.encode(g_sum), self.enc_rng)
        hc = paillier.encrypt(pk, codec.encode(h_sum), self.enc_rng)
        return messages.EncNodeStat(node=node, mode=MODE_ENCRYPTED,
                                    grad_ct=gc.to_bytes(pk), hess_ct=hc.to_bytes(pk))

    def finish_root_aggregate(self, node: int, enc_client: int, expected: int):
        buf = self._root_buf.pop(node, [])
        if len(buf) != expected:
            raise RuntimeError("aggregation client got %d of %d stats"
                               % (len(buf), expected))
        if not self.proto.encryption:
            out = messages.EncNodeStat(
                node=node, mode=MODE_PLAIN,
                grad_plain=sum(m.grad_plain for m in buf),
                hess_plain=sum(m.hess_plain for m in buf))
        else:
            pk = self.key_registry[enc_client]
            gc = paillier.sum_ciphertexts(
                [paillier.Ciphertext.from_bytes(m.grad_ct) for m in buf], pk)
            hc = paillier.sum_ciphertexts(
                [paillier.Ciphertext.from_bytes(m.hess_ct) for m in buf], pk)
            out = messages.EncNodeStat(node=node, mode=MODE_ENCRYPTED,
                                       grad_ct=gc.to_bytes(pk),
                                       hess_ct=hc.to_bytes(pk))
        if self.client_id == enc_client:
            self.decrypt_and_broadcast_stats(out)
        else:
            self.bus.send(self.client_id, enc_client, out)

    def decrypt_and_broadcast_stats(self, msg: messages.EncNodeStat):
        if msg.mode == MODE_PLAIN:
            g_sum, h_sum = msg.grad_plain, msg.hess_plain
        else:
            _pk, sk = self.keypair
            codec = self.codecs[self.client_id]
            g_sum = codec.decode(paillier.decrypt(
                sk, paillier.Ciphertext.from_bytes(msg.grad_ct)))
            h_sum = codec.decode(paillier.decrypt(
                sk, paillier.Ciphertext.from_bytes(msg.hess_ct)))
        self.node_stats_known[msg.node] = (g_sum, h_sum)
        self.bus.broadcast(self.client_id, messages.NodeStatPlain(
            node=msg.node, grad_sum=g_sum, hess_sum=h_sum))

    # -- node split: source side ----------------------------------------------

    def propose_node_splits(self, node: int, split_client: int,
                            peers: list[int]) -> int:
        """Enumerate local candidates; send per-recipient id intersections."""
        ids = self.node_ids_known[node]
        ticket = 0
        for f in self.feature_ids:
            col = self.columns[f][ids]
            for v in self.buckets[f].thresholds:
                ticket += 1
                left_ids = ids[col < v]
                g_own, h_own = self.local_node_sums(left_ids)
                self._cand[(node, ticket)] = {
                    "feature": f, "threshold": v, "left_ids": left_ids,
                    "g_own": g_own, "h_own": h_own, "split_client": split_client,
                    "replies": [], "expected": len(peers), "rejected": False,
                }
                for peer in peers:
                    inter = np.intersect1d(left_ids, self.peer_label_ids[peer],
                                           assume_unique=True)
                    self.bus.send(self.client_id, peer, messages.SplitProposal(
                        node=node, source=self.client_id, ticket=ticket,
                        split_client=split_client, ids=inter))
        return ticket

    def _on_split_proposal(self, msg: messages.SplitProposal):
        ids = np.asarray(msg.ids, dtype=np.int64)
        self.proposals[(msg.node, msg.source, msg.ticket)] = ids
        if ids.size < self.proto.instance_threshold:
            reply = messages.PartialSumReply(node=msg.node, source=msg.source,
                                             ticket=msg.ticket, mode=MODE_REJECT)
        else:
            g_sum = float(self.grad[ids].sum())
            h_sum = float(self.hess[ids].sum())
            if self.proto.encryption and not self.proto.weakened:
                pk = self.key_registry[msg.split_client]
                codec = self.codecs[msg.split_client]
                gc = paillier.encrypt(pk, codec.encode(g_sum), self.enc_rng)
                hc = paillier.encrypt(pk, codec.encode(h_sum), self.enc_rng)
                reply = messages.PartialSumReply(
                    node=msg.node, source=msg.source, ticket=msg.ticket,
                    mode=MODE_ENCRYPTED,
                    grad_ct=gc.to_bytes(pk), hess_ct=hc.to_bytes(pk))
            else:
                reply = messages.PartialSumReply(
                    node=msg.node, source=msg.source, ticket=msg.ticket,
                    mode=MODE_PLAIN, grad_plain=g_sum, hess_plain=h_sum)
        self.bus.send(self.client_id, msg.source, reply)

    def _on_partial_reply(self, msg: messages.PartialSumReply):
        cand = self._cand[(msg.node, msg.ticket)]
        if not msg.accepted:
            cand["rejected"] = True
            return
        cand["replies"].append(msg)
        if len(cand["replies"]) == cand["expected"] and not cand["rejected"]:
            self._forward_candidate(msg.node, msg.ticket, cand)

    def _forward_candidate(self, node: int, ticket: int, cand: dict):
        sc = cand["split_client"]
        if self.proto.weakened:
            g_sum = cand["g_own"] + sum(r.grad_plain for r in cand["replies"])
            h_sum = cand["h_own"] + sum(r.hess_plain for r in cand["replies"])
            self._record_eval(node, self.client_id, ticket, g_sum, h_sum)
        elif not self.proto.encryption:
            g_sum = cand["g_own"] + sum(r.grad_plain for r in cand["replies"])
            h_sum = cand["h_own"] + sum(r.hess_plain for r in cand["replies"])
            self.bus.send(self.client_id, sc, messages.EncCandidateSums(
                node=node, source=self.client_id, ticket=ticket,
                mode=MODE_PLAIN, grad_plain=g_sum, hess_plain=h_sum))
        else:
            pk = self.key_registry[sc]
            codec = self.codecs[sc]
            cts_g = [paillier.Ciphertext.from_bytes(r.grad_ct)
                     for r in cand["replies"]]
            cts_h = [paillier.Ciphertext.from_bytes(r.hess_ct)
                     for r in cand["replies"]]
            cts_g.append(paillier.encrypt(pk, codec.encode(cand["g_own"]),
                                          self.enc_rng))
            cts_h.append(paillier.encrypt(pk, codec.encode(cand["h_own"]),
                                          self.enc_rng))
            self.bus.send(self.client_id, sc, messages.EncCandidateSums(
                node=node, source=self.client_id, ticket=ticket,
                mode=MODE_ENCRYPTED,
                grad_ct=paillier.sum_ciphertexts(cts_g, pk).to_bytes(pk),
                hess_ct=paillier.sum_ciphertexts(cts_h, pk).to_bytes(pk)))

    def flush_lone_candidates(self, node: int):
        """Single-client runs have no peers; forward candidates directly."""
        for (n, ticket), cand in sorted(self._cand.items()):
            if n == node and cand["expected"] == 0:
                self._forward_candidate(node, ticket, cand)

    # -- node split: split-client side ------------------------------------------

    def _on_enc_candidate(self, msg: messages.EncCandidateSums):
        if msg.mode == MODE_PLAIN:
            g_sum, h_sum = msg.grad_plain, msg.hess_plain
        else:
            _pk, sk = self.keypair
            codec = self.codecs[self.client_id]
            g_sum = codec.decode(paillier.decrypt(
                sk, paillier.Ciphertext.from_bytes(msg.grad_ct)))
            h_sum = codec.decode(paillier.decrypt(
                sk, paillier.Ciphertext.from_bytes(msg.hess_ct)))
        self._record_eval(msg.node, msg.source, msg.ticket, g_sum, h_sum)

    def _record_eval(self, node: int, source: int, ticket: int,
                     g_sum: float, h_sum: float):
        g_tot, h_tot = self.node_stats_known[node]
        gain = gain_from_sums(g_sum, h_sum, g_tot, h_tot,
                              self.cfg.reg_lambda, self.cfg.gamma)
        self._evals[(node, source, ticket)] = (gain, g_sum, h_sum)
        best = self._best.get(node)
        if best is None or gain > best[0]:
            self._best[node] = (gain, source, ticket)

    def broadcast_local_best(self, node: int):
        best = self._best.get(node)
        if best is None:
            msg = messages.LocalBestGain(node=node, split_client=self.client_id,
                                         has_candidate=False)
        else:
            gain, source, ticket = best
            msg = messages.LocalBestGain(node=node, split_client=self.client_id,
                                         has_candidate=True, gain=gain,
                                         source=source, ticket=ticket)
        self.local_bests.setdefault(node, []).append(msg)
        self.bus.broadcast(self.client_id, msg)

    def _on_local_best(self, msg: messages.LocalBestGain):
        self.local_bests.setdefault(msg.node, []).append(msg)

    def global_winner(self, node: int):
        """Deterministic argmax over the broadcast bests; identical everywhere.

        Positive gain required; ties go to the earliest candidate in the
        global enumeration order (source id, then ticket).
        """
        cands = [(m.gain, m.source, m.ticket, m.split_client)
                 for m in self.local_bests.get(node, ()) if m.has_candidate]
        if not cands:
            return None
        best = max(cands, key=lambda c: (c[0], -c[1], -c[2]))
        if best[0] <= 0.0:
            return None
        return {"gain": best[0], "source": best[1], "ticket": best[2],
                "split_client": best[3]}

    def send_global_winner(self, node: int, source: int, ticket: int):
        self.bus.send(self.client_id, source,
                      messages.GlobalWinner(node=node, source=source, ticket=ticket))

    # -- commit and branches -----------------------------------------------------

    def _on_global_winner(self, msg: messages.GlobalWinner):
        cand = self._cand[(msg.node, msg.ticket)]
        record = len(self.split_table)
        self.split_table.append((cand["feature"], cand["threshold"]))
        node_ids = self.node_ids_known[msg.node]
        left_ids = cand["left_ids"]
        right_ids = np.setdiff1d(node_ids, left_ids, assume_unique=True)
        depth = self.node_depth[msg.node]
        left_leaf = (depth + 1 >= self.cfg.max_depth
                     or left_ids.size < self.cfg.min_child_samples)
        right_leaf = (depth + 1 >= self.cfg.max_depth
                      or right_ids.size < self.cfg.min_child_samples)
        self.committed[record] = {
            "node": msg.node, "feature": cand["feature"],
            "threshold": cand["threshold"], "ticket": msg.ticket,
            "left_ids": left_ids, "right_ids": right_ids,
            "split_client": cand["split_client"],
        }
        commit = messages.RecordCommit(node=msg.node, source=self.client_id,
                                       record=record, ticket=msg.ticket,
                                       left_leaf=left_leaf, right_leaf=right_leaf)
        self.commit_info[msg.node] = commit
        self.commit_by_record[(self.client_id, record)] = msg.node
        self.bus.broadcast(self.client_id, commit)

    def _on_record_commit(self, msg: messages.RecordCommit):
        self.commit_info[msg.node] = msg
        self.commit_by_record[(msg.source, msg.record)] = msg.node

    def branch_stats(self, node: int, source: int, ticket: int,
                     branch: int) -> tuple[float, float]:
        _gain, g_left, h_left = self._evals[(node, source, ticket)]
        if branch == BRANCH_LEFT:
            return g_left, h_left
        g_tot, h_tot = self.node_stats_known[node]
        return g_tot - g_left, h_tot - h_left

    def release_leaf(self, tree: int, parent: int, child: int, source: int,
                     record: int, branch: int, g_sum: float, h_sum: float):
        """Split-client role: weight the leaf, store it, send per-recipient copies.

        The copy to the governing split's source client is perturbed when DP
        is on (that client knows the branch id sets); every other copy is the
        exact weight.
        """
        w = weight_from_sums(g_sum, h_sum, self.cfg.reg_lambda)
        key = (source, record, branch)
        self.leaf_table[key] = w
        for peer in sorted(self.bus.inboxes):
            if peer == self.client_id:
                continue
            if peer == source and self.proto.dp_enabled:
                noisy = perturb_leaf(w, self.proto.dp, self.dp_rng)
                out = messages.LeafRelease(tree=tree, node=child, source=source,
                                           record=record, branch=branch,
                                           value=noisy.value, perturbed=True)
            else:
                out = messages.LeafRelease(tree=tree, node=child, source=source,
                                           record=record, branch=branch,
                                           value=w, perturbed=False)
            self.bus.send(self.client_id, peer, out)
        self._apply_leaf_update(source, record, branch, parent, w)
        return key, w

    def _on_leaf_release(self, msg: messages.LeafRelease):
        if msg.branch == BRANCH_NODE:
            parent = msg.node
        else:
            parent = self.commit_by_record[(msg.source, msg.record)]
        self._apply_leaf_update(msg.source, msg.record, msg.branch, parent,
                                msg.value)

    def _apply_leaf_update(self, source: int, record: int, branch: int,
                           parent: int, value: float):
        ids = self._leaf_member_ids(source, record, branch, parent)
        if ids.size:
            self.raw_pred[ids] += self.cfg.learning_rate * value

    def _leaf_member_ids(self, source, record, branch, parent) -> np.ndarray:
        node_ids = self.node_ids_known[parent]
        own_in_node = node_ids[self.owned_mask[node_ids]]
        if branch == BRANCH_NODE:
            return own_in_node
        if source == self.client_id:
            ids = self.committed[record]["left_ids" if branch == BRANCH_LEFT
                                         else "right_ids"]
            return ids[self.owned_mask[ids]]
        ticket = self.commit_info[parent].ticket
        mine_left = self.proposals.get((parent, source, ticket))
        if mine_left is None:
            mine_left = np.empty(0, dtype=np.int64)
        if branch == BRANCH_LEFT:
            return mine_left
        return np.setdiff1d(own_in_node, mine_left, assume_unique=True)

    def purge_node_state(self, node: int):
        """Drop per-candidate working state once a node is fully resolved."""
        for key in [k for k in self._cand if k[0] == node]:
            del self._cand[key]
        for key in [k for k in self._evals if k[0] == node]:
            del self._evals[key]
        self._best.pop(node, None)

    # -- prediction ----------------------------------------------------------

    def route_decision(self, record: int, row: int) -> int:
        f, v = self.split_table[record]
        return BRANCH_LEFT if self.columns[f][row] < v else BRANCH_RIGHT

    def send_prediction_share(self, query: int, issuer: int, contribution: float,
                              participants: list[int], mask_seed, masked: bool):
        share = int(round(contribution * MASK_SCALE)) % _U64
        if masked and len(participants) > 1:
            for a in participants:
                for b in participants:
                    if a >= b:
                        continue
                    m = _stream(*mask_seed, query, a, b).getrandbits(64)
                    if self.client_id == a:
                        share = (share + m) % _U64
                    elif self.client_id == b:
                        share = (share - m) % _U64
        msg = messages.MaskedShare(query=query, share=share)
        if issuer == self.client_id:
            self._on_masked_share(msg)
        else:
            self.bus.send(self.client_id, issuer, msg)

    def _on_masked_share(self, msg: messages.MaskedShare):
        self._query_acc[msg.query] = (self._query_acc.get(msg.query, 0)
                                      + msg.share) % _U64

    def finish_query(self, query: int) -> float:
        total = self._query_acc.pop(query, 0)
        if total >= _U64 // 2:
            total -= _U64
        return total / MASK_SCALE

    # -- inbox ---------------------------------------------------------------

    def process_inbox(self, limit: int | None = None):
        for env in self.bus.drain(self.client_id, limit):
            msg = env.payload
            self.received_log.append((env.round, env.sender, msg))
            handler = self._DISPATCH.get(type(msg))
            if handler is not None:
                handler(self, msg)

    def _on_key_announce(self, msg: messages.KeyAnnounce):
        self._register_key(paillier.PublicKey.from_bytes(msg.pubkey_blob))

    def _on_label_ids(self, msg: messages.LabelIdAnnounce):
        self.peer_label_ids[msg.client_id] = np.asarray(msg.ids, dtype=np.int64)

    def _on_root_stat(self, msg: messages.EncNodeStat):
        self._root_buf.setdefault(msg.node, []).append(msg)

    def _on_node_stat_plain(self, msg: messages.NodeStatPlain):
        self.node_stats_known[msg.node] = (msg.grad_sum, msg.hess_sum)

    def _on_branch_continue(self, msg: messages.BranchContinue):
        self.node_ids_known[msg.child] = np.asarray(msg.ids, dtype=np.int64)

    def _on_predict_route(self, msg: messages.PredictRoute):
        pass  # the driver collects routing decisions synchronously

    _DISPATCH = {
        messages.KeyAnnounce: _on_key_announce,
        messages.LabelIdAnnounce: _on_label_ids,
        messages.EncNodeStat: _on_root_stat,
        messages.NodeStatPlain: _on_node_stat_plain,
        messages.SplitProposal: _on_split_proposal,
        messages.PartialSumReply: _on_partial_reply,
        messages.EncCandidateSums: _on_enc_candidate,
        messages.LocalBestGain: _on_local_best,
        messages.GlobalWinner: _on_global_winner,
        messages.RecordCommit: _on_record_commit,
        messages.BranchContinue: _on_branch_continue,
        messages.LeafRelease: _on_leaf_release,
        messages.PredictRoute: _on_predict_route,
        messages.MaskedShare: _on_masked_share,
    }


class FederatedTrainer:
    """Deterministic round scheduler composing the secure split sub-protocols."""

    def __init__(self, dataset: Dataset, partition: VerticalPartition,
                 train_cfg: TrainConfig, proto: ProtocolConfig):
        train_cfg.validate()
        if proto.dp is not None:
            proto.dp.validate()
        self.dataset = dataset
        self.partition = partition
        self.cfg = train_cfg
        self.proto = proto
        self.bus = MessageBus()
        self.n_clients = partition.n_clients
        self.train_ids = np.asarray(partition.train_ids, dtype=np.int64)

        _check_label_partition(partition)
        m = dataset.n_samples
        self.clients: dict[int, ClientState] = {}
        for c in range(self.n_clients):
            self.bus.register(c)
            feats = partition.client_features[c]
            cols = {f: dataset.features[:, f] for f in feats}
            owned = partition.client_label_ids[c]
            self.clients[c] = ClientState(
                c, self.bus, m, feats, cols, owned,
                dataset.labels[owned], train_cfg, proto)

        self.ensemble = DistributedEnsemble(
            learning_rate=train_cfg.learning_rate,
            base_prediction=train_cfg.base_prediction, loss=train_cfg.loss)
        self._node_counter = 0
        self._query_counter = 0
        self._setup_done = False

    @property
    def _client_list(self):
        return [self.clients[c] for c in sorted(self.clients)]

    def _new_node(self, depth: int, tree: int) -> int:
        self._node_counter += 1
        for c in self._client_list:
            c.node_depth[self._node_counter] = depth
            c.node_tree[self._node_counter] = tree
        return self._node_counter

    def _step_all(self):
        # barrier: only messages queued before this step are visible during it
        limits = {c.client_id: len(self.bus.inboxes[c.client_id])
                  for c in self._client_list}
        for c in self._client_list:
            c.process_inbox(limits[c.client_id])
        self.bus.advance_round()

    def setup_exchange(self):
        """Key and labeled-id exchange; every client learns every public set."""
        if self.proto.encryption:
            for c in self._client_list:
                c.generate_keys()
            for c in self._client_list:
                c.announce_key()
        for c in self._client_list:
            c.announce_label_ids()
        self._step_all()
        for c in self._client_list:
            c.build_feature_buckets(self.train_ids)
        self._setup_done = True

    def train_ensemble(self) -> DistributedEnsemble:
        if not self._setup_done:
            self.setup_exchange()
        for t in range(self.cfg.n_trees):
            for c in self._client_list:
                c.start_tree()
            root = self._new_node(depth=0, tree=t)
            for c in self._client_list:
                c.node_ids_known[root] = self.train_ids
            enc_client = self._compute_root_aggregate(t, root)
            self.ensemble.trees.append(
                self._split_node(t, root, depth=0, stat_holder=enc_client))
        return self.ensemble

    def _compute_root_aggregate(self, tree: int, node: int) -> int:
        roles = _stream(self.proto.seed, "rootroles", tree)
        ids = sorted(self.clients)
        if self.n_clients == 1:
            agg = enc = ids[0]
        else:
            agg, enc = roles.sample(ids, 2)
        for c in self._client_list:
            c.send_root_stat(node, enc_key_owner=enc, agg_client=agg)
        self._step_all()
        self.clients[agg].finish_root_aggregate(node, enc, expected=self.n_clients)
        if agg != enc:
            self._step_all()  # deliver the summed stat to the encryption client
            buf = self.clients[enc]._root_buf.pop(node)
            self.clients[enc].decrypt_and_broadcast_stats(buf[-1])
        self._step_all()  # deliver the plaintext broadcast
        return enc

    def _assign_split_clients(self, node: int) -> dict[int, int]:
        rng = _stream(self.proto.seed, "roles", node)
        ids = sorted(self.clients)
        out = {}
        for source in ids:
            others = [c for c in ids if c != source]
            out[source] = rng.choice(others) if others else source
        return out

    def _split_node(self, tree: int, node: int, depth: int,
                    stat_holder: int) -> SharedTreeNode:
        assignments = self._assign_split_clients(node)
        peers = sorted(self.clients)

        for source in peers:
            sc = source if self.proto.weakened else assignments[source]
            self.clients[source].propose_node_splits(
                node, split_client=sc, peers=[p for p in peers if p != source])
        self._step_all()  # proposals -> replies
        self._step_all()  # replies -> aggregated candidate sums
        if self.n_clients == 1:
            self.clients[peers[0]].flush_lone_candidates(node)
        self._step_all()  # candidate sums -> split-client evaluations

        evaluators = peers if self.proto.weakened else sorted(set(assignments.values()))
        for sc in evaluators:
            self.clients[sc].broadcast_local_best(node)
        self._step_all()

        winner = self.clients[peers[0]].global_winner(node)
        if winner is None:
            shared = self._close_as_leaf(tree, node, depth, stat_holder)
            self._purge_node(node)
            return shared

        source, ticket = winner["source"], winner["ticket"]
        sc = source if self.proto.weakened else assignments[source]
        self.clients[sc].send_global_winner(node, source, ticket)
        self.clients[source].process_inbox()  # commit + broadcast
        self._step_all()

        commit = self.clients[source].commit_info[node]
        record = commit.record
        shared = SharedTreeNode(node_id=node, tree=tree, depth=depth,
                                owner=(source, record))
        src_state = self.clients[source]
        branches = (
            (BRANCH_LEFT, commit.left_leaf,
             src_state.committed[record]["left_ids"]),
            (BRANCH_RIGHT, commit.right_leaf,
             src_state.committed[record]["right_ids"]),
        )
        for branch, is_leaf, branch_ids in branches:
            child = self._new_node(depth=depth + 1, tree=tree)
            g_sum, h_sum = self.clients[sc].branch_stats(node, source, ticket,
                                                         branch)
            if is_leaf:
                key, _w = self.clients[sc].release_leaf(
                    tree, parent=node, child=child, source=source, record=record,
                    branch=branch, g_sum=g_sum, h_sum=h_sum)
                self._step_all()
                child_node = SharedTreeNode(node_id=child, tree=tree,
                                            depth=depth + 1, leaf_holder=sc,
                                            leaf_key=key)
            else:
                self.bus.broadcast(source, messages.BranchContinue(
                    node=node, child=child, branch=branch, ids=branch_ids))
                self.clients[source].node_ids_known[child] = branch_ids
                self.bus.broadcast(sc, messages.NodeStatPlain(
                    node=child, grad_sum=g_sum, hess_sum=h_sum))
                self.clients[sc].node_stats_known[child] = (g_sum, h_sum)
                self._step_all()
                child_node = self._split_node(tree, child, depth + 1,
                                              stat_holder=sc)
            if branch == BRANCH_LEFT:
                shared.left = child_node
            else:
                shared.right = child_node
        self._purge_node(node)
        return shared

    def _purge_node(self, node: int):
        if self.proto.weakened:
            return  # attack demos inspect per-candidate state afterwards
        for c in self._client_list:
            c.purge_node_state(node)

    def _close_as_leaf(self, tree: int, node: int, depth: int,
                       stat_holder: int) -> SharedTreeNode:
        """No positive-gain candidate: the node itself becomes a leaf.

        Its statistics and member ids are already public (broadcast when the
        node was opened), so every copy is exact: there is no governing split
        whose source holds private branch sets to protect against.
        """
        holder = self.clients[stat_holder]
        g_sum, h_sum = holder.node_stats_known[node]
        w = weight_from_sums(g_sum, h_sum, self.cfg.reg_lambda)
        key = (-1, node, BRANCH_NODE)
        holder.leaf_table[key] = w
        for peer in sorted(self.clients):
            if peer == stat_holder:
                continue
            self.bus.send(stat_holder, peer, messages.LeafRelease(
                tree=tree, node=node, source=-1, record=-1,
                branch=BRANCH_NODE, value=w, perturbed=False))
        holder._apply_leaf_update(-1, -1, BRANCH_NODE, node, w)
        self._step_all()
        return SharedTreeNode(node_id=node, tree=tree, depth=depth,
                              leaf_holder=stat_holder, leaf_key=key)

    # -- prediction ----------------------------------------------------------

    def predict_raw_instance(self, row: int, issuer: int = 0,
                             masking: bool | None = None) -> float:
        """Route one aligned row through every tree, then combine the leaf
        holders' contributions with pairwise additive masking (exact in fixed
        point, so masked and unmasked paths agree bit for bit)."""
        if masking is None:
            masking = self.proto.masking
        query = self._query_counter
        self._query_counter += 1
        contributions: dict[int, float] = {}
        prev = issuer
        for t, root in enumerate(self.ensemble.trees):
            nd = root
            while not nd.is_leaf:
                owner, record = nd.owner
                self.bus.send(prev, owner, messages.PredictRoute(
                    query=query, tree=t, node=nd.node_id))
                prev = owner
                branch = self.clients[owner].route_decision(record, row)
                nd = nd.left if branch == BRANCH_LEFT else nd.right
            holder = nd.leaf_holder
            w = self.clients[holder].leaf_table[nd.leaf_key]
            contributions[holder] = (contributions.get(holder, 0.0)
                                     + self.ensemble.learning_rate * w)
        participants = sorted(contributions)
        for c in participants:
            self.clients[c].send_prediction_share(
                query, issuer, contributions[c], participants,
                mask_seed=(self.proto.seed, "mask"), masked=masking)
        for c in self._client_list:
            c.process_inbox()
        if not participants:
            return self.ensemble.base_prediction
        return self.ensemble.base_prediction + self.clients[issuer].finish_query(query)

    def predict_output(self, row: int, **kw) -> float:
        raw = self.predict_raw_instance(row, **kw)
        if self.cfg.loss == gbdt.LOGISTIC:
            return float(gbdt.sigmoid(raw))
        return raw

    def gather_train_predictions(self) -> np.ndarray:
        """Evaluation-only: collect each owner's accumulated raw predictions."""
        out = np.full(self.dataset.n_samples, np.nan)
        for c in self._client_list:
            out[c.label_ids] = c.raw_pred[c.label_ids]
        return out


def _check_label_partition(partition: VerticalPartition):
    seen = np.concatenate([partition.client_label_ids[c]
                           for c in sorted(partition.client_label_ids)])
    if len(np.unique(seen)) != len(seen):
        raise ValueError("label ownership overlaps: a sample has two owners")
    if not np.array_equal(np.sort(seen), np.sort(partition.train_ids)):
        raise ValueError("label ownership does not cover the training ids")


def train_ensemble(dataset: Dataset, partition: VerticalPartition,
                   train_cfg: TrainConfig, proto: ProtocolConfig) -> FederatedTrainer:
    """Run setup and full training; the returned trainer carries the ensemble,
    the client states, and the bus (metrics and transcript)."""
    trainer = FederatedTrainer(dataset, partition, train_cfg, proto)
    trainer.setup_exchange()
    trainer.train_ensemble()
    return trainer
