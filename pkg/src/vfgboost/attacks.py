"""Honest-but-curious inference attacks over protocol transcripts.

Attackers never deviate from the protocol; each attack consumes an
`AttackerView` built from exactly what one client legitimately holds: its
received messages, its own lookup table and committed branch id sets, and the
broadcast node knowledge.  Three attacks are implemented:

* gradient inversion: a known per-sample gradient plus the public previous
  prediction reveals a binary label directly;
* differential attack: two plaintext candidate sums over id sets differing in
  a single sample expose that sample's gradient by subtraction (only possible
  on the deliberately weakened protocol variant, where sums return to the
  candidate owner in plaintext);
* label-guess attack: ensemble every leaf value the attacker can bind to a
  foreign sample, squash, and threshold at 0.5.

Guess accuracy is reported under both denominators (samples with evidence,
and all foreign samples) and both averaging conventions (per-client and
pooled per-sample), since protection claims depend on which is chosen.
"""

from dataclasses import dataclass, field

import numpy as np

from .gbdt import sigmoid
from .messages import BRANCH_LEFT, BRANCH_NODE, LeafRelease
from .protocol import ClientState, FederatedTrainer


@dataclass
class AttackerView:
    """Everything one honest-but-curious client can post-process."""
    client_id: int
    n_samples: int
    received: list
    own_label_ids: np.ndarray
    committed: dict
    node_ids_known: dict
    node_stats_known: dict
    node_tree: dict
    candidate_ids: dict  # (node, ticket) -> full left-id set of own candidates
    candidate_sums: dict  # (node, ticket) -> grad sum this client evaluated itself

    @classmethod
    def from_client(cls, state: ClientState) -> "AttackerView":
        cand_ids = {key: c["left_ids"] for key, c in state._cand.items()}
        cand_sums = {(n, t): g for (n, s, t), (_gain, g, _h)
                     in state._evals.items() if s == state.client_id}
        return cls(client_id=state.client_id,
                   n_samples=state.owned_mask.size,
                   received=list(state.received_log),
                   own_label_ids=state.label_ids,
                   committed=state.committed,
                   node_ids_known=dict(state.node_ids_known),
                   node_stats_known=dict(state.node_stats_known),
                   node_tree=dict(state.node_tree),
                   candidate_ids=cand_ids,
                   candidate_sums=cand_sums)


@dataclass
class AttackReport:
    attacker_id: int
    n_foreign: int
    n_evidenced: int
    n_correct: int
    guesses: dict = field(default_factory=dict)

    @property
    def accuracy_evidenced(self) -> float | None:
        """Correct fraction over foreign samples the attacker saw evidence for."""
        if self.n_evidenced == 0:
            return None
        return self.n_correct / self.n_evidenced

    @property
    def accuracy_all_foreign(self) -> float:
        """Correct fraction over every foreign sample; unseen samples count
        as failures, so this is coverage times conditional accuracy."""
        if self.n_foreign == 0:
            return 0.0
        return self.n_correct / self.n_foreign


def invert_gradient(g: float, prev_prob: float) -> int:
    """Recover a binary label from its logistic gradient: y = p - g."""
    return min(1, max(0, round(prev_prob - g)))


def label_guess_attack(view: AttackerView, learning_rate: float,
                       base_prediction: float,
                       true_labels: np.ndarray) -> AttackReport:
    """Ensemble the leaf values the attacker can bind to foreign samples.

    Binding requires knowing a leaf's member ids: the attacker knows them when
    it was the source of the governing split (it receives the possibly
    perturbed copy), or when the leaf was released with both stats and ids
    already public.  `true_labels` is the evaluation oracle only.
    """
    scores = np.zeros(view.n_samples, dtype=np.float64)
    evidenced = np.zeros(view.n_samples, dtype=bool)
    for _round, _sender, msg in view.received:
        if not isinstance(msg, LeafRelease):
            continue
        if msg.branch == BRANCH_NODE:
            ids = view.node_ids_known.get(msg.node)
        elif msg.source == view.client_id:
            entry = view.committed.get(msg.record)
            if entry is None:
                continue
            ids = entry["left_ids" if msg.branch == BRANCH_LEFT else "right_ids"]
        else:
            ids = None  # only the local labeled intersection is known
        if ids is None or len(ids) == 0:
            continue
        scores[ids] += learning_rate * msg.value
        evidenced[ids] = True

    foreign = np.ones(view.n_samples, dtype=bool)
    foreign[view.own_label_ids] = False
    labeled = ~np.isnan(true_labels)
    foreign &= labeled

    target = foreign & evidenced
    guesses = {}
    correct = 0
    for i in np.flatnonzero(target):
        guess = int(sigmoid(base_prediction + scores[i]) > 0.5)
        guesses[int(i)] = guess
        if guess == int(true_labels[i]):
            correct += 1
    return AttackReport(attacker_id=view.client_id,
                        n_foreign=int(foreign.sum()),
                        n_evidenced=int(target.sum()),
                        n_correct=correct,
                        guesses=guesses)


def differential_attack(view: AttackerView, mode: str = "adjacent-splits"):
    """Difference plaintext sums over id sets that differ in one sample.

    `adjacent-splits` pairs the attacker's own candidates (it needs both the
    full id sets and the plaintext totals, which coexist only under the
    weakened variant).  `parent-child` pairs broadcast node-level statistics
    whose id sets are public.  Returns [(tree, sample_id, gradient), ...].
    """
    if mode == "adjacent-splits":
        return _adjacent_split_attack(view)
    if mode == "parent-child":
        return _parent_child_attack(view)
    raise ValueError("unknown differential attack mode %r" % mode)


def _adjacent_split_attack(view: AttackerView):
    by_node: dict[int, list] = {}
    for (node, ticket), g_sum in view.candidate_sums.items():
        ids = view.candidate_ids.get((node, ticket))
        if ids is None:
            continue
        by_node.setdefault(node, []).append((ticket, frozenset(int(i) for i in ids),
                                             g_sum))
    out = []
    seen = set()
    for node, cands in sorted(by_node.items()):
        tree = view.node_tree.get(node)
        cands.sort()
        for i, (_ta, ids_a, g_a) in enumerate(cands):
            for _tb, ids_b, g_b in cands[i + 1:]:
                big, small, g_big, g_small = ((ids_a, ids_b, g_a, g_b)
                                              if len(ids_a) >= len(ids_b)
                                              else (ids_b, ids_a, g_b, g_a))
                if small <= big and len(big) - len(small) == 1:
                    (sid,) = big - small
                    if (tree, sid) not in seen:
                        seen.add((tree, sid))
                        out.append((tree, sid, g_big - g_small))
    return out


def _parent_child_attack(view: AttackerView):
    nodes = [n for n in view.node_stats_known if n in view.node_ids_known]
    out = []
    seen = set()
    for a in sorted(nodes):
        ids_a = view.node_ids_known[a]
        set_a = frozenset(int(i) for i in ids_a)
        for b in sorted(nodes):
            if a == b or view.node_tree.get(a) != view.node_tree.get(b):
                continue
            ids_b = view.node_ids_known[b]
            if len(ids_b) != len(ids_a) - 1:
                continue
            set_b = frozenset(int(i) for i in ids_b)
            if set_b <= set_a:
                (sid,) = set_a - set_b
                tree = view.node_tree.get(a)
                if (tree, sid) not in seen:
                    seen.add((tree, sid))
                    out.append((tree, sid,
                                view.node_stats_known[a][0]
                                - view.node_stats_known[b][0]))
    return out


def run_label_guess_attacks(trainer: FederatedTrainer,
                            true_labels: np.ndarray) -> list[AttackReport]:
    """One report per client over a finished training run."""
    reports = []
    for cid in sorted(trainer.clients):
        view = AttackerView.from_client(trainer.clients[cid])
        reports.append(label_guess_attack(
            view, trainer.cfg.learning_rate, trainer.cfg.base_prediction,
            true_labels))
    return reports


def summarize_reports(reports: list[AttackReport]) -> dict:
    """Both averaging conventions: per-client mean and pooled per-sample."""
    per_client_all = [r.accuracy_all_foreign for r in reports]
    per_client_ev = [r.accuracy_evidenced for r in reports
                     if r.accuracy_evidenced is not None]
    total_correct = sum(r.n_correct for r in reports)
    total_ev = sum(r.n_evidenced for r in reports)
    total_foreign = sum(r.n_foreign for r in reports)
    return {
        "mean_client_accuracy_all_foreign": float(np.mean(per_client_all))
            if per_client_all else 0.0,
        "mean_client_accuracy_evidenced": float(np.mean(per_client_ev))
            if per_client_ev else None,
        "pooled_accuracy_all_foreign": total_correct / total_foreign
            if total_foreign else 0.0,
        "pooled_accuracy_evidenced": total_correct / total_ev
            if total_ev else None,
        "total_evidenced": total_ev,
        "total_foreign": total_foreign,
    }
