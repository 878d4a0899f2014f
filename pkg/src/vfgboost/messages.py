"""Wire schema for every message the protocol puts on the simulated network.

Each kind has a stable one-byte tag followed by little-endian length-prefixed
fields.  Sample-id lists travel as u32 arrays; ciphertexts are embedded
pre-serialized (big-endian, padded to the full Z_{n^2} width) so plaintext and
encrypted runs meter comparable, honest byte counts.  `to_bytes`/`from_bytes`
round-trip every kind; the in-process bus hands receivers the original object
and meters len(to_bytes()).
"""

import struct
from dataclasses import dataclass, field

import numpy as np

# Payload modes for candidate statistics.
MODE_REJECT = 0
MODE_ENCRYPTED = 1
MODE_PLAIN = 2

# Branch codes in commits and releases.
BRANCH_LEFT = 0
BRANCH_RIGHT = 1
BRANCH_NODE = 2  # a node that became a leaf without splitting


def _u8(v):
    return struct.pack("<B", v)


def _u16(v):
    return struct.pack("<H", v)


def _u32(v):
    return struct.pack("<I", v)


def _i32(v):
    return struct.pack("<i", v)


def _u64(v):
    return struct.pack("<Q", v)


def _f64(v):
    return struct.pack("<d", v)


def _blob(b: bytes) -> bytes:
    return _u32(len(b)) + b


def _ids(arr) -> bytes:
    a = np.asarray(arr, dtype=np.uint32)
    return _u32(a.size) + a.astype("<u4").tobytes()


class _Reader:
    def __init__(self, raw: bytes, off: int = 0):
        self.raw = raw
        self.off = off

    def _take(self, fmt: str):
        v = struct.unpack_from(fmt, self.raw, self.off)[0]
        self.off += struct.calcsize(fmt)
        return v

    def u8(self):
        return self._take("<B")

    def u16(self):
        return self._take("<H")

    def u32(self):
        return self._take("<I")

    def i32(self):
        return self._take("<i")

    def u64(self):
        return self._take("<Q")

    def f64(self):
        return self._take("<d")

    def blob(self) -> bytes:
        n = self.u32()
        b = self.raw[self.off : self.off + n]
        self.off += n
        return b

    def ids(self) -> np.ndarray:
        n = self.u32()
        a = np.frombuffer(self.raw, dtype="<u4", count=n, offset=self.off)
        self.off += 4 * n
        return a.astype(np.uint32)


_REGISTRY: dict = {}


def register(cls):
    _REGISTRY[cls.KIND] = cls
    return cls


def from_bytes(raw: bytes):
    kind = raw[0]
    cls = _REGISTRY.get(kind)
    if cls is None:
        raise ValueError("unknown message tag %d" % kind)
    return cls._decode(_Reader(raw, 1))


@register
@dataclass
class KeyAnnounce:
    KIND = 1
    client_id: int
    pubkey_blob: bytes

    def to_bytes(self):
        return _u8(self.KIND) + _u16(self.client_id) + _blob(self.pubkey_blob)

    @classmethod
    def _decode(cls, r):
        return cls(client_id=r.u16(), pubkey_blob=r.blob())


@register
@dataclass(eq=False)
class LabelIdAnnounce:
    KIND = 2
    client_id: int
    ids: np.ndarray

    def to_bytes(self):
        return _u8(self.KIND) + _u16(self.client_id) + _ids(self.ids)

    @classmethod
    def _decode(cls, r):
        return cls(client_id=r.u16(), ids=r.ids())


@register
@dataclass
class EncNodeStat:
    KIND = 3
    node: int
    mode: int
    grad_ct: bytes = b""
    hess_ct: bytes = b""
    grad_plain: float = 0.0
    hess_plain: float = 0.0

    def to_bytes(self):
        return (_u8(self.KIND) + _u32(self.node) + _u8(self.mode)
                + _blob(self.grad_ct) + _blob(self.hess_ct)
                + _f64(self.grad_plain) + _f64(self.hess_plain))

    @classmethod
    def _decode(cls, r):
        return cls(node=r.u32(), mode=r.u8(), grad_ct=r.blob(), hess_ct=r.blob(),
                   grad_plain=r.f64(), hess_plain=r.f64())


@register
@dataclass
class NodeStatPlain:
    KIND = 4
    node: int
    grad_sum: float
    hess_sum: float

    def to_bytes(self):
        return (_u8(self.KIND) + _u32(self.node)
                + _f64(self.grad_sum) + _f64(self.hess_sum))

    @classmethod
    def _decode(cls, r):
        return cls(node=r.u32(), grad_sum=r.f64(), hess_sum=r.f64())


@register
@dataclass(eq=False)
class SplitProposal:
    KIND = 5
    node: int
    source: int
    ticket: int
    split_client: int
    ids: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint32))

    def to_bytes(self):
        return (_u8(self.KIND) + _u32(self.node) + _u16(self.source)
                + _u32(self.ticket) + _u16(self.split_client) + _ids(self.ids))

    @classmethod
    def _decode(cls, r):
        return cls(node=r.u32(), source=r.u16(), ticket=r.u32(),
                   split_client=r.u16(), ids=r.ids())


@register
@dataclass
class PartialSumReply:
    KIND = 6
    node: int
    source: int
    ticket: int
    mode: int
    grad_ct: bytes = b""
    hess_ct: bytes = b""
    grad_plain: float = 0.0
    hess_plain: float = 0.0

    @property
    def accepted(self) -> bool:
        return self.mode != MODE_REJECT

    def to_bytes(self):
        return (_u8(self.KIND) + _u32(self.node) + _u16(self.source)
                + _u32(self.ticket) + _u8(self.mode)
                + _blob(self.grad_ct) + _blob(self.hess_ct)
                + _f64(self.grad_plain) + _f64(self.hess_plain))

    @classmethod
    def _decode(cls, r):
        return cls(node=r.u32(), source=r.u16(), ticket=r.u32(), mode=r.u8(),
                   grad_ct=r.blob(), hess_ct=r.blob(),
                   grad_plain=r.f64(), hess_plain=r.f64())


@register
@dataclass
class EncCandidateSums:
    KIND = 7
    node: int
    source: int
    ticket: int
    mode: int
    grad_ct: bytes = b""
    hess_ct: bytes = b""
    grad_plain: float = 0.0
    hess_plain: float = 0.0

    def to_bytes(self):
        return (_u8(self.KIND) + _u32(self.node) + _u16(self.source)
                + _u32(self.ticket) + _u8(self.mode)
                + _blob(self.grad_ct) + _blob(self.hess_ct)
                + _f64(self.grad_plain) + _f64(self.hess_plain))

    @classmethod
    def _decode(cls, r):
        return cls(node=r.u32(), source=r.u16(), ticket=r.u32(), mode=r.u8(),
                   grad_ct=r.blob(), hess_ct=r.blob(),
                   grad_plain=r.f64(), hess_plain=r.f64())


@register
@dataclass
class LocalBestGain:
    KIND = 8
    node: int
    split_client: int
    has_candidate: bool
    gain: float = 0.0
    source: int = 0
    ticket: int = 0

    def to_bytes(self):
        return (_u8(self.KIND) + _u32(self.node) + _u16(self.split_client)
                + _u8(int(self.has_candidate)) + _f64(self.gain)
                + _u16(self.source) + _u32(self.ticket))

    @classmethod
    def _decode(cls, r):
        return cls(node=r.u32(), split_client=r.u16(),
                   has_candidate=bool(r.u8()), gain=r.f64(),
                   source=r.u16(), ticket=r.u32())


@register
@dataclass
class GlobalWinner:
    KIND = 9
    node: int
    source: int
    ticket: int

    def to_bytes(self):
        return (_u8(self.KIND) + _u32(self.node) + _u16(self.source)
                + _u32(self.ticket))

    @classmethod
    def _decode(cls, r):
        return cls(node=r.u32(), source=r.u16(), ticket=r.u32())


@register
@dataclass
class RecordCommit:
    KIND = 10
    node: int
    source: int
    record: int
    ticket: int
    left_leaf: bool
    right_leaf: bool

    def to_bytes(self):
        return (_u8(self.KIND) + _u32(self.node) + _u16(self.source)
                + _u32(self.record) + _u32(self.ticket)
                + _u8(int(self.left_leaf)) + _u8(int(self.right_leaf)))

    @classmethod
    def _decode(cls, r):
        return cls(node=r.u32(), source=r.u16(), record=r.u32(), ticket=r.u32(),
                   left_leaf=bool(r.u8()), right_leaf=bool(r.u8()))


@register
@dataclass(eq=False)
class BranchContinue:
    KIND = 11
    node: int
    child: int
    branch: int
    ids: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint32))

    def to_bytes(self):
        return (_u8(self.KIND) + _u32(self.node) + _u32(self.child)
                + _u8(self.branch) + _ids(self.ids))

    @classmethod
    def _decode(cls, r):
        return cls(node=r.u32(), child=r.u32(), branch=r.u8(), ids=r.ids())


@register
@dataclass
class LeafRelease:
    KIND = 12
    tree: int
    node: int
    source: int  # -1 when the leaf has no governing split (source-less)
    record: int  # -1 likewise
    branch: int
    value: float
    perturbed: bool

    def to_bytes(self):
        return (_u8(self.KIND) + _u16(self.tree) + _u32(self.node)
                + _i32(self.source) + _i32(self.record) + _u8(self.branch)
                + _f64(self.value) + _u8(int(self.perturbed)))

    @classmethod
    def _decode(cls, r):
        return cls(tree=r.u16(), node=r.u32(), source=r.i32(), record=r.i32(),
                   branch=r.u8(), value=r.f64(), perturbed=bool(r.u8()))


@register
@dataclass
class PredictRoute:
    KIND = 13
    query: int
    tree: int
    node: int

    def to_bytes(self):
        return _u8(self.KIND) + _u32(self.query) + _u16(self.tree) + _u32(self.node)

    @classmethod
    def _decode(cls, r):
        return cls(query=r.u32(), tree=r.u16(), node=r.u32())


@register
@dataclass
class MaskedShare:
    KIND = 14
    query: int
    share: int  # masked fixed-point contribution, u64 ring

    def to_bytes(self):
        return _u8(self.KIND) + _u32(self.query) + _u64(self.share)

    @classmethod
    def _decode(cls, r):
        return cls(query=r.u32(), share=r.u64())


KIND_NAMES = {cls.KIND: cls.__name__ for cls in _REGISTRY.values()}
ALL_KINDS = tuple(sorted(_REGISTRY))
