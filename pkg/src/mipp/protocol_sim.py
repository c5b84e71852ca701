"""Deterministic simulation of the owner / user / cloud / KMC workflow.

Setup: each owner extracts features, encrypts images and features, uploads
them to the cloud (step 1) and deposits its image key at the KMC (step 2).
A query session then runs steps 3..7: encrypted query to the cloud, fresh
user key to the KMC, encrypted results from cloud to KMC, re-encrypted
results back to the cloud, and final delivery to the user, who decrypts,
re-extracts features locally and sorts by plaintext Euclidean distance.

All actors live in one process, but every hop serializes the message to the
canonical wire format and parses it back before the recipient acts, so a
socket transport can be dropped in without touching actor logic.  Every
random choice derives from the world seed, making transcripts byte-identical
across runs.
"""

from __future__ import annotations

import enum
import hashlib
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import feature_crypto
from .cloud_node import CloudNode, QueryEnvelope
from .ehd_features import DEFAULT_CONFIG, EhdConfig, extract_ehd
from .feature_crypto import EncryptedFeature
from .group_crypto import GroupParams
from .image_cipher import image_dec, image_enc, keygen
from .kmc_node import KmcNode
from .rng import ByteStream, derive_seed

SESSION_ID_BYTES = 16


class DecodeError(ValueError):
    """Malformed wire bytes; ``offset`` points at the failing position."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class MessageKind(enum.IntEnum):
    OWNER_UPLOAD = 1
    OWNER_KEY_DEPOSIT = 2
    USER_QUERY = 3
    USER_KEY_DEPOSIT = 4
    CLOUD_TO_KMC = 5
    KMC_TO_CLOUD = 6
    CLOUD_TO_USER = 7


@dataclass(frozen=True)
class OwnerUpload:
    owner_id: str
    aul: tuple[tuple[str, bytes], ...]
    images: tuple[tuple[str, np.ndarray, EncryptedFeature], ...]


@dataclass(frozen=True)
class OwnerKeyDeposit:
    owner_id: str
    sk: bytes


@dataclass(frozen=True)
class UserQuery:
    uid: str
    ak: bytes
    h: int
    eq: EncryptedFeature


@dataclass(frozen=True)
class UserKeyDeposit:
    uid: str
    usk: bytes


@dataclass(frozen=True)
class CloudToKmc:
    uid: str
    ak: bytes
    results: tuple[tuple[str, str, np.ndarray], ...]


@dataclass(frozen=True)
class KmcToCloud:
    uid: str
    results: tuple[tuple[str, str, np.ndarray], ...]


@dataclass(frozen=True)
class CloudToUser:
    uid: str
    results: tuple[tuple[str, str, np.ndarray], ...]


_PAYLOAD_TYPES = {
    MessageKind.OWNER_UPLOAD: OwnerUpload,
    MessageKind.OWNER_KEY_DEPOSIT: OwnerKeyDeposit,
    MessageKind.USER_QUERY: UserQuery,
    MessageKind.USER_KEY_DEPOSIT: UserKeyDeposit,
    MessageKind.CLOUD_TO_KMC: CloudToKmc,
    MessageKind.KMC_TO_CLOUD: KmcToCloud,
    MessageKind.CLOUD_TO_USER: CloudToUser,
}


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    session: bytes
    payload: object

    def __post_init__(self):
        if len(self.session) != SESSION_ID_BYTES:
            raise ValueError(f"session id must be {SESSION_ID_BYTES} bytes")
        expected = _PAYLOAD_TYPES[self.kind]
        if not isinstance(self.payload, expected):
            raise TypeError(
                f"{self.kind.name} payload must be {expected.__name__}"
            )


# -- wire encoding -----------------------------------------------------------
#
# Frame: u32 length of the rest, u8 kind, 16-byte session id, body.
# Strings are u16-length utf-8; byte blobs u32-length; big integers
# u16-length big-endian magnitudes; images u32 height, u32 width, raw
# pixels.  Encoding is canonical: equal messages encode byte-identically
# (the sole set-valued field, the AUL, is sorted).


def _w_str(out: bytearray, s: str) -> None:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError("string field too long")
    out += struct.pack(">H", len(raw)) + raw


def _w_bytes(out: bytearray, b: bytes) -> None:
    out += struct.pack(">I", len(b)) + b


def _w_bigint(out: bytearray, value: int) -> None:
    if value < 0:
        raise ValueError("negative integers not supported on the wire")
    raw = value.to_bytes((value.bit_length() + 7) // 8, "big") if value else b""
    if len(raw) > 0xFFFF:
        raise ValueError("integer field too long")
    out += struct.pack(">H", len(raw)) + raw


def _w_image(out: bytearray, img: np.ndarray) -> None:
    arr = np.asarray(img)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise ValueError("wire images must be 2-D uint8 arrays")
    out += struct.pack(">II", arr.shape[0], arr.shape[1])
    out += arr.tobytes()


def _w_feature(out: bytearray, f: EncryptedFeature) -> None:
    _w_str(out, f.params_id)
    out += struct.pack(">H", f.dims)
    for c in f.ef:
        _w_bigint(out, c)
    for c in f.eff:
        _w_bigint(out, c)


def _w_results(out: bytearray, results) -> None:
    out += struct.pack(">I", len(results))
    for owner_id, image_id, img in results:
        _w_str(out, owner_id)
        _w_str(out, image_id)
        _w_image(out, img)


class _Reader:
    def __init__(self, data: bytes, offset: int = 0):
        self.data = data
        self.offset = offset

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise DecodeError(f"need {n} bytes", self.offset)
        out = self.data[self.offset : self.offset + n]
        self.offset += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def r_str(self) -> str:
        n = self.u16()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise DecodeError("invalid utf-8 in string field", self.offset) from None

    def r_bytes(self) -> bytes:
        return self.take(self.u32())

    def r_bigint(self) -> int:
        return int.from_bytes(self.take(self.u16()), "big")

    def r_image(self) -> np.ndarray:
        m, n = self.u32(), self.u32()
        if m == 0 or n == 0 or m * n > 1 << 30:
            raise DecodeError(f"implausible image shape {m}x{n}", self.offset)
        raw = self.take(m * n)
        return np.frombuffer(raw, dtype=np.uint8).reshape(m, n).copy()

    def r_feature(self) -> EncryptedFeature:
        params_id = self.r_str()
        dims = self.u16()
        ef = tuple(self.r_bigint() for _ in range(dims))
        eff = tuple(self.r_bigint() for _ in range(dims))
        try:
            return EncryptedFeature(ef=ef, eff=eff, params_id=params_id)
        except ValueError as exc:
            raise DecodeError(str(exc), self.offset) from None

    def r_results(self) -> tuple[tuple[str, str, np.ndarray], ...]:
        count = self.u32()
        if count > 1 << 20:
            raise DecodeError(f"implausible result count {count}", self.offset)
        return tuple(
            (self.r_str(), self.r_str(), self.r_image()) for _ in range(count)
        )


def encode_message(m: Message) -> bytes:
    body = bytearray()
    p = m.payload
    if isinstance(p, OwnerUpload):
        _w_str(body, p.owner_id)
        entries = sorted((uid, bytes(ak)) for uid, ak in p.aul)
        body += struct.pack(">I", len(entries))
        for uid, ak in entries:
            _w_str(body, uid)
            _w_bytes(body, ak)
        body += struct.pack(">I", len(p.images))
        for image_id, img, feature in p.images:
            _w_str(body, image_id)
            _w_image(body, img)
            _w_feature(body, feature)
    elif isinstance(p, OwnerKeyDeposit):
        _w_str(body, p.owner_id)
        _w_bytes(body, p.sk)
    elif isinstance(p, UserQuery):
        _w_str(body, p.uid)
        _w_bytes(body, p.ak)
        body += struct.pack(">I", p.h)
        _w_feature(body, p.eq)
    elif isinstance(p, UserKeyDeposit):
        _w_str(body, p.uid)
        _w_bytes(body, p.usk)
    elif isinstance(p, CloudToKmc):
        _w_str(body, p.uid)
        _w_bytes(body, p.ak)
        _w_results(body, p.results)
    elif isinstance(p, (KmcToCloud, CloudToUser)):
        _w_str(body, p.uid)
        _w_results(body, p.results)
    else:
        raise TypeError(f"unknown payload {type(p).__name__}")

    frame = bytearray()
    frame += struct.pack(">I", 1 + SESSION_ID_BYTES + len(body))
    frame += struct.pack(">B", int(m.kind))
    frame += m.session
    frame += body
    return bytes(frame)


def decode_message(data: bytes) -> Message:
    reader = _Reader(data)
    length = reader.u32()
    if length != len(data) - 4:
        raise DecodeError(
            f"frame length {length} != {len(data) - 4} available", 0
        )
    kind_value = reader.u8()
    try:
        kind = MessageKind(kind_value)
    except ValueError:
        raise DecodeError(f"unknown message kind {kind_value}", 4) from None
    session = reader.take(SESSION_ID_BYTES)

    if kind is MessageKind.OWNER_UPLOAD:
        owner_id = reader.r_str()
        aul = tuple(
            (reader.r_str(), reader.r_bytes()) for _ in range(reader.u32())
        )
        images = tuple(
            (reader.r_str(), reader.r_image(), reader.r_feature())
            for _ in range(reader.u32())
        )
        payload: object = OwnerUpload(owner_id=owner_id, aul=aul, images=images)
    elif kind is MessageKind.OWNER_KEY_DEPOSIT:
        payload = OwnerKeyDeposit(owner_id=reader.r_str(), sk=reader.r_bytes())
    elif kind is MessageKind.USER_QUERY:
        payload = UserQuery(
            uid=reader.r_str(),
            ak=reader.r_bytes(),
            h=reader.u32(),
            eq=reader.r_feature(),
        )
    elif kind is MessageKind.USER_KEY_DEPOSIT:
        payload = UserKeyDeposit(uid=reader.r_str(), usk=reader.r_bytes())
    elif kind is MessageKind.CLOUD_TO_KMC:
        payload = CloudToKmc(
            uid=reader.r_str(), ak=reader.r_bytes(), results=reader.r_results()
        )
    elif kind is MessageKind.KMC_TO_CLOUD:
        payload = KmcToCloud(uid=reader.r_str(), results=reader.r_results())
    else:
        payload = CloudToUser(uid=reader.r_str(), results=reader.r_results())

    if reader.offset != len(data):
        raise DecodeError("trailing bytes after message body", reader.offset)
    return Message(kind=kind, session=session, payload=payload)


# -- transcripts ---------------------------------------------------------------


@dataclass(frozen=True)
class TranscriptEntry:
    step: int
    kind: str
    session: str
    n_bytes: int
    digest: str

    def line(self) -> str:
        return (
            f"{self.step} {self.kind} session={self.session} "
            f"bytes={self.n_bytes} sha256={self.digest}"
        )


@dataclass
class SessionTranscript:
    entries: list[TranscriptEntry] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def record(self, step: int, message_bytes: bytes, kind: MessageKind, session: bytes) -> None:
        self.entries.append(
            TranscriptEntry(
                step=step,
                kind=kind.name,
                session=session.hex(),
                n_bytes=len(message_bytes),
                digest=hashlib.sha256(message_bytes).hexdigest()[:16],
            )
        )

    def note(self, text: str) -> None:
        self.notes.append(text)

    def steps(self) -> list[int]:
        return [e.step for e in self.entries]

    def to_text(self) -> str:
        lines = [e.line() for e in self.entries]
        lines += [f"! {n}" for n in self.notes]
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text())


# -- actors and the world ------------------------------------------------------


@dataclass
class OwnerActor:
    owner_id: str
    sk: bytes
    plain_images: dict[str, np.ndarray]
    plain_features: dict[str, np.ndarray]


@dataclass
class UserActor:
    uid: str
    ak: bytes
    sessions_run: int = 0


@dataclass
class SessionResult:
    session: str
    authorized: bool
    transcript: SessionTranscript
    returned: list[tuple[str, str]]
    images: dict[tuple[str, str], np.ndarray]
    user_ranking: list[tuple[str, str]]


class World:
    """One cloud, one KMC, any number of owners and users.

    ``max_image_pixels`` fixes the keystream length for every actor, so a
    user key deposited at step 4 is guaranteed to cover whatever result
    images arrive at step 7.
    """

    def __init__(
        self,
        params: GroupParams,
        seed: bytes | str,
        top_h: int = 100,
        max_image_pixels: int = 256 * 256,
        ehd_cfg: EhdConfig = DEFAULT_CONFIG,
    ):
        self.params = params
        self.seed = seed
        self.top_h = top_h
        self.max_image_pixels = max_image_pixels
        self.ehd_cfg = ehd_cfg
        self.cloud = CloudNode(params)
        self.kmc = KmcNode(known_owners=[], known_users=[])
        self.owners: dict[str, OwnerActor] = {}
        self.users: dict[str, UserActor] = {}
        self.setup_transcript = SessionTranscript()
        self._lock = threading.Lock()

    # -- population ------------------------------------------------------

    def add_user(self, uid: str) -> UserActor:
        if uid in self.users:
            raise ValueError(f"user {uid!r} already exists")
        ak = ByteStream(derive_seed(self.seed, f"ak:{uid}")).take(32)
        actor = UserActor(uid=uid, ak=ak)
        self.users[uid] = actor
        self.kmc.register_user_id(uid)
        return actor

    def add_owner(
        self,
        owner_id: str,
        images: Sequence[tuple[str, np.ndarray]],
        authorize: Iterable[str] = (),
    ) -> OwnerActor:
        """Run steps 1 and 2 for one owner."""
        if owner_id in self.owners:
            raise ValueError(f"owner {owner_id!r} already exists")
        for _, img in images:
            if img.size > self.max_image_pixels:
                raise ValueError(
                    f"image larger than the {self.max_image_pixels}-pixel "
                    "keystream budget"
                )
        sk = keygen(
            128, self.max_image_pixels, derive_seed(self.seed, f"owner-sk:{owner_id}")
        )
        plain_images: dict[str, np.ndarray] = {}
        plain_features: dict[str, np.ndarray] = {}
        uploads = []
        for image_id, img in images:
            feature = extract_ehd(img, self.ehd_cfg)
            enc = feature_crypto.encrypt_feature_pair(
                self.params,
                feature,
                derive_seed(self.seed, f"feature:{owner_id}:{image_id}"),
            )
            uploads.append((image_id, image_enc(sk, img), enc))
            plain_images[image_id] = img
            plain_features[image_id] = feature

        aul = tuple(sorted((uid, self.users[uid].ak) for uid in authorize))
        setup_session = ByteStream(
            derive_seed(self.seed, f"setup:{owner_id}")
        ).take(SESSION_ID_BYTES)

        upload = Message(
            kind=MessageKind.OWNER_UPLOAD,
            session=setup_session,
            payload=OwnerUpload(owner_id=owner_id, aul=aul, images=tuple(uploads)),
        )
        self._send(1, upload, self.setup_transcript, self._on_owner_upload)

        deposit = Message(
            kind=MessageKind.OWNER_KEY_DEPOSIT,
            session=setup_session,
            payload=OwnerKeyDeposit(owner_id=owner_id, sk=sk),
        )
        self.kmc.register_owner_id(owner_id)
        self._send(2, deposit, self.setup_transcript, self._on_owner_key)

        actor = OwnerActor(
            owner_id=owner_id,
            sk=sk,
            plain_images=plain_images,
            plain_features=plain_features,
        )
        self.owners[owner_id] = actor
        return actor

    # -- query sessions ----------------------------------------------------

    def run_session(
        self, uid: str, query_image: np.ndarray, h: int | None = None
    ) -> SessionResult:
        """Run steps 3..7 for one query; aborts after a failed verification.

        Sessions of distinct users may run concurrently; everything random
        derives from (world seed, uid, per-user ordinal), so results do not
        depend on scheduling.
        """
        user = self.users[uid]
        h = self.top_h if h is None else h
        with self._lock:
            ordinal = user.sessions_run
            user.sessions_run += 1
        session = ByteStream(
            derive_seed(self.seed, f"session:{uid}:{ordinal}")
        ).take(SESSION_ID_BYTES)
        transcript = SessionTranscript()

        query_feature = extract_ehd(query_image, self.ehd_cfg)
        eq = feature_crypto.encrypt_feature_pair(
            self.params,
            query_feature,
            derive_seed(self.seed, f"query-feature:{uid}:{ordinal}"),
        )
        usk = keygen(
            128,
            self.max_image_pixels,
            derive_seed(self.seed, f"usk:{uid}:{ordinal}"),
        )

        query_msg = Message(
            kind=MessageKind.USER_QUERY,
            session=session,
            payload=UserQuery(uid=uid, ak=user.ak, h=h, eq=eq),
        )
        envelope = self._send(3, query_msg, transcript, self._on_user_query)

        key_msg = Message(
            kind=MessageKind.USER_KEY_DEPOSIT,
            session=session,
            payload=UserKeyDeposit(uid=uid, usk=usk),
        )
        self._send(
            4,
            key_msg,
            transcript,
            lambda m: self.kmc.store_user_key(m.payload.uid, m.payload.usk,
                                              session.hex()),
        )

        if not self.cloud.verify_user(envelope.uid, envelope.ak):
            transcript.note(f"authorization failed for uid={uid}")
            self.kmc.drop_user_key(uid)
            return SessionResult(
                session=session.hex(),
                authorized=False,
                transcript=transcript,
                returned=[],
                images={},
                user_ranking=[],
            )

        retrieved = self.cloud.retrieve_top_h(envelope)
        er = tuple((r.owner_id, r.image_id, r.enc_image) for r in retrieved)

        to_kmc = Message(
            kind=MessageKind.CLOUD_TO_KMC,
            session=session,
            payload=CloudToKmc(uid=uid, ak=user.ak, results=er),
        )
        ner = self._send(
            5,
            to_kmc,
            transcript,
            lambda m: tuple(
                self.kmc.reencrypt_results(
                    list(m.payload.results), m.payload.uid, session.hex()
                )
            ),
        )

        to_cloud = Message(
            kind=MessageKind.KMC_TO_CLOUD,
            session=session,
            payload=KmcToCloud(uid=uid, results=ner),
        )
        forwarded = self._send(6, to_cloud, transcript, lambda m: m.payload.results)

        to_user = Message(
            kind=MessageKind.CLOUD_TO_USER,
            session=session,
            payload=CloudToUser(uid=uid, results=forwarded),
        )
        delivered = self._send(7, to_user, transcript, lambda m: m.payload.results)

        images: dict[tuple[str, str], np.ndarray] = {}
        ranked: list[tuple[int, str, str]] = []
        for owner_id, image_id, enc_img in delivered:
            plain = image_dec(usk, enc_img)
            images[(owner_id, image_id)] = plain
            local = extract_ehd(plain, self.ehd_cfg)
            gap = int(((local - query_feature) ** 2).sum())
            ranked.append((gap, owner_id, image_id))
        ranked.sort()

        return SessionResult(
            session=session.hex(),
            authorized=True,
            transcript=transcript,
            returned=[(o, i) for o, i, _ in er],
            images=images,
            user_ranking=[(o, i) for _, o, i in ranked],
        )

    # -- message handlers --------------------------------------------------

    def _send(
        self,
        step: int,
        message: Message,
        transcript: SessionTranscript,
        handler: Callable[[Message], object],
    ):
        data = encode_message(message)
        transcript.record(step, data, message.kind, message.session)
        return handler(decode_message(data))

    def _on_owner_upload(self, m: Message) -> None:
        p = m.payload
        self.cloud.register_owner(p.owner_id, p.aul, p.images)

    def _on_owner_key(self, m: Message) -> None:
        self.kmc.store_owner_key(m.payload.owner_id, m.payload.sk)

    def _on_user_query(self, m: Message) -> QueryEnvelope:
        p = m.payload
        return QueryEnvelope(eq=p.eq, uid=p.uid, ak=p.ak, h=p.h)


def scan_cloud_for_plaintext(world: World) -> list[str]:
    """Compare the cloud's observable state against every owner plaintext.

    Returns findings; an empty list means no plaintext image bytes and no
    plaintext feature vectors are visible cloud-side.
    """
    findings = []
    plain_blobs = {
        (oid, iid): actor.plain_images[iid].tobytes()
        for oid, actor in world.owners.items()
        for iid in actor.plain_images
    }
    for oid, record in ((o, world.cloud.owner_record(o)) for o in world.cloud.owner_ids):
        for iid, stored in record.images.items():
            blob = stored.enc_image.tobytes()
            for key, plain in plain_blobs.items():
                if blob == plain:
                    findings.append(f"stored image {oid}/{iid} equals plaintext {key}")
        actor = world.owners.get(oid)
        if actor is None:
            continue
        for iid, stored in record.images.items():
            feature = actor.plain_features.get(iid)
            if feature is None:
                continue
            as_ints = tuple(int(v) for v in feature)
            if stored.feature.ef == as_ints or stored.feature.eff == as_ints:
                findings.append(f"stored feature {oid}/{iid} equals plaintext")
    return findings
