"""Honest-but-curious cloud: encrypted storage, retrieval index, top-h search.

The cloud stores encrypted images and encrypted features per owner, plus an
authorized-user list per owner.  At registration it aggregates each feature
pair once and keeps the recovered sums (s1, s2) in the retrieval index; this
is the scheme's deliberate leakage surface (the cloud learns per-image sums,
nothing entrywise).  Queries are scored against index rows with exact
integer keys; the slower path that re-aggregates ciphertexts per query is
kept only for benchmark comparison.

Readers work over an immutable index snapshot; registration and updates
take an exclusive lock and atomically publish a new snapshot, so no
retrieval ever observes a half-applied update.
"""

from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import feature_crypto
from .feature_crypto import EncryptedFeature
from .group_crypto import GroupParams
from .image_cipher import read_pgm, write_pgm
from .similarity import CorruptedSumsError, SumPair, rank_key

INDEX_HEADER = "owner_id\timage_id\ts1\ts2"
MANIFEST_HEADER = "MIPP-OWNER-1"

_SAFE_ID = re.compile(r"^[A-Za-z0-9_.-]+$")


class CloudError(Exception):
    """Base class for cloud-side failures."""


class DuplicateOwnerError(CloudError):
    pass


class DuplicateImageError(CloudError):
    pass


class UnknownOwnerError(CloudError):
    pass


class OwnershipError(CloudError):
    """Image id does not belong to the requesting owner."""


class AuthorizationError(CloudError):
    """Query user not present in any owner's authorized-user list."""


@dataclass(frozen=True)
class IndexEntry:
    """One retrieval-index row: owner, image, and the two recovered sums.

    ``dims`` is the feature dimension, carried in memory because scoring
    needs it; the on-disk table keeps only the four columns.
    """

    owner_id: str
    image_id: str
    s1: int
    s2: int
    dims: int

    def sum_pair(self) -> SumPair:
        return SumPair(s1=self.s1, s2=self.s2, l=self.dims)


@dataclass(frozen=True)
class StoredImage:
    enc_image: np.ndarray
    feature: EncryptedFeature


@dataclass
class OwnerRecord:
    owner_id: str
    aul: frozenset[tuple[str, bytes]]
    images: dict[str, StoredImage] = field(default_factory=dict)


@dataclass(frozen=True)
class QueryEnvelope:
    """Encrypted query as received by the cloud."""

    eq: EncryptedFeature
    uid: str
    ak: bytes
    h: int = 100

    def __post_init__(self):
        if self.h < 1:
            raise ValueError("result count h must be >= 1")


@dataclass(frozen=True)
class RetrievalResult:
    owner_id: str
    image_id: str
    enc_image: np.ndarray
    distance: float


@dataclass(frozen=True)
class AddImages:
    items: tuple[tuple[str, np.ndarray, EncryptedFeature], ...]


@dataclass(frozen=True)
class DeleteImages:
    image_ids: tuple[str, ...]


@dataclass(frozen=True)
class UpdateImages:
    """Re-encrypted replacements; index rows stay untouched by design."""

    items: tuple[tuple[str, np.ndarray, EncryptedFeature], ...]


def _check_id(value: str, what: str) -> str:
    if not _SAFE_ID.match(value):
        raise ValueError(f"{what} {value!r} must match {_SAFE_ID.pattern}")
    return value


class CloudNode:
    """Stores encrypted data for many owners and answers top-h queries."""

    def __init__(self, params: GroupParams):
        self.params = params
        self._owners: dict[str, OwnerRecord] = {}
        self._rows: dict[tuple[str, str], IndexEntry] = {}
        self._index: tuple[IndexEntry, ...] = ()
        self._lock = threading.Lock()

    @property
    def index(self) -> tuple[IndexEntry, ...]:
        return self._index

    @property
    def owner_ids(self) -> tuple[str, ...]:
        return tuple(self._owners)

    def owner_record(self, owner_id: str) -> OwnerRecord:
        try:
            return self._owners[owner_id]
        except KeyError:
            raise UnknownOwnerError(owner_id) from None

    def register_owner(
        self,
        owner_id: str,
        aul: Iterable[tuple[str, bytes]],
        images: Sequence[tuple[str, np.ndarray, EncryptedFeature]],
    ) -> int:
        """Store a new owner's uploads and index them; returns rows added."""
        _check_id(owner_id, "owner id")
        with self._lock:
            if owner_id in self._owners:
                raise DuplicateOwnerError(owner_id)
            record = OwnerRecord(
                owner_id=owner_id,
                aul=frozenset((uid, bytes(ak)) for uid, ak in aul),
            )
            new_rows = {}
            for image_id, enc_image, feature in images:
                _check_id(image_id, "image id")
                if image_id in record.images:
                    raise DuplicateImageError(f"{owner_id}/{image_id}")
                record.images[image_id] = StoredImage(enc_image, feature)
                new_rows[(owner_id, image_id)] = self._make_row(
                    owner_id, image_id, feature
                )
            self._owners[owner_id] = record
            self._rows.update(new_rows)
            self._publish()
            return len(new_rows)

    def verify_user(self, uid: str, ak: bytes) -> set[str]:
        """Owners whose authorized-user list contains (uid, ak)."""
        token = (uid, bytes(ak))
        return {oid for oid, rec in self._owners.items() if token in rec.aul}

    def retrieve_top_h(
        self, q: QueryEnvelope, use_index: bool = True
    ) -> list[RetrievalResult]:
        """Rank all authorized images by encrypted-domain distance.

        The query sums are recovered once; with ``use_index`` each row costs
        a handful of integer operations, without it every stored ciphertext
        pair is re-aggregated.  Both paths return identical rankings.
        """
        authorized = self.verify_user(q.uid, q.ak)
        if not authorized:
            raise AuthorizationError(f"user {q.uid!r} matches no owner's list")
        qs1, qs2 = feature_crypto.recover_sums(self.params, q.eq)
        query = SumPair(s1=qs1, s2=qs2, l=q.eq.dims)

        snapshot = self._index
        scored: list[tuple[int, str, str]] = []
        if use_index:
            for entry in snapshot:
                if entry.owner_id in authorized:
                    key = rank_key(query, entry.sum_pair())
                    scored.append((key, entry.owner_id, entry.image_id))
        else:
            for entry in snapshot:
                if entry.owner_id not in authorized:
                    continue
                stored = self._owners[entry.owner_id].images[entry.image_id]
                s1, s2 = feature_crypto.recover_sums(self.params, stored.feature)
                key = rank_key(query, SumPair(s1=s1, s2=s2, l=stored.feature.dims))
                scored.append((key, entry.owner_id, entry.image_id))

        scored.sort()
        results = []
        for key, owner_id, image_id in scored[: q.h]:
            stored = self._owners[owner_id].images[image_id]
            results.append(
                RetrievalResult(
                    owner_id=owner_id,
                    image_id=image_id,
                    enc_image=stored.enc_image,
                    distance=math.sqrt(key / query.l),
                )
            )
        return results

    def apply_update(
        self, owner_id: str, command: AddImages | DeleteImages | UpdateImages
    ) -> None:
        """Apply an owner's add / delete / update command atomically."""
        with self._lock:
            record = self.owner_record(owner_id)
            if isinstance(command, AddImages):
                staged = {}
                for image_id, enc_image, feature in command.items:
                    _check_id(image_id, "image id")
                    if image_id in record.images or image_id in staged:
                        raise DuplicateImageError(f"{owner_id}/{image_id}")
                    staged[image_id] = StoredImage(enc_image, feature)
                for image_id, stored in staged.items():
                    record.images[image_id] = stored
                    self._rows[(owner_id, image_id)] = self._make_row(
                        owner_id, image_id, stored.feature
                    )
            elif isinstance(command, DeleteImages):
                self._require_owned(record, command.image_ids)
                for image_id in command.image_ids:
                    del record.images[image_id]
                    del self._rows[(owner_id, image_id)]
            elif isinstance(command, UpdateImages):
                self._require_owned(record, [iid for iid, _, _ in command.items])
                for image_id, enc_image, feature in command.items:
                    record.images[image_id] = StoredImage(enc_image, feature)
                    # recovered sums are invariant under re-encryption, so
                    # the existing index row is already correct
            else:
                raise TypeError(f"unknown update command {type(command).__name__}")
            self._publish()

    def check_consistency(self) -> None:
        """Assert the index and the stored images describe each other."""
        stored = {
            (oid, iid) for oid, rec in self._owners.items() for iid in rec.images
        }
        indexed = set(self._rows)
        if stored != indexed:
            raise CloudError(
                f"index out of sync: {sorted(stored ^ indexed)[:5]} ..."
            )

    def _require_owned(self, record: OwnerRecord, image_ids: Iterable[str]) -> None:
        for image_id in image_ids:
            if image_id not in record.images:
                raise OwnershipError(f"{record.owner_id} does not own {image_id!r}")

    def _make_row(
        self, owner_id: str, image_id: str, feature: EncryptedFeature
    ) -> IndexEntry:
        s1, s2 = feature_crypto.recover_sums(self.params, feature)
        entry = IndexEntry(
            owner_id=owner_id, image_id=image_id, s1=s1, s2=s2, dims=feature.dims
        )
        if not entry.sum_pair().is_consistent():
            raise CorruptedSumsError(
                f"sums for {owner_id}/{image_id} violate Cauchy-Schwarz"
            )
        return entry

    def _publish(self) -> None:
        self._index = tuple(self._rows[key] for key in sorted(self._rows))

    # -- on-disk layout ----------------------------------------------------

    def save_store(self, root: str | Path) -> None:
        """Persist owners/<OID>/{manifest,img,feat} plus index.tsv.

        The owners subtree is rewritten from scratch so deletions do not
        leave stale files behind.
        """
        import shutil

        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        if (root / "owners").exists():
            shutil.rmtree(root / "owners")
        lines = [INDEX_HEADER]
        for entry in self._index:
            lines.append(
                f"{entry.owner_id}\t{entry.image_id}\t{entry.s1}\t{entry.s2}"
            )
        (root / "index.tsv").write_text("\n".join(lines) + "\n")

        for owner_id, record in sorted(self._owners.items()):
            base = root / "owners" / owner_id
            (base / "img").mkdir(parents=True, exist_ok=True)
            (base / "feat").mkdir(parents=True, exist_ok=True)
            manifest = [MANIFEST_HEADER, owner_id]
            for uid, ak in sorted(record.aul):
                manifest.append(f"{uid}\t{ak.hex()}")
            (base / "manifest").write_text("\n".join(manifest) + "\n")
            for image_id, stored in sorted(record.images.items()):
                write_pgm(base / "img" / f"{image_id}.pgm", stored.enc_image,
                          encrypted=True)
                (base / "feat" / f"{image_id}.eft").write_text(
                    feature_crypto.feature_to_text(stored.feature)
                )

    @classmethod
    def load_store(cls, root: str | Path, params: GroupParams) -> "CloudNode":
        root = Path(root)
        node = cls(params)
        index_lines = (root / "index.tsv").read_text().strip().splitlines()
        if not index_lines or index_lines[0] != INDEX_HEADER:
            raise ValueError("index.tsv missing or malformed header")

        owners_dir = root / "owners"
        for base in sorted(owners_dir.iterdir()) if owners_dir.is_dir() else []:
            manifest = (base / "manifest").read_text().strip().splitlines()
            if len(manifest) < 2 or manifest[0] != MANIFEST_HEADER:
                raise ValueError(f"{base}: malformed manifest")
            owner_id = manifest[1]
            aul = frozenset(
                (ln.split("\t")[0], bytes.fromhex(ln.split("\t")[1]))
                for ln in manifest[2:]
            )
            record = OwnerRecord(owner_id=owner_id, aul=aul)
            for pgm in sorted((base / "img").glob("*.pgm")):
                image_id = pgm.stem
                enc_image, _ = read_pgm(pgm)
                feature = feature_crypto.feature_from_text(
                    (base / "feat" / f"{image_id}.eft").read_text()
                )
                record.images[image_id] = StoredImage(enc_image, feature)
            node._owners[owner_id] = record

        for ln in index_lines[1:]:
            owner_id, image_id, s1, s2 = ln.split("\t")
            stored = node.owner_record(owner_id).images.get(image_id)
            if stored is None:
                raise CloudError(f"index row {owner_id}/{image_id} has no image")
            node._rows[(owner_id, image_id)] = IndexEntry(
                owner_id=owner_id,
                image_id=image_id,
                s1=int(s1),
                s2=int(s2),
                dims=stored.feature.dims,
            )
        node._publish()
        node.check_consistency()
        return node
