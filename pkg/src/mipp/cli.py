"""Command-line front end.

Subcommands: gen-params, ingest, query, eval, leakage, bench, update.
``ingest`` builds an on-disk store (public parameters, the cloud's owner
directories and index table, the KMC vault, and one authorized user's
credentials); ``query`` and ``update`` operate on such a store; ``eval``,
``leakage`` and ``bench`` reproduce the accuracy, leakage-distribution and
efficiency experiments, on the built-in synthetic corpus unless a corpus
directory is given.  Reports are TSV on stdout, mirrored to ``--out``.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import evaluation, feature_crypto, group_crypto
from .cloud_node import AddImages, CloudNode, DeleteImages, QueryEnvelope, UpdateImages
from .ehd_features import extract_ehd
from .image_cipher import image_dec, image_enc, keygen, read_pgm, write_pgm
from .kmc_node import KmcNode
from .rng import derive_seed

USERS_HEADER = "uid\tak_hex"


def _emit(text: str, out: str | None) -> None:
    sys.stdout.write(text)
    if out:
        Path(out).write_text(text)


def _load_store(store: Path):
    params = group_crypto.load_params(store / "params.txt")
    cloud = CloudNode.load_store(store / "cloud", params)
    kmc = KmcNode.load_vault(store / "vault")
    users = {}
    lines = (store / "users.tsv").read_text().strip().splitlines()
    if not lines or lines[0] != USERS_HEADER:
        raise ValueError("users.tsv missing or malformed")
    for ln in lines[1:]:
        uid, ak_hex = ln.split("\t")
        users[uid] = bytes.fromhex(ak_hex)
    return params, cloud, kmc, users


def _next_session(store: Path) -> int:
    counter_file = store / "session.counter"
    value = int(counter_file.read_text()) if counter_file.exists() else 0
    counter_file.write_text(str(value + 1))
    return value


def _max_stored_pixels(cloud: CloudNode) -> int:
    sizes = [
        stored.enc_image.size
        for oid in cloud.owner_ids
        for stored in cloud.owner_record(oid).images.values()
    ]
    if not sizes:
        raise ValueError("store holds no images")
    return max(sizes)


def cmd_gen_params(args) -> int:
    params = group_crypto.gen_group_params(args.bits, args.seed.encode())
    group_crypto.save_params(params, args.out)
    print(f"wrote {args.out} (p: {params.p.bit_length()} bits, "
          f"q: {params.q.bit_length()} bits, id {params.params_id})")
    return 0


def cmd_ingest(args) -> int:
    store = Path(args.store)
    seed = args.seed.encode()
    corpus = evaluation.load_corpus(args.corpus, owners=args.owners)
    if not corpus.items:
        print("nothing to ingest", file=sys.stderr)
        return 1
    if args.params:
        params = group_crypto.load_params(args.params)
    else:
        params = group_crypto.gen_group_params(
            evaluation.DESK_SECURITY_BITS, derive_seed(seed, b"params")
        )

    cloud = CloudNode(params)
    kmc = KmcNode()
    ak = derive_seed(seed, f"ak:{args.user}")
    max_pixels = max(item.image.size for item in corpus.items)
    for owner_id, items in sorted(corpus.by_owner().items()):
        sk = keygen(128, max_pixels, derive_seed(seed, f"owner-sk:{owner_id}"))
        uploads = []
        for item in items:
            feature = extract_ehd(item.image)
            enc = feature_crypto.encrypt_feature_pair(
                params, feature, derive_seed(seed, f"feature:{item.item_id}")
            )
            uploads.append((item.item_id, image_enc(sk, item.image), enc))
        cloud.register_owner(owner_id, [(args.user, ak)], uploads)
        kmc.store_owner_key(owner_id, sk)

    store.mkdir(parents=True, exist_ok=True)
    group_crypto.save_params(params, store / "params.txt")
    cloud.save_store(store / "cloud")
    kmc.save_vault(store / "vault")
    (store / "users.tsv").write_text(
        f"{USERS_HEADER}\n{args.user}\t{ak.hex()}\n"
    )
    print(f"ingested {len(corpus.items)} images from "
          f"{len(corpus.categories)} categories into {store} "
          f"({args.owners} owners, index rows: {len(cloud.index)})")
    return 0


def cmd_query(args) -> int:
    store = Path(args.store)
    params, cloud, kmc, users = _load_store(store)
    uid, ak = next(iter(users.items()))
    seed = args.seed.encode()
    ordinal = _next_session(store)

    image, _ = read_pgm(args.image)
    feature = extract_ehd(image)
    eq = feature_crypto.encrypt_feature_pair(
        params, feature, derive_seed(seed, f"query:{ordinal}")
    )
    usk = keygen(
        128, _max_stored_pixels(cloud), derive_seed(seed, f"usk:{uid}:{ordinal}")
    )
    session = f"cli-{ordinal}"
    kmc.store_user_key(uid, usk, session)

    results = cloud.retrieve_top_h(QueryEnvelope(eq=eq, uid=uid, ak=ak, h=args.top_h))
    ner = kmc.reencrypt_results(
        [(r.owner_id, r.image_id, r.enc_image) for r in results], uid, session
    )

    ranked = []
    for (owner_id, image_id, enc_img), result in zip(ner, results):
        plain = image_dec(usk, enc_img)
        gap = int(((extract_ehd(plain) - feature) ** 2).sum())
        ranked.append((gap, owner_id, image_id, result.distance, plain))
    ranked.sort(key=lambda row: row[:3])

    lines = ["user_rank\towner_id\timage_id\tcloud_distance\tlocal_euclidean"]
    for rank, (gap, owner_id, image_id, cloud_dist, plain) in enumerate(ranked, 1):
        lines.append(
            f"{rank}\t{owner_id}\t{image_id}\t{cloud_dist:.4f}\t{gap ** 0.5:.4f}"
        )
        if args.save_images:
            out_dir = Path(args.save_images)
            out_dir.mkdir(parents=True, exist_ok=True)
            write_pgm(out_dir / f"{rank:03d}_{owner_id}_{image_id}.pgm", plain)
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def _eval_inputs(args):
    seed = args.seed.encode()
    if args.corpus:
        corpus = evaluation.load_corpus(args.corpus, owners=args.owners)
        corpus, queries = evaluation.split_queries(corpus, args.queries_per_category)
    else:
        spec = evaluation.SynthSpec()
        corpus = evaluation.synth_corpus(spec, owners=args.owners,
                                         seed=derive_seed(seed, b"corpus"))
        queries = evaluation.synth_queries(spec, args.queries_per_category,
                                           seed=derive_seed(seed, b"queries"))
    params = group_crypto.gen_group_params(
        evaluation.DESK_SECURITY_BITS, derive_seed(seed, b"params")
    )
    outcomes = evaluation.run_retrieval_experiment(
        corpus, queries, params, seed=derive_seed(seed, b"experiment"),
        h=args.top_h, parallel=args.parallel,
    )
    return corpus, outcomes


def cmd_eval(args) -> int:
    corpus, outcomes = _eval_inputs(args)
    cutoffs = [c for c in (10, 20, 50, 100) if c <= args.top_h]
    reports = evaluation.experiment_metrics(outcomes, corpus.labels(), cutoffs)
    _emit(evaluation.metrics_tsv(reports), args.out)
    return 0


def cmd_leakage(args) -> int:
    _, outcomes = _eval_inputs(args)
    histogram = evaluation.leakage_histogram(outcomes, deciles=args.deciles)
    _emit(evaluation.leakage_tsv(histogram), args.out)
    return 0


def cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    params = group_crypto.load_params(args.params) if args.params else None
    report = evaluation.bench(
        sizes,
        modes=tuple(args.modes.split(",")) if args.modes else evaluation.BENCH_MODES,
        params=params,
        seed=args.seed.encode(),
        reps=args.reps,
    )
    text = evaluation.bench_tsv(report)
    if not report.rankings_match:
        text += "WARNING: encrypted retrieval paths disagreed on rankings\n"
    _emit(text, args.out)
    return 0 if report.rankings_match else 1


def cmd_update(args) -> int:
    store = Path(args.store)
    params, cloud, kmc, _ = _load_store(store)
    seed = args.seed.encode()
    sk = kmc.owner_key(args.owner)

    if args.add:
        items = []
        for path in sorted(Path(args.add).glob("*.pgm")):
            image, _ = read_pgm(path)
            feature = extract_ehd(image)
            enc = feature_crypto.encrypt_feature_pair(
                params, feature, derive_seed(seed, f"add:{path.stem}")
            )
            items.append((path.stem, image_enc(sk, image), enc))
        cloud.apply_update(args.owner, AddImages(tuple(items)))
        print(f"added {len(items)} images to {args.owner}")
    elif args.delete:
        ids = tuple(args.delete.split(","))
        cloud.apply_update(args.owner, DeleteImages(ids))
        print(f"deleted {len(ids)} images from {args.owner}")
    else:
        ids = tuple(args.reencrypt.split(","))
        record = cloud.owner_record(args.owner)
        ordinal = _next_session(store)
        before = cloud.index
        items = []
        for image_id in ids:
            stored = record.images[image_id]
            plain = image_dec(sk, stored.enc_image)
            feature = extract_ehd(plain)
            enc = feature_crypto.encrypt_feature_pair(
                params, feature,
                derive_seed(seed, f"reenc:{ordinal}:{image_id}"),
            )
            items.append((image_id, stored.enc_image, enc))
        cloud.apply_update(args.owner, UpdateImages(tuple(items)))
        unchanged = cloud.index == before
        print(f"re-encrypted {len(ids)} features for {args.owner}; "
              f"index rows unchanged: {unchanged}")
        if not unchanged:
            return 1

    cloud.check_consistency()
    cloud.save_store(store / "cloud")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mipp",
        description="multi-owner encrypted image storage and retrieval toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-params", help="generate public group parameters")
    p.add_argument("--bits", type=int, default=evaluation.DESK_SECURITY_BITS)
    p.add_argument("--seed", default="mipp")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_params)

    p = sub.add_parser("ingest", help="encrypt a corpus into an on-disk store")
    p.add_argument("--corpus", required=True, help="directory of category subdirs")
    p.add_argument("--store", required=True)
    p.add_argument("--params", help="existing parameter file (default: generate)")
    p.add_argument("--owners", type=int, default=3)
    p.add_argument("--seed", default="mipp")
    p.add_argument("--user", default="user-1", help="authorized query user id")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("query", help="run one retrieval against a store")
    p.add_argument("--store", required=True)
    p.add_argument("--image", required=True, help="query image (PGM)")
    p.add_argument("--top-h", type=int, default=100)
    p.add_argument("--seed", default="mipp")
    p.add_argument("--out")
    p.add_argument("--save-images", help="directory for decrypted results")
    p.set_defaults(func=cmd_query)

    for name, fn, extra in (
        ("eval", cmd_eval, "retrieval-quality metrics"),
        ("leakage", cmd_leakage, "rank-position distribution of true matches"),
    ):
        p = sub.add_parser(name, help=extra)
        p.add_argument("--corpus", help="PGM corpus (default: synthetic)")
        p.add_argument("--owners", type=int, default=3)
        p.add_argument("--seed", default="mipp")
        p.add_argument("--top-h", type=int, default=100)
        p.add_argument("--queries-per-category", type=int, default=5)
        p.add_argument("--parallel", action="store_true")
        p.add_argument("--out")
        if name == "leakage":
            p.add_argument("--deciles", type=int, default=10)
        p.set_defaults(func=fn)

    p = sub.add_parser("bench", help="timing and storage benchmarks")
    p.add_argument("--sizes", default="100,1000,10000")
    p.add_argument("--modes", help="comma-separated subset of bench modes")
    p.add_argument("--params", help="parameter file (default: generate)")
    p.add_argument("--seed", default="mipp")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("update", help="add, delete or re-encrypt stored images")
    p.add_argument("--store", required=True)
    p.add_argument("--owner", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--add", help="directory of plaintext PGMs to add")
    group.add_argument("--delete", help="comma-separated image ids")
    group.add_argument("--reencrypt", help="comma-separated image ids")
    p.add_argument("--seed", default="mipp")
    p.set_defaults(func=cmd_update)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
