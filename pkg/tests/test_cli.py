import numpy as np
import pytest

from mipp.cli import main
from mipp.evaluation import SynthSpec, synth_corpus, write_corpus
from mipp.group_crypto import load_params
from mipp.image_cipher import read_pgm, write_pgm

TINY = SynthSpec(categories=4, per_category=8)


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    write_corpus(synth_corpus(TINY, owners=2, seed=b"cli"), root)
    return root


@pytest.fixture(scope="module")
def store_dir(tmp_path_factory, corpus_dir):
    store = tmp_path_factory.mktemp("stores") / "store"
    rc = main([
        "ingest", "--corpus", str(corpus_dir), "--store", str(store),
        "--owners", "2", "--seed", "cli-test",
    ])
    assert rc == 0
    return store


def test_gen_params(tmp_path, capsys):
    out = tmp_path / "params.txt"
    assert main(["gen-params", "--bits", "32", "--seed", "x", "--out", str(out)]) == 0
    params = load_params(out)
    assert params.q.bit_length() == 32
    assert "wrote" in capsys.readouterr().out


def test_ingest_store_layout(store_dir):
    assert (store_dir / "params.txt").exists()
    assert (store_dir / "cloud" / "index.tsv").exists()
    assert (store_dir / "vault").exists()
    users = (store_dir / "users.tsv").read_text().strip().splitlines()
    assert users[0] == "uid\tak_hex"
    assert users[1].startswith("user-1\t")
    index_rows = (store_dir / "cloud" / "index.tsv").read_text().strip().splitlines()
    assert len(index_rows) == 1 + 32  # header + 4 categories x 8 images


def test_query_roundtrip(store_dir, corpus_dir, tmp_path, capsys):
    query_image = sorted((corpus_dir / "cat00").glob("*.pgm"))[0]
    out = tmp_path / "results.tsv"
    saved = tmp_path / "decrypted"
    rc = main([
        "query", "--store", str(store_dir), "--image", str(query_image),
        "--top-h", "5", "--seed", "cli-q", "--out", str(out),
        "--save-images", str(saved),
    ])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "user_rank\towner_id\timage_id\tcloud_distance\tlocal_euclidean"
    assert len(lines) == 6
    # the stored copy of the query image decrypts bit-exactly and leads the
    # user's local ranking
    best = lines[1].split("\t")
    assert best[2] == "cat00_000"
    original, _ = read_pgm(query_image)
    decrypted, _ = read_pgm(sorted(saved.glob("001_*.pgm"))[0])
    assert np.array_equal(decrypted, original)


def test_update_add_delete_reencrypt(store_dir, tmp_path, capsys):
    new_dir = tmp_path / "new"
    new_dir.mkdir()
    rng = np.random.default_rng(5)
    for i in range(2):
        write_pgm(new_dir / f"extra-{i}.pgm",
                  rng.integers(0, 256, size=(64, 64), dtype=np.uint8))

    assert main(["update", "--store", str(store_dir), "--owner", "owner-1",
                 "--add", str(new_dir), "--seed", "u1"]) == 0
    index = (store_dir / "cloud" / "index.tsv").read_text()
    assert "extra-0" in index and "extra-1" in index

    assert main(["update", "--store", str(store_dir), "--owner", "owner-1",
                 "--delete", "extra-0,extra-1", "--seed", "u2"]) == 0
    index = (store_dir / "cloud" / "index.tsv").read_text()
    assert "extra-0" not in index

    before = (store_dir / "cloud" / "index.tsv").read_text()
    owned = next(
        ln.split("\t")[1]
        for ln in before.strip().splitlines()[1:]
        if ln.startswith("owner-1\t")
    )
    rc = main(["update", "--store", str(store_dir), "--owner", "owner-1",
               "--reencrypt", owned, "--seed", "u3"])
    assert rc == 0
    assert "index rows unchanged: True" in capsys.readouterr().out
    assert (store_dir / "cloud" / "index.tsv").read_text() == before


def test_eval_on_disk_corpus(corpus_dir, tmp_path, capsys):
    out = tmp_path / "metrics.tsv"
    rc = main([
        "eval", "--corpus", str(corpus_dir), "--owners", "2",
        "--queries-per-category", "1", "--top-h", "10",
        "--seed", "cli-eval", "--out", str(out),
    ])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "method\tcutoff\tprecision\trecall\tf1"
    assert any(ln.startswith("new_dis\t10\t") for ln in lines)
    assert any(ln.startswith("euc_dis\t10\t") for ln in lines)


def test_leakage_output(corpus_dir, tmp_path):
    from mipp.evaluation import StatisticalPowerWarning

    out = tmp_path / "leakage.tsv"
    with pytest.warns(StatisticalPowerWarning):  # only 4 queries here
        rc = main([
            "leakage", "--corpus", str(corpus_dir), "--owners", "2",
            "--queries-per-category", "1", "--top-h", "10",
            "--deciles", "5", "--seed", "cli-leak", "--out", str(out),
        ])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "decile\teuc_dis\tnew_dis\tuser"
    assert len(lines) == 6


def test_bench_output(tmp_path):
    out = tmp_path / "bench.tsv"
    rc = main([
        "bench", "--sizes", "30,60", "--reps", "2", "--seed", "cli-bench",
        "--out", str(out),
    ])
    assert rc == 0
    text = out.read_text()
    assert text.splitlines()[0] == "size\tmode\tmedian_seconds\treps"
    assert "enc_with_index" in text and "storage" in text


def test_parallel_eval_matches_sequential(corpus_dir, tmp_path):
    common = ["eval", "--corpus", str(corpus_dir), "--owners", "2",
              "--queries-per-category", "1", "--top-h", "10", "--seed", "par"]
    seq_out = tmp_path / "seq.tsv"
    par_out = tmp_path / "par.tsv"
    assert main(common + ["--out", str(seq_out)]) == 0
    assert main(common + ["--parallel", "--out", str(par_out)]) == 0
    assert seq_out.read_text() == par_out.read_text()
