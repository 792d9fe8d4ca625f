import json
import shutil

import numpy as np
import pytest

from scanmesh.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, EXIT_WARN, content_hash, main
from scanmesh.mesh.objio import read_obj
from scanmesh.model import ModelConfig
from scanmesh.train import TrainConfig

SMALL = ModelConfig(n_vertices=12, node_dim=16, edge_dim=16, hidden_dim=16, face_dim=16,
                    latent_dim=32, vertex_hidden=32, enc_channels=(4, 8, 8), rounds=2, face_rounds=2,
                    dropout=0.0)


def gen(out, seed=0, count=4):
    return main(["gen-data", "--shapes", "builtin", "--count", str(count), "--out", str(out),
                 "--seed", str(seed), "--trajectories", "1", "--max-vertices", "12"])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert gen(out, count=10) == EXIT_OK
    return out


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "train.json"
    TrainConfig(model=SMALL, batch_size=4, val_every=1000).save(path)
    return path


@pytest.fixture(scope="module")
def trained(dataset, small_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    common = ["--config", str(small_config), "--data", str(dataset), "--out", str(out), "--steps", "2"]
    assert main(["train", "--stage", "vertex_edge"] + common) == EXIT_OK
    assert main(["train", "--stage", "face_ce", "--resume", str(out / "vertex_edge.npz")] + common) == EXIT_OK
    return out


# ---------------------------------------------------------------- gen-data

def test_gen_data_is_reproducible(tmp_path):
    assert gen(tmp_path / "a", seed=5) == EXIT_OK
    assert gen(tmp_path / "b", seed=5) == EXIT_OK
    assert gen(tmp_path / "c", seed=6) == EXIT_OK
    hashes = [json.loads((tmp_path / d / "manifest.json").read_text())["output_hash"] for d in "abc"]
    assert hashes[0] == hashes[1] != hashes[2]


def test_gen_data_manifest_fields(dataset):
    m = json.loads((dataset / "manifest.json").read_text())
    assert m["command"] == "gen-data" and m["seed"] == 0 and m["n_entries"] == 10
    files = [dataset / e["tsdf"] for e in json.loads((dataset / "index.json").read_text())["entries"]]
    assert all(f.exists() for f in files)


def test_gen_data_skips_unreadable_files(tmp_path):
    src = tmp_path / "shapes"
    src.mkdir()
    (src / "bad.obj").write_text("v 0 0 0\nf 1 2 3\n")
    (src / "tri.obj").write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 2 3\nf 1 2 4\nf 1 3 4\nf 2 3 4\n")
    assert main(["gen-data", "--shapes", str(src), "--out", str(tmp_path / "o")]) == EXIT_WARN
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["skipped"] == ["bad"]


def test_gen_data_missing_dir_is_data_error(tmp_path):
    assert main(["gen-data", "--shapes", str(tmp_path / "nope"), "--out", str(tmp_path / "o")]) == EXIT_DATA


# ---------------------------------------------------------------- train

def test_train_writes_checkpoint_config_and_manifest(trained):
    for stage in ("vertex_edge", "face_ce"):
        assert (trained / f"{stage}.npz").exists()
        assert TrainConfig.load(trained / f"{stage}.config.json").stage == stage
        manifest = json.loads((trained / f"{stage}.manifest.json").read_text())
        assert manifest["command"] == "train" and manifest["input_hash"]


def test_train_stage_out_of_order_is_usage_error(dataset, small_config, tmp_path):
    argv = ["train", "--stage", "face_chamfer", "--config", str(small_config), "--data", str(dataset),
            "--out", str(tmp_path)]
    assert main(argv) == EXIT_USAGE


def test_resume_with_mismatched_config_names_keys(dataset, trained, tmp_path, capsys):
    other = tmp_path / "other.json"
    TrainConfig(model=ModelConfig(**{**SMALL.to_dict(), "hidden_dim": 8})).save(other)
    argv = ["train", "--stage", "face_ce", "--config", str(other), "--data", str(dataset),
            "--out", str(tmp_path), "--resume", str(trained / "vertex_edge.npz")]
    assert main(argv) == EXIT_USAGE
    assert "hidden_dim" in capsys.readouterr().err


def test_train_missing_dataset_is_data_error(small_config, tmp_path):
    argv = ["train", "--stage", "vertex_edge", "--config", str(small_config), "--data", str(tmp_path / "x"),
            "--out", str(tmp_path)]
    assert main(argv) == EXIT_DATA


def test_usage_errors_exit_one(tmp_path):
    assert main(["train", "--stage", "vertex_edge", "--out", str(tmp_path)]) == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == EXIT_USAGE


# ---------------------------------------------------------------- infer

def test_infer_writes_readable_obj(dataset, trained, tmp_path):
    tsdf = sorted((dataset / "scans").glob("*.tsdf"))[0]
    out = tmp_path / "pred.obj"
    code = main(["infer", "--ckpt", str(trained / "face_ce.npz"), "--tsdf", str(tsdf), "--out", str(out),
                 "--ce-only"])
    assert code in (EXIT_OK, EXIT_WARN)  # an untrained model may keep no face
    mesh = read_obj(out)
    assert mesh.n_vertices == SMALL.n_vertices and np.isfinite(mesh.vertices).all()
    manifest = json.loads(out.with_suffix(".manifest.json").read_text())
    assert manifest["n_faces"] == mesh.n_faces
    assert (code == EXIT_WARN) == (mesh.n_faces == 0)


def test_infer_requires_ce_only_for_stage_two_checkpoint(dataset, trained, tmp_path):
    tsdf = sorted((dataset / "scans").glob("*.tsdf"))[0]
    argv = ["infer", "--ckpt", str(trained / "face_ce.npz"), "--tsdf", str(tsdf), "--out", str(tmp_path / "p.obj")]
    assert main(argv) == EXIT_USAGE


def test_infer_missing_checkpoint_is_data_error(dataset, tmp_path):
    tsdf = sorted((dataset / "scans").glob("*.tsdf"))[0]
    argv = ["infer", "--ckpt", str(tmp_path / "no.npz"), "--tsdf", str(tsdf), "--out", str(tmp_path / "p.obj")]
    assert main(argv) == EXIT_DATA


# ---------------------------------------------------------------- eval

def test_eval_self_comparison(dataset, tmp_path):
    pred = tmp_path / "pred"
    shutil.copytree(dataset / "targets", pred)
    out = tmp_path / "eval.csv"
    assert main(["eval", "--pred", str(pred), "--gt", str(dataset / "targets"), "--out", str(out),
                 "--k", "2000"]) == EXIT_OK
    lines = out.read_text().splitlines()
    header = lines[0].split(",")
    assert {"class", "dist", "nsim"} <= set(header)
    for line in lines[1:]:
        row = dict(zip(header, line.split(",")))
        assert float(row["dist"]) < 1e-3 and float(row["nsim"]) > 0.999
    classes = json.loads((dataset / "targets" / "classes.json").read_text())
    summary = (tmp_path / "eval_summary.csv").read_text()
    assert all(c in summary for c in set(classes.values()))


def test_eval_lists_unpaired_files(dataset, tmp_path, capsys):
    pred = tmp_path / "pred"
    shutil.copytree(dataset / "targets", pred)
    (pred / "stray.obj").write_text((pred / next(iter(sorted(p.name for p in pred.glob("*.obj"))))).read_text())
    assert main(["eval", "--pred", str(pred), "--gt", str(dataset / "targets"), "--out",
                 str(tmp_path / "e.csv"), "--k", "500"]) == EXIT_WARN
    assert "stray" in capsys.readouterr().err
    assert "stray" not in (tmp_path / "e.csv").read_text()


def test_eval_missing_gt_dir_writes_nothing(dataset, tmp_path):
    out = tmp_path / "e.csv"
    assert main(["eval", "--pred", str(dataset / "targets"), "--gt", str(tmp_path / "none"),
                 "--out", str(out)]) == EXIT_DATA
    assert not out.exists()


# ---------------------------------------------------------------- bench and hashing

def test_bench_command_writes_csv(tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--n", "8,12", "--repeats", "1", "--out", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "n_verts,train_time_s,train_mem_gb,infer_time_s,infer_mem_gb"
    assert [line.split(",")[0] for line in lines[1:]] == ["8", "12"]


def test_bench_rejects_bad_n(tmp_path):
    assert main(["bench", "--n", "10,abc", "--out", str(tmp_path / "b.csv")]) == EXIT_USAGE


def test_content_hash_depends_on_bytes(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    a.write_text("x")
    b.write_text("y")
    h = content_hash([a, b])
    assert h == content_hash([b, a])
    b.write_text("z")
    assert content_hash([a, b]) != h
