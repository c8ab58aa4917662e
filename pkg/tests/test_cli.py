import hashlib
import os

import pytest

from ttvos.cli import main


def tree_digest(root):
    h = hashlib.sha256()
    for dirpath, _, files in sorted(os.walk(root)):
        for f in sorted(files):
            p = os.path.join(dirpath, f)
            h.update(os.path.relpath(p, root).encode())
            h.update(open(p, "rb").read())
    return h.hexdigest()


def snapshot(root):
    return {os.path.relpath(os.path.join(d, f), root) for d, _, fs in os.walk(root) for f in fs}


def test_gen_data_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["gen-data", "--kind", "shapes", "--n", "25", "--seed", "7", "--length", "3", "--size", "32x48", "--out", str(tmp_path / d)]) == 0
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
    assert len(list((tmp_path / "a" / "seqs").iterdir())) == 25
    main(["gen-data", "--kind", "shapes", "--n", "2", "--seed", "8", "--length", "3", "--size", "32x48", "--out", str(tmp_path / "c")])
    assert tree_digest(tmp_path / "c") != tree_digest(tmp_path / "a")


def test_pipeline_smoke(tmp_path, capsys):
    data, run, pred, rep = (tmp_path / x for x in ("data", "run", "pred", "rep"))
    assert main(["gen-data", "--kind", "shapes", "--n", "3", "--seed", "1", "--length", "4", "--objects", "2", "--size", "32x48", "--out", str(data)]) == 0
    assert main(["train", "--data", str(data / "seqs"), "--epochs", "1", "--clip-length", "3", "--out", str(run)]) == 0
    assert main(["track", "--model", str(run / "ckpt" / "best"), "--seq", str(data / "seqs"), "--out", str(pred)]) == 0
    assert main(["eval", "--pred", str(pred), "--gt", str(data / "seqs"), "--out", str(rep)]) == 0
    lines = (rep / "report.csv").read_text().splitlines()
    assert lines[0] == "sequence,object,J,F" and len(lines) == 1 + 6 + 1
    for line in lines[1:]:
        j, f = map(float, line.split(",")[2:])
        assert 0 <= j <= 1 and 0 <= f <= 1
    assert "J&F" in capsys.readouterr().out
    # affine clips and pretraining stage
    assert main(["gen-data", "--kind", "affine", "--n", "2", "--seed", "1", "--size", "32x48", "--out", str(tmp_path / "aff")]) == 0
    assert main(["train", "--stage", "pretrain", "--data", str(tmp_path / "aff" / "seqs"), "--val-fraction", "0", "--out", str(tmp_path / "pre")]) == 0


def test_outputs_confined_to_out(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    main(["gen-data", "--n", "2", "--length", "3", "--size", "32x48", "--out", "d"])
    before = snapshot(tmp_path)
    main(["train", "--data", "d/seqs", "--val-fraction", "0", "--clip-length", "2", "--out", "r"])
    main(["profile", "--out", "p"])
    main(["track", "--model", "r/ckpt/best", "--data", "d/seqs", "--out", "k"])
    main(["eval", "--pred", "k", "--gt", "d/seqs", "--out", "e"])
    new = snapshot(tmp_path) - before
    assert new and all(p.split(os.sep)[0] in ("r", "p", "k", "e") for p in new)


def test_profile(tmp_path, capsys):
    assert main(["profile", "--ablate", "update", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "Read" in out and "#Param" in out
    assert (tmp_path / "flops.csv").read_text().startswith("name,stage,flops,params")


def test_grad_check_all(capsys):
    assert main(["grad-check", "--all"]) == 0
    out = capsys.readouterr().out
    assert "blocks pass" in out and "template_attention" in out


def test_grad_check_single_block(capsys):
    assert main(["grad-check", "--block", "softmax", "--block", "matmul"]) == 0
    assert "2/2 blocks pass" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv, code, category",
    [
        (["nope"], 2, "usage"),
        (["gen-data", "--bogus"], 2, "usage"),
        (["gen-data", "--n", "1"], 2, "usage"),
        (["gen-data", "--size", "60x112", "--n", "1", "--out", "{tmp}/x"], 3, "config"),
        (["train", "--data", "{tmp}/missing", "--out", "{tmp}/x"], 4, "input"),
        (["track", "--model", "{tmp}", "--data", "{tmp}", "--out", "{tmp}/x"], 4, "input"),
        (["grad-check", "--block", "nope"], 2, "usage"),
        (["train", "--config", "{tmp}/none.cfg"], 4, "input"),
    ],
)
def test_error_exit_codes(tmp_path, capsys, argv, code, category):
    assert main([a.replace("{tmp}", str(tmp_path)) for a in argv]) == code
    assert f"error: {category}:" in capsys.readouterr().err


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# shapes\nkind=shapes\nn=2\nseed=3\nlength=3\nsize=32x48\nout={tmp_path / 'fromcfg'}\n")
    assert main(["gen-data", "--config", str(cfg)]) == 0
    assert len(list((tmp_path / "fromcfg" / "seqs").iterdir())) == 2
    assert main(["gen-data", "--config", str(cfg), "--n", "1", "--out", str(tmp_path / "flag")]) == 0
    assert len(list((tmp_path / "flag" / "seqs").iterdir())) == 1
    assert not (tmp_path / "fromcfg" / "seqs" / "shapes_0002").exists()


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("n=2\nnumbr=3\n")
    assert main(["gen-data", "--config", str(bad), "--out", str(tmp_path / "o")]) == 3
    bad.write_text("n=two\n")
    assert main(["gen-data", "--config", str(bad), "--out", str(tmp_path / "o")]) == 3
    bad.write_text("kind=cubes\n")
    assert main(["gen-data", "--config", str(bad), "--out", str(tmp_path / "o")]) == 3
    assert capsys.readouterr().err.count("error: config:") == 3
