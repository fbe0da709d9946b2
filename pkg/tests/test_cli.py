import json

import pytest

from fvagg.cli import main
from fvagg.pipeline import DEFAULT_CLASSES
from fvagg.synthetic import make_class_generators, write_synthetic_dataset

CLASSES = ("red", "green", "blue")


@pytest.fixture()
def dataset(tmp_path):
    gens = make_class_generators(CLASSES, dim=4, components=2, seed=0)
    manifest = write_synthetic_dataset(
        tmp_path / "data", gens, images_per_class=8, descriptors_per_image=50, seed=1
    )
    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text(
        "components = 3\n"
        f"classes = {list(CLASSES)!r}\n".replace("'", '"')
        + "seed = 7\nscale_exponents = [0.0, 1.0]\n\n"
        "[em]\nmax_iters = 30\nseed = 1\n\n"
        "[svm]\nepochs = 8\naveraging_epochs = 4\nseed = 2\n"
    )
    return manifest, cfg_path


def test_full_cli_flow(dataset, tmp_path, capsys):
    manifest, cfg = dataset
    gmm_path = tmp_path / "cb.gmm"
    model_path = tmp_path / "cls.lsv"

    assert (
        main(
            [
                "train",
                "--config",
                str(cfg),
                "--manifest",
                str(manifest),
                "--out-codebook",
                str(gmm_path),
                "--out-model",
                str(model_path),
            ]
        )
        == 0
    )
    capsys.readouterr()

    assert (
        main(
            [
                "evaluate",
                "--config",
                str(cfg),
                "--manifest",
                str(manifest),
                "--codebook",
                str(gmm_path),
                "--model",
                str(model_path),
            ]
        )
        == 0
    )
    report = json.loads(capsys.readouterr().out)
    assert set(report) == {"classes", "confusion", "per_class_recall", "bac"}
    assert report["bac"] == 1.0

    assert (
        main(
            [
                "predict",
                "--config",
                str(cfg),
                "--manifest",
                str(manifest),
                "--codebook",
                str(gmm_path),
                "--model",
                str(model_path),
            ]
        )
        == 0
    )
    lines = capsys.readouterr().out.strip().splitlines()
    rows = [json.loads(l) for l in lines]
    assert len(rows) == 24
    assert all(r["prediction"] in CLASSES for r in rows)


def test_train_codebook_and_encode(dataset, tmp_path, capsys):
    manifest, cfg = dataset
    gmm_path = tmp_path / "cb.gmm"
    assert (
        main(
            [
                "train-codebook",
                "--config",
                str(cfg),
                "--manifest",
                str(manifest),
                "--out",
                str(gmm_path),
            ]
        )
        == 0
    )
    assert gmm_path.exists()
    out_dir = tmp_path / "fvs"
    assert (
        main(
            [
                "encode",
                "--config",
                str(cfg),
                "--manifest",
                str(manifest),
                "--codebook",
                str(gmm_path),
                "--out-dir",
                str(out_dir),
            ]
        )
        == 0
    )
    assert len(list(out_dir.glob("*.fvv"))) == 24


def test_synth_decomposition_reports_small_residual(capsys):
    assert main(["synth-decomposition", "--n", "2000", "--seed", "3"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["residual_norm"] <= 1e-10
    assert report["n_foreground"] + report["n_background"] == 2000
    assert "background_term_norm" in report


def test_missing_manifest_is_io_error(tmp_path, capsys):
    code = main(
        [
            "train-codebook",
            "--manifest",
            str(tmp_path / "absent.jsonl"),
            "--out",
            str(tmp_path / "cb.gmm"),
        ]
    )
    assert code == 3


def test_invalid_manifest_is_invalid_input(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("this is not json\n")
    code = main(
        ["train-codebook", "--manifest", str(bad), "--out", str(tmp_path / "cb.gmm")]
    )
    assert code == 2


def test_unknown_label_is_invalid_input(tmp_path, capsys):
    bad = tmp_path / "m.jsonl"
    bad.write_text('{"image_id": "a", "label": "nope", "descriptors": {}}\n')
    code = main(
        ["train-codebook", "--manifest", str(bad), "--out", str(tmp_path / "cb.gmm")]
    )
    assert code == 2  # default class list does not contain "nope"


def test_bad_usage_exits_two():
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2


def test_seed_override_changes_output(dataset, tmp_path, capsys):
    manifest, cfg = dataset
    a, b, c = (tmp_path / n for n in ("a.gmm", "b.gmm", "c.gmm"))
    for path, seed in ((a, "11"), (b, "11"), (c, "12")):
        assert (
            main(
                [
                    "train-codebook",
                    "--config",
                    str(cfg),
                    "--seed",
                    seed,
                    "--manifest",
                    str(manifest),
                    "--out",
                    str(path),
                ]
            )
            == 0
        )
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_scales_flag_filters_pooling(dataset, tmp_path, capsys):
    manifest, cfg = dataset
    out_all = tmp_path / "all"
    out_one = tmp_path / "one"
    gmm_path = tmp_path / "cb.gmm"
    main(
        [
            "train-codebook",
            "--config",
            str(cfg),
            "--manifest",
            str(manifest),
            "--out",
            str(gmm_path),
        ]
    )
    for out, scales in ((out_all, "0,1"), (out_one, "0")):
        assert (
            main(
                [
                    "encode",
                    "--config",
                    str(cfg),
                    "--scales",
                    scales,
                    "--manifest",
                    str(manifest),
                    "--codebook",
                    str(gmm_path),
                    "--out-dir",
                    str(out),
                ]
            )
            == 0
        )
    name = next(out_all.glob("*.fvv")).name
    assert (out_all / name).read_bytes() != (out_one / name).read_bytes()


def test_seed_override_keeps_other_stage_settings(tmp_path):
    import argparse

    from fvagg.cli import _load_config

    cfg_path = tmp_path / "cfg.toml"
    cfg_path.write_text("seed = 1\n\n[em]\nmax_iters = 17\nseed = 5\n")
    args = argparse.Namespace(
        config=str(cfg_path), seed=99, threads=None, scales=None
    )
    cfg = _load_config(args)
    assert cfg.seed == 99
    assert cfg.em.max_iters == 17  # preserved from the config file
    assert cfg.em.seed != 5  # re-derived from the new master seed


def test_default_class_list_is_seven_lesion_codes():
    assert len(DEFAULT_CLASSES) == 7
