"""Config parsing/round-trip and the end-to-end command-line pipeline."""

import hashlib
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from dgdeblur import cli
from dgdeblur.config import (ConfigError, ExperimentConfig, config_digest,
                             format_config, load_config, model_config,
                             parse_config)
from dgdeblur.fileio import read_csv, read_f32g

# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------


def test_empty_config_is_defaults():
    assert parse_config("") == ExperimentConfig()
    assert parse_config("\n# only a comment\n; and another\n") == ExperimentConfig()


def test_parse_assigns_typed_values():
    cfg = parse_config(
        "n_train = 12\n"
        "lr = 3e-3\n"
        "variant = cell\n"
        "augment = false\n"
        "penalty = 0.25\n"
        "sigma_mode = ramp\n")
    assert cfg.n_train == 12
    assert cfg.lr == 3e-3
    assert cfg.variant == "cell"
    assert cfg.augment is False
    assert cfg.penalty == "0.25"
    assert cfg.sigma_mode == "ramp"


def test_parse_whitespace_and_comment_tolerance():
    cfg = parse_config("  steps   =  7 \n\n# note\n; note\n  batch=2\n")
    assert cfg.steps == 7 and cfg.batch == 2


@pytest.mark.parametrize("text,fragment", [
    ("[model]\nsteps = 1\n", "line 1"),
    ("steps 7\n", "line 1"),
    ("steps =\n", "line 1"),
    ("= 7\n", "line 1"),
    ("bogus_key = 1\n", "unknown key"),
    ("steps = 1\nsteps = 2\n", "duplicate"),
    ("steps = 1.5\n", "expected an integer"),
    ("lr = fast\n", "expected a number"),
    ("augment = yes\n", "expected true or false"),
    ("variant = windowed\n", "not in"),
    ("penalty = soft\n", "expected 'learnable'"),
    ("steps = 0\n", ">= 1"),
    ("layers = -1\n", ">= 0"),
    ("lr = 0\n", "> 0"),
])
def test_parse_rejections_carry_line_context(text, fragment):
    with pytest.raises(ConfigError) as err:
        parse_config(text, source="probe.cfg")
    assert "probe.cfg" in str(err.value)
    assert fragment in str(err.value)


@pytest.mark.parametrize("text,fragment", [
    ("sigma_min = 3\nsigma_max = 2\n", "sigma_max"),
    ("shapes_min = 4\nshapes_max = 2\n", "shapes_max"),
    ("channels = 10\nheads = 4\n", "divisible"),
    ("lr = 1e-7\n", "below lr_min"),
    ("weight_filled_square = 0\nweight_hollow_box = 0\nweight_thin_line = 0\n",
     "pattern weight"),
])
def test_cross_field_validation(text, fragment):
    with pytest.raises(ConfigError) as err:
        parse_config(text)
    assert fragment in str(err.value)


def test_format_config_round_trips():
    cfg = ExperimentConfig(n_train=5, lr=2.5e-4, variant="cell", augment=False,
                           penalty="0.5", sigma_mode="constant", loss_lambda=0.0)
    assert parse_config(format_config(cfg)) == cfg
    assert parse_config(format_config(ExperimentConfig())) == ExperimentConfig()


def test_config_digest_tracks_content():
    a = config_digest(ExperimentConfig())
    b = config_digest(ExperimentConfig())
    c = config_digest(ExperimentConfig(steps=1999))
    assert a == b and a != c
    assert len(a) == 16


def test_load_config_reports_path(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text("steps = zero\n")
    with pytest.raises(ConfigError) as err:
        load_config(path)
    assert str(path) in str(err.value)


def test_model_config_mapping():
    cfg = ExperimentConfig(channels=8, heads=2, variant="face", flux="jump",
                           bc="periodic", model_seed=42)
    mc = model_config(cfg)
    assert (mc.channels, mc.heads, mc.variant, mc.flux, mc.bc, mc.seed) == \
        (8, 2, "face", "jump", "periodic", 42)
    # explicit variant override, and gg drops any configured flux
    assert model_config(cfg, "cell").variant == "cell"
    assert model_config(cfg, "gg").flux == "none"


# ---------------------------------------------------------------------------
# CLI pipeline
# ---------------------------------------------------------------------------

TINY_CFG = """
n_train = 3
n_test = 2
height = 16
width = 16
sigma_min = 1.0
sigma_max = 2.0
shapes_min = 1
shapes_max = 2
channels = 8
heads = 2
element_size = 4
layers = 1
steps = 4
batch = 2
"""


@pytest.fixture
def workdir(tmp_path):
    cfg_path = tmp_path / "exp.cfg"
    cfg_path.write_text(TINY_CFG)
    return tmp_path, str(cfg_path), str(tmp_path / "out")


def run_cli(*argv):
    return cli.main(list(argv))


def tree_digest(root):
    root = Path(root)
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest.update(str(path.relative_to(root)).encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


def test_no_command_exits_two(capsys):
    assert run_cli() == 2


def test_print_defaults_round_trips(capsys):
    assert run_cli("--print-defaults") == 0
    out = capsys.readouterr().out
    assert parse_config(out) == ExperimentConfig()


def test_bad_config_exits_two(workdir, capsys):
    tmp, _, out = workdir
    bad = tmp / "bad.cfg"
    bad.write_text("steps = -3\n")
    assert run_cli("gen", "--config", str(bad), "--out", out) == 2
    assert "config error" in capsys.readouterr().err


def test_train_before_gen_exits_three(workdir, capsys):
    _, cfg, out = workdir
    assert run_cli("train", "--config", cfg, "--out", out) == 3
    assert "run the gen command first" in capsys.readouterr().err


def test_gen_writes_dataset_tree(workdir, capsys):
    _, cfg, out = workdir
    assert run_cli("gen", "--config", cfg, "--out", out) == 0
    stdout = capsys.readouterr().out
    assert "gen: wrote 3 images" in stdout and "gen: wrote 2 images" in stdout
    for split, count in (("train", 3), ("test", 2)):
        base = Path(out) / "dataset" / split
        assert (base / "manifest.csv").exists()
        for i in range(count):
            for kind in ("sharp", "blur", "sigma"):
                arr = read_f32g(base / f"{kind}_{i:04d}.f32g")
                assert np.isfinite(arr).all()


def test_gen_rerun_is_byte_identical(workdir, capsys):
    _, cfg, out = workdir
    assert run_cli("gen", "--config", cfg, "--out", out) == 0
    first = tree_digest(out)
    assert run_cli("gen", "--config", cfg, "--out", out) == 0
    assert tree_digest(out) == first


def test_seed_override_changes_dataset(workdir, capsys):
    _, cfg, out = workdir
    assert run_cli("gen", "--config", cfg, "--out", out, "--seed", "5") == 0
    five = tree_digest(out)
    assert run_cli("gen", "--config", cfg, "--out", out, "--seed", "6") == 0
    assert tree_digest(out) != five
    assert run_cli("gen", "--config", cfg, "--out", out, "--seed", "5") == 0
    assert tree_digest(out) == five


def test_train_eval_pipeline(workdir, capsys):
    _, cfg, out = workdir
    assert run_cli("gen", "--config", cfg, "--out", out) == 0
    assert run_cli("train", "--config", cfg, "--out", out) == 0
    train_dir = Path(out) / "train_face"
    header, rows = read_csv(train_dir / "log.csv")
    assert header == list(cli.training.LOG_COLUMNS)
    assert len(rows) == 2  # 4 steps at 2 steps per epoch
    assert (train_dir / "checkpoint.ckpt").exists()

    assert run_cli("eval", "--config", cfg, "--out", out) == 0
    eval_dir = Path(out) / "eval_face"
    header, rows = read_csv(eval_dir / "metrics.csv")
    assert header == list(cli.METRIC_COLUMNS)
    assert len(rows) == 2
    for row in rows:
        restored = read_f32g(eval_dir / f"restored_{row[0]}.f32g")
        assert restored.shape == (16, 16, 1)
        assert 0.0 <= restored.min() and restored.max() <= 1.0


def test_eval_before_train_exits_three(workdir, capsys):
    _, cfg, out = workdir
    assert run_cli("gen", "--config", cfg, "--out", out) == 0
    assert run_cli("eval", "--config", cfg, "--out", out) == 3
    assert "run the train command first" in capsys.readouterr().err


def test_eval_rejects_checkpoint_from_other_config(workdir, capsys):
    tmp, cfg, out = workdir
    assert run_cli("gen", "--config", cfg, "--out", out) == 0
    assert run_cli("train", "--config", cfg, "--out", out) == 0
    other = tmp / "other.cfg"
    other.write_text(TINY_CFG.replace("steps = 4", "steps = 5"))
    assert run_cli("eval", "--config", str(other), "--out", out) == 3
    assert "different configuration" in capsys.readouterr().err


def test_train_rerun_is_byte_identical(workdir, capsys):
    _, cfg, out = workdir
    assert run_cli("gen", "--config", cfg, "--out", out) == 0
    assert run_cli("train", "--config", cfg, "--out", out) == 0
    first = tree_digest(Path(out) / "train_face")
    assert run_cli("train", "--config", cfg, "--out", out) == 0
    assert tree_digest(Path(out) / "train_face") == first


def test_compare_artifacts(workdir, capsys):
    _, cfg, out = workdir
    assert run_cli("gen", "--config", cfg, "--out", out) == 0
    assert run_cli("compare", "--config", cfg, "--out", out) == 0
    compare = Path(out) / "compare"
    for variant in ("gg", "face", "cell"):
        header, rows = read_csv(compare / f"metrics_{variant}.csv")
        assert len(rows) == 2
    header, rows = read_csv(compare / "aggregate.csv")
    assert header == list(cli.AGGREGATE_COLUMNS)
    assert [r[0] for r in rows] == ["gg", "face", "cell"]
    header, rows = read_csv(compare / "rank.csv")
    assert header == list(cli.RANK_COLUMNS)
    # three variants, post-lift plus one layer each
    assert len(rows) == 6
    assert {r[2] for r in rows} == {"gg", "face", "cell"}
    for variant in ("face", "cell"):
        for image_id in ("0000", "0001"):
            diff = read_f32g(compare / f"resdiff_{variant}_{image_id}.f32g")
            assert diff.shape == (16, 16, 1)


def test_ablate_variant_axis(workdir, capsys):
    _, cfg, out = workdir
    assert run_cli("gen", "--config", cfg, "--out", out) == 0
    assert run_cli("ablate", "--axis", "variant", "--config", cfg,
                   "--out", out) == 0
    header, rows = read_csv(Path(out) / "ablate_variant.csv")
    assert header == list(cli.AGGREGATE_COLUMNS)
    assert [r[0] for r in rows] == ["input", "gg", "face", "cell"]


def test_ablate_flux_bc_axis(workdir, capsys):
    _, cfg, out = workdir
    assert run_cli("gen", "--config", cfg, "--out", out) == 0
    assert run_cli("ablate", "--axis", "flux_bc", "--config", cfg,
                   "--out", out) == 0
    header, rows = read_csv(Path(out) / "ablate_flux_bc.csv")
    assert header[:2] == ["flux", "bc"]
    assert len(rows) == 12  # four flux kinds times three boundary conditions
    assert {r[0] for r in rows} == {"central", "jump", "avg_jump", "upwind"}
    assert {r[1] for r in rows} == {"dirichlet", "neumann", "periodic"}


def test_ablate_element_size_axis(workdir, capsys):
    _, cfg, out = workdir
    assert run_cli("gen", "--config", cfg, "--out", out) == 0
    assert run_cli("ablate", "--axis", "element_size", "--config", cfg,
                   "--out", out) == 0
    header, rows = read_csv(Path(out) / "ablate_element_size.csv")
    assert header[:2] == ["element_size", "layers"]
    assert len(rows) == 16  # four element sizes times four depths
    assert {r[0] for r in rows} == {"4", "8", "16", "32"}
    assert {r[1] for r in rows} == {"1", "2", "3", "4"}


def test_rank_command(workdir, capsys):
    _, cfg, out = workdir
    assert run_cli("gen", "--config", cfg, "--out", out) == 0
    assert run_cli("train", "--config", cfg, "--out", out) == 0
    assert run_cli("rank", "--config", cfg, "--out", out) == 0
    header, rows = read_csv(Path(out) / "rank_face.csv")
    assert header == list(cli.RANK_COLUMNS)
    assert len(rows) == 2
    for row in rows:
        assert 1.0 <= float(row[3]) <= 8.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exits_three(workdir, capsys):
    tmp, _, out = workdir
    cfg = tmp / "diverge.cfg"
    cfg.write_text(TINY_CFG.replace("steps = 4", "steps = 50")
                   + "lr = 1e6\nlr_min = 1e6\n")
    assert run_cli("gen", "--config", str(cfg), "--out", out) == 0
    assert run_cli("train", "--config", str(cfg), "--out", out) == 3
    assert "diverged" in capsys.readouterr().err


def test_gradcheck_command(workdir, capsys):
    _, cfg, out = workdir
    assert run_cli("gradcheck", "--config", cfg, "--out", out) == 0
    stdout = capsys.readouterr().out
    assert "gradcheck: PASS" in stdout
    assert "FAIL" not in stdout
