import pytest

from subalign.cli import main
from subalign.pipeline import count_overlaps
from subalign.subtitles import TrackKind, read_srt, shift_track, write_srt
from subalign.synthgen import SynthConfig, gen_episode

TINY_INI = """\
[model]
d_model = 16
num_layers = 1
d_video_in = 8
d_text_in = 16

[train]
d_text = 16
pretrain_epochs = 1
finetune_epochs = 2
batch_size = 8

[window]
window_seconds = 8

[synth]
d_video = 8
subs_per_episode = 5
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ini = root / "tiny.ini"
    ini.write_text(TINY_INI)
    cfg = ["--config", str(ini)]
    assert main(["synth", *cfg, "--episodes", "3", "--out", str(root / "data")]) == 0
    assert main(["pretrain", *cfg, "--data", str(root / "data"), "--out", str(root / "pre")]) == 0
    assert main(["train", *cfg, "--data", str(root / "data"), "--checkpoint", str(root / "pre"),
                 "--out", str(root / "ck")]) == 0
    return root, cfg


def test_training_outputs(workspace):
    root, _ = workspace
    assert (root / "ck" / "manifest.json").exists()
    assert (root / "ck" / "loss.csv").read_text().startswith("epoch,phase,mean_loss")
    assert len(list((root / "data").iterdir())) == 3


def test_align_writes_overlap_free_srt(workspace):
    root, cfg = workspace
    out = root / "aligned"
    assert main(["align", *cfg, "--checkpoint", str(root / "ck"), "--episode",
                 str(root / "data" / "ep0000"), "--out", str(out)]) == 0
    track = read_srt(out / "pred.srt", TrackKind.PREDICTED)
    assert len(track) == 5 and count_overlaps(track) == 0
    assert (out / "report.csv").exists()


def test_align_without_dtw(workspace):
    root, cfg = workspace
    out = root / "aligned_raw"
    assert main(["align", *cfg, "--no-dtw", "--checkpoint", str(root / "ck"), "--episode",
                 str(root / "data" / "ep0000"), "--out", str(out)]) == 0
    assert len(read_srt(out / "pred.srt", TrackKind.PREDICTED)) == 5


def test_align_missing_checkpoint_is_input_error(workspace, capsys):
    root, cfg = workspace
    code = main(["align", *cfg, "--checkpoint", str(root / "nope"), "--episode",
                 str(root / "data" / "ep0000"), "--out", str(root / "x")])
    assert code == 2
    assert "checkpoint not found" in capsys.readouterr().err


def test_align_config_mismatch(workspace):
    root, _ = workspace
    code = main(["align", "--checkpoint", str(root / "ck"), "--episode",
                 str(root / "data" / "ep0000"), "--out", str(root / "x")])
    assert code == 3


def test_eval_identity_and_count_mismatch(workspace, tmp_path):
    root, _ = workspace
    gt = root / "data" / "ep0000" / "gt.srt"
    assert main(["eval", "--pred", str(gt), "--gt", str(gt), "--out", str(tmp_path / "a")]) == 0
    assert (tmp_path / "a" / "report.csv").read_text().splitlines()[1] == "1.0,1.0,1.0,1.0"
    other = read_srt(gt, TrackKind.GROUND_TRUTH)
    write_srt(type(other)(other.subtitles[:-1], other.kind), tmp_path / "short.srt")
    code = main(["eval", "--pred", str(tmp_path / "short.srt"), "--gt", str(gt),
                 "--out", str(tmp_path / "b")])
    assert code == 2


def test_eval_shift_baseline_exact_offset(tmp_path):
    cfg = SynthConfig(d_video=4, subs_per_episode=6, shift_std_s=0.0, dur_noise_std_s=0.0,
                      gap_frames_range=(100, 120))
    ep = gen_episode(cfg, 0)
    write_srt(ep.gt, tmp_path / "gt.srt")
    write_srt(ep.audio, tmp_path / "audio.srt")
    write_srt(shift_track(ep.audio, 3200), tmp_path / "pred.srt")
    assert main(["eval", "--pred", str(tmp_path / "pred.srt"), "--gt", str(tmp_path / "gt.srt"),
                 "--audio", str(tmp_path / "audio.srt"), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "report.csv").read_text().splitlines()[1] == "1.0,1.0,1.0,1.0"


def test_baselines_from_cli(workspace, tmp_path):
    root, cfg = workspace
    for method in ("shift", "heuristic"):
        out = tmp_path / method
        assert main(["baseline", *cfg, "--method", method, "--episode",
                     str(root / "data" / "ep0001"), "--out", str(out)]) == 0
        track = read_srt(out / "pred.srt", TrackKind.PREDICTED)
        assert count_overlaps(track) == 0


def test_missing_inputs(tmp_path):
    assert main(["eval", "--pred", str(tmp_path / "p.srt"), "--gt", str(tmp_path / "g.srt"),
                 "--out", str(tmp_path)]) == 2
    assert main(["train", "--data", str(tmp_path / "none"), "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.ini"
    bad.write_text("[run]\ntau = 2\n")
    assert main(["eval", "--config", str(bad), "--pred", "x", "--gt", "y"]) == 3


def test_smoke_impossible_margin_and_determinism(workspace, tmp_path, capsys):
    _, cfg = workspace
    args = ["smoke", *cfg, "--train-episodes", "2", "--test-episodes", "1"]
    assert main([*args, "--margin-frame-acc", "1.0", "--out", str(tmp_path / "a")]) == 1
    out = capsys.readouterr().out
    assert "FAIL" in out and "SAT" in out and "prior" in out
    main([*args, "--margin-frame-acc", "1.0", "--out", str(tmp_path / "b")])
    for name in ("report_sat.csv", "report_prior.csv", "loss.csv"):
        assert (tmp_path / "a" / name).read_text() == (tmp_path / "b" / name).read_text()


@pytest.mark.slow
def test_smoke_desk_profile_passes(tmp_path):
    assert main(["smoke", "--seed", "0", "--out", str(tmp_path)]) == 0
