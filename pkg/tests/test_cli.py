import numpy as np
import pytest

from spikeflow import read_events, read_weights
from spikeflow.cli import run
from spikeflow.rasters import read_pnm

SMALL_CONFIG = """
[global]
dt_ms = 1.0
seed = 11
width = 16
height = 16
eta = 0.05
a = 0.0
w_init = 0.5
l_th = 5e-2

[layer.ss]
kind = SSConv
r = 7
s = 1
f = 2
m = 1
v_th = 0.5
lambda_v_ms = 5
lambda_x_ms = 5
alpha = 0.4
refr_ms = 3
plastic = true
"""

MSCONV_CONFIG = """
[global]
dt_ms = 1.0
seed = 11
width = 16
height = 16
eta = 0.05
a = 0.0
w_init = 0.5
l_th = 5e-2

[layer.ss]
kind = SSConv
r = 7
s = 1
f = 2
m = 1
v_th = 0.5
lambda_v_ms = 5
lambda_x_ms = 5
alpha = 0.4
refr_ms = 3
plastic = true

[layer.mg]
kind = Merge
v_th = 0.001
lambda_v_ms = 5
refr_ms = 1

[layer.ms]
kind = MSConv
r = 5
s = 1
f = 2
m = 3
tau_min_ms = 1
tau_max_ms = 21
beta = 0.5
v_th = 0.5
lambda_v_ms = 5
lambda_x_ms = 5
alpha = 0.25
refr_ms = 3
plastic = true
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "net.cfg"
    cfg.write_text(SMALL_CONFIG)
    data = root / "data"
    data.mkdir()
    for i, (wx, wy) in enumerate([(1.0, 0.0), (0.0, 1.0)]):
        code = run(["gen", "--pattern", "checkerboard", "--wx", str(wx),
                    "--wy", str(wy), "--duration-ms", "300",
                    "--width", "16", "--height", "16", "--contrast", "0.15",
                    "--out", str(data / f"seq{i}.evt")])
        assert code == 0
    return root, cfg, data


class TestGen:
    def test_zero_duration_rejected(self, tmp_path, capsys):
        code = run(["gen", "--duration-ms", "0", "--out", str(tmp_path / "x.csv")])
        assert code == 1
        assert "duration must be positive" in capsys.readouterr().err

    def test_unknown_flag_rejected(self, tmp_path, capsys):
        code = run(["gen", "--bogus", "1", "--out", str(tmp_path / "x.csv")])
        assert code == 1
        assert "--bogus" in capsys.readouterr().err

    def test_csv_and_binary_outputs_parse(self, tmp_path):
        for name in ("out.csv", "out.evt"):
            assert run(["gen", "--duration-ms", "100", "--width", "8",
                        "--height", "8", "--out", str(tmp_path / name)]) == 0
            stream = read_events(tmp_path / name)
            assert len(stream) > 0
            assert (stream.width, stream.height) == (8, 8)

    def test_generation_is_deterministic(self, tmp_path):
        paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
        for p in paths:
            assert run(["gen", "--duration-ms", "200", "--out", str(p)]) == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_bar_pattern(self, tmp_path):
        assert run(["gen", "--pattern", "bar", "--wx", "1", "--duration-ms",
                    "200", "--width", "12", "--height", "12",
                    "--out", str(tmp_path / "bar.csv")]) == 0
        assert len(read_events(tmp_path / "bar.csv")) > 0


class TestTrainInfer:
    def test_end_to_end_pipeline(self, workdir, tmp_path):
        root, cfg, data = workdir
        weights = tmp_path / "net.wts"
        log = tmp_path / "train.csv"
        code = run(["train", "--config", str(cfg), "--data-dir", str(data),
                    "--seed", "3", "--max-presentations", "8",
                    "--weights-out", str(weights), "--log-out", str(log)])
        assert code == 0
        assert weights.is_file()
        assert log.read_text().startswith("layer,presentation,update,L")

        spikes = tmp_path / "spikes.csv"
        traces = tmp_path / "traces.csv"
        code = run(["infer", "--config", str(cfg), "--weights", str(weights),
                    "--events", str(data / "seq0.evt"),
                    "--spikes-out", str(spikes), "--traces-out", str(traces)])
        assert code == 0
        lines = spikes.read_text().strip().split("\n")
        assert lines[0] == "layer,step,map,y,x"
        assert len(lines) > 1
        assert traces.read_text().startswith("step,y0,y1")

    def test_missing_config_is_validation_error(self, tmp_path, capsys):
        code = run(["train", "--config", str(tmp_path / "nope.cfg"),
                    "--data-dir", str(tmp_path), "--weights-out",
                    str(tmp_path / "w.wts")])
        assert code == 1
        assert "--config" in capsys.readouterr().err

    def test_empty_data_dir_rejected(self, workdir, tmp_path, capsys):
        _, cfg, _ = workdir
        empty = tmp_path / "empty"
        empty.mkdir()
        code = run(["train", "--config", str(cfg), "--data-dir", str(empty),
                    "--weights-out", str(tmp_path / "w.wts")])
        assert code == 1
        assert "--data-dir" in capsys.readouterr().err

    def test_identical_runs_produce_identical_weight_files(self, workdir, tmp_path):
        root, cfg, data = workdir
        outs = []
        for name in ("w1.wts", "w2.wts"):
            path = tmp_path / name
            assert run(["train", "--config", str(cfg), "--data-dir", str(data),
                        "--seed", "9", "--max-presentations", "5",
                        "--weights-out", str(path)]) == 0
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]


@pytest.fixture(scope="module")
def trained(workdir, tmp_path_factory):
    root, cfg, data = workdir
    out = tmp_path_factory.mktemp("trained")
    mscfg = out / "ms.cfg"
    mscfg.write_text(MSCONV_CONFIG)
    weights = out / "net.wts"
    code = run(["train", "--config", str(mscfg), "--data-dir", str(data),
                "--seed", "5", "--max-presentations", "6",
                "--weights-out", str(weights)])
    assert code == 0
    return mscfg, weights


class TestExportAndFlow:
    def test_export_csv(self, trained, tmp_path):
        _, weights = trained
        out = tmp_path / "kcsv"
        assert run(["export-kernels", "--weights", str(weights), "--layer",
                    "ssconv", "--out-dir", str(out), "--format", "csv"]) == 0
        files = sorted(out.glob("*.csv"))
        assert len(files) == 2
        assert files[0].read_text().startswith("ky,kx,ch,slot,tau_ms,w_exc")

    def test_export_pgm(self, trained, tmp_path):
        _, weights = trained
        out = tmp_path / "kpgm"
        assert run(["export-kernels", "--weights", str(weights), "--layer",
                    "msconv", "--out-dir", str(out), "--format", "pgm"]) == 0
        files = sorted(out.glob("*.pgm"))
        # 2 kernels x 3 slots x (exc + inh)
        assert len(files) == 12
        img = read_pnm(files[0])
        assert img.shape == (5, 5)  # single merge channel, r = 5

    def test_flow_csv(self, trained, tmp_path):
        _, weights = trained
        out = tmp_path / "flow.csv"
        assert run(["flow", "--weights", str(weights), "--layer", "msconv",
                    "--gamma", "0.4", "--out", str(out)]) == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "kernel,u,v,theta_u,theta_v,tau_min_ms,tau_max_ms"
        assert len(lines) == 3

    def test_flow_rejects_single_synaptic_layer(self, trained, tmp_path, capsys):
        _, weights = trained
        code = run(["flow", "--weights", str(weights), "--layer", "ssconv",
                    "--out", str(tmp_path / "f.csv")])
        assert code == 1
        assert "--layer" in capsys.readouterr().err

    def test_response_grid(self, trained, tmp_path):
        mscfg, weights = trained
        out = tmp_path / "resp.csv"
        assert run(["response", "--config", str(mscfg), "--weights",
                    str(weights), "--grid=-1:1:3", "--out", str(out)]) == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0].startswith("wx,wy,msconv_k0")
        assert len(lines) == 4

    def test_bad_grid_spec(self, trained, tmp_path, capsys):
        mscfg, weights = trained
        code = run(["response", "--config", str(mscfg), "--weights",
                    str(weights), "--grid", "1:2", "--out",
                    str(tmp_path / "r.csv")])
        assert code == 1
        assert "--grid" in capsys.readouterr().err


class TestStdpCompare:
    def test_histogram_rows_cover_budget(self, workdir, tmp_path):
        root, cfg, data = workdir
        out = tmp_path / "hist.csv"
        assert run(["stdp-compare", "--rule", "kheradpisheh", "--config",
                    str(cfg), "--data-dir", str(data),
                    "--hist-out", str(out)]) == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0].startswith("pct,bin_lo,bin_hi,c00")
        assert len(lines) == 101  # header + one row per percent
        first = lines[1].split(",")
        assert float(first[0]) == 1.0
        counts = np.array([int(c) for c in lines[-1].split(",")[3:]])
        assert counts.sum() == 2 * 7 * 7 * 2  # every excitatory weight binned

    def test_unknown_rule_rejected(self, workdir, tmp_path, capsys):
        root, cfg, data = workdir
        code = run(["stdp-compare", "--rule", "hebb", "--config", str(cfg),
                    "--data-dir", str(data), "--hist-out",
                    str(tmp_path / "h.csv")])
        assert code == 1
        assert "--rule" in capsys.readouterr().err
