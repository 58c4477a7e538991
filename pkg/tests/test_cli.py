import json
from pathlib import Path

import pytest

from templink.cli import (EXIT_DATA, EXIT_OK, EXIT_USAGE, OutputLock,
                          UsageError, load_config_file, main, make_parser)
from templink.graphs import load_adjacency
from templink.pipeline import parse_years
from templink.reporting import bundled_results_path

GOLDEN = Path(__file__).parent / "golden"


class TestParseYears:
    def test_range(self):
        assert parse_years("2019..2022") == [2019, 2020, 2021, 2022]

    def test_single_year_range(self):
        assert parse_years("2020..2020") == [2020]

    def test_comma_list(self):
        assert parse_years("2019,2021") == [2019, 2021]

    def test_descending_range_rejected(self):
        with pytest.raises(ValueError):
            parse_years("2022..2019")

    def test_garbage_rejected(self):
        with pytest.raises(ValueError):
            parse_years("twenty nineteen")


class TestConfigFile:
    def test_missing_file(self, tmp_path):
        with pytest.raises(UsageError):
            load_config_file(tmp_path / "none.ini")

    def test_sections_parsed(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text(
            "[paths]\ndata_dir = /d\nout_dir = /o\n"
            "[run]\nyears = 2019..2020\nmode = forward_only\n"
            "categories = new\n"
            "[graphs]\nk = 3\nmin_count = 2\nmax_count = 5\nembed_dim = 16\n"
            "[model]\ndim = 8\ngcn_out = 4\n"
            "[train]\nlearning_rate = 0.01\nepochs = 2\n")
        cfg = load_config_file(ini)
        assert cfg.data_dir == "/d" and cfg.out_dir == "/o"
        assert cfg.years == [2019, 2020]
        assert cfg.mode == "forward_only"
        assert cfg.categories == ["new"]
        assert (cfg.k, cfg.min_count, cfg.max_count) == (3, 2, 5)
        assert cfg.embed_dim == 16
        assert cfg.model.dim == 8 and cfg.model.gcn_out == 4
        assert cfg.train.learning_rate == 0.01 and cfg.train.epochs == 2

    def test_defaults_when_sections_absent(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[paths]\nout_dir = /o\n")
        cfg = load_config_file(ini)
        assert cfg.k == 10 and cfg.min_count == 46 and cfg.max_count == 200
        assert cfg.train.batch_size == 32

    def test_cli_flags_beat_file(self, tmp_path):
        ini = tmp_path / "run.ini"
        ini.write_text("[graphs]\nk = 3\n[run]\nyears = 2019\n")
        parser = make_parser()
        args = parser.parse_args(["build-graphs", "--config", str(ini),
                                  "--k", "7", "--years", "2021"])
        from templink.cli import build_run_config
        cfg = build_run_config(args)
        assert cfg.k == 7
        assert cfg.years == [2021]

    def test_seed_flag_sets_all_seeds(self):
        parser = make_parser()
        args = parser.parse_args(["train", "--seed", "11"])
        from templink.cli import build_run_config
        cfg = build_run_config(args)
        assert cfg.train.seed == 11
        assert cfg.model.seed == 11
        assert cfg.embed_seed == 11


class TestOutputLock:
    def test_acquire_release(self, tmp_path):
        with OutputLock(tmp_path):
            assert (tmp_path / ".lock").exists()
        assert not (tmp_path / ".lock").exists()

    def test_contention(self, tmp_path):
        with OutputLock(tmp_path):
            with pytest.raises(UsageError):
                OutputLock(tmp_path).__enter__()

    def test_stale_lock_blocks_main(self, tmp_path, toy_data):
        out = tmp_path / "out"
        out.mkdir()
        (out / ".lock").write_text("12345")
        code = main(["build-graphs", "--data-dir", str(toy_data),
                     "--out-dir", str(out), "--years", "2019"])
        assert code == EXIT_USAGE


class TestMainDispatch:
    def test_no_command_is_usage_error(self):
        assert main([]) == EXIT_USAGE

    def test_version_exits_ok(self):
        assert main(["--version"]) == EXIT_OK

    def test_bad_years_flag(self, tmp_path, toy_data):
        code = main(["build-graphs", "--data-dir", str(toy_data),
                     "--out-dir", str(tmp_path / "out"), "--years", "2022..2019"])
        assert code == EXIT_USAGE


class TestIngest:
    def test_jsonl_to_tsv(self, tmp_path):
        src = tmp_path / "ents.jsonl"
        src.write_text('{"qid": "Q1", "title": "A", "description": "first"}\n'
                       '{"qid": "Q2", "title": "B", "description": "second"}\n')
        data = tmp_path / "data"
        code = main(["ingest", "--data-dir", str(data), "--year", "2020",
                     "--entities", str(src)])
        assert code == EXIT_OK
        tsv = (data / "2020" / "entities.tsv").read_text()
        assert tsv == "Q1\tA\tfirst\nQ2\tB\tsecond\n"

    def test_idempotent(self, tmp_path):
        src = tmp_path / "ents.jsonl"
        src.write_text('{"qid": "Q1", "title": "A"}\n')
        data = tmp_path / "data"
        argv = ["ingest", "--data-dir", str(data), "--year", "2020",
                "--entities", str(src)]
        main(argv)
        first = (data / "2020" / "entities.tsv").read_bytes()
        main(argv)
        assert (data / "2020" / "entities.tsv").read_bytes() == first

    def test_missing_input_is_data_error(self, tmp_path):
        code = main(["ingest", "--data-dir", str(tmp_path / "d"),
                     "--year", "2020",
                     "--entities", str(tmp_path / "absent.jsonl")])
        assert code == EXIT_DATA


def toy_graphs_argv(data, out, extra=()):
    return (["build-graphs", "--data-dir", str(data), "--out-dir", str(out),
             "--years", "2019", "--min-count", "2", "--max-count", "5"]
            + list(extra))


def write_graphs_ini(path, data, out):
    path.write_text(
        f"[paths]\ndata_dir = {data}\nout_dir = {out}\n"
        "[run]\nyears = 2019\n"
        "[graphs]\nk = 3\nmin_count = 2\nmax_count = 5\nembed_dim = 16\n")
    return path


class TestBuildGraphs:
    def test_matches_golden(self, tmp_path, toy_data):
        out = tmp_path / "out"
        ini = write_graphs_ini(tmp_path / "run.ini", toy_data, out)
        assert main(["build-graphs", "--config", str(ini)]) == EXIT_OK
        for name in ("structure.adj", "feature.adj", "feature.mat",
                     "feature.mat.cols"):
            got = (out / "graphs" / "2019" / name).read_bytes()
            assert got == (GOLDEN / name).read_bytes(), name
        assert (out / "resolved_config.json").exists()

    def test_k_union_monotone(self, tmp_path, toy_data):
        edges = {}
        for k in (2, 4):
            out = tmp_path / f"out{k}"
            assert main(toy_graphs_argv(toy_data, out,
                                        ["--k", str(k)])) == EXIT_OK
            adj = load_adjacency(out / "graphs" / "2019" / "feature.adj")
            edges[k] = set(adj.edges)
        assert edges[2] <= edges[4]

    def test_band_excluding_everything_is_data_error(self, tmp_path, toy_data):
        code = main(["build-graphs", "--data-dir", str(toy_data),
                     "--out-dir", str(tmp_path / "out"), "--years", "2019",
                     "--min-count", "500", "--max-count", "900"])
        assert code == EXIT_DATA

    def test_lock_released_after_failure(self, tmp_path, toy_data):
        out = tmp_path / "out"
        main(["build-graphs", "--data-dir", str(toy_data),
              "--out-dir", str(out), "--years", "2019",
              "--min-count", "500", "--max-count", "900"])
        assert not (out / ".lock").exists()


def write_experiment_ini(path, data, out, years="2019..2020"):
    path.write_text(
        f"[paths]\ndata_dir = {data}\nout_dir = {out}\n"
        f"[run]\nyears = {years}\nmode = forward_and_backward\n"
        "[graphs]\nk = 3\nmin_count = 2\nmax_count = 5\nembed_dim = 16\n"
        "[model]\ndim = 8\ngcn_hidden = 4\ngcn_out = 4\ngcn_layers = 1\n"
        "encoder_layers = 1\nmax_len = 32\n"
        "[train]\nlearning_rate = 0.01\nepochs = 2\nbatch_size = 4\n")
    return path


class TestExperiment:
    def test_end_to_end_outputs(self, tmp_path, toy_data):
        out = tmp_path / "out"
        ini = write_experiment_ini(tmp_path / "run.ini", toy_data, out)
        assert main(["experiment", "--config", str(ini)]) == EXIT_OK
        for category in ("continual", "new"):
            assert (out / f"gap_matrix_{category}.csv").exists()
            assert (out / f"aggregate_{category}.csv").exists()
            for year in (2019, 2020):
                assert (out / "checkpoints" / f"{category}_{year}.ckpt").exists()
        assert (out / "recall_vs_gap.svg").exists()
        assert (out / "run_manifest.json").exists()
        # 2 categories x 2 years = 4 recorded checkpoints
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert len(manifest) == 4

    def test_rerun_skips_and_reproduces(self, tmp_path, toy_data):
        out = tmp_path / "out"
        ini = write_experiment_ini(tmp_path / "run.ini", toy_data, out)
        assert main(["experiment", "--config", str(ini)]) == EXIT_OK
        ckpt = out / "checkpoints" / "continual_2019.ckpt"
        before = ckpt.read_bytes()
        mtime = ckpt.stat().st_mtime_ns
        assert main(["experiment", "--config", str(ini)]) == EXIT_OK
        # checkpoint untouched: the run manifest marked it complete
        assert ckpt.stat().st_mtime_ns == mtime
        assert ckpt.read_bytes() == before

    def test_gap_matrix_dimensions(self, tmp_path, toy_data):
        out = tmp_path / "out"
        ini = write_experiment_ini(tmp_path / "run.ini", toy_data, out)
        assert main(["experiment", "--config", str(ini)]) == EXIT_OK
        lines = (out / "gap_matrix_new.csv").read_text().splitlines()
        assert len(lines) == 1 + 4  # header + 2x2 year grid


class TestReport:
    def test_bundled_table(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["report", "--out-dir", str(out),
                     "--table", str(bundled_results_path())])
        assert code == EXIT_OK
        result = json.loads((out / "table_boost.json").read_text())
        assert set(result) == {"boost_cells", "recomputed_average_boost",
                               "printed_average_boost"}
        assert result["printed_average_boost"]["gap0|continual"] == pytest.approx(
            16.88, abs=0.01)
        stdout = capsys.readouterr().out
        assert "ave boost continual gap 0" in stdout

    def test_bad_table_is_data_error(self, tmp_path):
        bad = tmp_path / "t.csv"
        bad.write_text("wrong,header\n")
        code = main(["report", "--out-dir", str(tmp_path / "out"),
                     "--table", str(bad)])
        assert code == EXIT_DATA
