import json

import pytest

from ferrofem import cli, driver, verify
from ferrofem.cli import ConfigError, parse_config


class TestParseConfig:
    def test_empty_text_gives_defaults(self):
        cfg = parse_config("")
        assert cfg.pair == "l0"
        assert cfg.levels == (4, 8, 16, 32, 64, 128)
        assert cfg.picard_iters == 2
        assert cfg.oseen_iters == 2
        assert cfg.quad_bump == 2
        assert cfg.seed == 42
        prm = cfg.material_params()
        assert (prm.mu0, prm.Ms, prm.gamma, prm.rho, prm.eta) == (1, 1, 1, 1, 1)

    def test_overrides_applied_others_default(self):
        cfg = parse_config("pair = l1\nlevels = 4,8,16\n")
        assert cfg.pair == "l1"
        assert cfg.levels == (4, 8, 16)
        assert cfg.picard_iters == 2

    def test_comments_and_blank_lines(self):
        cfg = parse_config("# a comment\n\npair = l1  # trailing\n")
        assert cfg.pair == "l1"

    def test_non_ascending_levels_rejected(self):
        with pytest.raises(ConfigError, match="ascending"):
            parse_config("levels = 8,4\n")

    def test_unknown_key_line_numbered(self):
        with pytest.raises(ConfigError, match="line 2.*unknown key"):
            parse_config("pair = l0\nwibble = 3\n")

    def test_malformed_value_line_numbered(self):
        with pytest.raises(ConfigError, match="line 1"):
            parse_config("picard_iters = many\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_config("pair l0\n")

    def test_bad_pair_rejected(self):
        with pytest.raises(ConfigError, match="pair"):
            parse_config("pair = l7\n")

    def test_material_params_from_chi0(self):
        cfg = parse_config("chi0 = 1.0\nMs = 2.0\n")
        assert cfg.material_params().gamma == pytest.approx(1.5)

    def test_inconsistent_gamma_chi0_rejected(self):
        with pytest.raises(ConfigError, match="inconsistent"):
            parse_config("gamma = 1.0\nchi0 = 1.0\n")

    def test_nonpositive_parameter_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("eta = -2.0\n")


class TestCsvFormat:
    def test_structure_and_footers(self):
        report = verify.run_convergence_study("l0", [4, 8])
        text = cli.format_csv(report)
        lines = text.strip().split("\n")
        assert lines[0] == cli.CSV_HEADER
        assert len(lines) == 1 + 2 + 2
        assert lines[-2].startswith("order_pairwise,,")
        assert lines[-1].startswith("order_lsq,,")
        for line in lines[1:3]:
            assert len(line.split(",")) == 8

    def test_curl_column_scientific_four_significant_digits(self):
        report = verify.run_convergence_study("l0", [4, 8])
        text = cli.format_csv(report)
        curl_field = text.strip().split("\n")[1].split(",")[-1]
        mantissa, exp = curl_field.split("e")
        assert len(mantissa.replace(".", "").lstrip("-")) == 4

    def test_failed_trailer(self):
        report = verify.run_convergence_study("l0", [4])
        text = cli.format_csv(report, failed_at=8)
        assert text.strip().endswith("# FAILED at N=8")


class TestCommands:
    def test_run_writes_csv_and_json(self, tmp_path):
        cfg = parse_config("levels = 4,8\n")
        cfg.out_csv = str(tmp_path / "out.csv")
        cfg.out_json = str(tmp_path / "out.json")
        assert cli.cmd_run(cfg) == 0
        lines = (tmp_path / "out.csv").read_text().strip().split("\n")
        assert len(lines) == 5
        doc = json.loads((tmp_path / "out.json").read_text())
        assert doc["levels"] == [4, 8]
        assert set(doc["orders_lsq"]) == set(verify.ERROR_COLUMNS)
        assert doc["rows"][0]["errors"]["err_phi_h1"] == pytest.approx(0.3943, rel=0.01)

    def test_run_partial_output_on_failure(self, tmp_path, monkeypatch):
        real = verify._solve_level

        def flaky(pair, n, *args):
            if n == 8:
                raise driver.StageError("navier-stokes", RuntimeError("forced"))
            return real(pair, n, *args)

        monkeypatch.setattr(verify, "_solve_level", flaky)
        cfg = parse_config("levels = 4,8,16\n")
        cfg.out_csv = str(tmp_path / "out.csv")
        cfg.out_json = str(tmp_path / "out.json")
        assert cli.cmd_run(cfg) == 1
        text = (tmp_path / "out.csv").read_text()
        assert "# FAILED at N=8" in text
        assert text.count("\n") >= 2  # header + the completed N=4 row
        doc = json.loads((tmp_path / "out.json").read_text())
        assert doc["failed_at"] == 8

    def test_table_prints_csv(self, capsys):
        assert cli.cmd_table(parse_config("levels = 4\n")) == 0
        out = capsys.readouterr().out
        assert out.startswith(cli.CSV_HEADER)
        assert len(out.strip().split("\n")) == 2  # no orders with one level

    def test_check_quick_passes(self, capsys):
        assert cli.cmd_check(seed=42, quick=True) == 0
        out = capsys.readouterr().out
        assert "PASS alpha-bounds" in out
        assert "FAIL" not in out

    def test_check_reports_failures(self, capsys, monkeypatch):
        def broken(seed=42, quick=False, alpha_fn=None):
            return [verify.PropertyResult("alpha-bounds", False, "forced")]

        monkeypatch.setattr(verify, "run_property_battery", broken)
        assert cli.cmd_check() == 1
        assert "FAIL alpha-bounds" in capsys.readouterr().out


class TestMain:
    def test_missing_config_file_exits_2(self, capsys):
        assert cli.main(["run", "--config", "/nonexistent/path.cfg"]) == 2
        assert "config error" in capsys.readouterr().err

    def test_bad_config_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("levels = 8,4\n")
        assert cli.main(["table", "--config", str(path)]) == 2

    def test_run_roundtrip(self, tmp_path):
        path = tmp_path / "ok.cfg"
        path.write_text("levels = 4\n")
        rc = cli.main(
            [
                "run",
                "--config",
                str(path),
                "--out-csv",
                str(tmp_path / "t.csv"),
                "--out-json",
                str(tmp_path / "t.json"),
            ]
        )
        assert rc == 0
        assert (tmp_path / "t.csv").exists()

    def test_small_run_bit_identical(self, tmp_path):
        path = tmp_path / "ok.cfg"
        path.write_text("levels = 4,8\n")
        outs = []
        for tag in ("a", "b"):
            rc = cli.main(
                [
                    "run",
                    "--config",
                    str(path),
                    "--out-csv",
                    str(tmp_path / f"{tag}.csv"),
                    "--out-json",
                    str(tmp_path / f"{tag}.json"),
                ]
            )
            assert rc == 0
            outs.append((tmp_path / f"{tag}.csv").read_bytes())
        assert outs[0] == outs[1]
