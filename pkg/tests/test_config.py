"""Config parsing, validation diagnostics, and CSV schema handling."""

import pytest

from acp.config import config_from_dict, load_config
from acp.csvio import column, read_csv, render_csv, write_csv
from acp.errors import ConfigError, DegenerateIntervalError, SchemaError
from acp.netsim import Delay, Exponential, LinkRate


class TestDefaults:
    def test_no_file_gives_defaults(self):
        cfg = load_config(None)
        assert cfg.topology.kind == "mm1"
        assert cfg.controller.kappa == 0.25
        assert cfg.run.seeds == [1]
        assert cfg.net.updates == 1000

    def test_missing_file(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("/nonexistent/exp.toml")


class TestTomlLoading:
    def test_file_roundtrip(self, tmp_path):
        p = tmp_path / "exp.toml"
        p.write_text(
            "[topology]\n"
            'kind = "tandem"\n'
            "mus = [1.0, 5.0]\n"
            "[run]\n"
            "duration_s = 250.0\n"
            "seeds = [4, 5]\n"
        )
        cfg = load_config(str(p))
        assert cfg.topology.mus == [1.0, 5.0]
        assert cfg.run.duration_s == 250.0
        assert cfg.run.seeds == [4, 5]

    def test_bad_toml_reports_path(self, tmp_path):
        p = tmp_path / "broken.toml"
        p.write_text("[run\n")
        with pytest.raises(ConfigError, match="broken.toml"):
            load_config(str(p))


class TestValidation:
    def test_unknown_section_named(self):
        with pytest.raises(ConfigError, match="topologee"):
            config_from_dict({"topologee": {"kind": "mm1"}})

    def test_unknown_key_named_with_path(self):
        with pytest.raises(ConfigError, match=r"controller\.kapa"):
            config_from_dict({"controller": {"kapa": 0.5}})

    def test_type_mismatch(self):
        with pytest.raises(ConfigError, match=r"run\.duration_s"):
            config_from_dict({"run": {"duration_s": "long"}})

    def test_zero_duration_is_degenerate(self):
        with pytest.raises(DegenerateIntervalError):
            config_from_dict({"run": {"duration_s": 0.0}})

    def test_unknown_topology_kind(self):
        with pytest.raises(ConfigError, match="hypercube"):
            config_from_dict({"topology": {"kind": "hypercube"}})

    def test_unknown_controller_kind(self):
        with pytest.raises(ConfigError, match="turbo"):
            config_from_dict({"controller": {"kind": "turbo"}})

    def test_empty_seeds_rejected(self):
        with pytest.raises(ConfigError, match=r"run\.seeds"):
            config_from_dict({"run": {"seeds": []}})


class TestOverrides:
    def test_numeric_and_string_overrides(self):
        cfg = load_config(None, ["run.duration_s=42.5", "controller.kind=lazy"])
        assert cfg.run.duration_s == 42.5
        assert cfg.controller.kind == "lazy"

    def test_list_override(self):
        cfg = load_config(None, ["run.seeds=[7, 8, 9]"])
        assert cfg.run.seeds == [7, 8, 9]

    def test_malformed_override(self):
        with pytest.raises(ConfigError, match="section.key=value"):
            load_config(None, ["duration=1"])

    def test_override_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match=r"run\.durtion_s"):
            load_config(None, ["run.durtion_s=10"])


class TestTopologyBuild:
    def test_mm1(self):
        topo = config_from_dict({"topology": {"kind": "mm1", "mu": 2.0}}).topology.build()
        assert len(topo.forward) == 1
        assert isinstance(topo.forward[0].service, Exponential)
        assert topo.forward[0].service.mu == 2.0
        assert topo.reverse == ()

    def test_chain(self):
        topo = config_from_dict(
            {"topology": {"kind": "chain_mbps",
                          "rates_mbps": [1.0, 1.0, 5.0, 5.0, 1.0, 1.0],
                          "cross_mbps": 0.2}}
        ).topology.build()
        assert len(topo.forward) == 6
        assert isinstance(topo.forward[0].service, LinkRate)
        assert len(topo.reverse) == 6
        # one independent background flow per forward link
        assert len(topo.cross) == 6
        assert all(f.entry == f.exit for f in topo.cross)

    def test_chain_cross_bits(self):
        topo = config_from_dict(
            {"topology": {"kind": "chain_mbps", "cross_mbps": 0.2,
                          "cross_bits": 1000}}
        ).topology.build()
        assert all(f.bits == 1000 for f in topo.cross)
        # load per link stays 0.2 Mbps whatever the packet size
        assert topo.cross[0].rate_pps * 1000 == pytest.approx(0.2e6)

    def test_delay_pair(self):
        topo = config_from_dict(
            {"topology": {"kind": "delay", "delay_s": 0.02}}
        ).topology.build()
        assert isinstance(topo.forward[0].service, Delay)
        assert len(topo.reverse) == 1

    def test_loss_applied_to_forward(self):
        topo = config_from_dict(
            {"topology": {"kind": "mm1", "loss": 0.1}}
        ).topology.build()
        assert topo.forward[0].loss_prob == 0.1


class TestSweepRates:
    def test_grid(self):
        cfg = config_from_dict(
            {"sweep": {"start": 0.2, "stop": 0.6, "step": 0.2}}
        )
        assert cfg.sweep.rates() == [0.2, 0.4, 0.6]

    def test_bad_grid(self):
        with pytest.raises(ConfigError, match="sweep"):
            config_from_dict({"sweep": {"step": -1.0}}).sweep.rates()


class TestCsv:
    def test_schema_line_and_roundtrip(self, tmp_path):
        p = tmp_path / "out.csv"
        write_csv(str(p), "demo.v1", ["a", "b_s"], [[1, 0.25], [2, None]])
        text = p.read_text()
        assert text.splitlines()[0] == "#schema=demo.v1"
        header, rows = read_csv(str(p), "demo.v1")
        assert header == ["a", "b_s"]
        assert rows == [["1", "0.25"], ["2", ""]]

    def test_float_repr_preserves_value(self, tmp_path):
        p = tmp_path / "f.csv"
        x = 3.4844487778495557
        write_csv(str(p), "demo.v1", ["x"], [[x]])
        _, rows = read_csv(str(p), "demo.v1")
        assert float(rows[0][0]) == x

    def test_version_mismatch(self, tmp_path):
        p = tmp_path / "old.csv"
        write_csv(str(p), "demo.v1", ["a"], [[1]])
        with pytest.raises(SchemaError, match="demo.v2"):
            read_csv(str(p), "demo.v2")

    def test_missing_schema_line(self, tmp_path):
        p = tmp_path / "raw.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(SchemaError, match="schema"):
            read_csv(str(p), "demo.v1")

    def test_empty_data_rejected(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("#schema=demo.v1\na,b\n")
        with pytest.raises(SchemaError, match="no data rows"):
            read_csv(str(p), "demo.v1")

    def test_row_width_checked(self):
        with pytest.raises(SchemaError, match="cells"):
            render_csv("demo.v1", ["a", "b"], [[1]])

    def test_column_lookup(self):
        header = ["a", "b"]
        rows = [["1", "2"], ["3", "4"]]
        assert column(header, rows, "b") == ["2", "4"]
        with pytest.raises(SchemaError, match="missing column"):
            column(header, rows, "c")

    def test_booleans_lowercase(self):
        text = render_csv("demo.v1", ["ok"], [[True], [False]])
        assert "true" in text and "false" in text
