import csv
import json

import numpy as np
import pytest

from hsprobe import cli
from hsprobe.errors import ConfigurationError
from hsprobe.grid import GridSpec, ScalarGridField, VectorGridField
from hsprobe.io import read_field, read_header, sha256, write_field


def _acoustic_config(index=1.0, **extra):
    cfg = {
        "physics": "acoustic",
        "medium": {"shape": {"kind": "ball", "params": [0.6]}, "k": 1.0, "index": index},
        "grid": {"n": 16, "half_width": 1.0},
        "directions": {"n_theta": 4, "n_phi": 8},
    }
    cfg.update(extra)
    return cfg


def _run(tmp_path, args, config=None, name="cfg.json"):
    out = tmp_path / "out"
    argv = list(args) + ["--out", str(out)]
    if config is not None:
        path = tmp_path / name
        path.write_text(json.dumps(config))
        argv += ["--config", str(path)]
    return cli.main(argv), out


class TestFieldIO:
    def test_scalar_round_trip(self, tmp_path, rng):
        g = GridSpec((0.1, -0.2, 0.3), 0.05, (3, 4, 5))
        f = ScalarGridField(g, rng.normal(size=g.dims) + 1j * rng.normal(size=g.dims))
        blob, header = write_field(tmp_path / "u", f, 2.5)
        back, k = read_field(tmp_path / "u")
        assert k == 2.5 and back.grid == g
        np.testing.assert_array_equal(back.values, f.values)
        assert blob.stat().st_size == 16 * g.size

    def test_vector_round_trip(self, tmp_path, rng):
        g = GridSpec((0.0, 0.0, 0.0), 0.1, (2, 3, 2))
        vals = rng.normal(size=g.dims + (3,)) + 0j
        write_field(tmp_path / "v", VectorGridField(g, vals), 1.0)
        back, _ = read_field(tmp_path / "v")
        np.testing.assert_array_equal(back.values, vals)
        assert read_header(tmp_path / "v.hdr")["components"] == 3

    def test_little_endian_c_order(self, tmp_path):
        g = GridSpec((0.0, 0.0, 0.0), 1.0, (1, 1, 2))
        write_field(tmp_path / "w", ScalarGridField(g, np.array([[[1 + 2j, 3 - 4j]]])), 1.0)
        raw = np.fromfile(tmp_path / "w.bin", dtype="<f8")
        np.testing.assert_array_equal(raw, [1, 2, 3, -4])

    def test_truncated_blob(self, tmp_path):
        g = GridSpec((0.0, 0.0, 0.0), 1.0, (2, 2, 2))
        write_field(tmp_path / "t", ScalarGridField(g, np.zeros(g.dims, dtype=complex)), 1.0)
        (tmp_path / "t.bin").write_bytes(b"\0" * 16)
        with pytest.raises(ConfigurationError):
            read_field(tmp_path / "t")

    def test_header_missing_key(self, tmp_path):
        (tmp_path / "h.hdr").write_text("dims = 1 1 1\n")
        with pytest.raises(ConfigurationError):
            read_header(tmp_path / "h.hdr")


class TestConfig:
    def test_valid(self):
        cfg = cli.load_config(_acoustic_config(1.5))
        assert cfg.physics == "acoustic" and cfg.medium.index == 1.5 and cfg.grid.dims == (16, 16, 16)

    @pytest.mark.parametrize("mutate, field", [
        (lambda c: c.pop("physics"), "physics"),
        (lambda c: c["medium"].pop("k"), "medium.k"),
        (lambda c: c["medium"].update(k="fast"), "medium.k"),
        (lambda c: c["medium"].update(shape={"kind": "blob"}), "medium.shape"),
        (lambda c: c.update(grid={"n": 8, "half_width": 0.5}), "grid"),
        (lambda c: c.update(solver={"tol": -1}), "solver.tol"),
    ])
    def test_names_offending_field(self, mutate, field):
        cfg = _acoustic_config()
        mutate(cfg)
        with pytest.raises(ConfigurationError, match=field.replace(".", r"\.")):
            cli.load_config(cfg)


class TestCommands:
    def test_forward_homogeneous(self, tmp_path):
        code, out = _run(tmp_path, ["forward"], _acoustic_config(1.0))
        assert code == 0
        rows = list(csv.reader(open(out / "farfield.csv")))
        assert rows[0] == ["theta", "phi", "re", "im", "weight"]
        assert all(float(r[2]) == 0 and float(r[3]) == 0 for r in rows[1:])
        man = json.loads((out / "manifest.json").read_text())
        assert man["status"] == "complete"
        for name, digest in man["outputs"].items():
            assert sha256(out / name) == digest
        assert set(man["outputs"]) == {"farfield.csv", "total.bin", "total.hdr"}

    def test_forward_mie_comparison(self, tmp_path, capsys):
        code, out = _run(tmp_path, ["forward"], _acoustic_config(1.5, compare="mie"))
        assert code == 0
        assert "relative L2 far-field error vs mie" in capsys.readouterr().out
        rows = list(csv.DictReader(open(out / "comparison.csv")))
        assert float(rows[0]["rel_err"]) < 0.1

    def test_malformed_config_exit_2(self, tmp_path, capsys):
        cfg = _acoustic_config()
        cfg["medium"]["k"] = "fast"
        code, _ = _run(tmp_path, ["forward"], cfg)
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert "medium.k" in err["message"]

    def test_invalid_json_exit_2(self, tmp_path):
        (tmp_path / "bad.json").write_text("{not json")
        assert cli.main(["forward", "--config", str(tmp_path / "bad.json"), "--out", str(tmp_path / "o")]) == 2

    def test_unknown_suite_exit_2(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(["verify", "nonsense", "--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_solver_failure_exit_1(self, tmp_path):
        cfg = _acoustic_config(1.5, solver={"tol": 1e-14, "restart": 2, "maxiter": 1})
        code, out = _run(tmp_path, ["forward"], cfg)
        assert code == 1
        assert json.loads((out / "manifest.json").read_text())["status"] == "error"

    def test_probe_empty_anchor_list(self, tmp_path):
        code, out = _run(tmp_path, ["probe"], _acoustic_config(1.5, probe={"anchors": [], "j_range": [1, 4]}))
        assert code == 0
        assert sorted(p.name for p in out.iterdir()) == ["manifest.json"]

    def test_probe_j_cap_exit_2(self, tmp_path, capsys):
        cfg = _acoustic_config(1.5, probe={"anchors": [{"direction": [0, 0, 1]}], "j_range": [1, 5]})
        code, _ = _run(tmp_path, ["probe"], cfg)
        assert code == 2
        assert "probe.j_range" in capsys.readouterr().err

    def test_probe_outputs(self, tmp_path):
        cfg = _acoustic_config(1.5, probe={"anchors": [{"direction": [0, 0, 1]}], "j_range": [1, 4]})
        code, out = _run(tmp_path, ["probe"], cfg)
        assert code == 0
        fit = json.loads((out / "fit_000.json").read_text())
        assert fit["classification"] in ("boundary", "exterior")
        header = (out / "probe_000.csv").read_text().splitlines()[0]
        assert header == "j,zx,zy,zz,re_v,im_v,abs_v"

    def test_verify_kelvin_gradient_suite(self, tmp_path):
        code, out = _run(tmp_path, ["verify", "lemma31", "--seed", "3"])
        assert code == 0
        rows = list(csv.DictReader(open(out / "verify.csv")))
        assert rows and all(r["pass"] == "PASS" for r in rows)

    def test_determinism(self, tmp_path):
        cfg = _acoustic_config(1.5)
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        a, out_a = _run(tmp_path / "a", ["forward"], cfg)
        b, out_b = _run(tmp_path / "b", ["forward"], cfg)
        assert a == b == 0
        man_a = json.loads((out_a / "manifest.json").read_text())
        man_b = json.loads((out_b / "manifest.json").read_text())
        assert man_a["outputs"] == man_b["outputs"]
        assert man_a["config_sha256"] == man_b["config_sha256"]
