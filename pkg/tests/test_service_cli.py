import json

import numpy as np
import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from frostlab.cli import main
from frostlab.dyadic import DyadicMeasure, DyadicSet, uniform_on
from frostlab.liplib import random_zigzag
from frostlab.multiscale import frostman_multiscale
from frostlab.service import app

from conftest import random_measure, regular_cantor

client = TestClient(app)


@pytest.fixture
def measure_json():
    return random_measure(2, 6, seed=1).to_json()


@pytest.fixture
def piece_json():
    sigma = [1.0, 0.5, 0.5, 1.0, 0.5, 0.0, 0.5, 0.5, 0.5, 0.5]
    return regular_cantor(1, 2, 10, sigma, seed=1).to_json()


class TestService:
    def test_measure_info(self, measure_json):
        r = client.post("/measure/info", json={"object": measure_json})
        assert r.status_code == 200
        out = r.json()
        assert out["kind"] == "measure" and out["d"] == 2 and out["m"] == 6
        assert out["total_mass"] == pytest.approx(1.0)
        assert out["counts"]["0"] == 1

    def test_measure_info_set(self):
        obj = DyadicSet(2, 4, [(0, 0), (3, 3)]).to_json()
        out = client.post("/measure/info", json={"object": obj}).json()
        assert out["kind"] == "set" and out["cells"] == 2

    def test_regularize(self, measure_json):
        r = client.post("/regularize", json={"measure": measure_json,
                                             "T": 2, "ell": 3, "eps": 0.2})
        assert r.status_code == 200
        out = r.json()
        assert out["pieces"]
        assert out["union_mass"] + out["remainder_mass"] <= 1 + 1e-9

    def test_lip_decompose_modes(self):
        f = random_zigzag(256, seed=2).to_json()
        for mode in ["linear", "graded", "superlinear"]:
            r = client.post("/lip/decompose", json={"function": f,
                                                    "eps": 0.2, "mode": mode})
            assert r.status_code == 200
            assert r.json()["kind"] in (mode, "main")

    def test_lip_decompose_bad_mode(self):
        f = random_zigzag(64, seed=0).to_json()
        r = client.post("/lip/decompose", json={"function": f, "eps": 0.1,
                                                "mode": "bogus"})
        assert r.status_code == 422

    def test_multiscale(self, piece_json):
        r = client.post("/multiscale", json={"piece": piece_json,
                                             "u": 0.1, "eps": 0.4})
        assert r.status_code == 200
        out = r.json()
        assert out["report"]["ok"]
        assert out["decomposition"]["intervals"]

    def test_multiscale_ahlfors(self, piece_json):
        r = client.post("/multiscale", json={"piece": piece_json,
                                             "eps": 0.4, "ahlfors": True})
        assert r.status_code == 200 and r.json()["report"]["ok"]

    def test_entropy_bound(self):
        piece = regular_cantor(2, 2, 3, [1.0, 0.5, 1.0], seed=4)
        r = client.post("/multiscale", json={"piece": piece.to_json(),
                                             "eps": 0.7, "ahlfors": True})
        assert r.status_code == 200, r.text
        dec = r.json()["decomposition"]
        r2 = client.post("/entropy/bound",
                         json={"measure": piece.measure.to_json(),
                               "map": "proj", "theta": [1.0, 0.0],
                               "dec": dec, "k": 1})
        assert r2.status_code == 200
        out = r2.json()
        assert out["deficit"] == pytest.approx(out["rhs"] - out["lhs"])

    def test_project(self, measure_json):
        r = client.post("/project", json={"measure": measure_json,
                                          "theta": [1.0, 1.0], "m": 6})
        assert r.status_code == 200
        pm = DyadicMeasure.from_json(r.json())
        assert pm.d == 1 and float(pm.total) == pytest.approx(1.0)

    def test_energy(self, measure_json):
        r = client.post("/energy", json={"measure": measure_json,
                                         "sigma": 0.5})
        assert r.status_code == 200
        out = r.json()
        assert out["total"] == pytest.approx(out["offdiag"] + out["self_term"])

    def test_kaufman(self, measure_json):
        r = client.post("/kaufman", json={"measure": measure_json,
                                          "sigma": 0.5, "kappa": 0.9,
                                          "C": 5.0, "n_dirs": 32})
        assert r.status_code == 200 and r.json()["pass"]

    def test_kaufman_decay_rejected(self, measure_json):
        r = client.post("/kaufman", json={"measure": measure_json,
                                          "sigma": 0.5, "kappa": 0.9,
                                          "C": 1.0, "n_dirs": 32})
        assert r.status_code == 422

    def test_radial(self, measure_json):
        nu = uniform_on(DyadicSet(2, 6, [(i, (i * 7 + 3) % 64)
                                         for i in range(64)]))
        r = client.post("/radial", json={"mu": measure_json,
                                         "nu": nu.to_json(),
                                         "delta0": 0.125, "eta": 0.3,
                                         "depth": 1, "k": 1})
        assert r.status_code == 200
        out = r.json()
        assert "report" in out and "L" in out and "K" in out

    def test_incidence(self):
        r = client.post("/incidence", json={"generator":
                                            {"name": "train_track"},
                                            "m": 8, "delta": 2.0 ** -8,
                                            "a_count": 16})
        assert r.status_code == 200
        out = r.json()
        assert out["count"] == 16 * 16 and out["multiplicity"] == 1

    def test_sweep(self):
        X = DyadicSet(2, 8, [(i, i) for i in range(256)])
        r = client.post("/sweep", json={"set": X.to_json(), "m": 8,
                                        "directions": 4, "seed": 0})
        assert r.status_code == 200
        assert r.json()["csv"].startswith("theta,exponent")

    def test_run(self):
        sc = {"generator": {"name": "cantor_product",
                            "params": {"d": 2, "keeps": [[0, 3], [0]]}},
              "m": 20, "T": 2, "eps": 0.4, "u": 0.05, "n_directions": 2,
              "seed": 1}
        r = client.post("/run", json={"scenario": sc})
        assert r.status_code == 200
        assert "aggregate" in r.json()["stages"]

    def test_validation_error(self):
        r = client.post("/regularize", json={"measure": {"d": 1}, "T": 2})
        assert r.status_code == 422


class TestCli:
    def setup_method(self):
        self.runner = CliRunner()

    def _write(self, tmp_path, name, obj):
        p = tmp_path / name
        p.write_text(json.dumps(obj))
        return str(p)

    def test_measure_info(self, tmp_path):
        path = self._write(tmp_path, "mu.json",
                           random_measure(2, 5, seed=2).to_json())
        res = self.runner.invoke(main, ["measure", "info", path])
        assert res.exit_code == 0, res.output
        assert json.loads(res.output)["kind"] == "measure"

    def test_regularize(self, tmp_path):
        path = self._write(tmp_path, "mu.json",
                           random_measure(2, 6, seed=3).to_json())
        res = self.runner.invoke(main, ["regularize", path, "--T", "2",
                                        "--ell", "3", "--eps", "0.2"])
        assert res.exit_code == 0, res.output
        assert json.loads(res.output)["pieces"]

    def test_lip_decompose(self, tmp_path):
        path = self._write(tmp_path, "f.json",
                           random_zigzag(256, seed=4).to_json())
        res = self.runner.invoke(main, ["lip", "decompose", path,
                                        "--eps", "0.2", "--mode", "graded"])
        assert res.exit_code == 0, res.output
        assert json.loads(res.output)["kind"] == "graded"

    def test_multiscale(self, tmp_path):
        sigma = [1.0, 0.5, 0.5, 1.0, 0.5, 0.0, 0.5, 0.5, 0.5, 0.5]
        piece = regular_cantor(1, 2, 10, sigma, seed=1)
        path = self._write(tmp_path, "piece.json", piece.to_json())
        res = self.runner.invoke(main, ["multiscale", path, "--u", "0.1",
                                        "--eps", "0.4"])
        assert res.exit_code == 0, res.output
        assert json.loads(res.output)["report"]["ok"]

    def test_multiscale_requires_u(self, tmp_path):
        path = self._write(tmp_path, "piece.json",
                           regular_cantor(1, 2, 3, [0.5] * 3).to_json())
        res = self.runner.invoke(main, ["multiscale", path, "--eps", "0.4"])
        assert res.exit_code != 0
        assert "--u is required" in res.output

    def test_energy_and_project(self, tmp_path):
        path = self._write(tmp_path, "mu.json",
                           random_measure(2, 5, seed=5).to_json())
        res = self.runner.invoke(main, ["energy", path, "--sigma", "0.5"])
        assert res.exit_code == 0, res.output
        res2 = self.runner.invoke(main, ["project", path, "--theta", "1,0",
                                         "--m", "5"])
        assert res2.exit_code == 0, res2.output

    def test_incidence_generator(self):
        res = self.runner.invoke(main, ["incidence", "--generator",
                                        "train_track", "--m", "8",
                                        "--delta", str(2.0 ** -8),
                                        "--a-count", "16"])
        assert res.exit_code == 0, res.output
        assert json.loads(res.output)["count"] == 256

    def test_sweep_writes_csv(self, tmp_path):
        X = DyadicSet(2, 8, [(i, (i * 13) % 256) for i in range(256)])
        path = self._write(tmp_path, "set.json", X.to_json())
        out_csv = str(tmp_path / "sweep.csv")
        res = self.runner.invoke(main, ["sweep", path, "--m", "8",
                                        "--directions", "4", "--seed", "0",
                                        "--out", out_csv])
        assert res.exit_code == 0, res.output
        text = open(out_csv).read()
        assert text.startswith("theta,exponent")
        assert len(text.strip().split("\n")) == 5

    def test_error_surfaces_as_click_exception(self, tmp_path):
        path = self._write(tmp_path, "mu.json",
                           random_measure(2, 5, seed=6).to_json())
        res = self.runner.invoke(main, ["kaufman", path, "--sigma", "0.9",
                                        "--kappa", "0.5"])
        assert res.exit_code != 0
        assert "kappa" in res.output

    def test_server_flag_posts_http(self, tmp_path, monkeypatch):
        # route httpx.post into the in-process TestClient
        import httpx

        def fake_post(url, json=None, timeout=None):
            path = url.split("http://svc", 1)[1]
            return client.post(path, json=json)

        monkeypatch.setattr(httpx, "post", fake_post)
        path = self._write(tmp_path, "mu.json",
                           random_measure(2, 5, seed=7).to_json())
        res = self.runner.invoke(main, ["--server", "http://svc",
                                        "measure", "info", path])
        assert res.exit_code == 0, res.output
        assert json.loads(res.output)["kind"] == "measure"
