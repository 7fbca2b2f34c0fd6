import json
import math

import pytest

import tribody


def test_lattice_shape():
    lat = tribody.build_lattice("uj", 4)
    assert lat.num_sites == 32
    assert lat.num_triangles == 64
    assert lat.is_valid()
    for tri in lat.triangles:
        assert len({lat.colors[v] for v in tri}) == 3
    dump = json.loads(lat.to_json())
    assert len(dump["triangles"]) == 64


def test_odd_size_rejected():
    with pytest.raises(ValueError, match="even"):
        tribody.build_lattice("uj", 13)


def test_disorder_round_trip():
    lat = tribody.build_lattice("uj", 6)
    d = tribody.sample_disorder(lat, 0.2, 11)
    assert d == tribody.sample_disorder(lat, 0.2, 11)
    assert tribody.disorder_from_json(d.to_json()) == d
    assert d.n_negative == sum(1 for t in d.tau if t < 0)


def test_nishimori_energy():
    lat = tribody.build_lattice("uj", 2)
    p = 0.109
    avg = tribody.exact_disorder_average(lat, p, tribody.nishimori_temperature(p))
    assert abs(avg["energy"] / lat.num_triangles + (1 - 2 * p)) < 1e-10


def test_simulation_close_to_exact():
    lat = tribody.build_lattice("uj", 2)
    d = tribody.sample_disorder(lat, 0.3, 101)
    rows = tribody.run_simulation(lat, d, [1.0, 4.0], n_sweeps=1 << 14, seed=3)
    for row in rows:
        exact = tribody.exact_thermal(lat, d, row["T"])
        assert abs(row["E"] - exact["E"]) < 0.05 * abs(exact["E"]) + 0.05


def test_crossing_and_collapse():
    t_star = 2.2692
    temps = [2.2 + 0.005 * i for i in range(31)]

    def curve(L, nu=1.0):
        return [0.6 - 0.3 * math.tanh(0.5 * L ** (1 / nu) * (t - t_star)) for t in temps]

    err = [1e-3] * len(temps)
    c = tribody.find_crossing(12, temps, curve(12), err, 24, temps, curve(24), err)
    assert c["status"] == "crossing"
    assert abs(c["T_cross"] - t_star) < 1e-3

    r = tribody.scaling_collapse([(L, temps, curve(L), err) for L in (12, 18, 24)], t_star + 0.01, 1.2)
    assert abs(r["nu"] - 1.0) < 0.01
    assert r["cost"] <= r["initial_cost"]


def test_config_problems(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"schema": 1, "lattice": "uj", "master_seed": 1,
                                "rows": [{"p": [0.1], "L": [13], "samples": 2, "b": 8,
                                          "T_min": 1.0, "T_max": 2.0, "n_T": 4}]}))
    problems = tribody.validate_config(path)
    assert any(p.startswith("rows[0].L[0]") for p in problems)


def test_sweep_and_analysis(tmp_path):
    cfg = {"schema": 1, "lattice": "uj", "master_seed": 9, "output_dir": str(tmp_path / "out"),
           "rows": [{"p": [0.0], "L": [4, 6, 8], "samples": 16, "b": 9,
                     "T_min": 1.8, "T_max": 2.8, "n_T": 6}]}
    path = tmp_path / "run.json"
    path.write_text(json.dumps(cfg))
    res = tribody.run_sweep(path, workers=2)
    assert res["completed_points"] == 3
    header = (tmp_path / "out" / "results.csv").read_text().splitlines()[0]
    assert header == tribody.csv_header()
    out = tribody.analyze(tmp_path / "out")
    assert len(out["boundary"]) == 1
