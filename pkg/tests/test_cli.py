import csv
import json
import math

import numpy as np
import pytest

from bosefold.cli import format_island, main, ratio_table

TABLE_ROWS = [
    "N_3=[0 0 1 0 1 2 0 1 2 3 0 1 2 3 4 0 1 2 3 4 5 0 1 2 3 4 5 6]",
    "N_2=[0 1 0 2 1 0 3 2 1 0 4 3 2 1 0 5 4 3 2 1 0 6 5 4 3 2 1 0]",
    "N_1=[6 5 5 4 4 4 3 3 3 3 2 2 2 2 2 1 1 1 1 1 1 0 0 0 0 0 0 0]",
]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def write_config(tmp_path, **cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_island(capsys):
    code, out, _ = run(capsys, "island", "6", "3")
    assert code == 0
    assert "size=28" in out and "z_low=56" in out and "z_high=83" in out


def test_island_list_matches_table(capsys):
    code, out, _ = run(capsys, "island", "6", "3", "--list")
    lines = out.splitlines()
    assert lines[-3:] == TABLE_ROWS
    z = [int(x) for x in lines[1].split("[")[1].rstrip("]").split()]
    assert sorted(z) == list(range(56, 84))


def test_island_from_config(capsys, tmp_path):
    cfg = write_config(tmp_path, K=4, N=2)
    code, out, _ = run(capsys, "island", "--config", cfg)
    assert code == 0 and "size=10" in out


def test_island_to_file(capsys, tmp_path):
    out = tmp_path / "island.txt"
    assert main(["island", "6", "3", "--out", str(out)]) == 0
    assert out.read_text() == format_island(6, 3, False)


def test_rank_unrank(capsys):
    assert run(capsys, "rank", "0", "0", "0")[1] == "0\n"
    assert run(capsys, "unrank", "83", "3")[1] == "(6, 0, 0)\n"
    assert run(capsys, "rank", "6", "0", "0")[1] == "83\n"


def test_rank_overflow_is_reported(capsys):
    code, _, err = run(capsys, "rank", "0", "0", str(10**7), "0", "0", "0", "0", "0", "0", "0")
    assert code == 2 and "error" in err


def test_zero_step_run(tmp_path, capsys):
    out = tmp_path / "run.csv"
    code, _, _ = run(capsys, "simulate", "--K", "3", "--N", "4", "--U", "1", "--steps", "0", "--out", str(out))
    assert code == 0
    rows = read_csv(out)
    assert rows[0] == ["step", "t", "norm", "energy", "n_1", "n_2", "n_3"]
    assert len(rows) == 2 and rows[1][:3] == ["0", "0", "1"]
    meta = json.loads((tmp_path / "run.csv.meta.json").read_text())
    assert meta["space"] == {"K": 3, "N": 4, "size": 15, "z_low": 20, "z_high": 34}
    assert meta["config"]["n_steps"] == 0
    assert set(meta["timings"]) == {"build", "spectral", "evolve"}
    assert meta["version"] == "0.1.0"
    assert meta["block_histograms"]["H12"] == {str(s): 1 for s in range(1, 6)}


def test_csv_format(tmp_path, capsys):
    out = tmp_path / "run.csv"
    run(capsys, "simulate", "--K", "3", "--N", "5", "--U", "0.7", "--J", "1.3", "--steps", "7", "--out", str(out))
    raw = out.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    rows = read_csv(out)
    assert [int(r[0]) for r in rows[1:]] == list(range(8))
    for r in rows[1:]:
        for cell in r[1:]:
            x = float(cell)
            assert format(x, ".17g") == cell
    assert abs(sum(float(c) for c in rows[-1][4:]) - 5) < 1e-12


def test_oracle_check_column(tmp_path, capsys):
    errs = []
    for dt in ("0.02", "0.01"):
        out = tmp_path / f"run{dt}.csv"
        n = str(int(round(0.2 / float(dt))))
        code, _, _ = run(
            capsys, "simulate", "--K", "3", "--N", "4", "--U", "1", "--mu", "0.2", "--dt", dt, "--steps", n,
            "--oracle-check", "--out", str(out),
        )
        assert code == 0
        rows = read_csv(out)
        assert rows[0][-1] == "oracle_err"
        col = [float(r[-1]) for r in rows[1:]]
        assert col[0] < 1e-14
        assert max(col) < 5 * float(dt) ** 2  # C dt^2 T with T = 0.2
        errs.append(col[-1])
    # second order: halving dt quarters the error at fixed T
    assert 3.2 < errs[0] / errs[1] < 4.8


def test_oracle_check_refuses_large(capsys):
    code, _, err = run(capsys, "simulate", "--K", "4", "--N", "10", "--steps", "1", "--oracle-check")
    assert code == 2 and "4096" in err


def test_optomech_run_and_oracle(tmp_path, capsys):
    cfg = write_config(
        tmp_path, model="optomech", Na=4, Nb=5, drive={"times": [0.0, 1.0], "values": [0.0, 1.0]},
        dt=0.01, n_steps=20, sample_every=5,
    )
    out = tmp_path / "om.csv"
    code, _, _ = run(capsys, "simulate", "--config", cfg, "--oracle-check", "--out", str(out))
    assert code == 0
    rows = read_csv(out)
    assert rows[0] == ["step", "t", "norm", "energy", "n_a", "n_b", "boundary_pop", "oracle_err"]
    assert [r[0] for r in rows[1:]] == ["0", "5", "10", "15", "20"]
    assert max(float(r[-1]) for r in rows[1:]) < 0.1 * 0.01**2


def test_flags_override_config(tmp_path, capsys):
    cfg = write_config(tmp_path, K=3, N=4, U=1.0, dt=0.05, n_steps=3)
    out = tmp_path / "run.csv"
    run(capsys, "simulate", "--config", cfg, "--dt", "0.01", "--fock", "0,4,0", "--out", str(out))
    meta = json.loads((tmp_path / "run.csv.meta.json").read_text())
    assert meta["config"]["dt"] == 0.01 and meta["config"]["n_steps"] == 3
    assert meta["config"]["initial"] == {"fock": [0, 4, 0]}
    assert read_csv(out)[1][4:] == ["0", "4", "0"]


@pytest.mark.parametrize(
    "cfg,field",
    [
        ({"K": 3, "N": 4, "dt": 0}, "dt"),
        ({"K": 1, "N": 4}, "K"),
        ({"K": 3}, "N"),
        ({"K": 3, "N": 4, "initial": {"fock": [1, 1, 1]}}, "initial"),
        ({"K": 3, "N": 4, "mu": [0.1, 0.2, 0.1]}, "mu"),
        ({"K": 3, "N": 4, "order": "third"}, "order"),
        ({"model": "optomech", "Na": 2}, "Nb"),
        ({"model": "optomech", "Na": 2, "Nb": 2, "drive": {"times": [1, 0], "values": [0, 0]}}, "drive"),
        ({"K": 3, "caps": [2, 3, 2]}, "caps"),
        ({"K": 30, "N": 30}, "N"),
    ],
)
def test_config_errors_name_the_field(tmp_path, capsys, cfg, field):
    code, _, err = run(capsys, "simulate", "--config", write_config(tmp_path, **cfg))
    assert code == 2
    assert f"'{field}'" in err


def test_unknown_config_field(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "--config", write_config(tmp_path, K=3, N=2, nsteps=4))
    assert code == 2 and "nsteps" in err


def test_bad_json(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    code, _, err = run(capsys, "simulate", "--config", str(p))
    assert code == 2 and "JSON" in err


def test_threads_do_not_change_output(tmp_path, capsys, monkeypatch):
    cfg = write_config(tmp_path, K=3, N=20, U=1.0, J=0.8, mu=0.1, n_steps=20, initial="random", seed=3)
    a, b, c = (tmp_path / f"{x}.csv" for x in "abc")
    run(capsys, "simulate", "--config", cfg, "--threads", "1", "--out", str(a))
    run(capsys, "simulate", "--config", cfg, "--threads", "4", "--out", str(b))
    monkeypatch.setenv("BOSEFOLD_THREADS", "3")
    run(capsys, "simulate", "--config", cfg, "--out", str(c))
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    assert json.loads((tmp_path / "c.csv.meta.json").read_text())["threads"] == 3


def test_bad_thread_env(capsys, monkeypatch):
    monkeypatch.setenv("BOSEFOLD_THREADS", "zero")
    code, _, err = run(capsys, "simulate", "--K", "3", "--N", "2", "--steps", "1")
    assert code == 2 and "BOSEFOLD_THREADS" in err


def test_initial_states(tmp_path, capsys):
    out = tmp_path / "u.csv"
    run(capsys, "simulate", "--K", "3", "--N", "3", "--steps", "0", "--out", str(out))
    cfg = write_config(tmp_path, K=3, N=3, n_steps=0, initial="uniform-island")
    run(capsys, "simulate", "--config", cfg, "--out", str(out))
    occ = [float(x) for x in read_csv(out)[1][4:]]
    assert np.allclose(occ, [1, 1, 1], atol=1e-15)
    psi = np.zeros(10, complex)
    psi[3] = 1
    np.save(tmp_path / "psi.npy", psi)
    cfg = write_config(tmp_path, K=3, N=3, n_steps=0, initial={"file": str(tmp_path / "psi.npy")})
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    np.save(tmp_path / "psi.npy", np.ones(4))
    code, _, err = run(capsys, "simulate", "--config", cfg)
    assert code == 2 and "'initial'" in err


def test_seeded_random_state_is_reproducible(tmp_path, capsys):
    cfg = write_config(tmp_path, K=3, N=6, U=1.0, n_steps=5, initial="random", seed=11)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(capsys, "simulate", "--config", cfg, "--out", str(a))
    run(capsys, "simulate", "--config", cfg, "--out", str(b))
    assert a.read_bytes() == b.read_bytes()
    run(capsys, "simulate", "--config", cfg, "--seed", "12", "--out", str(b))
    assert a.read_bytes() != b.read_bytes()


def test_stdout_csv(capsys):
    code, out, _ = run(capsys, "simulate", "--K", "2", "--N", "1", "--steps", "1")
    assert code == 0
    assert out.splitlines()[0] == "step,t,norm,energy,n_1,n_2"


def test_ratio_table_values():
    R = ratio_table(range(1, 6), range(2, 7))
    for K in range(2, 7):
        assert R[1, K] == K
    assert R[2, 2] == 0.75
    for K in range(2, 7):
        vals = [R[N, K] for N in range(2, 6)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


def test_bench_table(capsys):
    code, out, _ = run(capsys, "bench", "--n-min", "1", "--n-max", "4", "--k-max", "3")
    assert code == 0
    lines = out.splitlines()
    assert lines[1].split() == ["1", "2", "3"]
    assert float(lines[4].split()[2]) == 15 / 64


def test_bench_with_config(capsys):
    code, out, _ = run(capsys, "bench", "--n-max", "3", "--K", "3", "--N", "12", "--U", "1", "--steps", "4")
    assert code == 0
    assert "steps/s=" in out
    line = next(l for l in out.splitlines() if l.startswith("blocks[H12]"))
    assert "max=13" in line
    assert math.isfinite(float(out.split("evolve=")[1].split("s")[0]))
