import math
import struct
import subprocess
import sys

import numpy as np
import pytest

from bfdarcy import dynamics
from bfdarcy.cli import main
from bfdarcy.diagnostics import RECORD_COLUMNS
from bfdarcy.io import (
    DEFAULTS,
    SNAPSHOT_MAGIC,
    ConfigError,
    SnapshotError,
    build_config,
    config_hash,
    load_config,
    parse_config_text,
    read_diagnostics_csv,
    read_snapshot,
    write_snapshot,
)
from bfdarcy.spectral import fft_inverse, make_grid, random_divergence_free

TWO_PI = 2 * math.pi


def write_cfg(path, **kw):
    base = {"grid.n_h": 8, "grid.n_v": 8, "t_end": 0.05, "stepper.dt": 0.005}
    base.update(kw)
    path.write_text("# test config\n" + "".join(f"{k} = {v}\n" for k, v in base.items()))
    return path


def record_lines(path):
    # the metadata line embeds the output directory through the config hash
    return path.read_text().splitlines()[1:]


def csv_rows(path):
    return read_diagnostics_csv(path)[1]


# -- config -----------------------------------------------------------------------

def test_parse_comments_and_sections():
    vals = parse_config_text("a.b = 1  # trailing\n\n# full line\nc=two words\n")
    assert vals == {"a.b": "1", "c": "two words"}


def test_parse_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_config_text("no equals sign here")


def test_defaults_cover_everything_but_required():
    cfg = build_config({"grid.n_h": "8", "grid.n_v": "8", "t_end": "1"})
    assert cfg.physics.nu == float(DEFAULTS["physics.nu"])
    assert cfg.stepper.damping_mode.value == "explicit"
    assert cfg.ic["types"] == ("taylor_green",)
    assert cfg.n_steps == 1000


@pytest.mark.parametrize("missing", ["grid.n_h", "grid.n_v", "t_end"])
def test_missing_key_named(missing):
    vals = {"grid.n_h": "8", "grid.n_v": "8", "t_end": "1"}
    del vals[missing]
    with pytest.raises(ConfigError, match=missing.replace(".", r"\.")):
        build_config(vals)


@pytest.mark.parametrize("key,value", [
    ("grid.n_h", "7"), ("physics.nu", "abc"), ("physics.alpha", "0.5"), ("stepper.dt", "-1"),
    ("stepper.scheme", "euler"), ("diag_every", "0"), ("t_end", "1.0005"), ("ic.type", "vortex"),
    ("no.such_key", "1"), ("ic.type", "file"), ("physics.strict", "maybe")])
def test_invalid_values(key, value):
    vals = {"grid.n_h": "8", "grid.n_v": "8", "t_end": "1", key: value}
    with pytest.raises(ConfigError):
        build_config(vals)


def test_config_hash_tracks_content():
    a = build_config({"grid.n_h": "8", "grid.n_v": "8", "t_end": "1"})
    b = build_config({"grid.n_h": "8", "grid.n_v": "8", "t_end": "1", "physics.nu": "0.05"})
    c = build_config({"grid.n_h": "8", "grid.n_v": "8", "t_end": "1", "physics.nu": "0.06"})
    assert config_hash(a) == config_hash(b) != config_hash(c)


def test_load_config_unreadable(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.txt")


# -- snapshots --------------------------------------------------------------------

@pytest.mark.parametrize("dims", [(16, 16), (8, 12)])
def test_snapshot_round_trip_bit_exact(tmp_path, dims):
    g = make_grid(*dims, (1.0, 2.0, 3.0))
    u = random_divergence_free(g, seed=5, energy=7.0)
    write_snapshot(tmp_path / "s.bin", u, 0.125)
    v, header = read_snapshot(tmp_path / "s.bin")
    assert np.array_equal(v.coefficients, u.coefficients)
    assert v.grid == g and header["t"] == 0.125 and v.projected


def test_snapshot_layout(tmp_path):
    g = make_grid(8, 8)
    u = random_divergence_free(g, seed=1)
    write_snapshot(tmp_path / "s.bin", u, 2.5)
    data = (tmp_path / "s.bin").read_bytes()
    magic, n_h, n_v, L1, L2, L3, t, ncomp = struct.unpack_from("<8sII3ddI", data)
    assert (magic, n_h, n_v, t, ncomp) == (SNAPSHOT_MAGIC, 8, 8, 2.5, 6)
    assert (L1, L2, L3) == (TWO_PI,) * 3
    assert len(data) - 52 == ncomp * n_h * n_h * n_v * 8
    payload = np.frombuffer(data, "<f8", offset=52).reshape(6, -1)
    # x1-fastest planes of the full Hermitian spectrum
    full = np.fft.fftn(fft_inverse(u.coefficients, g), axes=(1, 2, 3)) / 512
    assert np.allclose(payload[0], full[0].real.ravel(order="F"), atol=1e-15)
    assert np.allclose(payload[5], full[2].imag.ravel(order="F"), atol=1e-15)


def test_truncated_snapshot_names_sizes(tmp_path):
    g = make_grid(8, 8)
    write_snapshot(tmp_path / "s.bin", random_divergence_free(g, seed=1), 0.0)
    raw = (tmp_path / "s.bin").read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:1000])
    with pytest.raises(SnapshotError, match=r"948 bytes, expected 24576 bytes"):
        read_snapshot(tmp_path / "t.bin")
    (tmp_path / "h.bin").write_bytes(raw[:20])
    with pytest.raises(SnapshotError, match="expected 52 bytes, got 20"):
        read_snapshot(tmp_path / "h.bin")
    (tmp_path / "m.bin").write_bytes(b"XXXXXXXX" + raw[8:])
    with pytest.raises(SnapshotError, match="magic"):
        read_snapshot(tmp_path / "m.bin")
    with pytest.raises(SnapshotError, match="does not match"):
        read_snapshot(tmp_path / "s.bin", expect_grid=make_grid(8, 10))


# -- run ------------------------------------------------------------------------

def test_run_uniform_damping_closed_form(tmp_path):
    cfg = write_cfg(tmp_path / "c.txt", **{"ic.type": "uniform", "ic.vector": "0.6, 0.0, 0.8", "physics.a": 1.0,
                                          "physics.alpha": 1.0, "physics.strict": "false", "stepper.dt": 0.001,
                                          "t_end": 0.5, "diag_every": 50})
    assert main(["run", "--config", str(cfg), "--output", str(tmp_path / "out")]) == 0
    rows = csv_rows(tmp_path / "out" / "diagnostics.csv")
    assert len(rows) == 11
    for r in rows:
        exact = TWO_PI**3 / (1 + 2 * r.t)
        assert r.energy == pytest.approx(exact, rel=1e-6)


def test_run_inviscid_energy_constant(tmp_path):
    cfg = write_cfg(tmp_path / "c.txt", **{"physics.a": 0.0, "physics.nu": 0.0, "physics.strict": "false",
                                          "grid.n_h": 16, "grid.n_v": 16, "stepper.dt": 0.001, "t_end": 0.1})
    assert main(["run", "--config", str(cfg), "--output", str(tmp_path / "out")]) == 0
    e = np.array([r.energy for r in csv_rows(tmp_path / "out" / "diagnostics.csv")])
    assert np.max(np.abs(e - e[0])) / e[0] <= 1e-8


def test_run_outputs(tmp_path):
    cfg = write_cfg(tmp_path / "c.txt", snapshot_every=5)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--output", str(out)]) == 0
    text = (out / "diagnostics.csv").read_text().splitlines()
    assert text[0].startswith("# bfdarcy=") and "config_sha256=" in text[0]
    assert text[1] == ",".join(RECORD_COLUMNS)
    assert sorted(p.name for p in out.glob("snapshot_*.bin")) == [
        "snapshot_00000000.bin", "snapshot_00000005.bin", "snapshot_00000010.bin"]
    assert "grid.n_h = 8" in (out / "run_config.txt").read_text()


def test_run_deterministic(tmp_path):
    cfg = write_cfg(tmp_path / "c.txt", **{"ic.type": "random", "ic.energy": 50.0})
    for name in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--output", str(tmp_path / name), "--seed", "3"]) == 0
    assert record_lines(tmp_path / "a" / "diagnostics.csv") == record_lines(tmp_path / "b" / "diagnostics.csv")
    assert main(["run", "--config", str(cfg), "--output", str(tmp_path / "c"), "--seed", "4"]) == 0
    assert record_lines(tmp_path / "a" / "diagnostics.csv") != record_lines(tmp_path / "c" / "diagnostics.csv")


def test_missing_key_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.txt"
    cfg.write_text("grid.n_h = 8\nt_end = 1\n")
    assert main(["run", "--config", str(cfg)]) == 2
    assert "grid.n_v" in capsys.readouterr().err


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = write_cfg(tmp_path / "c.txt")
    assert main(["run", "--config", str(cfg), "--output", str(blocker / "sub")]) == 2


def test_bad_set_syntax(tmp_path):
    cfg = write_cfg(tmp_path / "c.txt")
    assert main(["run", "--config", str(cfg), "--set", "physics.nu"]) == 2


def test_blow_up_exit_code(tmp_path):
    cfg = write_cfg(tmp_path / "c.txt", **{"ic.type": "uniform", "ic.vector": "50, 0, 0", "stepper.dt": 0.5,
                                          "t_end": 5.0, "stepper.scheme": "imex_rk2"})
    with np.errstate(all="ignore"):
        code = main(["run", "--config", str(cfg), "--output", str(tmp_path / "out")])
    assert code == 4
    comments, rows = read_diagnostics_csv(tmp_path / "out" / "diagnostics.csv")
    assert any("blow-up" in c for c in comments)
    assert rows and rows[-1].is_finite()


def test_module_entry_point(tmp_path):
    cfg = write_cfg(tmp_path / "c.txt")
    out = subprocess.run([sys.executable, "-m", "bfdarcy", "run", "--config", str(cfg), "--output",
                          str(tmp_path / "o")], capture_output=True, text=True)
    assert out.returncode == 0, out.stderr


# -- resume -------------------------------------------------------------------------

def test_resume_bit_identical(tmp_path):
    cfg = write_cfg(tmp_path / "c.txt", **{"t_end": 0.1, "stepper.dt": 0.0001, "snapshot_every": 500,
                                          "ic.type": "taylor_green+vertical_shear"})
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--output", str(out)]) == 0
    assert main(["resume", "--config", str(cfg), "--output", str(out),
                 "--snapshot", str(out / "snapshot_00000500.bin")]) == 0
    full = (out / "diagnostics.csv").read_text().splitlines()
    resumed = (out / "diagnostics_resumed_500.csv").read_text().splitlines()
    # header lines differ; records 501..1000 must match byte for byte
    assert resumed[1] == full[1]
    assert resumed[2:] == full[2 + 501:]
    assert len(resumed[2:]) == 500
    assert "changed=none" in resumed[0]


def test_resume_with_changed_viscosity_flagged(tmp_path):
    cfg = write_cfg(tmp_path / "c.txt", snapshot_every=5)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--output", str(out)]) == 0
    assert main(["resume", "--config", str(cfg), "--output", str(out), "--snapshot",
                 str(out / "snapshot_00000005.bin"), "--set", "physics.nu=0.2"]) == 0
    first = (out / "diagnostics_resumed_5.csv").read_text().splitlines()[0]
    assert "changed=physics.nu" in first


def test_resume_rejects_truncated_and_mismatched(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.txt", snapshot_every=5)
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg), "--output", str(out)]) == 0
    snap = out / "snapshot_00000005.bin"
    (tmp_path / "t.bin").write_bytes(snap.read_bytes()[:-8])
    assert main(["resume", "--config", str(cfg), "--output", str(out), "--snapshot", str(tmp_path / "t.bin")]) == 2
    assert "expected 24576 bytes" in capsys.readouterr().err
    assert main(["resume", "--config", str(cfg), "--output", str(out), "--snapshot", str(snap),
                 "--set", "grid.n_v=10"]) == 2


# -- verify ----------------------------------------------------------------------------

def verify_cfg(tmp_path, **kw):
    base = {"grid.n_h": 8, "grid.n_v": 8, "t_end": 0.05, "stepper.dt": 0.001, "ic.type": "taylor_green+vertical_shear",
            "verify.samples": 20, "verify.pairs": 20000, "verify.grid_n": 8, "stability.record_every": 5}
    base.update(kw)
    return write_cfg(tmp_path / "v.txt", **base)


def test_verify_inequalities_deterministic(tmp_path):
    cfg = verify_cfg(tmp_path)
    for name in ("a", "b"):
        assert main(["verify", "--suite", "inequalities", "--config", str(cfg), "--output", str(tmp_path / name)]) == 0
    a = (tmp_path / "a" / "inequalities.csv").read_bytes()
    assert a == (tmp_path / "b" / "inequalities.csv").read_bytes()
    assert b"dual_bound" in a and b"true" not in a


def test_verify_budgets_pass(tmp_path):
    cfg = verify_cfg(tmp_path)
    assert main(["verify", "--suite", "budgets", "--config", str(cfg), "--output", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "vertical_budget.csv").exists()


def test_verify_budgets_fail_on_tight_tolerance(tmp_path):
    cfg = verify_cfg(tmp_path, **{"verify.budget_tol": 1e-15})
    assert main(["verify", "--suite", "budgets", "--config", str(cfg), "--output", str(tmp_path / "o")]) == 3


def test_verify_stability_pass_and_outputs(tmp_path):
    cfg = verify_cfg(tmp_path)
    out = tmp_path / "o"
    assert main(["verify", "--suite", "stability", "--config", str(cfg), "--output", str(out)]) == 0
    twin = (out / "twin.csv").read_text().splitlines()
    assert twin[1] == "t,w_energy,grad_h_w,weighted_w,L_of_t" and len(twin) == 2 + 11
    assert (out / "gronwall.csv").read_text().splitlines()[1].startswith("c_empirical,envelope_satisfied")


def test_verify_stability_catches_damping_sign_error(tmp_path, monkeypatch):
    cfg = verify_cfg(tmp_path, **{"ic.amplitude": 0.3})
    monkeypatch.setattr(dynamics, "_DAMPING_SIGN", -1.0)
    code = main(["verify", "--suite", "stability", "--config", str(cfg), "--output", str(tmp_path / "o")])
    assert code == 3


def test_verify_all(tmp_path, capsys):
    cfg = verify_cfg(tmp_path)
    assert main(["verify", "--config", str(cfg), "--output", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    assert "inequalities: ok" in out and "budgets: ok" in out and "stability: ok" in out
