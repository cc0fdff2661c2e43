import signal
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest

from fese import cli, index_io
from fese.errors import ConfigError
from fese.protocol import header_bytes, scheme_keygen
from fese.templates import random_template

from conftest import master, seeded

CFG = """
# desk-scale test configuration
template_bits = 64
digest_bits = 4
lsh_count = 4
bloom_count = 2
bucket_count = 64
bucket_capacity = 12
match_threshold = full
near_radius = 6
far_radius = 24
tag_bits = 20
group = toy61
mode = base
transport = direct
"""

SEED = "11" * 32


def write_cfg(tmp_path, text=CFG) -> Path:
    path = tmp_path / "scheme.cfg"
    path.write_text(text)
    return path


def test_config_parser_accepts_comments_and_blank_lines():
    cfg = cli.parse_config_text(CFG)
    assert cfg["template_bits"] == "64"
    assert cli.params_from_config(cfg).match_threshold == 8


def test_config_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        cli.parse_config_text("template_bits = 64\nmystery = 1\n")


def test_config_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        cli.parse_config_text("template_bits = 64\ntemplate_bits = 32\n")


def test_config_missing_required_lists_keys():
    with pytest.raises(ConfigError, match="missing required"):
        cli.params_from_config({"template_bits": "64"})


def test_keygen_enroll_identify_round_trip(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "keys"
    assert cli.main(["keygen", "--config", str(cfg), "--seed", SEED, "--out", str(out)]) == 0

    probe = tmp_path / "probe.ftpl"
    random_template(64, seeded(40)).save(probe)
    registry = tmp_path / "registry.json"
    rc = cli.main(
        [
            "enroll", "--public", str(out / "public.fesp"),
            "--index", str(out / "index.fese"),
            "--template", str(probe), "--identity", "alice",
            "--registry", str(registry), "--seed", SEED,
        ]
    )
    assert rc == 0
    rc = cli.main(
        [
            "identify", "--secret", str(out / "secret.fess"),
            "--index", str(out / "index.fese"),
            "--template", str(probe), "--registry", str(registry), "--seed", SEED,
        ]
    )
    captured = capsys.readouterr()
    assert rc == 0
    assert "identity=alice" in captured.out
    assert "matches = alice" in captured.out


def test_identify_header_mismatch_exits_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    cli.main(["keygen", "--config", str(cfg), "--seed", SEED, "--out", str(out_a)])
    other = CFG.replace("bloom_count = 2", "bloom_count = 4")
    cfg_b = tmp_path / "other.cfg"
    cfg_b.write_text(other)
    cli.main(["keygen", "--config", str(cfg_b), "--seed", SEED, "--out", str(out_b)])

    probe = tmp_path / "probe.ftpl"
    random_template(64, seeded(41)).save(probe)
    rc = cli.main(
        [
            "identify", "--secret", str(out_b / "secret.fess"),
            "--index", str(out_a / "index.fese"),
            "--template", str(probe), "--seed", SEED,
        ]
    )
    captured = capsys.readouterr()
    assert rc == 2
    assert "header mismatch" in captured.err


def test_usage_error_exits_1(tmp_path, capsys):
    assert cli.main(["bogus-command"]) == 1
    cfg = write_cfg(tmp_path)
    out = tmp_path / "keys"
    cli.main(["keygen", "--config", str(cfg), "--seed", SEED, "--out", str(out)])
    rc = cli.main(
        [
            "enroll", "--public", str(out / "public.fesp"),
            "--index", str(out / "index.fese"),
            "--registry", str(tmp_path / "r.json"), "--seed", SEED,
        ]
    )
    assert rc == 1  # neither --template nor --synthetic


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense-line\n")
    assert cli.main(["keygen", "--config", str(cfg), "--seed", SEED, "--out", str(tmp_path / "k")]) == 2


def test_env_var_supplies_default_config(tmp_path, capsys, monkeypatch):
    cfg = write_cfg(tmp_path)
    monkeypatch.setenv("FESE_CONFIG", str(cfg))
    out = tmp_path / "envkeys"
    assert cli.main(["keygen", "--seed", SEED, "--out", str(out)]) == 0
    monkeypatch.delenv("FESE_CONFIG")
    assert cli.main(["keygen", "--seed", SEED, "--out", str(out)]) == 1


def test_experiment_writes_stats_with_rate_fields(tmp_path, capsys):
    text = CFG + "\nenrolled = 8\ngenuine_trials = 12\nimpostor_trials = 12\nflip_prob = 0.01\n"
    cfg = write_cfg(tmp_path, text)
    stats = tmp_path / "stats.txt"
    log = tmp_path / "trials.csv"
    rc = cli.main(
        [
            "experiment", "--config", str(cfg), "--seed", SEED,
            "--out", str(stats), "--trial-log", str(log),
        ]
    )
    assert rc == 0
    body = stats.read_text()
    assert "eta_c = " in body and "eta_s = " in body
    assert log.read_text().startswith("kind,trial,distance")


def test_bench_reports_phases(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    rc = cli.main(["bench", "--config", str(cfg), "--seed", SEED, "--sends", "4", "--retrieves", "4"])
    captured = capsys.readouterr()
    assert rc == 0
    for key in ("keygen_seconds", "retrieve_seconds_total", "decryptions_total"):
        assert key in captured.out


def test_selftest_quick(capsys):
    assert cli.main(["selftest", "--quick"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") >= 5 and "FAIL" not in out


def test_index_round_trip_is_byte_identical(tmp_path, small_params):
    public, secret, state = scheme_keygen(small_params, master(24))
    header = header_bytes(public)
    path = tmp_path / "index.fese"
    index_io.save_index(path, header, state)
    original = path.read_bytes()
    info, loaded = index_io.load_index(path)
    again = tmp_path / "again.fese"
    index_io.save_index(again, info.raw, loaded)
    assert again.read_bytes() == original


def test_bundles_round_trip(tmp_path, small_params):
    public, secret, _ = scheme_keygen(small_params, master(25))
    ppath, spath = tmp_path / "p.fesp", tmp_path / "s.fess"
    index_io.save_public_bundle(ppath, public)
    index_io.save_secret_bundle(spath, secret)
    assert index_io.load_public_bundle(ppath) == public
    loaded = index_io.load_secret_bundle(spath)
    assert loaded.secret == secret.secret
    assert loaded.public_bundle == public


def _free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_serve_remote_identify_matches_in_process(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "keys"
    cli.main(["keygen", "--config", str(cfg), "--seed", SEED, "--out", str(out)])
    probe = tmp_path / "probe.ftpl"
    random_template(64, seeded(42)).save(probe)
    registry = tmp_path / "registry.json"
    cli.main(
        [
            "enroll", "--public", str(out / "public.fesp"),
            "--index", str(out / "index.fese"),
            "--template", str(probe), "--identity", "alice",
            "--registry", str(registry), "--seed", SEED,
        ]
    )
    capsys.readouterr()  # drain keygen/enroll output

    assert cli.main(
        [
            "identify", "--secret", str(out / "secret.fess"),
            "--index", str(out / "index.fese"),
            "--template", str(probe), "--registry", str(registry), "--seed", SEED,
        ]
    ) == 0
    local_out = capsys.readouterr().out

    port = _free_port()
    proc = subprocess.Popen(
        [
            sys.executable, "-m", "fese", "serve",
            "--index", str(out / "index.fese"),
            "--port", str(port), "--seed", SEED, "--no-save",
        ],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    try:
        line = proc.stdout.readline()
        assert "serving" in line
        assert cli.main(
            [
                "identify", "--secret", str(out / "secret.fess"),
                "--server", f"127.0.0.1:{port}",
                "--template", str(probe), "--registry", str(registry), "--seed", SEED,
            ]
        ) == 0
        remote_out = capsys.readouterr().out
        assert remote_out == local_out
    finally:
        proc.send_signal(signal.SIGINT)
        proc.wait(timeout=10)
