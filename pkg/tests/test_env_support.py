import os
from pathlib import Path

from dpqca.config import load_settings
from env_support import get_env_value, parse_key_value_text, read_key_value_file, write_key_value_file

SETTING_KEYS = ("QCA_OUTPUT_DIR", "QCA_THREADS", "QCA_SEED", "QCA_LOG_LEVEL", "QCA_PROGRESS")


def test_parse_key_value_text():
    text = "\n".join(
        [
            "# comment",
            "export QCA_THREADS=4",
            'QCA_OUTPUT_DIR="runs/a b"',
            "QCA_SEED='7'",
            "not a pair",
            "QCA_SEED=8",
        ]
    )
    assert parse_key_value_text(text) == {"QCA_THREADS": "4", "QCA_OUTPUT_DIR": "runs/a b", "QCA_SEED": "8"}


def test_get_env_value_falls_back_to_file(tmp_path, monkeypatch):
    env_file = tmp_path / "fallback.env"
    env_file.write_text("QCA_TEST_FALLBACK=from-file\n")
    monkeypatch.delenv("QCA_TEST_FALLBACK", raising=False)
    assert get_env_value("QCA_TEST_FALLBACK", env_path=env_file) == "from-file"
    assert get_env_value("QCA_TEST_ABSENT", env_path=env_file) is None


def test_settings_read_env_file_and_environment_wins(tmp_path, monkeypatch):
    for key in SETTING_KEYS:
        monkeypatch.delenv(key, raising=False)
    env_file = tmp_path / "settings.env"
    env_file.write_text("QCA_THREADS=3\nQCA_OUTPUT_DIR=from-file\nQCA_LOG_LEVEL=debug\nQCA_PROGRESS=yes\n")
    monkeypatch.setenv("QCA_THREADS", "2")

    settings = load_settings(env_file)
    assert settings.threads == 2
    assert settings.output_dir == Path("from-file")
    assert settings.log_level == "DEBUG"
    assert settings.progress
    assert settings.seed == 12345
    assert "QCA_OUTPUT_DIR" not in os.environ


def test_key_value_file_round_trip(tmp_path):
    path = write_key_value_file(tmp_path / "preset.txt", {"p": 0.7, "omega": 0.1}, header="site-DP")
    assert path.read_text().startswith("# site-DP\n")
    assert read_key_value_file(path) == {"p": "0.7", "omega": "0.1"}
