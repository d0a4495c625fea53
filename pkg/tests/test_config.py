"""Pipeline configuration parsing, rendering, and hashing."""

import numpy as np
import pytest

from corromap.config import (ConfigError, PipelineConfig,
                             dump_pipeline_config, read_pipeline_config,
                             config_hash, write_pipeline_config)


def test_dump_read_roundtrip_defaults(tmp_path):
    # canonical-text equivalence is the round-trip contract (the float
    # rendering truncates defaults like pi to 9 significant digits, so
    # dataclass equality is deliberately not promised)
    cfg = PipelineConfig()
    p = tmp_path / "c.ini"
    write_pipeline_config(p, cfg)
    back = read_pipeline_config(p)
    assert dump_pipeline_config(back) == dump_pipeline_config(cfg)
    assert config_hash(back) == config_hash(cfg)


def test_dump_read_roundtrip_modified(tmp_path):
    cfg = PipelineConfig(seed=99, stages=("simulate", "evaluate"))
    cfg.slam.cell_size = 0.75
    cfg.localization.min_fitness = 0.2
    cfg.calibration.passthrough = ((0.25, 4.0), (-2.0, 2.0), (-1.0, 1.0))
    cfg.simulator.noise = False
    cfg.evaluation.delta = 3
    p = tmp_path / "c.ini"
    write_pipeline_config(p, cfg)
    back = read_pipeline_config(p)
    assert dump_pipeline_config(back) == dump_pipeline_config(cfg)
    assert back.seed == 99
    assert back.stages == ("simulate", "evaluate")
    assert back.slam.cell_size == 0.75
    assert back.localization.min_fitness == 0.2
    assert back.calibration.passthrough == ((0.25, 4.0), (-2.0, 2.0),
                                            (-1.0, 1.0))
    assert back.simulator.noise is False
    assert back.evaluation.delta == 3


def test_partial_file_keeps_defaults(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[pipeline]\nseed = 7\n\n[slam]\nmap_voxel = 0.05\n")
    cfg = read_pipeline_config(p)
    assert cfg.seed == 7
    assert cfg.slam.map_voxel == 0.05
    assert cfg.localization == PipelineConfig().localization


def test_stages_accept_commas_and_whitespace(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[pipeline]\nstages = simulate, slam,localize\n")
    assert read_pipeline_config(p).stages == ("simulate", "slam", "localize")
    p.write_text("[pipeline]\nstages = fuse evaluate\n")
    assert read_pipeline_config(p).stages == ("fuse", "evaluate")


def test_unknown_stage_rejected(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[pipeline]\nstages = simulate, teleport\n")
    with pytest.raises(ConfigError, match="teleport"):
        read_pipeline_config(p)


def test_unknown_section_rejected(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[telemetry]\nrate = 1\n")
    with pytest.raises(ConfigError, match="telemetry"):
        read_pipeline_config(p)


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[slam]\nwarp_speed = 9\n")
    with pytest.raises(ConfigError, match="warp_speed"):
        read_pipeline_config(p)
    p.write_text("[pipeline]\ncolor = red\n")
    with pytest.raises(ConfigError, match="color"):
        read_pipeline_config(p)


def test_bad_value_rejected(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[slam]\nndt_cell = big\n")
    with pytest.raises(ConfigError):
        read_pipeline_config(p)
    p.write_text("[simulator]\nnoise = maybe\n")
    with pytest.raises(ConfigError, match="boolean"):
        read_pipeline_config(p)


def test_invalid_field_value_rejected(tmp_path):
    # parseable but violating the dataclass contract
    p = tmp_path / "c.ini"
    p.write_text("[localization]\nalpha = 2.0\n")
    with pytest.raises(ConfigError, match="alpha"):
        read_pipeline_config(p)


def test_hash_tracks_content():
    a = PipelineConfig()
    b = PipelineConfig(seed=1)
    assert config_hash(a) != config_hash(b)
    assert config_hash(a) == config_hash(PipelineConfig())
    # fixed-width hex digest
    assert len(config_hash(a)) == 64


def test_dump_is_canonical():
    text = dump_pipeline_config(PipelineConfig())
    # one key per line, stable section order; keys with empty-string
    # defaults legitimately render as "key = "
    assert text.startswith("[pipeline]\n")
    lines = [ln for ln in text.splitlines() if ln]
    assert all(not ln.startswith((" ", "\t")) for ln in lines)
    sections = [ln for ln in lines if ln.startswith("[")]
    assert sections == ["[pipeline]", "[calibration]", "[evaluation]",
                        "[fusion]", "[localization]", "[simulator]", "[slam]"]
