from pathlib import Path

import pytest

from p2np.config import ConfigError, load_config, parse_coeffs, parse_config

MINIMAL = 'denoiser.strength = 0.3\n'


def test_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg["phantom.size"] == 64
    assert cfg["trajectory.kind"] == "radial"
    assert cfg.solvers == ["pnp-ista", "pnp-admm", "p2np-f-binomial", "p2np-f-cheb", "p2np-d"]
    assert cfg["noise.variance"] == 3e-4
    assert cfg.seeds() == {"phantom": 0, "trajectory": 0, "noise": 1, "power_method": 0}


def test_tables_and_dotted_keys_agree():
    a = parse_config('phantom.size = 32\ndenoiser.strength = 0.3\n')
    b = parse_config('[phantom]\nsize = 32\n[denoiser]\nstrength = 0.3\n')
    assert a.values == b.values


def test_ints_promote_to_float():
    cfg = parse_config('noise.variance = 0\n' + MINIMAL)
    assert cfg["noise.variance"] == 0.0 and isinstance(cfg["noise.variance"], float)


def test_hash_is_of_text():
    assert parse_config(MINIMAL).sha256 == parse_config(MINIMAL).sha256
    assert parse_config(MINIMAL).sha256 != parse_config(MINIMAL + "\n").sha256


@pytest.mark.parametrize("text,line,fragment", [
    ('denoiser.strength = 0.3\nphantom.sise = 32\n', 2, "unknown key"),
    ('denoiser.strength = 0.3\n\nphantom.size = "big"\n', 3, "wrong type"),
    ('denoiser.strength = 0.3\nphantom.size = 4\n', 2, ">= 8"),
    ('denoiser.strength = 0.3\ntrajectory.kind = "rosette"\n', 2, "must be one of"),
    ('denoiser.strength = 0.3\nsolvers.names = ["pnp-ista", "fista"]\n', 2, "unknown solver"),
    ('denoiser.strength = 0.3\nsolvers.names = ["pnp-ista"]\n', None, "reference solver"),
    ('denoiser.strength = 0.3\nsolver.pnp-ista.gamma = 0\n', 2, ">= 1"),
    ('denoiser.strength = 0.3\nsolver.fista.sigma = 1.0\n', 2, "unknown per-solver key"),
    ('phantom.size = 32\n', None, "exactly one"),
    ('denoiser.strength = 0.3\ndenoiser.sigma = 0.1\n', None, "exactly one"),
    ('denoiser.strength = 0.3\nphantom.size = = 3\n', 2, "syntax error"),
    ('denoiser.strength = 0.3\nexperiment.walltime = 1\n', 2, "wrong type"),
    ('denoiser.strength = 0.3\ntrajectory.kind = "file"\n', 2, "trajectory.path"),
])
def test_errors_carry_line(text, line, fragment):
    with pytest.raises(ConfigError, match=fragment) as exc:
        parse_config(text, source="exp.toml")
    assert str(exc.value).startswith("exp.toml")
    if line is not None:
        assert exc.value.line == line
        assert str(exc.value).startswith(f"exp.toml:{line}:")


def test_reference_must_be_listed_line():
    text = 'denoiser.strength = 0.3\nexperiment.reference = "pnp-ista"\nsolvers.names = ["pnp-admm"]\n'
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == 2


class TestCoeffs:
    def test_list_and_string(self):
        assert parse_coeffs([4, -3.5]) == [4.0, -3.5]
        assert parse_coeffs("4, -3.3333333333333335") == [4.0, -10 / 3]

    @pytest.mark.parametrize("bad", [[], "", "1,x", [True], ["nan"]])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            parse_coeffs(bad)

    def test_custom_solver_needs_coeffs(self):
        text = MINIMAL + 'solvers.names = ["pnp-admm", "p2np-f-custom"]\n'
        with pytest.raises(ConfigError, match="coeffs"):
            parse_config(text)
        cfg = parse_config(text + 'solver.p2np-f-custom.coeffs = "3,-3,1"\n')
        assert cfg.solver_setting("p2np-f-custom", "coeffs") == [3.0, -3.0, 1.0]

    def test_bad_coeffs_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config(MINIMAL + 'solver.p2np-f-custom.coeffs = "1,a"\n')
        assert exc.value.line == 2


def test_per_solver_settings():
    cfg = parse_config(MINIMAL + 'solver.p2np-d.max_iters = 50\nsolver.p2np-d.sigma = 0.02\n')
    assert cfg.solver_setting("p2np-d", "max_iters") == 50
    assert cfg.solver_setting("p2np-d", "sigma") == 0.02
    assert cfg.solver_setting("pnp-ista", "sigma", "none") == "none"


def test_load_resolves_output_dir(tmp_path):
    sub = tmp_path / "cfg"
    sub.mkdir()
    p = sub / "a.toml"
    p.write_text(MINIMAL + 'experiment.output_dir = "../out"\n')
    cfg = load_config(p)
    assert cfg.output_dir == (tmp_path / "out").resolve()
    assert cfg.source == str(p)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.toml")


def test_shipped_config_is_valid():
    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "radial64.toml")
    assert cfg["phantom.size"] == 64 and cfg["trajectory.spokes"] == 21
