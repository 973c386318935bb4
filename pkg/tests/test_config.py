import pytest

from pace.config import ConfigError, RunConfig, Variant, dump_toml, load_config, parse_overrides


def test_default_hyperparameters():
    c = RunConfig()
    assert (c.alpha, c.gamma, c.epsilon, c.q_init) == (0.5, 0.99, 0.1, 0.0)
    assert (c.lr, c.steps, c.epochs, c.vocab, c.hidden, c.prune_keep) == (0.0009, 20, 40, 30, 200, 3)
    assert c.batch == 32 and c.temperature == 1.0 and c.lam_ps == 0.1
    assert c.variant is Variant.PACE


@pytest.mark.parametrize(
    "file_value, override, expected",
    [
        (None, None, 0.5),
        (0.3, None, 0.3),
        (None, "0.7", 0.7),
        (0.3, "0.7", 0.7),
    ],
)
def test_precedence_matrix(tmp_path, file_value, override, expected):
    path = None
    if file_value is not None:
        path = tmp_path / "c.toml"
        path.write_text(f"[bandit]\nalpha = {file_value}\n")
    overrides = parse_overrides([f"bandit.alpha={override}"] if override else [])
    assert load_config(path, overrides).alpha == expected


def test_base_sits_between_defaults_and_file(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("steps = 7\n")
    base = RunConfig(steps=3, epochs=5)
    cfg = load_config(path, {}, base)
    assert cfg.steps == 7 and cfg.epochs == 5


@pytest.mark.parametrize(
    "text",
    ["nonsense = 1\n", "[bogus]\nalpha = 0.1\n", "[bandit]\nepsilon = 2.0\n", "steps = 'many'\n", "steps = [\n"],
)
def test_bad_files_rejected(tmp_path, text):
    path = tmp_path / "c.toml"
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(path)


@pytest.mark.parametrize("item", ["alpha", "nope.alpha=1", "steps=x", "epochs=-1", "variant=best"])
def test_bad_overrides_rejected(item):
    with pytest.raises(ConfigError):
        load_config(None, parse_overrides([item]))


def test_variant_aliases():
    assert Variant.parse("NoAbstractions") is Variant.NO_ABSTRACTIONS
    assert Variant.parse("no-abstractions") is Variant.NO_ABSTRACTIONS
    assert Variant.parse("Greedy") is Variant.GREEDY


def test_dump_roundtrips(tmp_path):
    cfg = RunConfig(steps=3, variant="greedy", lam_ps=0.2)
    path = tmp_path / "c.toml"
    path.write_text(dump_toml(cfg))
    assert load_config(path) == cfg
