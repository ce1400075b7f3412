import pytest

from prodcat.config import ConfigError, PipelineConfig, dump_config, parse_config
from prodcat.knn import KnnParams


def write(tmp_path, text):
    p = tmp_path / "c.toml"
    p.write_text(text)
    return p


def test_empty_file_gives_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, ""))
    assert cfg == PipelineConfig()
    assert cfg.routing == {"top_category": "gbt", "bottom_category": "knn", "color": "knn"}


def test_table_one_keys(tmp_path):
    cfg = parse_config(write(tmp_path, '[knn]\nn_neighbors = 1\nmetric = "manhattan"\n'))
    assert cfg.knn == KnnParams(metric="manhattan", n_neighbors=1)


def test_table_defaults():
    cfg = PipelineConfig()
    assert (cfg.forest.max_depth, cfg.forest.max_features, cfg.forest.n_estimators) == (9, "log2", 50)
    assert (cfg.forest.n_jobs, cfg.forest.oob_score, cfg.forest.random_state) == (1, True, 411)
    g = cfg.gbt
    assert (g.eval_metric, g.learning_rate, g.min_split_loss) == ("error", 0.3, 0.1)
    assert (g.objective, g.predictor, g.tree_method) == ("multi:softprob", "auto", "auto")
    assert (cfg.sample_size("knn"), cfg.sample_size("forest"), cfg.sample_size("gbt")) == (25000, 10000, 10000)


def test_range_error(tmp_path):
    with pytest.raises(ConfigError, match="min_split_loss"):
        parse_config(write(tmp_path, "[gbt]\nmin_split_loss = -1\n"))


def test_unknown_key_and_section(tmp_path):
    with pytest.raises(ConfigError, match="colour"):
        parse_config(write(tmp_path, "[knn]\ncolour = 1\n"))
    with pytest.raises(ConfigError, match="svm"):
        parse_config(write(tmp_path, "[svm]\nC = 1\n"))


def test_type_mismatch(tmp_path):
    with pytest.raises(ConfigError, match="expected int"):
        parse_config(write(tmp_path, '[knn]\nn_neighbors = "one"\n'))
    with pytest.raises(ConfigError, match="expected bool"):
        parse_config(write(tmp_path, "[forest]\noob_score = 1\n"))


def test_int_accepted_for_float(tmp_path):
    assert parse_config(write(tmp_path, "[gbt]\nlearning_rate = 1\n")).gbt.learning_rate == 1.0


def test_bad_routing_and_syntax(tmp_path):
    with pytest.raises(ConfigError, match="svm"):
        parse_config(write(tmp_path, '[pipeline]\ncolor_model = "svm"\n'))
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, "[knn\n"))
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(tmp_path / "missing.toml")


def test_dump_round_trip(tmp_path):
    cfg = PipelineConfig().with_routing(color="forest")
    assert parse_config(write(tmp_path, dump_config(cfg))) == cfg
    assert PipelineConfig.from_dict(cfg.to_dict()) == cfg
