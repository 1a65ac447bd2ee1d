import os
import shutil
import pytest
from copy import deepcopy
from configparser import ConfigParser

from common.config_loader import ConfigLoader
from common.exceptions import ConfigError

DEFAULT_CONF = {
    "FOO_STR": {"value": "var", "type": str, "section": "foo"},
    "FOO_INT": {"value": 12345, "type": int, "section": "foo"},
    "FOO_FLOAT": {"value": 0.25, "type": float, "section": "foo"},
    "FOO_FLAG": {"value": False, "type": bool, "section": "foo"},
    "BAR_VECTOR": {"value": (1.0, 2.0), "type": tuple, "section": "bar"},
    "BAR_EMPTY": {"value": (), "type": tuple, "section": "bar"},
    "BAR_PATH": {"value": "bar.csv", "type": str, "section": "bar", "path": True},
    "INITIAL_STATE_X0": {"value": (0.0, 0.2), "type": tuple, "section": "initial_state"},
}

CONF_FILE_DATA = {
    "foo": {"str": "file_var", "float": "0.5", "flag": "yes"},
    "bar": {"vector": "3.0, -4.5, 1e-3"},
    "initial_state": {"x0": "0.1, 0.3"},
}

CMD_DATA = {"FOO_INT": 54321, "FOO_STR": "cmd_var"}

data_dir = os.path.abspath("test_data_dir")
conf_file_path = os.path.join(data_dir, "test_conf.conf")


def write_conf(data, path=conf_file_path):
    config_parser = ConfigParser()
    for section, items in data.items():
        config_parser[section] = items

    with open(path, "w") as fout:
        config_parser.write(fout)


@pytest.fixture
def conf_file():
    os.makedirs(data_dir, exist_ok=True)
    write_conf(CONF_FILE_DATA)

    yield conf_file_path

    shutil.rmtree(data_dir)


def test_init():
    conf_loader = ConfigLoader(conf_file_path, DEFAULT_CONF, CMD_DATA, "out")
    assert conf_loader.conf_file_path == conf_file_path
    assert conf_loader.conf_fields == DEFAULT_CONF
    assert conf_loader.command_line_conf == CMD_DATA
    assert conf_loader.out_dir == os.path.abspath("out")


def test_init_does_not_share_defaults():
    # Loading a config must never modify the defaults it was built from
    default_conf_copy = deepcopy(DEFAULT_CONF)
    ConfigLoader(None, default_conf_copy, CMD_DATA, "out").build_config()

    assert default_conf_copy == DEFAULT_CONF


def test_build_conf_only_default():
    conf_loader = ConfigLoader(None, DEFAULT_CONF, {}, "foo")
    config = conf_loader.build_config()

    assert os.path.abspath("foo") == config.pop("OUT_DIR")

    for k, v in config.items():
        assert k in DEFAULT_CONF
        assert isinstance(v, DEFAULT_CONF[k].get("type"))

        if DEFAULT_CONF[k].get("path"):
            assert v == os.path.join(os.path.abspath("foo"), DEFAULT_CONF[k].get("value"))
        else:
            assert v == DEFAULT_CONF[k].get("value")

    # No field should have been overwritten
    assert not conf_loader.overwritten_fields


def test_build_conf_missing_file_uses_defaults():
    config = ConfigLoader("does_not_exist.conf", DEFAULT_CONF, {}, "foo").build_config()
    assert config["FOO_STR"] == "var"


def test_build_conf_with_conf_file(conf_file):
    conf_loader = ConfigLoader(conf_file, DEFAULT_CONF, {}, data_dir)
    config = conf_loader.build_config()

    assert config["FOO_STR"] == "file_var"
    assert config["FOO_FLOAT"] == 0.5
    assert config["FOO_FLAG"] is True
    assert config["BAR_VECTOR"] == (3.0, -4.5, 1e-3)
    assert config["INITIAL_STATE_X0"] == (0.1, 0.3)

    # Values not in the file keep their defaults
    assert config["FOO_INT"] == 12345
    assert config["BAR_EMPTY"] == ()

    # Check that we have kept track of what's overwritten
    assert conf_loader.overwritten_fields == {"FOO_STR", "FOO_FLOAT", "FOO_FLAG", "BAR_VECTOR", "INITIAL_STATE_X0"}


def test_build_conf_with_all(conf_file):
    conf_loader = ConfigLoader(conf_file, DEFAULT_CONF, CMD_DATA, data_dir)
    config = conf_loader.build_config()

    # The priority is: cmd, conf file, default
    assert config["FOO_STR"] == "cmd_var"
    assert config["FOO_INT"] == 54321
    assert config["FOO_FLOAT"] == 0.5
    assert config["BAR_PATH"] == os.path.join(data_dir, "bar.csv")

    for k in list(CMD_DATA) + ["FOO_FLOAT"]:
        assert k in conf_loader.overwritten_fields


def test_build_conf_unknown_key(conf_file):
    write_conf({"foo": {"unknown": "1"}})

    with pytest.raises(ConfigError, match="Unknown key"):
        ConfigLoader(conf_file, DEFAULT_CONF, {}, data_dir).build_config()


def test_build_conf_key_in_wrong_section(conf_file):
    # "vector" exists, but under [bar]
    write_conf({"foo": {"vector": "1.0"}})

    with pytest.raises(ConfigError):
        ConfigLoader(conf_file, DEFAULT_CONF, {}, data_dir).build_config()


def test_build_conf_unknown_command_line_key():
    with pytest.raises(ConfigError, match="Unknown command line parameter"):
        ConfigLoader(None, DEFAULT_CONF, {"NOT_A_FIELD": 1}, "foo").build_config()


def test_build_conf_malformed_file(conf_file):
    with open(conf_file, "w") as fout:
        fout.write("this is not an ini file\n")

    with pytest.raises(ConfigError, match="Cannot parse"):
        ConfigLoader(conf_file, DEFAULT_CONF, {}, data_dir).build_config()


def test_build_invalid_data(conf_file):
    for section, key, value in [
        ("foo", "int", "foo"),
        ("foo", "int", "1.5"),
        ("foo", "float", "one"),
        ("foo", "flag", "maybe"),
        ("bar", "vector", "1.0, nan"),
        ("bar", "vector", "1.0,, 2.0"),
    ]:
        write_conf({section: {key: value}})

        with pytest.raises(ConfigError, match="wrong type"):
            ConfigLoader(conf_file, DEFAULT_CONF, {}, data_dir).build_config()


def test_create_config_dict():
    conf_loader = ConfigLoader(None, DEFAULT_CONF, {}, "foo")
    config = conf_loader.create_config_dict()

    assert isinstance(config, dict)
    for k, v in config.items():
        assert isinstance(v, DEFAULT_CONF[k].get("type"))


def test_create_config_dict_int_as_float():
    default_conf_copy = deepcopy(DEFAULT_CONF)
    default_conf_copy["FOO_FLOAT"]["value"] = 2

    config = ConfigLoader(None, default_conf_copy, {}, "foo").create_config_dict()
    assert config["FOO_FLOAT"] == 2.0 and isinstance(config["FOO_FLOAT"], float)


def test_create_config_dict_invalid_type():
    # If any type does not match the expected one, we should get a ConfigError
    for field, value in [("FOO_STR", 1234), ("FOO_INT", True), ("BAR_VECTOR", [1.0]), ("FOO_FLAG", 1)]:
        default_conf_copy = deepcopy(DEFAULT_CONF)
        default_conf_copy[field]["value"] = value

        conf_loader = ConfigLoader(None, default_conf_copy, {}, "foo")

        with pytest.raises(ConfigError):
            conf_loader.create_config_dict()


def test_extend_paths():
    # Test that only items with the path flag are extended
    conf_loader = ConfigLoader(None, DEFAULT_CONF, {}, "foo")
    conf_loader.extend_paths()

    for k, field in conf_loader.conf_fields.items():
        if isinstance(field.get("value"), str):
            if field.get("path") is True:
                assert conf_loader.out_dir in field.get("value")
            else:
                assert conf_loader.out_dir not in field.get("value")

    # Check that absolute paths are not extended
    absolute_path = "/foo/var"
    conf_loader.conf_fields["ABSOLUTE_PATH"] = {"value": absolute_path, "type": str, "section": "foo", "path": True}
    conf_loader.extend_paths()

    assert conf_loader.conf_fields["ABSOLUTE_PATH"]["value"] == absolute_path


def test_dump_round_trip(conf_file):
    conf_loader = ConfigLoader(conf_file, DEFAULT_CONF, CMD_DATA, data_dir)
    config = conf_loader.build_config()

    # The dumped config reparses to an equal config
    with open(conf_file, "w") as fout:
        fout.write(conf_loader.dump(config))

    reparsed = ConfigLoader(conf_file, DEFAULT_CONF, {}, data_dir).build_config()
    assert reparsed == config


def test_dump_sections():
    conf_loader = ConfigLoader(None, DEFAULT_CONF, {}, "foo")
    dumped = conf_loader.dump(conf_loader.build_config())

    assert "[foo]\nstr = var\nint = 12345\nfloat = 0.25\nflag = false\n" in dumped
    assert "[bar]\nvector = 1.0, 2.0\nempty = \n" in dumped
    assert "[initial_state]\nx0 = 0.0, 0.2\n" in dumped
