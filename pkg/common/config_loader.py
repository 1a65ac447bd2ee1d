import os
import configparser
from copy import deepcopy

from common.exceptions import ConfigError
from common.tools import format_float, format_vector, parse_vector


class ConfigLoader:
    """
    The :class:`ConfigLoader` class is in charge of loading all the parameters of a scenario to create a config dict
    that can be used to set every configurable part of a run.

    Scenario files are INI documents. A key ``k`` under the section ``[s]`` maps to the field ``S_K`` of the default
    configuration. Unknown sections or keys are rejected.

    Args:
        conf_file_path (:obj:`str` or :obj:`None`): the path to the scenario file. The file may not exist, in which
            case only the defaults and the command line are used.
        default_conf (:obj:`dict`): a dictionary populated with the default configuration params and the expected types.
            The format is as follows:

            ``{"FIELD0": {"value": default_value, "type": expected_type, "section": section_name, ...}}``

            Fields flagged with ``"path": True`` are joined onto ``out_dir``.

        command_line_conf (:obj:`dict`): a dictionary containing the command line parameters that may replace the
            ones in default / config file.
        out_dir (:obj:`str`): the directory where the output files of the scenario are written.

    Attributes:
        conf_file_path (:obj:`str` or :obj:`None`): The path to the config file (the file may not exist).
        conf_fields (:obj:`dict`): A dictionary populated with the configuration params and the expected types.
            It follows the same format as ``default_conf``.
        command_line_conf (:obj:`dict`): A dictionary containing the command line parameters that may replace the
            ones in default / config file.
        out_dir (:obj:`str`): The output directory.
        overwritten_fields (:obj:`set`): The fields that were set by the file or the command line.
    """

    def __init__(self, conf_file_path, default_conf, command_line_conf, out_dir="."):
        self.conf_file_path = conf_file_path
        self.conf_fields = deepcopy(default_conf)
        self.command_line_conf = command_line_conf
        self.out_dir = os.path.abspath(out_dir)
        self.overwritten_fields = set()

    def build_config(self):
        """
        Builds a config dictionary from command line, config file and default configuration parameters.

        The priority is as follows:
            - command line
            - config file
            - defaults

        Returns:
            :obj:`dict`: A dictionary containing all the configuration parameters.

        Raises:
            :obj:`ConfigError`: If the file cannot be parsed, contains unknown keys or values of the wrong type.
        """

        if self.conf_file_path and os.path.exists(self.conf_file_path):
            file_config = configparser.ConfigParser(interpolation=None)

            try:
                file_config.read(self.conf_file_path)
            except configparser.Error as e:
                raise ConfigError("Cannot parse the scenario file", path=self.conf_file_path, reason=e.message)

            for sec in file_config.sections():
                for k, v in file_config.items(sec):
                    field = "{}_{}".format(sec, k).upper()
                    if field not in self.conf_fields or self.conf_fields[field]["section"] != sec:
                        raise ConfigError("Unknown key in scenario file", section=sec, key=k)

                    self.conf_fields[field]["value"] = self.cast(field, v)
                    self.overwritten_fields.add(field)

        # Override the command line parameters to the defaults / conf file
        for k, v in self.command_line_conf.items():
            if k not in self.conf_fields:
                raise ConfigError("Unknown command line parameter", key=k)

            self.conf_fields[k]["value"] = v
            self.overwritten_fields.add(k)

        # Extend relative paths
        self.extend_paths()

        # Sanity check fields and build config dictionary
        config = self.create_config_dict()
        config["OUT_DIR"] = self.out_dir

        return config

    def cast(self, field, raw_value):
        """
        Casts a raw string read from the scenario file to the type expected by ``field``.

        Args:
            field (:obj:`str`): the name of the field.
            raw_value (:obj:`str`): the text found in the file.

        Returns:
            The value with the expected type.

        Raises:
            :obj:`ConfigError`: If the value cannot be cast.
        """

        expected_type = self.conf_fields[field]["type"]
        text = raw_value.strip()

        try:
            if expected_type == bool:
                if text.lower() not in configparser.ConfigParser.BOOLEAN_STATES:
                    raise ValueError("not a boolean")

                return configparser.ConfigParser.BOOLEAN_STATES[text.lower()]

            elif expected_type == tuple:
                return parse_vector(text)

            elif expected_type == float:
                return float(text)

            elif expected_type == int:
                return int(text)

            else:
                return text

        except ValueError:
            raise ConfigError(
                "Value of the wrong type in scenario file", field=field, value=raw_value, type=expected_type.__name__
            )

    def create_config_dict(self):
        """
        Checks that the configuration fields (``self.conf_fields``) have the right type and creates a config dict if so.

        Integers are accepted where floats are expected.

        Returns:
            :obj:`dict`: A dictionary with the same keys as the provided one, but containing only the "value" field as
            value if the provided ``conf_fields`` are correct.

        Raises:
            :obj:`ConfigError`: If any of the dictionary elements does not have the expected type.
        """

        conf_dict = {}

        for field in self.conf_fields:
            value = self.conf_fields[field]["value"]
            correct_type = self.conf_fields[field]["type"]

            if correct_type == float and isinstance(value, int) and not isinstance(value, bool):
                value = float(value)

            if isinstance(value, correct_type) and not (correct_type != bool and isinstance(value, bool)):
                conf_dict[field] = value
            else:
                raise ConfigError("{} variable in config is of the wrong type".format(field))

        return conf_dict

    def extend_paths(self):
        """
        Extends the relative paths of the ``conf_fields`` dictionary with the (absolute) ``out_dir``.

        If an absolute path is given, it will remain the same.
        """

        for key, field in self.conf_fields.items():
            if field.get("path") and isinstance(field.get("value"), str):
                self.conf_fields[key]["value"] = os.path.join(self.out_dir, self.conf_fields[key]["value"])

    def dump(self, config):
        """
        Renders a config dictionary (as returned by :meth:`build_config`) back to an INI document.

        Reparsing the output with the same defaults and output directory yields an equal config.

        Args:
            config (:obj:`dict`): the config to render.

        Returns:
            :obj:`str`: The INI document.
        """

        sections = {}
        for field, spec in self.conf_fields.items():
            section = spec["section"]
            key = field[len(section) + 1 :].lower()
            sections.setdefault(section, []).append((key, self.render(config[field], spec["type"])))

        lines = []
        for section, items in sections.items():
            lines.append("[{}]".format(section))
            lines.extend("{} = {}".format(key, value) for key, value in items)
            lines.append("")

        return "\n".join(lines)

    @staticmethod
    def render(value, value_type):
        """Renders a single config value so that :meth:`cast` parses it back to the same value."""

        if value_type == bool:
            return "true" if value else "false"

        elif value_type == tuple:
            return format_vector(value)

        elif value_type == float:
            return format_float(value)

        else:
            return str(value)
