"""INI-style run configuration: one section per subcommand, keys named like the long flags."""

from __future__ import annotations

import argparse
import configparser
import os
import re


class ConfigError(ValueError):
    pass


_KEY_LINE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")
_SECTION_LINE = re.compile(r"^\s*\[([^\]]+)\]")


def _line_numbers(text):
    """``{(section, key): line}`` for every assignment in ``text`` (1-based)."""
    out, section = {}, None
    for no, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_LINE.match(line)
        if m:
            section = m.group(1).strip()
            continue
        m = _KEY_LINE.match(line)
        if m and section is not None:
            out[(section, m.group(1).strip().lower())] = no
    return out


def read_config(path):
    """Parse ``path`` into ``{section: {key: (raw value, line)}}``.

    Raises
    ------
    ConfigError
        Missing file or malformed syntax.
    """
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    cp = configparser.ConfigParser(interpolation=None, default_section="\0none")
    try:
        cp.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    lines = _line_numbers(text)
    return {
        sec: {key: (cp[sec][key], lines.get((sec, key), 0)) for key in cp[sec]}
        for sec in cp.sections()
    }


def _truthy(raw):
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def defaults_from_section(parser: argparse.ArgumentParser, section, values, path="config"):
    """Convert raw section entries with the parser's own option types.

    Keys may use dashes or underscores.  Returns a dict suitable for
    ``parser.set_defaults``.
    """
    actions = {a.dest: a for a in parser._actions if a.option_strings}
    out = {}
    for key, (raw, line) in values.items():
        dest = key.replace("-", "_")
        action = actions.get(dest)
        if action is None or dest in ("config", "help"):
            raise ConfigError(f"{path}: unknown key {key!r} in section [{section}]")
        try:
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                value = _truthy(raw)
            elif action.type is not None:
                value = action.type(raw)
            else:
                value = raw
            if action.choices is not None and value not in action.choices:
                raise ValueError(f"{value!r} is not one of {sorted(action.choices)}")
        except (ValueError, TypeError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"{path}, line {line}: bad value for {key!r}: {exc}") from None
        out[dest] = value
    return out


def apply_config(path, subparsers: dict):
    """Set parser defaults from every section of ``path``; sections must name subcommands."""
    data = read_config(path)
    for section, values in data.items():
        if section not in subparsers:
            raise ConfigError(f"{path}: unknown section [{section}]")
        parser = subparsers[section]
        parser.set_defaults(**defaults_from_section(parser, section, values, path))
