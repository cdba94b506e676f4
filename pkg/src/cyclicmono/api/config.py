# MIT License
#
# Copyright (c) 2024 cyclicmono contributors
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.


import typing

from .errors import UsageError


def strip_comments(original):
    # minimal filtering of # and // comments outside double quotes, blank lines dropped
    lines = original.split("\n")
    parsed = []
    for line in lines:
        line = line.rstrip()
        inq = False
        for idx in range(len(line)):
            if line[idx] == '"':
                inq = not inq
            elif not inq:
                if line[idx] == "#" or line[idx:idx + 2] == "//":
                    line = line[:idx].rstrip()
                    break
        if line.strip():
            parsed.append(line)
    return "\n".join(parsed)


def parse_config(text: str) -> typing.Dict[str, str]:
    """
    Parse a flat key = value document

    Keys are flag names, dashes and underscores are interchangeable; values keep
    their text (surrounding double quotes removed) and are converted by the caller.
    """
    config = {}
    for number, raw in enumerate(text.split("\n"), start=1):
        line = strip_comments(raw)
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {number}: expected key = value, found {line.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip().lstrip("-").replace("-", "_")
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] == '"':
            value = value[1:-1]
        if not key:
            raise UsageError(f"config line {number}: empty key")
        config[key] = value
    return config


def read_config(path) -> typing.Dict[str, str]:
    try:
        with open(path, encoding="utf-8") as f:
            return parse_config(f.read())
    except OSError as ex:
        raise UsageError(f"unable to read config file {path}: {ex}") from ex


def to_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, found {value!r}")
