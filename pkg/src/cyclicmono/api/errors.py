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

"""Exceptions raised by the cyclicmono library and mapped to exit codes by the CLI."""


class CyclicMonoError(Exception):
    pass


class InvalidInputError(CyclicMonoError, ValueError):
    """Raised when arguments to an operation are outside its domain."""


class DataFormatError(CyclicMonoError):
    """
    Raised when an input file cannot be parsed into a dataset

    Arguments:
        message: description of the problem
        row: 1-based line number in the file (the header is line 1), if known
        location: extra context such as an individual or (market, period)
    """

    def __init__(self, message, row=None, location=None):
        self.row = row
        self.location = location
        detail = message
        if location is not None:
            detail = f"{detail} at {location}"
        if row is not None:
            detail = f"row {row}: {detail}"
        super().__init__(detail)


class NumericalError(CyclicMonoError):
    pass


class UsageError(CyclicMonoError):
    pass
