#!/usr/bin/env python3
"""
Exception hierarchy shared by the library and the CLI.

Each class carries the process exit code the CLI uses when the exception
escapes a command.
"""


class LLTError(Exception):
    """Base class for all errors raised by this package"""
    exit_code = 1


class ParameterError(LLTError, ValueError):
    """Invalid user-supplied parameter (n, p, q, k, vertex ids, ...)"""
    exit_code = 2


class DomainError(LLTError, ValueError):
    """Request outside the mathematical domain of an operation"""
    exit_code = 2


class NumericalError(LLTError, ArithmeticError):
    """A numerical procedure failed to converge"""
    exit_code = 3


class UnderpoweredError(LLTError):
    """Monte Carlo run too small for the requested comparison"""
    exit_code = 4


class InvariantError(LLTError, AssertionError):
    """An exact counting identity failed; indicates a kernel bug"""
    exit_code = 1
