"""Subcommands of the `plom` CLI, one module each"""

from plom.commands import bases, gen, metrics, reference, run, sample

MODULES = [run, bases, reference, metrics, sample, gen]
